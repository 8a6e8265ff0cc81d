//! Flat-file MIB registry: OID to name, syntax, access and icon hint.
//!
//! File format, one entry per line, `#` starts a comment:
//!
//! ```text
//! oid<TAB>name<TAB>syntax<TAB>access[<TAB>icon_hint]
//! 1.3.6.1.2.1.1.5  sysName  OctetString  READ_WRITE    (tab separated)
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ber::ValueKind;
use super::oid::Oid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Access {
    ReadOnly,
    ReadWrite,
}

impl std::str::FromStr for Access {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "READ_ONLY" | "read-only" => Ok(Access::ReadOnly),
            "READ_WRITE" | "read-write" => Ok(Access::ReadWrite),
            other => Err(format!("unknown access '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MibEntry {
    pub oid: Oid,
    pub name: String,
    pub syntax: ValueKind,
    pub access: Access,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub icon_hint: Option<String>,
}

#[derive(Debug, Error)]
pub enum MibError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: duplicate oid {oid}")]
    Duplicate { line: usize, oid: Oid },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Serialize for ValueKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ValueKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Default)]
pub struct MibRegistry {
    entries: BTreeMap<Oid, MibEntry>,
}

impl MibRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, entry: MibEntry) -> bool {
        if self.entries.contains_key(&entry.oid) {
            return false;
        }
        self.entries.insert(entry.oid.clone(), entry);
        true
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self, MibError> {
        let mut reg = MibRegistry::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("");
            if content.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.trim_end().split('\t').collect();
            if !(4..=5).contains(&fields.len()) {
                return Err(MibError::Parse {
                    line,
                    reason: format!("expected 4 or 5 tab-separated fields, got {}", fields.len()),
                });
            }
            let parse_err = |reason: String| MibError::Parse { line, reason };
            let oid: Oid = fields[0].trim().parse().map_err(|e| parse_err(format!("{e}")))?;
            let name = fields[1].trim();
            if name.is_empty() {
                return Err(parse_err("empty name".into()));
            }
            let syntax: ValueKind = fields[2].parse().map_err(parse_err)?;
            let access: Access = fields[3].parse().map_err(parse_err)?;
            let icon_hint = fields
                .get(4)
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(str::to_string);
            let entry = MibEntry {
                oid: oid.clone(),
                name: name.to_string(),
                syntax,
                access,
                icon_hint,
            };
            if !reg.insert(entry) {
                return Err(MibError::Duplicate { line, oid });
            }
        }
        Ok(reg)
    }

    pub fn load(path: &Path) -> Result<Self, MibError> {
        let text = std::fs::read_to_string(path).map_err(|source| MibError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Exact entry if registered, else the entry for the longest registered
    /// prefix of `oid`.
    pub fn lookup(&self, oid: &Oid) -> Option<&MibEntry> {
        (2..=oid.len())
            .rev()
            .find_map(|n| oid.prefix(n).and_then(|p| self.entries.get(&p)))
    }

    pub fn by_name(&self, name: &str) -> Option<&MibEntry> {
        self.entries.values().find(|e| e.name == name)
    }

    /// Entry name plus the instance suffix, e.g. `sysName.0`.
    pub fn describe(&self, oid: &Oid) -> String {
        match self.lookup(oid) {
            Some(e) if e.oid.len() < oid.len() => {
                let suffix: Vec<String> = oid.arcs()[e.oid.len()..].iter().map(u32::to_string).collect();
                format!("{}.{}", e.name, suffix.join("."))
            }
            Some(e) => e.name.clone(),
            None => oid.to_string(),
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = &MibEntry> {
        self.entries.values()
    }
}

impl Serialize for MibRegistry {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.entries.values())
    }
}

/// Registry covering the system and interfaces groups used by the simulated
/// fleet.
pub const BUILTIN_MIB: &str = "\
# system group
1.3.6.1.2.1.1.1\tsysDescr\tOctetString\tREAD_ONLY
1.3.6.1.2.1.1.2\tsysObjectID\tObjectIdentifier\tREAD_ONLY
1.3.6.1.2.1.1.3\tsysUpTime\tTimeTicks\tREAD_ONLY
1.3.6.1.2.1.1.4\tsysContact\tOctetString\tREAD_WRITE
1.3.6.1.2.1.1.5\tsysName\tOctetString\tREAD_WRITE
1.3.6.1.2.1.1.6\tsysLocation\tOctetString\tREAD_WRITE
# interfaces group
1.3.6.1.2.1.2.1\tifNumber\tInteger\tREAD_ONLY
1.3.6.1.2.1.2.2.1.2\tifDescr\tOctetString\tREAD_ONLY
1.3.6.1.2.1.2.2.1.7\tifAdminStatus\tInteger\tREAD_WRITE
1.3.6.1.2.1.2.2.1.8\tifOperStatus\tInteger\tREAD_ONLY
1.3.6.1.2.1.2.2.1.10\tifInOctets\tCounter32\tREAD_ONLY
1.3.6.1.2.1.2.2.1.16\tifOutOctets\tCounter32\tREAD_ONLY
";

impl MibRegistry {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_MIB).expect("builtin MIB parses")
    }
}
