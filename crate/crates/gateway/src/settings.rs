//! Gateway configuration file: one JSON document naming the monitored
//! objects, plugins and the side files (icon rules, MIB, fleet, profiles).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nbitms_core::engine::{EngineSetup, SnmpSettings};
use nbitms_core::eval::{Capacities, ProfileDocument, DEFAULT_PROFILES};
use nbitms_core::plugin::{PluginDescriptor, PluginRegistry, DEFAULT_PARALLELISM};
use nbitms_core::sim::FleetDocument;
use nbitms_core::snmp::{MibRegistry, IN_PROCESS_SCHEME};
use nbitms_core::state::MonitoredObject;
use nbitms_core::topology::{parse_icon_rules, Position, TopologyGraph};
use serde::Deserialize;
use thiserror::Error;

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{} problem(s) in {}:\n  {}", problems.len(), path.display(), problems.join("\n  "))]
    Invalid { path: PathBuf, problems: Vec<String> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    listen: Option<String>,
    #[serde(default)]
    state_dir: Option<PathBuf>,
    #[serde(default)]
    icon_rules: Option<PathBuf>,
    #[serde(default)]
    mib: Option<PathBuf>,
    #[serde(default)]
    fleet: Option<PathBuf>,
    #[serde(default)]
    profiles: Option<PathBuf>,
    #[serde(default)]
    capacities: Option<Capacities>,
    #[serde(default)]
    snmp: SnmpSettings,
    #[serde(default)]
    parallelism: Option<usize>,
    #[serde(default)]
    plugins: Vec<PluginDescriptor>,
    objects: Vec<MonitoredObject>,
    #[serde(default)]
    positions: BTreeMap<String, Position>,
}

/// A configuration that passed every check.
pub struct LoadedConfig {
    pub path: PathBuf,
    pub listen: String,
    pub state_dir: PathBuf,
    pub setup: EngineSetup,
    /// Embedded simulated fleet, served in process.
    pub fleet: Option<FleetDocument>,
    pub profiles: ProfileDocument,
    pub capacities: Capacities,
}

impl std::fmt::Debug for LoadedConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LoadedConfig")
            .field("path", &self.path)
            .field("listen", &self.listen)
            .field("objects", &self.setup.objects.len())
            .field("fleet", &self.fleet.as_ref().map(|d| d.devices.len()))
            .finish_non_exhaustive()
    }
}

/// Maps a serde_json error onto the file it came from.
pub fn parse_error(path: &Path, e: &serde_json::Error) -> LoadError {
    LoadError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

pub fn read_file(path: &Path) -> Result<String, LoadError> {
    std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads and validates. Syntax errors stop early; semantic problems are
/// collected across the whole document and the files it references.
pub fn load_config(path: &Path) -> Result<LoadedConfig, LoadError> {
    let text = read_file(path)?;
    let file: ConfigFile = serde_json::from_str(&text).map_err(|e| parse_error(path, &e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    let mut problems = Vec::new();

    let mut setup = EngineSetup::new(file.objects);
    setup.snmp = file.snmp;
    setup.parallelism = file.parallelism.unwrap_or(DEFAULT_PARALLELISM);
    setup.positions = file.positions;
    if setup.parallelism == 0 {
        problems.push("parallelism must be at least 1".to_string());
    }

    let mut plugins = PluginRegistry::new();
    for mut p in file.plugins {
        // Plugin paths written relative to the config file.
        if p.command_template.starts_with("./") || p.command_template.starts_with("../") {
            p.command_template = format!("{}/{}", base.display(), p.command_template);
        }
        if let Err(e) = plugins.register(p) {
            problems.push(format!("plugins: {e}"));
        }
    }
    setup.plugins = plugins;

    if let Some(p) = &file.icon_rules {
        let p = resolve(p);
        match std::fs::read_to_string(&p) {
            Ok(t) => match parse_icon_rules(&t) {
                Ok(rules) => setup.icon_rules = rules,
                Err(e) => problems.push(format!("icon_rules {}: {e}", p.display())),
            },
            Err(e) => problems.push(format!("icon_rules {}: {e}", p.display())),
        }
    }
    if let Some(p) = &file.mib {
        let p = resolve(p);
        match MibRegistry::load(&p) {
            Ok(m) => setup.mib = m,
            Err(e) => problems.push(format!("mib {}: {e}", p.display())),
        }
    }

    let fleet = file.fleet.as_ref().and_then(|p| {
        let p = resolve(p);
        let doc = std::fs::read_to_string(&p)
            .map_err(|e| e.to_string())
            .and_then(|t| FleetDocument::parse(&t).map_err(|e| e.to_string()))
            .and_then(|d| d.validate().map(|_| d).map_err(|e| e.to_string()));
        doc.map_err(|e| problems.push(format!("fleet {}: {e}", p.display()))).ok()
    });

    let profiles = match &file.profiles {
        Some(p) => {
            let p = resolve(p);
            std::fs::read_to_string(&p)
                .map_err(|e| e.to_string())
                .and_then(|t| ProfileDocument::parse(&t).map_err(|e| e.to_string()))
                .map_err(|e| problems.push(format!("profiles {}: {e}", p.display())))
                .ok()
        }
        None => Some(ProfileDocument::parse(DEFAULT_PROFILES).expect("builtin profiles parse")),
    };

    problems.extend(setup.validate());
    if let Err(e) = TopologyGraph::from_objects(&setup.objects, &setup.identities, &setup.positions) {
        problems.push(format!("topology: {e}"));
    }
    for host in setup.positions.keys() {
        if !setup.objects.iter().any(|o| &o.id == host) {
            problems.push(format!("positions: unknown host '{host}'"));
        }
    }
    for o in &setup.objects {
        if let Some(dev) = o.address.strip_prefix(IN_PROCESS_SCHEME) {
            match &fleet {
                Some(f) if f.devices.iter().any(|d| d.id == dev) => {}
                Some(_) => problems.push(format!("object '{}': no fleet device '{dev}'", o.id)),
                None if file.fleet.is_none() => {
                    problems.push(format!("object '{}': address {} needs an embedded fleet", o.id, o.address))
                }
                None => {}
            }
        }
    }

    if !problems.is_empty() {
        return Err(LoadError::Invalid {
            path: path.to_path_buf(),
            problems,
        });
    }
    Ok(LoadedConfig {
        path: path.to_path_buf(),
        listen: file.listen.unwrap_or_else(|| DEFAULT_LISTEN.to_string()),
        state_dir: file.state_dir.as_deref().map_or_else(|| base.join("state"), resolve),
        setup,
        fleet,
        profiles: profiles.expect("no problems recorded"),
        capacities: file.capacities.unwrap_or_default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    const BASE: &str = r#"{
      "objects": [
        {"id": "r1", "kind": "HOST", "address": "10.0.0.1", "check_command": "snmp_probe!1.3.6.1.2.1.1.3.0"},
        {"id": "r1-if", "kind": "SERVICE", "parent_host": "r1", "check_command": "snmp_probe!1.3.6.1.2.1.2.2.1.8.1!1"}
      ]
    }"#;

    #[test]
    fn valid_config_loads() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.json", BASE);
        let cfg = load_config(&p).unwrap();
        assert_eq!(cfg.setup.objects.len(), 2);
        assert_eq!(cfg.listen, DEFAULT_LISTEN);
        assert_eq!(cfg.state_dir, dir.path().join("state"));
        assert!(cfg.fleet.is_none());
    }

    #[test]
    fn syntax_error_has_position() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.json", "{\n  \"objects\": [\n    {\"id\": }\n  ]\n}");
        match load_config(&p).unwrap_err() {
            LoadError::Parse { line, column, .. } => assert_eq!((line, column), (3, 12)),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn missing_parent_names_the_service() {
        let dir = tempfile::tempdir().unwrap();
        let text = BASE.replace("\"parent_host\": \"r1\"", "\"parent_host\": \"r9\"");
        let p = write(dir.path(), "c.json", &text);
        let LoadError::Invalid { problems, .. } = load_config(&p).unwrap_err() else { panic!() };
        assert!(problems.iter().any(|m| m.contains("r1-if") && m.contains("r9")), "{problems:?}");
    }

    #[test]
    fn problems_are_aggregated() {
        let dir = tempfile::tempdir().unwrap();
        let text = BASE
            .replace("\"parent_host\": \"r1\"", "\"parent_host\": \"r9\"")
            .replace("\"objects\"", "\"icon_rules\": \"missing.tsv\", \"objects\"");
        let p = write(dir.path(), "c.json", &text);
        let LoadError::Invalid { problems, .. } = load_config(&p).unwrap_err() else { panic!() };
        assert!(problems.len() >= 2, "{problems:?}");
        assert!(problems.iter().any(|m| m.contains("missing.tsv")));
    }

    #[test]
    fn sim_address_needs_fleet_device() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "fleet.json", r#"{"devices": [{"id": "a", "sys_object_id": "1.3.6.1.4.1.9"}]}"#);
        let text = BASE
            .replace("10.0.0.1", "sim://b")
            .replace("\"objects\"", "\"fleet\": \"fleet.json\", \"objects\"");
        let p = write(dir.path(), "c.json", &text);
        let LoadError::Invalid { problems, .. } = load_config(&p).unwrap_err() else { panic!() };
        assert_eq!(problems, vec!["object 'r1': no fleet device 'b'".to_string()]);
    }

    #[test]
    fn unknown_field_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.json", &BASE.replace("\"objects\"", "\"objcts\": [], \"objects\""));
        assert!(matches!(load_config(&p).unwrap_err(), LoadError::Parse { .. }));
    }
}
