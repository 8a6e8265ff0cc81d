use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Object identifier. Ordering is lexicographic over the arcs, which is the
/// MIB walk order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Oid(Vec<u32>);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OidError {
    #[error("an OID needs at least two arcs")]
    TooShort,
    #[error("first arc must be 0, 1 or 2 (got {0})")]
    BadFirstArc(u32),
    #[error("second arc must be <= 39 under arc {first} (got {second})")]
    BadSecondArc { first: u32, second: u32 },
    #[error("invalid arc '{0}'")]
    BadArc(String),
}

impl Oid {
    pub fn new(arcs: impl Into<Vec<u32>>) -> Result<Self, OidError> {
        let arcs = arcs.into();
        if arcs.len() < 2 {
            return Err(OidError::TooShort);
        }
        if arcs[0] > 2 {
            return Err(OidError::BadFirstArc(arcs[0]));
        }
        if arcs[0] < 2 && arcs[1] > 39 {
            return Err(OidError::BadSecondArc {
                first: arcs[0],
                second: arcs[1],
            });
        }
        Ok(Oid(arcs))
    }

    /// Panics on invalid arcs. For literals.
    pub fn from_arcs(arcs: &[u32]) -> Self {
        Oid::new(arcs.to_vec()).expect("valid OID literal")
    }

    pub fn arcs(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn starts_with(&self, prefix: &Oid) -> bool {
        self.0.starts_with(&prefix.0)
    }

    pub fn child(&self, arc: u32) -> Oid {
        let mut arcs = self.0.clone();
        arcs.push(arc);
        Oid(arcs)
    }

    /// Prefix of the first `n` arcs, when that is still a valid OID.
    pub fn prefix(&self, n: usize) -> Option<Oid> {
        (n >= 2 && n <= self.0.len()).then(|| Oid(self.0[..n].to_vec()))
    }
}

impl fmt::Display for Oid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

impl FromStr for Oid {
    type Err = OidError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let s = s.strip_prefix('.').unwrap_or(s);
        let arcs = s
            .split('.')
            .map(|a| {
                if a.is_empty() || !a.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(OidError::BadArc(a.to_string()));
                }
                a.parse::<u32>().map_err(|_| OidError::BadArc(a.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Oid::new(arcs)
    }
}

impl Serialize for Oid {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Oid {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Well-known OIDs from the system and interfaces groups.
pub mod well_known {
    use super::Oid;

    pub fn sys_descr() -> Oid {
        Oid::from_arcs(&[1, 3, 6, 1, 2, 1, 1, 1, 0])
    }
    pub fn sys_object_id() -> Oid {
        Oid::from_arcs(&[1, 3, 6, 1, 2, 1, 1, 2, 0])
    }
    pub fn sys_uptime() -> Oid {
        Oid::from_arcs(&[1, 3, 6, 1, 2, 1, 1, 3, 0])
    }
    pub fn sys_contact() -> Oid {
        Oid::from_arcs(&[1, 3, 6, 1, 2, 1, 1, 4, 0])
    }
    pub fn sys_name() -> Oid {
        Oid::from_arcs(&[1, 3, 6, 1, 2, 1, 1, 5, 0])
    }
    pub fn sys_location() -> Oid {
        Oid::from_arcs(&[1, 3, 6, 1, 2, 1, 1, 6, 0])
    }
    /// ifOperStatus for interface `index`.
    pub fn if_oper_status(index: u32) -> Oid {
        Oid::from_arcs(&[1, 3, 6, 1, 2, 1, 2, 2, 1, 8, index])
    }
    pub fn if_admin_status(index: u32) -> Oid {
        Oid::from_arcs(&[1, 3, 6, 1, 2, 1, 2, 2, 1, 7, index])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_and_validate() {
        assert_eq!("1.3.6.1".parse::<Oid>().unwrap().arcs(), &[1, 3, 6, 1]);
        assert_eq!(".1.3".parse::<Oid>().unwrap().arcs(), &[1, 3]);
        assert_eq!("1".parse::<Oid>(), Err(OidError::TooShort));
        assert_eq!("3.1".parse::<Oid>(), Err(OidError::BadFirstArc(3)));
        assert!(matches!("1.40".parse::<Oid>(), Err(OidError::BadSecondArc { .. })));
        assert!("2.999".parse::<Oid>().is_ok());
        assert!(matches!("1..3".parse::<Oid>(), Err(OidError::BadArc(_))));
        assert!(matches!("1.3.x".parse::<Oid>(), Err(OidError::BadArc(_))));
    }

    #[test]
    fn ordering_is_lexicographic() {
        let a: Oid = "1.3.6.1.2".parse().unwrap();
        let b: Oid = "1.3.6.1.2.0".parse().unwrap();
        let c: Oid = "1.3.6.1.10".parse().unwrap();
        assert!(a < b && b < c);
        assert!(b.starts_with(&a) && !c.starts_with(&a));
    }

    proptest! {
        #[test]
        fn dotted_form_round_trips(first in 0u32..3, second in 0u32..40, rest in proptest::collection::vec(any::<u32>(), 0..10)) {
            let mut arcs = vec![first, second];
            arcs.extend(rest);
            let oid = Oid::new(arcs).unwrap();
            prop_assert_eq!(oid.to_string().parse::<Oid>().unwrap(), oid);
        }
    }
}
