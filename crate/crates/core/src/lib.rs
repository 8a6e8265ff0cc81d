//! Core of the NB-ITMS management engine.
//!
//! The crate is split along the layers of a Nagios-style monitor extended
//! with configuration management:
//!
//! - [`state`]: managed objects, the soft/hard check state machine and alarms
//! - [`plugin`]: external check and configuration plugins
//! - [`scheduler`]: when each check runs
//! - [`snmp`]: SNMPv2c codec, client and MIB registry
//! - [`sim`]: simulated SNMP agents with fault injection
//! - [`config`]: configuration transactions (plan, apply, verify, rollback)
//! - [`topology`]: map model, reachability and icon matching
//! - [`eval`]: performance model and FCAPS coverage scoring
//! - [`engine`]: the single-writer loop that ties the above together

pub mod clock;
pub mod config;
pub mod engine;
pub mod eval;
pub mod plugin;
pub mod scheduler;
pub mod sim;
pub mod snmp;
pub mod state;
pub mod topology;

pub use clock::{Clock, SystemClock, Timestamp, VirtualClock};
