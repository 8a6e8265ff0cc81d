//! Operational shell around the monitoring core: configuration files,
//! persistence, the HTTP and event API, and the `nbitms` command line.

pub mod api;
pub mod cli;
pub mod events;
pub mod persist;
pub mod service;
pub mod settings;
