//! Simulated SNMP agents with scripted fault injection.

pub mod agent;
pub mod fleet;

pub use agent::{handle_pdu, AgentState, DeviceProfile, FaultInjection, FaultKind, OidStore, StoredValue};
pub use fleet::{
    fleet_from_config, serve_udp, AgentHandle, DeviceSpec, FaultSpec, Fleet, FleetDocument, FleetTransport,
    InjectionRecord, RunningFleet, SeedSpec, SimError, UdpServer,
};
