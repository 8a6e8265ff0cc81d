//! A fleet of simulated agents behind the in-process and UDP transports.

use std::collections::{BTreeMap, HashMap};
use std::net::UdpSocket;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::agent::{apply_due, handle_pdu, AgentState, DeviceProfile, FaultInjection, FaultKind, OidStore, PendingFault, StoredValue};
use crate::clock::{Clock, Timestamp};
use crate::snmp::{decode_message, encode_message, Access, BerValue, DatagramEndpoint, Oid, TransportError, IN_PROCESS_SCHEME};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown agent '{0}'")]
    UnknownAgent(String),
    #[error("duplicate device id '{0}'")]
    DuplicateDevice(String),
    #[error("port {port} used by both '{first}' and '{second}'")]
    PortCollision { port: u16, first: String, second: String },
    #[error("fleet document: {0}")]
    Document(String),
    #[error("binding agent '{device}': {source}")]
    Bind {
        device: String,
        #[source]
        source: std::io::Error,
    },
}

/// One entry of the fault ground-truth log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionRecord {
    pub seq: u64,
    pub device_id: String,
    pub fault: FaultKind,
    pub effective_at: Timestamp,
}

struct AgentSlot {
    state: AgentState,
    sys_object_id: Oid,
    pending: Vec<PendingFault>,
}

pub struct Fleet {
    agents: BTreeMap<String, Mutex<AgentSlot>>,
    clock: Arc<dyn Clock>,
    log: Mutex<Vec<InjectionRecord>>,
}

impl Fleet {
    /// Builds the fleet and schedules each profile's scripted faults.
    pub fn new(profiles: Vec<DeviceProfile>, clock: Arc<dyn Clock>) -> Result<Arc<Fleet>, SimError> {
        let mut agents = BTreeMap::new();
        let mut scripts = Vec::new();
        for p in profiles {
            if agents.contains_key(&p.device_id) {
                return Err(SimError::DuplicateDevice(p.device_id));
            }
            scripts.extend(p.faults.iter().map(|f| (p.device_id.clone(), f.clone())));
            let slot = AgentSlot {
                state: AgentState::from_profile(&p),
                sys_object_id: p.sys_object_id.clone(),
                pending: Vec::new(),
            };
            agents.insert(p.device_id.clone(), Mutex::new(slot));
        }
        let fleet = Arc::new(Fleet {
            agents,
            clock,
            log: Mutex::new(Vec::new()),
        });
        for (id, fault) in scripts {
            fleet.inject_fault(&id, fault)?;
        }
        Ok(fleet)
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn device_ids(&self) -> impl Iterator<Item = &str> {
        self.agents.keys().map(String::as_str)
    }

    pub fn contains(&self, device_id: &str) -> bool {
        self.agents.contains_key(device_id)
    }

    pub fn sys_object_id(&self, device_id: &str) -> Option<Oid> {
        self.agents
            .get(device_id)
            .map(|s| s.lock().expect("agent lock").sys_object_id.clone())
    }

    fn slot(&self, device_id: &str) -> Result<&Mutex<AgentSlot>, SimError> {
        self.agents
            .get(device_id)
            .ok_or_else(|| SimError::UnknownAgent(device_id.to_string()))
    }

    /// Logs the fault and applies it at its effective time. Faults already
    /// due take effect before the next PDU.
    pub fn inject_fault(&self, device_id: &str, fault: FaultInjection) -> Result<u64, SimError> {
        let slot = self.slot(device_id)?;
        let mut log = self.log.lock().expect("log lock");
        let seq = log.len() as u64;
        log.push(InjectionRecord {
            seq,
            device_id: device_id.to_string(),
            fault: fault.kind.clone(),
            effective_at: fault.effective_at,
        });
        tracing::info!(device = device_id, kind = fault.kind.name(), at = %fault.effective_at, "fault injected");
        let mut slot = slot.lock().expect("agent lock");
        slot.pending.push(PendingFault {
            at: fault.effective_at,
            seq,
            kind: fault.kind,
        });
        let now = self.clock.now();
        let AgentSlot { state, pending, .. } = &mut *slot;
        apply_due(state, pending, now);
        Ok(seq)
    }

    pub fn injection_log(&self) -> Vec<InjectionRecord> {
        self.log.lock().expect("log lock").clone()
    }

    /// Current OID store, with due faults applied.
    pub fn store(&self, device_id: &str) -> Result<OidStore, SimError> {
        let mut slot = self.slot(device_id)?.lock().expect("agent lock");
        let now = self.clock.now();
        let AgentSlot { state, pending, .. } = &mut *slot;
        apply_due(state, pending, now);
        Ok(state.store.clone())
    }

    /// Decodes, handles and encodes one request. Undecodable datagrams are
    /// dropped like a real agent would.
    pub fn handle(&self, device_id: &str, datagram: &[u8]) -> Result<Option<(Vec<u8>, Duration)>, SimError> {
        let mut slot = self.slot(device_id)?.lock().expect("agent lock");
        let now = self.clock.now();
        let AgentSlot { state, pending, .. } = &mut *slot;
        apply_due(state, pending, now);
        let Ok(msg) = decode_message(datagram) else {
            tracing::debug!(device = device_id, "dropping undecodable datagram");
            return Ok(None);
        };
        let Some(reply) = handle_pdu(state, &msg) else {
            return Ok(None);
        };
        match encode_message(&reply) {
            Ok(bytes) => Ok(Some((bytes, state.latency))),
            Err(e) => {
                tracing::warn!(device = device_id, error = %e, "reply not encodable");
                Ok(None)
            }
        }
    }

    pub fn in_process_address(device_id: &str) -> String {
        format!("{IN_PROCESS_SCHEME}{device_id}")
    }
}

impl DatagramEndpoint for Fleet {
    fn deliver(&self, target: &str, datagram: &[u8]) -> Result<Option<(Vec<u8>, Duration)>, TransportError> {
        let id = target.strip_prefix(IN_PROCESS_SCHEME).unwrap_or(target);
        self.handle(id, datagram)
            .map_err(|_| TransportError::NoEndpoint(target.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AgentHandle {
    pub device_id: String,
    /// `sim://<id>` or `host:port`.
    pub address: String,
}

/// UDP listeners, one thread per agent. Stopped on drop.
pub struct UdpServer {
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
    pub handles: Vec<AgentHandle>,
}

impl UdpServer {
    pub fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for UdpServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Binds each agent on `bind_ip`. Ports missing from `ports` (or 0) are
/// ephemeral.
pub fn serve_udp(fleet: Arc<Fleet>, bind_ip: &str, ports: &HashMap<String, u16>) -> Result<UdpServer, SimError> {
    let stop = Arc::new(AtomicBool::new(false));
    let mut server = UdpServer {
        stop: stop.clone(),
        threads: Vec::new(),
        handles: Vec::new(),
    };
    for id in fleet.device_ids().map(str::to_string).collect::<Vec<_>>() {
        let port = ports.get(&id).copied().unwrap_or(0);
        let bind_err = |source| SimError::Bind {
            device: id.clone(),
            source,
        };
        let socket = UdpSocket::bind((bind_ip, port)).map_err(bind_err)?;
        socket
            .set_read_timeout(Some(Duration::from_millis(50)))
            .map_err(bind_err)?;
        let addr = socket.local_addr().map_err(bind_err)?;
        server.handles.push(AgentHandle {
            device_id: id.clone(),
            address: addr.to_string(),
        });
        let fleet = fleet.clone();
        let stop = stop.clone();
        server.threads.push(std::thread::spawn(move || {
            let mut buf = vec![0u8; 65_535];
            while !stop.load(Ordering::SeqCst) {
                let Ok((n, src)) = socket.recv_from(&mut buf) else {
                    continue;
                };
                if let Ok(Some((reply, latency))) = fleet.handle(&id, &buf[..n]) {
                    if !latency.is_zero() {
                        fleet.clock.sleep(latency);
                    }
                    let _ = socket.send_to(&reply, src);
                }
            }
        }));
    }
    Ok(server)
}

/// Seed value in a fleet document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedSpec {
    pub oid: Oid,
    pub value: BerValue,
    #[serde(default = "default_access")]
    pub access: Access,
}

fn default_access() -> Access {
    Access::ReadOnly
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaultSpec {
    /// Seconds after fleet start.
    pub at_s: f64,
    #[serde(flatten)]
    pub kind: FaultKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub id: String,
    pub sys_object_id: Oid,
    #[serde(default)]
    pub sys_descr: Option<String>,
    #[serde(default = "default_community")]
    pub community: String,
    #[serde(default)]
    pub port: Option<u16>,
    #[serde(default)]
    pub latency_ms: u64,
    #[serde(default)]
    pub oids: Vec<SeedSpec>,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
}

fn default_community() -> String {
    "public".into()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetDocument {
    #[serde(default)]
    pub devices: Vec<DeviceSpec>,
}

impl FleetDocument {
    pub fn parse(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text)
            .map_err(|e| SimError::Document(format!("line {} column {}: {e}", e.line(), e.column())))
    }

    /// Duplicate ids and port collisions.
    pub fn validate(&self) -> Result<(), SimError> {
        let mut ids = std::collections::HashSet::new();
        let mut ports: HashMap<u16, &str> = HashMap::new();
        for d in &self.devices {
            if !ids.insert(d.id.as_str()) {
                return Err(SimError::DuplicateDevice(d.id.clone()));
            }
            if let Some(port) = d.port.filter(|p| *p != 0) {
                if let Some(first) = ports.insert(port, &d.id) {
                    return Err(SimError::PortCollision {
                        port,
                        first: first.to_string(),
                        second: d.id.clone(),
                    });
                }
            }
            for f in &d.faults {
                if !(f.at_s.is_finite() && f.at_s >= 0.0) {
                    return Err(SimError::Document(format!("device '{}': fault time must be >= 0", d.id)));
                }
            }
        }
        Ok(())
    }

    pub fn profiles(&self, start: Timestamp) -> Vec<DeviceProfile> {
        self.devices
            .iter()
            .map(|d| {
                let mut p = DeviceProfile::new(&d.id, d.sys_object_id.clone());
                p.community = d.community.clone();
                p.latency_ms = d.latency_ms;
                if let Some(descr) = &d.sys_descr {
                    p.oid_store.insert(
                        crate::snmp::well_known::sys_descr(),
                        StoredValue::read_only(BerValue::octets(descr)),
                    );
                }
                for s in &d.oids {
                    p.oid_store.insert(
                        s.oid.clone(),
                        StoredValue {
                            value: s.value.clone(),
                            access: s.access,
                        },
                    );
                }
                p.faults = d
                    .faults
                    .iter()
                    .map(|f| FaultInjection {
                        kind: f.kind.clone(),
                        effective_at: start.saturating_add(Duration::from_secs_f64(f.at_s)),
                    })
                    .collect();
                p
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FleetTransport {
    InProcess,
    /// Binds on the given loopback or wildcard address.
    Udp,
}

pub struct RunningFleet {
    pub fleet: Arc<Fleet>,
    pub handles: Vec<AgentHandle>,
    pub udp: Option<UdpServer>,
}

impl RunningFleet {
    pub fn address(&self, device_id: &str) -> Option<&str> {
        self.handles
            .iter()
            .find(|h| h.device_id == device_id)
            .map(|h| h.address.as_str())
    }
}

/// Starts one agent per device. Scripted fault times are relative to the
/// clock's current time.
pub fn fleet_from_config(
    doc: &FleetDocument,
    transport: FleetTransport,
    bind_ip: &str,
    clock: Arc<dyn Clock>,
) -> Result<RunningFleet, SimError> {
    doc.validate()?;
    let fleet = Fleet::new(doc.profiles(clock.now()), clock)?;
    match transport {
        FleetTransport::InProcess => {
            let handles = fleet
                .device_ids()
                .map(|id| AgentHandle {
                    device_id: id.to_string(),
                    address: Fleet::in_process_address(id),
                })
                .collect();
            Ok(RunningFleet {
                fleet,
                handles,
                udp: None,
            })
        }
        FleetTransport::Udp => {
            let ports = doc
                .devices
                .iter()
                .filter_map(|d| d.port.map(|p| (d.id.clone(), p)))
                .collect();
            let server = serve_udp(fleet.clone(), bind_ip, &ports)?;
            let handles = server.handles.clone();
            Ok(RunningFleet {
                fleet,
                handles,
                udp: Some(server),
            })
        }
    }
}
