//! One simulated SNMPv2c agent: an OID store plus fault behaviour.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Bound;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::snmp::message::error_status;
use crate::snmp::{well_known, Access, BerValue, Message, Oid, Pdu, PduType, VarBind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredValue {
    pub value: BerValue,
    pub access: Access,
}

impl StoredValue {
    pub fn read_only(value: BerValue) -> Self {
        StoredValue {
            value,
            access: Access::ReadOnly,
        }
    }

    pub fn read_write(value: BerValue) -> Self {
        StoredValue {
            value,
            access: Access::ReadWrite,
        }
    }
}

pub type OidStore = BTreeMap<Oid, StoredValue>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FaultKind {
    SetValue { oid: Oid, value: BerValue },
    /// Stop answering.
    Mute,
    Latency { ms: u64 },
    /// Clears MUTE, LATENCY and DROP_WRITES.
    Restore,
    /// Accept SETs on `oid` but leave the stored value alone.
    DropWrites { oid: Oid },
}

impl FaultKind {
    pub fn name(&self) -> &'static str {
        match self {
            FaultKind::SetValue { .. } => "SET_VALUE",
            FaultKind::Mute => "MUTE",
            FaultKind::Latency { .. } => "LATENCY",
            FaultKind::Restore => "RESTORE",
            FaultKind::DropWrites { .. } => "DROP_WRITES",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultInjection {
    #[serde(flatten)]
    pub kind: FaultKind,
    pub effective_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub device_id: String,
    pub sys_object_id: Oid,
    pub community: String,
    pub oid_store: OidStore,
    pub latency_ms: u64,
    pub faults: Vec<FaultInjection>,
}

impl DeviceProfile {
    /// Profile with the system group filled in and one interface.
    pub fn new(device_id: &str, sys_object_id: Oid) -> Self {
        let mut store = OidStore::new();
        store.insert(
            well_known::sys_descr(),
            StoredValue::read_only(BerValue::octets(format!("simulated agent {device_id}"))),
        );
        store.insert(
            well_known::sys_object_id(),
            StoredValue::read_only(BerValue::ObjectIdentifier(sys_object_id.clone())),
        );
        store.insert(well_known::sys_uptime(), StoredValue::read_only(BerValue::TimeTicks(0)));
        store.insert(well_known::sys_contact(), StoredValue::read_write(BerValue::octets("")));
        store.insert(well_known::sys_name(), StoredValue::read_write(BerValue::octets(device_id)));
        store.insert(well_known::sys_location(), StoredValue::read_write(BerValue::octets("")));
        store.insert(
            Oid::from_arcs(&[1, 3, 6, 1, 2, 1, 2, 1, 0]),
            StoredValue::read_only(BerValue::Integer(1)),
        );
        store.insert(
            Oid::from_arcs(&[1, 3, 6, 1, 2, 1, 2, 2, 1, 2, 1]),
            StoredValue::read_only(BerValue::octets("eth0")),
        );
        store.insert(well_known::if_admin_status(1), StoredValue::read_write(BerValue::Integer(1)));
        store.insert(well_known::if_oper_status(1), StoredValue::read_only(BerValue::Integer(1)));
        DeviceProfile {
            device_id: device_id.to_string(),
            sys_object_id,
            community: "public".into(),
            oid_store: store,
            latency_ms: 0,
            faults: Vec::new(),
        }
    }
}

/// Mutable agent state. [`handle_pdu`] is a pure function of this state and
/// the request, which keeps it easy to check against a reference model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentState {
    pub device_id: String,
    pub community: Vec<u8>,
    pub store: OidStore,
    pub muted: bool,
    pub latency: Duration,
    pub base_latency: Duration,
    pub dropped_writes: BTreeSet<Oid>,
}

impl AgentState {
    pub fn from_profile(p: &DeviceProfile) -> Self {
        let base = Duration::from_millis(p.latency_ms);
        AgentState {
            device_id: p.device_id.clone(),
            community: p.community.as_bytes().to_vec(),
            store: p.oid_store.clone(),
            muted: false,
            latency: base,
            base_latency: base,
            dropped_writes: BTreeSet::new(),
        }
    }

    pub fn apply_fault(&mut self, fault: &FaultKind) {
        match fault {
            FaultKind::SetValue { oid, value } => match self.store.get_mut(oid) {
                Some(slot) => slot.value = value.clone(),
                None => {
                    self.store.insert(oid.clone(), StoredValue::read_only(value.clone()));
                }
            },
            FaultKind::Mute => self.muted = true,
            FaultKind::Latency { ms } => self.latency = Duration::from_millis(*ms),
            FaultKind::Restore => {
                self.muted = false;
                self.latency = self.base_latency;
                self.dropped_writes.clear();
            }
            FaultKind::DropWrites { oid } => {
                self.dropped_writes.insert(oid.clone());
            }
        }
    }
}

/// Agent side of one exchange. `None` means the agent stays silent.
pub fn handle_pdu(state: &mut AgentState, msg: &Message) -> Option<Message> {
    if state.muted || msg.community != state.community {
        return None;
    }
    let req = &msg.pdu;
    let pdu = match req.pdu_type {
        PduType::Get => {
            let vbs = req
                .varbinds
                .iter()
                .map(|vb| {
                    let value = state
                        .store
                        .get(&vb.oid)
                        .map_or(BerValue::NoSuchObject, |s| s.value.clone());
                    VarBind::new(vb.oid.clone(), value)
                })
                .collect();
            Pdu::response(req.request_id, 0, 0, vbs)
        }
        PduType::GetNext => {
            let vbs = req
                .varbinds
                .iter()
                .map(|vb| {
                    match state
                        .store
                        .range((Bound::Excluded(&vb.oid), Bound::Unbounded))
                        .next()
                    {
                        Some((oid, s)) => VarBind::new(oid.clone(), s.value.clone()),
                        None => VarBind::new(vb.oid.clone(), BerValue::EndOfMibView),
                    }
                })
                .collect();
            Pdu::response(req.request_id, 0, 0, vbs)
        }
        PduType::Set => {
            let failure = req.varbinds.iter().enumerate().find_map(|(i, vb)| {
                set_check(&state.store, vb).map(|status| (status, i as i32 + 1))
            });
            match failure {
                Some((status, index)) => Pdu::response(req.request_id, status, index, req.varbinds.clone()),
                None => {
                    for vb in &req.varbinds {
                        if state.dropped_writes.contains(&vb.oid) {
                            continue;
                        }
                        if let Some(slot) = state.store.get_mut(&vb.oid) {
                            slot.value = vb.value.clone();
                        }
                    }
                    Pdu::response(req.request_id, 0, 0, req.varbinds.clone())
                }
            }
        }
        PduType::Response => return None,
    };
    Some(Message {
        version: msg.version,
        community: msg.community.clone(),
        pdu,
    })
}

/// Existence, then access, then syntax.
fn set_check(store: &OidStore, vb: &VarBind) -> Option<i32> {
    let Some(slot) = store.get(&vb.oid) else {
        return Some(error_status::NO_CREATION);
    };
    if slot.access != Access::ReadWrite {
        return Some(error_status::NOT_WRITABLE);
    }
    if vb.value.is_exception() || vb.value.kind() != slot.value.kind() {
        return Some(error_status::WRONG_TYPE);
    }
    None
}

/// Due time of a fault that is applied lazily, in injection order.
#[derive(Debug, Clone)]
pub(crate) struct PendingFault {
    pub at: Timestamp,
    pub seq: u64,
    pub kind: FaultKind,
}

/// Applies every pending fault due at `now`, earliest first.
pub(crate) fn apply_due(state: &mut AgentState, pending: &mut Vec<PendingFault>, now: Timestamp) {
    if pending.iter().all(|p| p.at > now) {
        return;
    }
    pending.sort_by_key(|p| (p.at, p.seq));
    let split = pending.partition_point(|p| p.at <= now);
    for p in pending.drain(..split) {
        state.apply_fault(&p.kind);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent() -> AgentState {
        AgentState::from_profile(&DeviceProfile::new("r1", Oid::from_arcs(&[1, 3, 6, 1, 4, 1, 9, 1, 620])))
    }

    fn req(pdu_type: PduType, vbs: Vec<VarBind>) -> Message {
        Message::v2c("public", Pdu::request(pdu_type, 9, vbs))
    }

    #[test]
    fn get_and_missing() {
        let mut a = agent();
        let m = req(
            PduType::Get,
            vec![VarBind::null(well_known::sys_name()), VarBind::null(Oid::from_arcs(&[1, 3, 9]))],
        );
        let r = handle_pdu(&mut a, &m).unwrap();
        assert_eq!(r.pdu.request_id, 9);
        assert_eq!(r.pdu.error_status, 0);
        assert_eq!(r.pdu.varbinds[0].value, BerValue::octets("r1"));
        assert_eq!(r.pdu.varbinds[1].value, BerValue::NoSuchObject);
    }

    #[test]
    fn getnext_successor_and_end() {
        let mut a = agent();
        let r = handle_pdu(&mut a, &req(PduType::GetNext, vec![VarBind::null(Oid::from_arcs(&[1, 3]))])).unwrap();
        assert_eq!(r.pdu.varbinds[0].oid, well_known::sys_descr());
        let last = a.store.keys().next_back().unwrap().clone();
        let r = handle_pdu(&mut a, &req(PduType::GetNext, vec![VarBind::null(last.clone())])).unwrap();
        assert_eq!(r.pdu.varbinds[0], VarBind::new(last, BerValue::EndOfMibView));
    }

    #[test]
    fn set_is_all_or_nothing() {
        let mut a = agent();
        let before = a.store.clone();
        let m = req(
            PduType::Set,
            vec![
                VarBind::new(well_known::sys_name(), BerValue::octets("x")),
                VarBind::new(well_known::sys_descr(), BerValue::octets("y")),
            ],
        );
        let r = handle_pdu(&mut a, &m).unwrap();
        assert_eq!((r.pdu.error_status, r.pdu.error_index), (17, 2));
        assert_eq!(a.store, before);
    }

    #[test]
    fn set_status_order() {
        let mut a = agent();
        let missing = req(PduType::Set, vec![VarBind::new(Oid::from_arcs(&[1, 3, 9]), BerValue::Integer(1))]);
        assert_eq!(handle_pdu(&mut a, &missing).unwrap().pdu.error_status, 11);
        let ro_wrong_type = req(PduType::Set, vec![VarBind::new(well_known::sys_descr(), BerValue::Integer(1))]);
        assert_eq!(handle_pdu(&mut a, &ro_wrong_type).unwrap().pdu.error_status, 17);
        let wrong_type = req(PduType::Set, vec![VarBind::new(well_known::sys_name(), BerValue::Integer(1))]);
        assert_eq!(handle_pdu(&mut a, &wrong_type).unwrap().pdu.error_status, 7);
        let ok = req(PduType::Set, vec![VarBind::new(well_known::sys_name(), BerValue::octets("new"))]);
        assert_eq!(handle_pdu(&mut a, &ok).unwrap().pdu.error_status, 0);
        assert_eq!(a.store[&well_known::sys_name()].value, BerValue::octets("new"));
    }

    #[test]
    fn community_mismatch_and_mute_are_silent() {
        let mut a = agent();
        let wrong = Message::v2c("private", Pdu::request(PduType::Get, 1, vec![VarBind::null(well_known::sys_name())]));
        assert!(handle_pdu(&mut a, &wrong).is_none());
        a.apply_fault(&FaultKind::Mute);
        assert!(handle_pdu(&mut a, &req(PduType::Get, vec![])).is_none());
        a.apply_fault(&FaultKind::Restore);
        assert!(handle_pdu(&mut a, &req(PduType::Get, vec![])).is_some());
    }

    #[test]
    fn drop_writes_acknowledges_without_storing() {
        let mut a = agent();
        a.apply_fault(&FaultKind::DropWrites { oid: well_known::sys_name() });
        let m = req(PduType::Set, vec![VarBind::new(well_known::sys_name(), BerValue::octets("z"))]);
        assert_eq!(handle_pdu(&mut a, &m).unwrap().pdu.error_status, 0);
        assert_eq!(a.store[&well_known::sys_name()].value, BerValue::octets("r1"));
    }

    #[test]
    fn due_faults_apply_in_time_order() {
        let mut a = agent();
        let mut pending = vec![
            PendingFault { at: Timestamp(200), seq: 1, kind: FaultKind::Restore },
            PendingFault { at: Timestamp(100), seq: 0, kind: FaultKind::Mute },
        ];
        apply_due(&mut a, &mut pending, Timestamp(150));
        assert!(a.muted && pending.len() == 1);
        apply_due(&mut a, &mut pending, Timestamp(200));
        assert!(!a.muted && pending.is_empty());
    }
}
