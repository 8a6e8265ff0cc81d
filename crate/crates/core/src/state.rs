//! Managed objects, check results and the soft/hard state machine.
//!
//! A non-OK result is first recorded as a SOFT state and retried; once
//! `max_check_attempts` consecutive non-OK results have been seen the state
//! becomes HARD and an alarm is opened. A single OK result always returns
//! the object to HARD OK and closes any open alarm.
//!
//! An alarm is open for an object exactly when its record is HARD non-OK,
//! so [`apply_check_result`] needs nothing beyond the record itself.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;

pub const DEFAULT_CHECK_INTERVAL_S: u64 = 300;
pub const DEFAULT_RETRY_INTERVAL_S: u64 = 60;
pub const DEFAULT_MAX_CHECK_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ObjectKind {
    Host,
    Service,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitoredObject {
    pub id: String,
    pub kind: ObjectKind,
    #[serde(default)]
    pub display_name: String,
    #[serde(default)]
    pub address: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_host: Option<String>,
    pub check_command: String,
    #[serde(default = "default_check_interval")]
    pub check_interval_s: u64,
    #[serde(default = "default_retry_interval")]
    pub retry_interval_s: u64,
    #[serde(default = "default_max_attempts")]
    pub max_check_attempts: u32,
}

fn default_check_interval() -> u64 {
    DEFAULT_CHECK_INTERVAL_S
}
fn default_retry_interval() -> u64 {
    DEFAULT_RETRY_INTERVAL_S
}
fn default_max_attempts() -> u32 {
    DEFAULT_MAX_CHECK_ATTEMPTS
}

impl MonitoredObject {
    pub fn host(id: &str, address: &str, check_command: &str) -> Self {
        MonitoredObject {
            id: id.to_string(),
            kind: ObjectKind::Host,
            display_name: id.to_string(),
            address: address.to_string(),
            parent_host: None,
            check_command: check_command.to_string(),
            check_interval_s: DEFAULT_CHECK_INTERVAL_S,
            retry_interval_s: DEFAULT_RETRY_INTERVAL_S,
            max_check_attempts: DEFAULT_MAX_CHECK_ATTEMPTS,
        }
    }

    pub fn service(id: &str, host: &str, address: &str, check_command: &str) -> Self {
        MonitoredObject {
            kind: ObjectKind::Service,
            parent_host: Some(host.to_string()),
            ..MonitoredObject::host(id, address, check_command)
        }
    }

    pub fn with_intervals(mut self, check_s: u64, retry_s: u64, max_attempts: u32) -> Self {
        self.check_interval_s = check_s;
        self.retry_interval_s = retry_s;
        self.max_check_attempts = max_attempts;
        self
    }

    pub fn with_parent(mut self, parent: &str) -> Self {
        self.parent_host = Some(parent.to_string());
        self
    }

    /// Returns every violated field invariant; empty means valid.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.id.trim().is_empty() {
            problems.push("object id is empty".to_string());
        }
        match (self.kind, &self.parent_host) {
            (ObjectKind::Service, None) => {
                problems.push(format!("service '{}' has no parent_host", self.id))
            }
            (ObjectKind::Host, Some(p)) if p == &self.id => {
                problems.push(format!("host '{}' names itself as parent", self.id))
            }
            _ => {}
        }
        if self.check_command.trim().is_empty() {
            problems.push(format!("object '{}' has an empty check_command", self.id));
        }
        if self.check_interval_s == 0 {
            problems.push(format!("object '{}': check_interval_s must be > 0", self.id));
        }
        if self.retry_interval_s == 0 {
            problems.push(format!("object '{}': retry_interval_s must be > 0", self.id));
        }
        if self.max_check_attempts == 0 {
            problems.push(format!("object '{}': max_check_attempts must be >= 1", self.id));
        }
        problems
    }
}

/// Result of one check as reported by a plugin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CheckStatus {
    Ok,
    Warning,
    Critical,
    Unknown,
}

impl CheckStatus {
    pub fn is_ok(self) -> bool {
        self == CheckStatus::Ok
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CheckStatus::Ok => "OK",
            CheckStatus::Warning => "WARNING",
            CheckStatus::Critical => "CRITICAL",
            CheckStatus::Unknown => "UNKNOWN",
        }
    }

    /// Ordering used when summarising several statuses into one.
    pub fn severity_rank(self) -> u8 {
        match self {
            CheckStatus::Ok => 0,
            CheckStatus::Warning => 1,
            CheckStatus::Unknown => 2,
            CheckStatus::Critical => 3,
        }
    }
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Host view of a check status. `Unreachable` is only ever produced by the
/// topology module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HostStatus {
    Up,
    Down,
    Unreachable,
}

impl HostStatus {
    pub fn from_check(status: CheckStatus) -> Self {
        if status.is_ok() {
            HostStatus::Up
        } else {
            HostStatus::Down
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StateType {
    Soft,
    Hard,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateRecord {
    pub object_id: String,
    pub current_status: CheckStatus,
    pub state_type: StateType,
    pub attempt: u32,
    pub last_check_ts: Timestamp,
    pub last_hard_change_ts: Timestamp,
    pub last_output: String,
}

impl StateRecord {
    /// The state every object starts in before its first check.
    pub fn initial(object_id: &str, now: Timestamp) -> Self {
        StateRecord {
            object_id: object_id.to_string(),
            current_status: CheckStatus::Ok,
            state_type: StateType::Hard,
            attempt: 1,
            last_check_ts: now,
            last_hard_change_ts: now,
            last_output: String::new(),
        }
    }

    /// Last confirmed status. A SOFT run always starts from HARD OK.
    pub fn hard_status(&self) -> CheckStatus {
        match self.state_type {
            StateType::Hard => self.current_status,
            StateType::Soft => CheckStatus::Ok,
        }
    }

    pub fn is_hard_problem(&self) -> bool {
        self.state_type == StateType::Hard && !self.current_status.is_ok()
    }
}

/// A plugin outcome reduced to what the state machine consumes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub status: CheckStatus,
    pub output: String,
    pub ts: Timestamp,
}

impl CheckResult {
    pub fn new(status: CheckStatus, output: impl Into<String>, ts: Timestamp) -> Self {
        CheckResult {
            status,
            output: output.into(),
            ts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StateEventKind {
    AlarmOpened,
    AlarmClosed,
    StateChanged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateEvent {
    pub kind: StateEventKind,
    pub object_id: String,
    pub timestamp: Timestamp,
    pub detail: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StateError {
    #[error("contract violation: record for '{record}' applied to object '{object}'")]
    ObjectMismatch { record: String, object: String },
    #[error("alarm {0} not found")]
    AlarmNotFound(AlarmId),
    #[error("alarm {0} is closed")]
    AlarmClosed(AlarmId),
    #[error("unknown object '{0}'")]
    UnknownObject(String),
}

/// Applies one check result to a record.
///
/// Pure: the same `(record, result, obj)` always yields the same state and
/// events.
pub fn apply_check_result(
    record: &StateRecord,
    result: &CheckResult,
    obj: &MonitoredObject,
) -> Result<(StateRecord, Vec<StateEvent>), StateError> {
    if record.object_id != obj.id {
        return Err(StateError::ObjectMismatch {
            record: record.object_id.clone(),
            object: obj.id.clone(),
        });
    }
    let max = obj.max_check_attempts.max(1);
    let had_alarm = record.is_hard_problem();
    let mut next = record.clone();
    next.last_check_ts = result.ts;
    next.last_output = result.output.clone();

    if result.status.is_ok() {
        next.current_status = CheckStatus::Ok;
        next.state_type = StateType::Hard;
        next.attempt = 1;
    } else {
        next.current_status = result.status;
        match (record.state_type, record.current_status.is_ok()) {
            // Fresh problem out of OK.
            (_, true) => {
                next.attempt = 1;
                next.state_type = if max == 1 {
                    StateType::Hard
                } else {
                    StateType::Soft
                };
            }
            (StateType::Soft, false) => {
                next.attempt = (record.attempt + 1).min(max);
                next.state_type = if next.attempt >= max {
                    StateType::Hard
                } else {
                    StateType::Soft
                };
            }
            (StateType::Hard, false) => {
                next.attempt = max;
                next.state_type = StateType::Hard;
            }
        }
    }

    let hard_changed = next.hard_status() != record.hard_status();
    if hard_changed {
        next.last_hard_change_ts = result.ts;
    }

    let mut events = Vec::new();
    let event = |kind, detail: String| StateEvent {
        kind,
        object_id: obj.id.clone(),
        timestamp: result.ts,
        detail,
    };
    if next.current_status != record.current_status || next.state_type != record.state_type {
        events.push(event(
            StateEventKind::StateChanged,
            format!(
                "{} {:?} -> {} {:?} (attempt {}/{})",
                record.current_status,
                record.state_type,
                next.current_status,
                next.state_type,
                next.attempt,
                max
            ),
        ));
    }
    let opens = next.is_hard_problem();
    if opens && !had_alarm {
        events.push(event(
            StateEventKind::AlarmOpened,
            format!("{}: {}", next.current_status, result.output),
        ));
    } else if had_alarm && !opens {
        events.push(event(
            StateEventKind::AlarmClosed,
            format!("recovered: {}", result.output),
        ));
    }
    Ok((next, events))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AlarmId(pub u64);

impl fmt::Display for AlarmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "A{}", self.0)
    }
}

impl std::str::FromStr for AlarmId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix('A').unwrap_or(s).parse().map(AlarmId)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AlarmState {
    Open,
    Acknowledged,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alarm {
    pub alarm_id: AlarmId,
    pub object_id: String,
    pub severity: CheckStatus,
    pub opened_ts: Timestamp,
    pub state: AlarmState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ack_by: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_ts: Option<Timestamp>,
}

impl Alarm {
    pub fn is_active(&self) -> bool {
        self.state != AlarmState::Closed
    }
}

/// Alarm lifecycle bookkeeping. At most one non-closed alarm per object.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AlarmBook {
    alarms: BTreeMap<AlarmId, Alarm>,
    active: BTreeMap<String, AlarmId>,
    next_id: u64,
}

impl AlarmBook {
    pub fn new() -> Self {
        AlarmBook {
            next_id: 1,
            ..Default::default()
        }
    }

    /// Rebuilds a book from persisted alarms. `next_id` continues after the
    /// highest id seen.
    pub fn from_alarms(alarms: impl IntoIterator<Item = Alarm>, next_id: u64) -> Self {
        let mut book = AlarmBook::new();
        for alarm in alarms {
            if alarm.is_active() {
                book.active.insert(alarm.object_id.clone(), alarm.alarm_id);
            }
            book.next_id = book.next_id.max(alarm.alarm_id.0 + 1);
            book.alarms.insert(alarm.alarm_id, alarm);
        }
        book.next_id = book.next_id.max(next_id);
        book
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    /// Updates alarms from the events of one applied result. Returns the ids
    /// of alarms that were opened, closed or re-graded.
    pub fn process(&mut self, record: &StateRecord, events: &[StateEvent]) -> Vec<AlarmId> {
        let mut touched = Vec::new();
        for ev in events {
            match ev.kind {
                StateEventKind::AlarmOpened => {
                    let id = AlarmId(self.next_id);
                    self.next_id += 1;
                    if let Some(prev) = self.active.insert(ev.object_id.clone(), id) {
                        // Cannot occur with records produced by apply_check_result.
                        if let Some(a) = self.alarms.get_mut(&prev) {
                            a.state = AlarmState::Closed;
                            a.closed_ts = Some(ev.timestamp);
                        }
                    }
                    self.alarms.insert(
                        id,
                        Alarm {
                            alarm_id: id,
                            object_id: ev.object_id.clone(),
                            severity: record.current_status,
                            opened_ts: ev.timestamp,
                            state: AlarmState::Open,
                            ack_by: None,
                            closed_ts: None,
                        },
                    );
                    touched.push(id);
                }
                StateEventKind::AlarmClosed => {
                    if let Some(id) = self.active.remove(&ev.object_id) {
                        if let Some(a) = self.alarms.get_mut(&id) {
                            a.state = AlarmState::Closed;
                            a.closed_ts = Some(ev.timestamp);
                        }
                        touched.push(id);
                    }
                }
                StateEventKind::StateChanged => {
                    // Severity follows the hard status while the alarm stays open.
                    if let Some(id) = self.active.get(&ev.object_id) {
                        if let Some(a) = self.alarms.get_mut(id) {
                            if record.is_hard_problem() && a.severity != record.current_status {
                                a.severity = record.current_status;
                                touched.push(*id);
                            }
                        }
                    }
                }
            }
        }
        touched
    }

    pub fn acknowledge(&mut self, id: AlarmId, operator_id: &str) -> Result<Alarm, StateError> {
        let alarm = self.alarms.get_mut(&id).ok_or(StateError::AlarmNotFound(id))?;
        match alarm.state {
            AlarmState::Closed => Err(StateError::AlarmClosed(id)),
            AlarmState::Acknowledged => Ok(alarm.clone()),
            AlarmState::Open => {
                alarm.state = AlarmState::Acknowledged;
                alarm.ack_by = Some(operator_id.to_string());
                Ok(alarm.clone())
            }
        }
    }

    pub fn get(&self, id: AlarmId) -> Option<&Alarm> {
        self.alarms.get(&id)
    }

    pub fn active_for(&self, object_id: &str) -> Option<&Alarm> {
        self.active.get(object_id).and_then(|id| self.alarms.get(id))
    }

    pub fn all(&self) -> impl Iterator<Item = &Alarm> {
        self.alarms.values()
    }

    pub fn active(&self) -> impl Iterator<Item = &Alarm> {
        self.alarms.values().filter(|a| a.is_active())
    }
}

/// Point-in-time view of every record plus the non-closed alarms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservedState {
    pub taken_at: Timestamp,
    pub states: Vec<StateRecord>,
    pub open_alarms: Vec<Alarm>,
}

impl ObservedState {
    pub fn record(&self, object_id: &str) -> Option<&StateRecord> {
        self.states.iter().find(|r| r.object_id == object_id)
    }

    pub fn has_open_alarm(&self, object_id: &str) -> bool {
        self.open_alarms.iter().any(|a| a.object_id == object_id)
    }
}

/// Single owner of all records and alarms.
#[derive(Debug, Default)]
pub struct StateStore {
    objects: BTreeMap<String, MonitoredObject>,
    records: BTreeMap<String, StateRecord>,
    alarms: AlarmBook,
    last_snapshot: AtomicU64,
}

impl StateStore {
    pub fn new(objects: impl IntoIterator<Item = MonitoredObject>, now: Timestamp) -> Self {
        let objects: BTreeMap<_, _> = objects.into_iter().map(|o| (o.id.clone(), o)).collect();
        let records = objects
            .keys()
            .map(|id| (id.clone(), StateRecord::initial(id, now)))
            .collect();
        StateStore {
            objects,
            records,
            alarms: AlarmBook::new(),
            last_snapshot: AtomicU64::new(0),
        }
    }

    /// Replaces records and alarms with restored ones. Records for objects no
    /// longer configured are dropped.
    pub fn restore(&mut self, records: Vec<StateRecord>, alarms: Vec<Alarm>, next_alarm_id: u64) {
        for r in records {
            if self.objects.contains_key(&r.object_id) {
                self.records.insert(r.object_id.clone(), r);
            }
        }
        self.alarms = AlarmBook::from_alarms(
            alarms
                .into_iter()
                .filter(|a| self.objects.contains_key(&a.object_id)),
            next_alarm_id,
        );
    }

    pub fn object(&self, id: &str) -> Option<&MonitoredObject> {
        self.objects.get(id)
    }

    pub fn objects(&self) -> impl Iterator<Item = &MonitoredObject> {
        self.objects.values()
    }

    pub fn record(&self, id: &str) -> Option<&StateRecord> {
        self.records.get(id)
    }

    pub fn records(&self) -> impl Iterator<Item = &StateRecord> {
        self.records.values()
    }

    pub fn alarms(&self) -> &AlarmBook {
        &self.alarms
    }

    /// Applies a result for `object_id`, updating alarms. Returns the events
    /// and the alarms they touched.
    pub fn apply(
        &mut self,
        object_id: &str,
        result: &CheckResult,
    ) -> Result<(Vec<StateEvent>, Vec<AlarmId>), StateError> {
        let obj = self
            .objects
            .get(object_id)
            .ok_or_else(|| StateError::UnknownObject(object_id.to_string()))?;
        let record = self
            .records
            .get(object_id)
            .ok_or_else(|| StateError::UnknownObject(object_id.to_string()))?;
        let (next, events) = apply_check_result(record, result, obj)?;
        let touched = self.alarms.process(&next, &events);
        self.records.insert(object_id.to_string(), next);
        Ok((events, touched))
    }

    pub fn acknowledge_alarm(&mut self, id: AlarmId, operator_id: &str) -> Result<Alarm, StateError> {
        self.alarms.acknowledge(id, operator_id)
    }

    /// Snapshot timestamps never decrease across calls, even if `now` does.
    pub fn snapshot(&self, now: Timestamp) -> ObservedState {
        let prev = self.last_snapshot.fetch_max(now.0, Ordering::SeqCst);
        ObservedState {
            taken_at: Timestamp(prev.max(now.0)),
            states: self.records.values().cloned().collect(),
            open_alarms: self.alarms.active().cloned().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn svc(max: u32) -> MonitoredObject {
        MonitoredObject::service("web", "h1", "10.0.0.5", "check_http").with_intervals(300, 60, max)
    }

    fn res(status: CheckStatus, t: u64) -> CheckResult {
        CheckResult::new(status, format!("{status}"), Timestamp(t))
    }

    fn rec(status: CheckStatus, st: StateType, attempt: u32) -> StateRecord {
        StateRecord {
            current_status: status,
            state_type: st,
            attempt,
            ..StateRecord::initial("web", Timestamp(0))
        }
    }

    fn kinds(evs: &[StateEvent]) -> Vec<StateEventKind> {
        evs.iter().map(|e| e.kind).collect()
    }

    #[test]
    fn first_failure_is_soft() {
        let (r, ev) = apply_check_result(
            &rec(CheckStatus::Ok, StateType::Hard, 1),
            &res(CheckStatus::Critical, 10),
            &svc(3),
        )
        .unwrap();
        assert_eq!((r.current_status, r.state_type, r.attempt), (CheckStatus::Critical, StateType::Soft, 1));
        assert_eq!(kinds(&ev), vec![StateEventKind::StateChanged]);
    }

    #[test]
    fn reaching_max_attempts_goes_hard_and_alarms() {
        let (r, ev) = apply_check_result(
            &rec(CheckStatus::Critical, StateType::Soft, 2),
            &res(CheckStatus::Critical, 10),
            &svc(3),
        )
        .unwrap();
        assert_eq!((r.state_type, r.attempt), (StateType::Hard, 3));
        assert!(kinds(&ev).contains(&StateEventKind::AlarmOpened));
        assert_eq!(r.last_hard_change_ts, Timestamp(10));
    }

    #[test]
    fn recovery_closes_alarm() {
        let (r, ev) = apply_check_result(
            &rec(CheckStatus::Critical, StateType::Hard, 3),
            &res(CheckStatus::Ok, 10),
            &svc(3),
        )
        .unwrap();
        assert_eq!((r.current_status, r.state_type, r.attempt), (CheckStatus::Ok, StateType::Hard, 1));
        assert!(kinds(&ev).contains(&StateEventKind::AlarmClosed));
    }

    #[test]
    fn soft_recovery_has_no_alarm_events() {
        let (r, ev) = apply_check_result(
            &rec(CheckStatus::Warning, StateType::Soft, 2),
            &res(CheckStatus::Ok, 10),
            &svc(3),
        )
        .unwrap();
        assert_eq!(r.state_type, StateType::Hard);
        assert_eq!(kinds(&ev), vec![StateEventKind::StateChanged]);
    }

    #[test]
    fn max_one_alarms_immediately() {
        let (r, ev) = apply_check_result(
            &rec(CheckStatus::Ok, StateType::Hard, 1),
            &res(CheckStatus::Warning, 1),
            &svc(1),
        )
        .unwrap();
        assert_eq!((r.state_type, r.attempt), (StateType::Hard, 1));
        assert_eq!(kinds(&ev), vec![StateEventKind::StateChanged, StateEventKind::AlarmOpened]);
    }

    #[test]
    fn steady_ok_emits_nothing() {
        let (_, ev) = apply_check_result(
            &rec(CheckStatus::Ok, StateType::Hard, 1),
            &res(CheckStatus::Ok, 1),
            &svc(3),
        )
        .unwrap();
        assert!(ev.is_empty());
    }

    #[test]
    fn mismatched_object_is_rejected() {
        let other = MonitoredObject::host("other", "x", "check_ping");
        let err = apply_check_result(&rec(CheckStatus::Ok, StateType::Hard, 1), &res(CheckStatus::Ok, 1), &other)
            .unwrap_err();
        assert!(matches!(err, StateError::ObjectMismatch { .. }));
    }

    #[test]
    fn escalation_updates_open_alarm_in_place() {
        let mut store = StateStore::new([svc(1)], Timestamp(0));
        store.apply("web", &res(CheckStatus::Warning, 1)).unwrap();
        let first = store.alarms().active_for("web").unwrap().clone();
        assert_eq!(first.severity, CheckStatus::Warning);
        let (ev, _) = store.apply("web", &res(CheckStatus::Critical, 2)).unwrap();
        assert_eq!(kinds(&ev), vec![StateEventKind::StateChanged]);
        let now = store.alarms().active_for("web").unwrap();
        assert_eq!(now.alarm_id, first.alarm_id);
        assert_eq!(now.severity, CheckStatus::Critical);
        assert_eq!(store.alarms().active().count(), 1);
    }

    #[test]
    fn acknowledge_lifecycle() {
        let mut store = StateStore::new([svc(1)], Timestamp(0));
        store.apply("web", &res(CheckStatus::Critical, 1)).unwrap();
        let id = store.alarms().active_for("web").unwrap().alarm_id;

        let a = store.acknowledge_alarm(id, "noc1").unwrap();
        assert_eq!((a.state, a.ack_by.as_deref()), (AlarmState::Acknowledged, Some("noc1")));
        let again = store.acknowledge_alarm(id, "noc2").unwrap();
        assert_eq!(again.ack_by.as_deref(), Some("noc1"));

        store.apply("web", &res(CheckStatus::Ok, 2)).unwrap();
        assert_eq!(store.acknowledge_alarm(id, "noc1"), Err(StateError::AlarmClosed(id)));
        assert_eq!(
            store.acknowledge_alarm(AlarmId(99), "noc1"),
            Err(StateError::AlarmNotFound(AlarmId(99)))
        );
        let closed = store.alarms().get(id).unwrap();
        assert_eq!(closed.closed_ts, Some(Timestamp(2)));
    }

    #[test]
    fn snapshots() {
        let empty = StateStore::new([], Timestamp(0));
        let s = empty.snapshot(Timestamp(5));
        assert!(s.states.is_empty() && s.open_alarms.is_empty());

        let objs = [
            svc(1),
            MonitoredObject::host("h1", "10.0.0.5", "check_ping"),
        ];
        let mut store = StateStore::new(objs, Timestamp(0));
        store.apply("web", &res(CheckStatus::Critical, 1)).unwrap();
        let a = store.snapshot(Timestamp(10));
        assert_eq!((a.states.len(), a.open_alarms.len()), (2, 1));
        let b = store.snapshot(Timestamp(20));
        assert_eq!(a.states, b.states);
        assert_eq!(a.open_alarms, b.open_alarms);
        assert!(b.taken_at > a.taken_at);
        // A clock that stepped back still yields a non-decreasing timestamp.
        assert_eq!(store.snapshot(Timestamp(15)).taken_at, Timestamp(20));
    }

    #[test]
    fn object_validation() {
        let mut s = svc(3);
        s.parent_host = None;
        assert!(s.validate()[0].contains("no parent_host"));
        let h = MonitoredObject::host("h", "a", "c").with_parent("h");
        assert!(h.validate()[0].contains("itself"));
        let zero = MonitoredObject::host("h", "a", "c").with_intervals(0, 0, 0);
        assert_eq!(zero.validate().len(), 3);
    }

    #[test]
    fn alarm_id_text() {
        assert_eq!(AlarmId(7).to_string(), "A7");
        assert_eq!("A7".parse::<AlarmId>().unwrap(), AlarmId(7));
        assert_eq!("7".parse::<AlarmId>().unwrap(), AlarmId(7));
    }
}
