//! Single-writer monitoring loop: runs due checks, feeds results through the
//! state machine, reschedules, and keeps what the evaluator needs.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Clock, Timestamp};
use crate::eval::{AlarmOpening, ResourceUsage, RunStats};
use crate::plugin::{argument_macros, execute_plugin, expand_macros, run_parallel, split_check_command, PluginKind, PluginRegistry, DEFAULT_PARALLELISM};
use crate::scheduler::{build_schedule, next_due, reschedule_after_result, Schedule, ScheduleEntry};
use crate::snmp::{well_known, BerValue, ClientError, CounterSnapshot, MibRegistry, Oid, ProtocolCounters, SnmpClient, SnmpTarget, TransportFactory, IN_PROCESS_SCHEME};
use crate::state::{
    Alarm, AlarmId, CheckResult, CheckStatus, MonitoredObject, ObjectKind, ObservedState, StateError, StateEvent, StateEventKind, StateRecord, StateStore,
};
use crate::topology::{render_map_document, DeviceIdentity, IconRule, MapDocument, Position, TopologyError, TopologyGraph};

/// Reserved check name for the in-process SNMP GET probe:
/// `snmp_probe!<oid>[!<expected value>]`.
pub const SNMP_PROBE: &str = "snmp_probe";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid engine setup:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("unknown device '{0}'")]
    UnknownDevice(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnmpSettings {
    #[serde(default = "default_community")]
    pub community: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_community() -> String {
    "public".into()
}
fn default_timeout_ms() -> u64 {
    1000
}
fn default_retries() -> u32 {
    1
}

impl Default for SnmpSettings {
    fn default() -> Self {
        SnmpSettings {
            community: default_community(),
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
        }
    }
}

impl SnmpSettings {
    pub fn target(&self, address: &str) -> SnmpTarget {
        SnmpTarget::new(address, &self.community).with_timeout(Duration::from_millis(self.timeout_ms), self.retries)
    }
}

#[derive(Debug, Clone)]
pub struct EngineSetup {
    pub objects: Vec<MonitoredObject>,
    pub plugins: PluginRegistry,
    pub mib: MibRegistry,
    pub icon_rules: Vec<IconRule>,
    /// Identities known up front; probing fills in the rest.
    pub identities: BTreeMap<String, DeviceIdentity>,
    pub positions: BTreeMap<String, Position>,
    pub snmp: SnmpSettings,
    pub parallelism: usize,
}

impl EngineSetup {
    pub fn new(objects: Vec<MonitoredObject>) -> Self {
        EngineSetup {
            objects,
            plugins: PluginRegistry::new(),
            mib: MibRegistry::builtin(),
            icon_rules: Vec::new(),
            identities: BTreeMap::new(),
            positions: BTreeMap::new(),
            snmp: SnmpSettings::default(),
            parallelism: DEFAULT_PARALLELISM,
        }
    }

    /// Every problem with the object set, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut problems: Vec<String> = self.objects.iter().flat_map(MonitoredObject::validate).collect();
        let mut seen = BTreeSet::new();
        let hosts: BTreeSet<&str> = self
            .objects
            .iter()
            .filter(|o| o.kind == ObjectKind::Host)
            .map(|o| o.id.as_str())
            .collect();
        for o in &self.objects {
            if !seen.insert(o.id.as_str()) {
                problems.push(format!("duplicate object id '{}'", o.id));
            }
            if let Some(p) = &o.parent_host {
                if !hosts.contains(p.as_str()) {
                    problems.push(format!("object '{}': parent_host '{p}' is not a host", o.id));
                }
            }
            let (name, args) = split_check_command(&o.check_command);
            if name == SNMP_PROBE {
                match args.first().map(|a| a.parse::<Oid>()) {
                    Some(Ok(_)) => {}
                    Some(Err(e)) => problems.push(format!("object '{}': {SNMP_PROBE} oid: {e}", o.id)),
                    None => problems.push(format!("object '{}': {SNMP_PROBE} needs an oid argument", o.id)),
                }
            } else if !name.is_empty() {
                if let Err(e) = self.plugins.require(name, PluginKind::Monitoring) {
                    problems.push(format!("object '{}': {e}", o.id));
                }
            }
        }
        problems
    }
}

/// Runs one check. Shared read-only across worker threads.
pub struct CheckRunner {
    plugins: PluginRegistry,
    mib: MibRegistry,
    transports: Arc<dyn TransportFactory>,
    clock: Arc<dyn Clock>,
    counters: Arc<ProtocolCounters>,
    snmp: SnmpSettings,
}

impl CheckRunner {
    pub fn run(&self, obj: &MonitoredObject) -> CheckResult {
        let (name, args) = split_check_command(&obj.check_command);
        let (status, output) = if name == SNMP_PROBE {
            self.snmp_probe(obj, &args)
        } else {
            self.process_plugin(obj, name, &args)
        };
        CheckResult::new(status, output, self.clock.now())
    }

    fn process_plugin(&self, obj: &MonitoredObject, name: &str, args: &[&str]) -> (CheckStatus, String) {
        let desc = match self.plugins.require(name, PluginKind::Monitoring) {
            Ok(d) => d,
            Err(e) => return (CheckStatus::Unknown, e.to_string()),
        };
        let command = match expand_macros(&desc.command_template, obj, &argument_macros(args)) {
            Ok(c) => c.command,
            Err(e) => return (CheckStatus::Unknown, e.to_string()),
        };
        match execute_plugin(desc, &command) {
            Ok(out) => {
                let text = if out.timed_out {
                    format!("plugin timed out after {} s", desc.timeout_s)
                } else {
                    out.status_text.clone()
                };
                (out.status(), text)
            }
            Err(e) => (CheckStatus::Unknown, e.to_string()),
        }
    }

    pub fn plugins(&self) -> &PluginRegistry {
        &self.plugins
    }

    pub fn mib(&self) -> &MibRegistry {
        &self.mib
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn client(&self) -> Result<SnmpClient, crate::snmp::TransportError> {
        Ok(SnmpClient::new(self.transports.open()?, self.clock.clone(), self.counters.clone()))
    }

    fn snmp_probe(&self, obj: &MonitoredObject, args: &[&str]) -> (CheckStatus, String) {
        let Some(Ok(oid)) = args.first().map(|a| a.parse::<Oid>()) else {
            return (CheckStatus::Unknown, format!("{SNMP_PROBE}: missing or bad oid"));
        };
        let expected = args.get(1).map(|s| s.trim());
        let mut client = match self.client() {
            Ok(c) => c,
            Err(e) => return (CheckStatus::Unknown, e.to_string()),
        };
        let name = self.mib.describe(&oid);
        match client.get(&self.snmp.target(&obj.address), std::slice::from_ref(&oid)) {
            Ok(vbs) => {
                let value = vbs.into_iter().next().map_or(BerValue::NoSuchObject, |vb| vb.value);
                if value.is_exception() {
                    return (CheckStatus::Critical, format!("SNMP CRITICAL - {name} is {}", value.kind().as_str()));
                }
                match expected {
                    Some(want) if value.to_string() != want => (
                        CheckStatus::Critical,
                        format!("SNMP CRITICAL - {name} = {value} (expected {want})"),
                    ),
                    _ => (CheckStatus::Ok, format!("SNMP OK - {name} = {value}")),
                }
            }
            Err(e @ ClientError::Protocol { .. }) => (CheckStatus::Critical, format!("SNMP CRITICAL - {e}")),
            Err(e) => (CheckStatus::Unknown, format!("SNMP UNKNOWN - {e}")),
        }
    }
}

/// A state event plus the alarm it concerns, if any.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineEvent {
    #[serde(flatten)]
    pub event: StateEvent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alarm_id: Option<AlarmId>,
}

/// Everything needed to resume after a restart.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersistedState {
    pub records: Vec<StateRecord>,
    pub alarms: Vec<Alarm>,
    pub next_alarm_id: u64,
    pub schedule: Vec<ScheduleEntry>,
}

pub struct Engine {
    store: StateStore,
    schedule: Schedule,
    runner: Arc<CheckRunner>,
    graph: TopologyGraph,
    icon_rules: Vec<IconRule>,
    /// Host id to fleet device id, where they differ.
    device_alias: BTreeMap<String, String>,
    openings: Vec<AlarmOpening>,
    checks_run: u64,
    parallelism: usize,
}

impl Engine {
    pub fn new(setup: EngineSetup, clock: Arc<dyn Clock>, transports: Arc<dyn TransportFactory>) -> Result<Self, EngineError> {
        let problems = setup.validate();
        if !problems.is_empty() {
            return Err(EngineError::Invalid(problems));
        }
        let mut graph = TopologyGraph::from_objects(&setup.objects, &setup.identities, &setup.positions)?;
        graph.resolve_icons(&setup.icon_rules);
        let now = clock.now();
        let schedule = build_schedule(&setup.objects, now);
        let device_alias = setup
            .objects
            .iter()
            .filter(|o| o.kind == ObjectKind::Host)
            .filter_map(|o| o.address.strip_prefix(IN_PROCESS_SCHEME).map(|d| (o.id.clone(), d.to_string())))
            .collect();
        Ok(Engine {
            store: StateStore::new(setup.objects, now),
            schedule,
            runner: Arc::new(CheckRunner {
                plugins: setup.plugins,
                mib: setup.mib,
                transports,
                clock,
                counters: Arc::default(),
                snmp: setup.snmp,
            }),
            graph,
            icon_rules: setup.icon_rules,
            device_alias,
            openings: Vec::new(),
            checks_run: 0,
            parallelism: setup.parallelism.max(1),
        })
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.runner.clock
    }

    pub fn now(&self) -> Timestamp {
        self.runner.clock.now()
    }

    pub fn runner(&self) -> &Arc<CheckRunner> {
        &self.runner
    }

    pub fn store(&self) -> &StateStore {
        &self.store
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn graph(&self) -> &TopologyGraph {
        &self.graph
    }

    pub fn mib(&self) -> &MibRegistry {
        &self.runner.mib
    }

    pub fn plugins(&self) -> &PluginRegistry {
        &self.runner.plugins
    }

    pub fn counters(&self) -> CounterSnapshot {
        self.runner.counters.snapshot()
    }

    pub fn checks_run(&self) -> u64 {
        self.checks_run
    }

    pub fn set_device_alias(&mut self, host_id: &str, device_id: &str) {
        self.device_alias.insert(host_id.to_string(), device_id.to_string());
    }

    /// Fleet device behind an object: its host's alias, or the host id.
    pub fn device_of(&self, object_id: &str) -> Option<String> {
        let host = self.graph.host_of(object_id)?;
        Some(self.device_alias.get(host).cloned().unwrap_or_else(|| host.to_string()))
    }

    /// SNMP target for a host id.
    pub fn device_target(&self, host_id: &str) -> Result<SnmpTarget, EngineError> {
        match self.store.object(host_id) {
            Some(o) if o.kind == ObjectKind::Host => Ok(self.runner.snmp.target(&o.address)),
            _ => Err(EngineError::UnknownDevice(host_id.to_string())),
        }
    }

    pub fn snapshot(&self) -> ObservedState {
        self.store.snapshot(self.now())
    }

    pub fn map_document(&self) -> MapDocument {
        render_map_document(&self.graph, &self.snapshot(), &self.icon_rules)
    }

    /// Reads sysObjectID.0 and sysDescr.0 from hosts that have no identity
    /// yet and answer SNMP. Unreachable hosts keep the unknown icon.
    pub fn probe_identities(&mut self) {
        let hosts: Vec<(String, String)> = self
            .graph
            .nodes()
            .filter(|n| n.identity == DeviceIdentity::default())
            .filter_map(|n| self.store.object(&n.host_id).map(|o| (n.host_id.clone(), o.address.clone())))
            .filter(|(_, addr)| !addr.is_empty())
            .collect();
        for (host, addr) in hosts {
            let Ok(mut client) = self.runner.client() else { continue };
            let target = self.runner.snmp.target(&addr);
            match client.get(&target, &[well_known::sys_object_id(), well_known::sys_descr()]) {
                Ok(vbs) => {
                    let mut id = DeviceIdentity::default();
                    for vb in vbs {
                        match vb.value {
                            BerValue::ObjectIdentifier(oid) => id.sys_object_id = Some(oid),
                            BerValue::OctetString(s) => id.sys_descr = Some(String::from_utf8_lossy(&s).into_owned()),
                            _ => {}
                        }
                    }
                    tracing::debug!(host = %host, ?id, "identity probed");
                    self.graph.set_identity(&host, id);
                }
                Err(e) => tracing::debug!(host = %host, error = %e, "identity probe failed"),
            }
        }
        self.graph.resolve_icons(&self.icon_rules);
    }

    /// Runs every check due now. On a virtual clock checks run one after
    /// another so that their simulated waits add up deterministically.
    pub fn tick(&mut self) -> Vec<EngineEvent> {
        let due = next_due(&self.schedule, self.now());
        if due.is_empty() {
            return Vec::new();
        }
        let objects: Vec<MonitoredObject> = due.iter().filter_map(|id| self.store.object(id).cloned()).collect();
        let mut events = Vec::new();
        if self.runner.clock.is_virtual() || self.parallelism == 1 {
            for obj in objects {
                let result = self.runner.run(&obj);
                events.extend(self.accept(&obj, result));
            }
        } else {
            let runner = self.runner.clone();
            let results = run_parallel(objects.clone(), self.parallelism, |obj| runner.run(obj));
            for (obj, result) in objects.iter().zip(results) {
                events.extend(self.accept(obj, result));
            }
        }
        events
    }

    fn accept(&mut self, obj: &MonitoredObject, result: CheckResult) -> Vec<EngineEvent> {
        self.checks_run += 1;
        let (events, touched) = match self.store.apply(&obj.id, &result) {
            Ok(x) => x,
            Err(e) => {
                tracing::error!(object = %obj.id, error = %e, "dropping check result");
                return Vec::new();
            }
        };
        if let (Some(entry), Some(record)) = (self.schedule.get(&obj.id).cloned(), self.store.record(&obj.id)) {
            self.schedule.upsert(reschedule_after_result(&entry, record, obj, result.ts));
        }
        let alarm_id = touched.first().copied();
        events
            .into_iter()
            .map(|event| {
                let alarm = match event.kind {
                    StateEventKind::StateChanged => None,
                    _ => alarm_id,
                };
                if event.kind == StateEventKind::AlarmOpened {
                    self.openings.push(AlarmOpening {
                        object_id: event.object_id.clone(),
                        device_id: self.device_of(&event.object_id),
                        ts: event.timestamp,
                    });
                }
                EngineEvent { event, alarm_id: alarm }
            })
            .collect()
    }

    /// Advances through every due check up to `end`, sleeping on the clock in
    /// between, and leaves the clock at `end` or later.
    pub fn run_until(&mut self, end: Timestamp) -> Vec<EngineEvent> {
        let mut events = Vec::new();
        loop {
            let now = self.now();
            match self.schedule.earliest_due() {
                Some(due) if due <= end => {
                    if due > now {
                        self.runner.clock.sleep(due.since(now));
                    }
                    events.extend(self.tick());
                }
                _ => {
                    if end > now {
                        self.runner.clock.sleep(end.since(now));
                    }
                    return events;
                }
            }
        }
    }

    pub fn acknowledge(&mut self, id: AlarmId, operator_id: &str) -> Result<Alarm, EngineError> {
        Ok(self.store.acknowledge_alarm(id, operator_id)?)
    }

    pub fn alarm_openings(&self) -> &[AlarmOpening] {
        &self.openings
    }

    /// Counters since `baseline`, plus the caller's resource figures.
    pub fn run_stats(&self, baseline: &CounterSnapshot, usage: ResourceUsage) -> RunStats {
        RunStats {
            counters: self.counters().delta(baseline),
            usage,
            alarm_openings: self.openings.clone(),
        }
    }

    pub fn persisted_state(&self) -> PersistedState {
        PersistedState {
            records: self.store.records().cloned().collect(),
            alarms: self.store.alarms().all().cloned().collect(),
            next_alarm_id: self.store.alarms().next_id(),
            schedule: self.schedule.entries().cloned().collect(),
        }
    }

    /// Adopts saved records, alarms and due times for objects that still
    /// exist. Objects new to the configuration keep their fresh state.
    pub fn restore(&mut self, saved: PersistedState) {
        let known = |id: &str| self.store.object(id).is_some();
        let records: Vec<StateRecord> = saved.records.into_iter().filter(|r| known(&r.object_id)).collect();
        let alarms: Vec<Alarm> = saved.alarms.into_iter().filter(|a| known(&a.object_id)).collect();
        let entries: Vec<ScheduleEntry> = saved.schedule.into_iter().filter(|e| known(&e.object_id)).collect();
        self.store.restore(records, alarms, saved.next_alarm_id);
        for e in entries {
            self.schedule.upsert(e);
        }
    }
}
