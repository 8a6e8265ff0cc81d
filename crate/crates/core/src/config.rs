//! Configuration transactions: snapshot, apply, verify by readback, and
//! reverse-order rollback.
//!
//! A transaction moves `PLANNED -> APPLYING -> VERIFYING -> COMMITTED`, or
//! ends early in `ROLLED_BACK` or `FAILED`. A command that cannot be planned
//! becomes a transaction that is `FAILED` from the start, so every command
//! leaves exactly one terminal record behind.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Clock, Timestamp};
use crate::plugin::{execute_plugin, expand_macros, PluginDescriptor, PluginError, PluginKind, PluginRegistry};
use crate::snmp::{Access, BerValue, ClientError, MibRegistry, Oid, SnmpClient, SnmpTarget, VarBind};
use crate::state::MonitoredObject;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Via {
    SnmpSet,
    /// Configuration plugin run with `$OID$`, `$VALUE$` and `$ARGn$` macros.
    /// `read_plugin`, when given, prints the current value for verification.
    Plugin {
        plugin: String,
        #[serde(default)]
        args: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        read_plugin: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceDirective {
    pub oid: Oid,
    pub intended_value: BerValue,
    #[serde(default = "default_via")]
    pub via: Via,
}

fn default_via() -> Via {
    Via::SnmpSet
}

impl DeviceDirective {
    pub fn snmp_set(oid: Oid, value: BerValue) -> Self {
        DeviceDirective {
            oid,
            intended_value: value,
            via: Via::SnmpSet,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorCommand {
    pub command_id: String,
    pub operator_id: String,
    pub target_device: String,
    pub directives: Vec<DeviceDirective>,
    pub issued_ts: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Planned,
    Applying,
    Verifying,
    Committed,
    RolledBack,
    Failed,
}

impl Phase {
    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Committed | Phase::RolledBack | Phase::Failed)
    }

    /// Legal successor phases. `None` stands for "not yet planned".
    pub fn can_follow(self, prev: Option<Phase>) -> bool {
        use Phase::*;
        matches!(
            (prev, self),
            (None, Planned | Failed)
                | (Some(Planned), Applying)
                | (Some(Applying), Verifying | RolledBack | Failed)
                | (Some(Verifying), Committed | RolledBack | Failed)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Planned => "PLANNED",
            Phase::Applying => "APPLYING",
            Phase::Verifying => "VERIFYING",
            Phase::Committed => "COMMITTED",
            Phase::RolledBack => "ROLLED_BACK",
            Phase::Failed => "FAILED",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StepStatus {
    Ok,
    Failed,
    Mismatch,
    Unverified,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub status: StepStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    pub ts: Timestamp,
}

impl Step {
    fn new(status: StepStatus, detail: Option<String>, ts: Timestamp) -> Self {
        Step { status, detail, ts }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectiveResult {
    pub index: usize,
    pub oid: Oid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub apply: Option<Step>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<Step>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollback: Option<Step>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseStamp {
    pub phase: Phase,
    pub ts: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigTransaction {
    pub txn_id: String,
    pub command: OperatorCommand,
    pub rollback_snapshot: BTreeMap<Oid, BerValue>,
    pub phase: Phase,
    pub results: Vec<DirectiveResult>,
    pub history: Vec<PhaseStamp>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ConfigTransaction {
    fn transition(&mut self, phase: Phase, ts: Timestamp) {
        let prev = self.history.last().map(|s| s.phase);
        assert!(phase.can_follow(prev), "illegal phase transition {prev:?} -> {phase:?}");
        self.phase = phase;
        self.history.push(PhaseStamp { phase, ts });
    }

    /// A command that never got past planning.
    pub fn rejected(txn_id: &str, command: OperatorCommand, error: &ConfigError, ts: Timestamp) -> Self {
        let results = directive_results(&command);
        let mut txn = ConfigTransaction {
            txn_id: txn_id.to_string(),
            command,
            rollback_snapshot: BTreeMap::new(),
            phase: Phase::Failed,
            results,
            history: Vec::new(),
            warnings: Vec::new(),
            error: Some(error.to_string()),
        };
        txn.transition(Phase::Failed, ts);
        txn
    }

    pub fn directive_count(&self) -> usize {
        self.command.directives.len()
    }

    /// Directives whose apply step was attempted.
    pub fn directives_attempted(&self) -> usize {
        self.results.iter().filter(|r| r.apply.is_some()).count()
    }
}

fn directive_results(cmd: &OperatorCommand) -> Vec<DirectiveResult> {
    cmd.directives
        .iter()
        .enumerate()
        .map(|(i, d)| DirectiveResult {
            index: i,
            oid: d.oid.clone(),
            apply: None,
            verify: None,
            rollback: None,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Offence {
    pub index: usize,
    pub oid: Oid,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("command has no directives")]
    EmptyCommand,
    #[error("invalid directives: {}", .0.iter().map(|o| format!("#{} {}: {}", o.index, o.oid, o.reason)).collect::<Vec<_>>().join("; "))]
    Validation(Vec<Offence>),
    #[error("snapshot read of {oid} failed: {source}")]
    Plan {
        oid: Oid,
        #[source]
        source: ClientError,
    },
    #[error("transaction is {actual:?}, expected {expected:?}")]
    WrongPhase { expected: Phase, actual: Phase },
    #[error(transparent)]
    Plugin(#[from] PluginError),
    #[error("transaction log: {0}")]
    Log(String),
}

/// What a transaction needs to reach its device.
pub struct DeviceAccess<'a> {
    pub client: &'a mut SnmpClient,
    pub target: &'a SnmpTarget,
    /// Used for `$HOSTADDRESS$` in plugin directives.
    pub host_address: String,
    pub plugins: &'a PluginRegistry,
}

/// Static checks against the MIB and plugin registry. Returns warnings for
/// directives that cannot be checked; every offence is reported at once.
pub fn validate_directives(cmd: &OperatorCommand, mib: &MibRegistry, plugins: &PluginRegistry) -> Result<Vec<String>, ConfigError> {
    if cmd.directives.is_empty() {
        return Err(ConfigError::EmptyCommand);
    }
    let mut offences = Vec::new();
    let mut warnings = Vec::new();
    for (index, d) in cmd.directives.iter().enumerate() {
        let offend = |reason: String| Offence {
            index,
            oid: d.oid.clone(),
            reason,
        };
        match &d.via {
            Via::SnmpSet => match mib.lookup(&d.oid) {
                Some(e) if e.access != Access::ReadWrite => offences.push(offend(format!("{} is READ_ONLY", e.name))),
                Some(e) if e.syntax != d.intended_value.kind() => offences.push(offend(format!(
                    "{} expects {}, got {}",
                    e.name,
                    e.syntax.as_str(),
                    d.intended_value.kind().as_str()
                ))),
                Some(_) => {}
                None => warnings.push(format!("directive #{index}: {} has no MIB entry", d.oid)),
            },
            Via::Plugin { plugin, read_plugin, .. } => {
                for name in std::iter::once(plugin).chain(read_plugin) {
                    if let Err(e) = plugins.require(name, PluginKind::Configuration) {
                        offences.push(offend(e.to_string()));
                    }
                }
            }
        }
        if d.intended_value.is_exception() {
            offences.push(offend("intended value is an exception marker".into()));
        }
    }
    if !offences.is_empty() {
        return Err(ConfigError::Validation(offences));
    }
    Ok(warnings)
}

/// Validates directives and reads the rollback snapshot.
pub fn plan_transaction(
    txn_id: &str,
    cmd: OperatorCommand,
    mib: &MibRegistry,
    dev: &mut DeviceAccess<'_>,
    clock: &dyn Clock,
) -> Result<ConfigTransaction, ConfigError> {
    let mut warnings = validate_directives(&cmd, mib, dev.plugins)?;
    let mut snapshot = BTreeMap::new();
    for d in cmd.directives.iter().filter(|d| d.via == Via::SnmpSet) {
        if snapshot.contains_key(&d.oid) {
            continue;
        }
        let vbs = dev
            .client
            .get(dev.target, std::slice::from_ref(&d.oid))
            .map_err(|source| ConfigError::Plan {
                oid: d.oid.clone(),
                source,
            })?;
        let value = vbs.into_iter().next().map_or(BerValue::NoSuchObject, |vb| vb.value);
        if value.is_exception() {
            warnings.push(format!("{} reads as {}", d.oid, value.kind().as_str()));
        }
        snapshot.insert(d.oid.clone(), value);
    }
    let results = directive_results(&cmd);
    for w in &warnings {
        tracing::warn!(txn = txn_id, "{w}");
    }
    let mut txn = ConfigTransaction {
        txn_id: txn_id.to_string(),
        command: cmd,
        rollback_snapshot: snapshot,
        phase: Phase::Planned,
        results,
        history: Vec::new(),
        warnings,
        error: None,
    };
    txn.transition(Phase::Planned, clock.now());
    Ok(txn)
}

fn expect_phase(txn: &ConfigTransaction, expected: Phase) -> Result<(), ConfigError> {
    if txn.phase == expected {
        Ok(())
    } else {
        Err(ConfigError::WrongPhase {
            expected,
            actual: txn.phase,
        })
    }
}

/// Applies directives in order. The first failure rolls back everything
/// already applied, newest first.
pub fn apply_transaction(txn: &mut ConfigTransaction, dev: &mut DeviceAccess<'_>, clock: &dyn Clock) -> Result<(), ConfigError> {
    expect_phase(txn, Phase::Planned)?;
    txn.transition(Phase::Applying, clock.now());
    let directives = txn.command.directives.clone();
    let mut to_undo = Vec::new();
    for (i, d) in directives.iter().enumerate() {
        let (step, maybe_applied) = match &d.via {
            Via::SnmpSet => match dev.client.set(dev.target, vec![VarBind::new(d.oid.clone(), d.intended_value.clone())]) {
                Ok(_) => (Step::new(StepStatus::Ok, None, clock.now()), true),
                // No response leaves the device state unknown, so undo it too.
                Err(e) => {
                    let unknown = !e.is_protocol();
                    (Step::new(StepStatus::Failed, Some(e.to_string()), clock.now()), unknown)
                }
            },
            Via::Plugin { plugin, args, .. } => {
                let desc = dev.plugins.require(plugin, PluginKind::Configuration)?.clone();
                let step = run_config_plugin_directive(d, args, &desc, &dev.host_address, &txn.command.target_device, clock);
                let ok = step.status == StepStatus::Ok;
                (step, ok)
            }
        };
        let failed = step.status != StepStatus::Ok;
        txn.results[i].apply = Some(step);
        if maybe_applied {
            to_undo.push(i);
        }
        if failed {
            let reason = txn.results[i].apply.as_ref().and_then(|s| s.detail.clone()).unwrap_or_default();
            txn.error = Some(format!("directive #{i} ({}) failed: {reason}", d.oid));
            finish_with_rollback(txn, &to_undo, dev, clock);
            return Ok(());
        }
    }
    txn.transition(Phase::Verifying, clock.now());
    Ok(())
}

/// Re-reads every target. Any mismatch rolls the whole transaction back.
pub fn verify_transaction(txn: &mut ConfigTransaction, dev: &mut DeviceAccess<'_>, clock: &dyn Clock) -> Result<(), ConfigError> {
    expect_phase(txn, Phase::Verifying)?;
    let directives = txn.command.directives.clone();
    let mut mismatches = Vec::new();
    for (i, d) in directives.iter().enumerate() {
        let step = match &d.via {
            Via::SnmpSet => match dev.client.get(dev.target, std::slice::from_ref(&d.oid)) {
                Ok(vbs) => match vbs.into_iter().next() {
                    Some(vb) if vb.value == d.intended_value => Step::new(StepStatus::Ok, None, clock.now()),
                    Some(vb) => Step::new(StepStatus::Mismatch, Some(format!("read back {}", vb.value)), clock.now()),
                    None => Step::new(StepStatus::Mismatch, Some("empty response".into()), clock.now()),
                },
                Err(e) => Step::new(StepStatus::Mismatch, Some(e.to_string()), clock.now()),
            },
            Via::Plugin { read_plugin: None, .. } => Step::new(StepStatus::Unverified, None, clock.now()),
            Via::Plugin {
                read_plugin: Some(reader),
                args,
                ..
            } => {
                let desc = dev.plugins.require(reader, PluginKind::Configuration)?.clone();
                read_back_with_plugin(d, args, &desc, &dev.host_address, &txn.command.target_device, clock)
            }
        };
        if step.status == StepStatus::Mismatch {
            mismatches.push(d.oid.to_string());
        }
        txn.results[i].verify = Some(step);
    }
    if mismatches.is_empty() {
        txn.transition(Phase::Committed, clock.now());
    } else {
        txn.error = Some(format!("readback mismatch on {}", mismatches.join(", ")));
        let all: Vec<usize> = (0..directives.len()).collect();
        finish_with_rollback(txn, &all, dev, clock);
    }
    Ok(())
}

/// Restores `indices` newest first, then ends in ROLLED_BACK, or FAILED if
/// any restore failed.
fn finish_with_rollback(txn: &mut ConfigTransaction, indices: &[usize], dev: &mut DeviceAccess<'_>, clock: &dyn Clock) {
    let mut failures = 0;
    for &i in indices.iter().rev() {
        let d = &txn.command.directives[i];
        let step = match (&d.via, txn.rollback_snapshot.get(&d.oid)) {
            (Via::SnmpSet, Some(prior)) if !prior.is_exception() => {
                match dev.client.set(dev.target, vec![VarBind::new(d.oid.clone(), prior.clone())]) {
                    Ok(_) => Step::new(StepStatus::Ok, None, clock.now()),
                    Err(e) => {
                        failures += 1;
                        Step::new(StepStatus::Failed, Some(e.to_string()), clock.now())
                    }
                }
            }
            (Via::SnmpSet, _) => Step::new(StepStatus::Skipped, Some("no prior value".into()), clock.now()),
            (Via::Plugin { .. }, _) => Step::new(StepStatus::Skipped, Some("plugin directive has no snapshot".into()), clock.now()),
        };
        txn.results[i].rollback = Some(step);
    }
    let end = if failures == 0 { Phase::RolledBack } else { Phase::Failed };
    txn.transition(end, clock.now());
}

fn plugin_macros(d: &DeviceDirective, args: &[String]) -> HashMap<String, String> {
    let mut m: HashMap<String, String> = args
        .iter()
        .enumerate()
        .map(|(i, a)| (format!("ARG{}", i + 1), shell_words::quote(a).into_owned()))
        .collect();
    m.insert("OID".into(), d.oid.to_string());
    m.insert("VALUE".into(), shell_words::quote(&d.intended_value.to_string()).into_owned());
    m
}

fn device_object(device_id: &str, address: &str) -> MonitoredObject {
    MonitoredObject::host(device_id, address, "")
}

/// Runs one PLUGIN directive. Exit 0 means applied; anything else is a
/// failure carrying the plugin's output.
pub fn run_config_plugin_directive(
    d: &DeviceDirective,
    args: &[String],
    desc: &PluginDescriptor,
    host_address: &str,
    device_id: &str,
    clock: &dyn Clock,
) -> Step {
    match run_plugin(d, args, desc, host_address, device_id) {
        Ok(out) if out.exit_code == 0 && !out.timed_out => Step::new(StepStatus::Ok, None, clock.now()),
        Ok(out) => {
            let reason = if out.timed_out {
                format!("timed out after {} s", desc.timeout_s)
            } else {
                out.stdout_text.trim().to_string()
            };
            Step::new(StepStatus::Failed, Some(reason), clock.now())
        }
        Err(e) => Step::new(StepStatus::Failed, Some(e.to_string()), clock.now()),
    }
}

fn run_plugin(
    d: &DeviceDirective,
    args: &[String],
    desc: &PluginDescriptor,
    host_address: &str,
    device_id: &str,
) -> Result<crate::plugin::PluginOutcome, PluginError> {
    if desc.kind != PluginKind::Configuration {
        return Err(PluginError::WrongKind {
            name: desc.name.clone(),
            expected: PluginKind::Configuration,
            actual: desc.kind,
        });
    }
    let cmd = expand_macros(&desc.command_template, &device_object(device_id, host_address), &plugin_macros(d, args))?;
    execute_plugin(desc, &cmd.command)
}

fn read_back_with_plugin(
    d: &DeviceDirective,
    args: &[String],
    desc: &PluginDescriptor,
    host_address: &str,
    device_id: &str,
    clock: &dyn Clock,
) -> Step {
    match run_plugin(d, args, desc, host_address, device_id) {
        Ok(out) if out.exit_code == 0 && !out.timed_out => {
            let seen = out.stdout_text.lines().next().unwrap_or("").trim().to_string();
            if seen == d.intended_value.to_string() {
                Step::new(StepStatus::Ok, None, clock.now())
            } else {
                Step::new(StepStatus::Mismatch, Some(format!("read back '{seen}'")), clock.now())
            }
        }
        Ok(out) => Step::new(StepStatus::Mismatch, Some(out.stdout_text.trim().to_string()), clock.now()),
        Err(e) => Step::new(StepStatus::Mismatch, Some(e.to_string()), clock.now()),
    }
}

/// Plans, applies and verifies, reporting each phase change to `on_phase`.
/// A planning error yields a transaction that is FAILED from the start.
pub fn run_transaction(
    txn_id: &str,
    cmd: OperatorCommand,
    mib: &MibRegistry,
    dev: &mut DeviceAccess<'_>,
    clock: &dyn Clock,
    mut on_phase: impl FnMut(&ConfigTransaction),
) -> ConfigTransaction {
    let mut txn = match plan_transaction(txn_id, cmd.clone(), mib, dev, clock) {
        Ok(t) => t,
        Err(e) => {
            let t = ConfigTransaction::rejected(txn_id, cmd, &e, clock.now());
            on_phase(&t);
            return t;
        }
    };
    on_phase(&txn);
    let mut step = |txn: &mut ConfigTransaction, f: fn(&mut ConfigTransaction, &mut DeviceAccess<'_>, &dyn Clock) -> Result<(), ConfigError>| {
        let seen = txn.history.len();
        if let Err(e) = f(txn, dev, clock) {
            txn.error = Some(e.to_string());
            if !txn.phase.is_terminal() {
                let all: Vec<usize> = txn
                    .results
                    .iter()
                    .filter(|r| r.apply.is_some())
                    .map(|r| r.index)
                    .collect();
                finish_with_rollback(txn, &all, dev, clock);
            }
        }
        for i in seen..txn.history.len() {
            let mut view = txn.clone();
            view.history.truncate(i + 1);
            view.phase = view.history[i].phase;
            on_phase(&view);
        }
    };
    step(&mut txn, apply_transaction);
    if txn.phase == Phase::Verifying {
        step(&mut txn, verify_transaction);
    }
    txn
}

/// One record per phase transition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxnLogRecord {
    pub txn_id: String,
    pub command_id: String,
    pub operator_id: String,
    pub device: String,
    pub phase: Phase,
    pub ts: Timestamp,
    pub directives: usize,
    pub directives_attempted: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TxnLogRecord {
    pub fn from_txn(txn: &ConfigTransaction) -> Self {
        TxnLogRecord {
            txn_id: txn.txn_id.clone(),
            command_id: txn.command.command_id.clone(),
            operator_id: txn.command.operator_id.clone(),
            device: txn.command.target_device.clone(),
            phase: txn.phase,
            ts: txn.history.last().map_or(txn.command.issued_ts, |s| s.ts),
            directives: txn.directive_count(),
            directives_attempted: txn.directives_attempted(),
            error: txn.phase.is_terminal().then(|| txn.error.clone()).flatten(),
        }
    }
}

/// Append-only JSON-lines transaction log.
pub struct TransactionLog {
    path: PathBuf,
    file: File,
}

impl TransactionLog {
    pub fn open(path: &Path) -> Result<Self, ConfigError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| ConfigError::Log(format!("{}: {e}", path.display())))?;
        Ok(TransactionLog {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: &TxnLogRecord) -> Result<(), ConfigError> {
        let mut line = serde_json::to_string(record).map_err(|e| ConfigError::Log(e.to_string()))?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| ConfigError::Log(e.to_string()))
    }

    /// Reads every well-formed record. A torn final line is skipped.
    pub fn read(path: &Path) -> Result<Vec<TxnLogRecord>, ConfigError> {
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(ConfigError::Log(e.to_string())),
        };
        let mut out = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| ConfigError::Log(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line) {
                Ok(r) => out.push(r),
                Err(e) => tracing::warn!(line = i + 1, error = %e, "skipping unreadable transaction log line"),
            }
        }
        Ok(out)
    }
}
