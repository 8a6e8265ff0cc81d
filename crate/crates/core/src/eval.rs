//! Performance model `P(k) = Q(k) * O(k) / C(k)` over the five FCAPS
//! functions, window measurement from engine runs, and tool comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::config::{Phase, TxnLogRecord};
use crate::sim::{FaultKind, InjectionRecord};
use crate::snmp::CounterSnapshot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ManagementFunction {
    Fault,
    Configuration,
    Accounting,
    Performance,
    Security,
}

impl ManagementFunction {
    pub const ALL: [ManagementFunction; 5] = [
        ManagementFunction::Fault,
        ManagementFunction::Configuration,
        ManagementFunction::Accounting,
        ManagementFunction::Performance,
        ManagementFunction::Security,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ManagementFunction::Fault => "FAULT",
            ManagementFunction::Configuration => "CONFIGURATION",
            ManagementFunction::Accounting => "ACCOUNTING",
            ManagementFunction::Performance => "PERFORMANCE",
            ManagementFunction::Security => "SECURITY",
        }
    }
}

impl fmt::Display for ManagementFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{function}: cost must be positive (got {c})")]
    CostNotPositive { function: ManagementFunction, c: f64 },
    #[error("{function}: quality must lie in [0, 1] (got {q})")]
    QualityOutOfRange { function: ManagementFunction, q: f64 },
    #[error("{function}: operation rate must be >= 0 (got {o})")]
    NegativeRate { function: ManagementFunction, o: f64 },
    #[error("{function}: non-finite input")]
    NonFinite { function: ManagementFunction },
    #[error("empty window {0}")]
    EmptyWindow(Window),
    #[error("deadline must be positive")]
    BadDeadline,
    #[error("tool '{tool}' covers {function} but has no sample for it")]
    MissingSample { tool: String, function: ManagementFunction },
    #[error("tool '{tool}' has a sample for uncovered {function}")]
    UncoveredSample { tool: String, function: ManagementFunction },
    #[error("tool '{tool}': {source}")]
    InTool {
        tool: String,
        #[source]
        source: Box<EvalError>,
    },
    #[error("bad window '{0}', expected <start>:<end> in seconds")]
    BadWindow(String),
    #[error("profile document: {0}")]
    Profile(String),
}

/// `q * o / c`, with the domain checked.
pub fn performance(function: ManagementFunction, q: f64, o: f64, c: f64) -> Result<f64, EvalError> {
    if !(q.is_finite() && o.is_finite() && c.is_finite()) {
        return Err(EvalError::NonFinite { function });
    }
    if c <= 0.0 {
        return Err(EvalError::CostNotPositive { function, c });
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(EvalError::QualityOutOfRange { function, q });
    }
    if o < 0.0 {
        return Err(EvalError::NegativeRate { function, o });
    }
    Ok(q * o / c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl Window {
    pub fn new(start: Timestamp, end: Timestamp) -> Self {
        Window { start, end }
    }

    pub fn length_s(&self) -> f64 {
        self.end.since(self.start).as_secs_f64()
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        self.start <= t && t <= self.end
    }

    fn checked_length(&self) -> Result<f64, EvalError> {
        let len = self.length_s();
        if len > 0.0 {
            Ok(len)
        } else {
            Err(EvalError::EmptyWindow(*self))
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start, self.end)
    }
}

/// `<start>:<end>` in seconds, fractions allowed.
impl FromStr for Window {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || EvalError::BadWindow(s.to_string());
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let secs = |t: &str| -> Result<Timestamp, EvalError> {
            let v: f64 = t.trim().parse().map_err(|_| bad())?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad());
            }
            Ok(Timestamp((v * 1000.0).round() as u64))
        };
        let w = Window::new(secs(a)?, secs(b)?);
        w.checked_length()?;
        Ok(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub function: ManagementFunction,
    pub q: f64,
    pub o: f64,
    pub c: f64,
    pub window: Option<Window>,
}

impl MetricSample {
    pub fn performance(&self) -> Result<f64, EvalError> {
        performance(self.function, self.q, self.o, self.c)
    }
}

/// Q, O and C as written in a profile file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleValues {
    pub q: f64,
    pub o: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolProfile {
    pub tool_name: String,
    pub coverage: BTreeSet<ManagementFunction>,
    #[serde(default)]
    pub samples: BTreeMap<ManagementFunction, SampleValues>,
}

impl ToolProfile {
    pub fn validate(&self) -> Result<(), EvalError> {
        if let Some(f) = self.samples.keys().find(|f| !self.coverage.contains(f)) {
            return Err(EvalError::UncoveredSample {
                tool: self.tool_name.clone(),
                function: *f,
            });
        }
        if let Some(f) = self.coverage.iter().find(|f| !self.samples.contains_key(f)) {
            return Err(EvalError::MissingSample {
                tool: self.tool_name.clone(),
                function: *f,
            });
        }
        Ok(())
    }
}

/// Each covered function is worth a fifth.
pub fn fcaps_score(profile: &ToolProfile) -> f64 {
    profile.coverage.len() as f64 / ManagementFunction::ALL.len() as f64
}

/// Capacities that make the cost terms dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Capacities {
    pub cpu_cores: f64,
    pub memory_bytes: f64,
    pub bandwidth_bps: f64,
}

impl Default for Capacities {
    fn default() -> Self {
        Capacities {
            cpu_cores: 1.0,
            memory_bytes: 512.0 * 1024.0 * 1024.0,
            bandwidth_bps: 1_000_000.0,
        }
    }
}

/// Resources spent during a window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ResourceUsage {
    pub cpu_seconds: f64,
    pub peak_memory_bytes: f64,
    pub bytes_transferred: u64,
}

impl ResourceUsage {
    /// CPU time and peak resident size of this process so far. Bandwidth is
    /// left at zero for the caller to fill from protocol counters.
    pub fn process_totals() -> ResourceUsage {
        // SAFETY: getrusage only writes into the zeroed struct we pass.
        let mut ru: libc::rusage = unsafe { std::mem::zeroed() };
        if unsafe { libc::getrusage(libc::RUSAGE_SELF, &mut ru) } != 0 {
            return ResourceUsage::default();
        }
        let secs = |t: libc::timeval| t.tv_sec as f64 + t.tv_usec as f64 / 1e6;
        ResourceUsage {
            cpu_seconds: secs(ru.ru_utime) + secs(ru.ru_stime),
            peak_memory_bytes: ru.ru_maxrss as f64 * 1024.0,
            bytes_transferred: 0,
        }
    }
}

/// Equal-weight mean of the normalised CPU, memory and bandwidth terms.
pub fn resource_cost(usage: &ResourceUsage, caps: &Capacities, window_s: f64) -> f64 {
    let cpu = usage.cpu_seconds / window_s / caps.cpu_cores;
    let mem = usage.peak_memory_bytes / caps.memory_bytes;
    let bw = usage.bytes_transferred as f64 * 8.0 / window_s / caps.bandwidth_bps;
    (cpu + mem + bw) / 3.0
}

/// An ALARM_OPENED event, resolved to the device it concerns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlarmOpening {
    pub object_id: String,
    pub device_id: Option<String>,
    pub ts: Timestamp,
}

/// What an engine run exposes for measurement over one window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    /// Protocol counters accumulated inside the window.
    pub counters: CounterSnapshot,
    pub usage: ResourceUsage,
    pub alarm_openings: Vec<AlarmOpening>,
}

/// Faults that count towards Q: value changes on a device.
pub fn counted_faults<'a>(log: &'a [InjectionRecord], window: &'a Window) -> impl Iterator<Item = &'a InjectionRecord> + 'a {
    log.iter()
        .filter(move |r| matches!(r.fault, FaultKind::SetValue { .. }) && window.contains(r.effective_at))
}

/// Whether some alarm opened on the fault's device within the deadline.
pub fn fault_detected(fault: &InjectionRecord, openings: &[AlarmOpening], deadline_ms: u64) -> bool {
    let until = Timestamp(fault.effective_at.0.saturating_add(deadline_ms));
    openings.iter().any(|a| {
        a.device_id.as_deref() == Some(fault.device_id.as_str()) && a.ts >= fault.effective_at && a.ts <= until
    })
}

pub fn measure_fault_window(
    stats: &RunStats,
    injection_log: &[InjectionRecord],
    deadline_s: f64,
    window: Window,
    caps: &Capacities,
) -> Result<MetricSample, EvalError> {
    let len = window.checked_length()?;
    if !(deadline_s.is_finite() && deadline_s > 0.0) {
        return Err(EvalError::BadDeadline);
    }
    let deadline_ms = (deadline_s * 1000.0).round() as u64;
    let (total, detected) = counted_faults(injection_log, &window).fold((0u64, 0u64), |(t, d), f| {
        (t + 1, d + fault_detected(f, &stats.alarm_openings, deadline_ms) as u64)
    });
    let q = if total == 0 { 1.0 } else { detected as f64 / total as f64 };
    Ok(MetricSample {
        function: ManagementFunction::Fault,
        q,
        o: stats.counters.pdus() as f64 / len,
        c: resource_cost(&stats.usage, caps, len),
        window: Some(window),
    })
}

pub fn measure_config_window(
    log: &[TxnLogRecord],
    usage: &ResourceUsage,
    window: Window,
    caps: &Capacities,
) -> Result<MetricSample, EvalError> {
    let len = window.checked_length()?;
    let terminal: Vec<&TxnLogRecord> = log
        .iter()
        .filter(|r| r.phase.is_terminal() && window.contains(r.ts))
        .collect();
    let committed = terminal.iter().filter(|r| r.phase == Phase::Committed).count();
    let q = if terminal.is_empty() {
        1.0
    } else {
        committed as f64 / terminal.len() as f64
    };
    let attempted: usize = terminal.iter().map(|r| r.directives_attempted).sum();
    Ok(MetricSample {
        function: ManagementFunction::Configuration,
        q,
        o: attempted as f64 / len,
        c: resource_cost(usage, caps, len),
        window: Some(window),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolRow {
    pub tool_name: String,
    pub fcaps_score: f64,
    pub per_function: BTreeMap<ManagementFunction, f64>,
    pub aggregate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub q_definitions: BTreeMap<ManagementFunction, String>,
    pub capacities: Capacities,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_note: Option<String>,
}

impl ReportHeader {
    pub fn new(capacities: Capacities, window: Option<Window>, data_note: Option<String>) -> Self {
        let q_definitions = BTreeMap::from([
            (
                ManagementFunction::Fault,
                "value faults with an alarm opened on the device within the deadline / value faults injected (1 when none)".to_string(),
            ),
            (
                ManagementFunction::Configuration,
                "COMMITTED transactions / terminal transactions (1 when none)".to_string(),
            ),
        ]);
        ReportHeader {
            q_definitions,
            capacities,
            window,
            data_note,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub header: ReportHeader,
    pub tools: Vec<ToolRow>,
    /// Tool names, best first.
    pub ranking: Vec<String>,
}

/// Per-function P for every tool, with uncovered functions at 0, and the
/// equal-weight mean as the aggregate. Ranked by aggregate, then name.
pub fn compare_tools(profiles: &[ToolProfile], header: ReportHeader) -> Result<EvalReport, EvalError> {
    let mut tools = profiles
        .iter()
        .map(|p| {
            let wrap = |e: EvalError| EvalError::InTool {
                tool: p.tool_name.clone(),
                source: Box::new(e),
            };
            p.validate()?;
            let per_function = ManagementFunction::ALL
                .iter()
                .map(|&f| {
                    let v = match (p.coverage.contains(&f), p.samples.get(&f)) {
                        (true, Some(s)) => performance(f, s.q, s.o, s.c).map_err(wrap)?,
                        _ => 0.0,
                    };
                    Ok((f, v))
                })
                .collect::<Result<BTreeMap<_, _>, EvalError>>()?;
            let aggregate = per_function.values().sum::<f64>() / ManagementFunction::ALL.len() as f64;
            Ok(ToolRow {
                tool_name: p.tool_name.clone(),
                fcaps_score: fcaps_score(p),
                per_function,
                aggregate,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    tools.sort_by(|a, b| b.aggregate.total_cmp(&a.aggregate).then_with(|| a.tool_name.cmp(&b.tool_name)));
    let ranking = tools.iter().map(|t| t.tool_name.clone()).collect();
    Ok(EvalReport { header, tools, ranking })
}

impl EvalReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        if let Some(note) = &self.header.data_note {
            let _ = writeln!(out, "# data: {note}");
        }
        if let Some(w) = &self.header.window {
            let _ = writeln!(out, "# window: {w} s");
        }
        let c = &self.header.capacities;
        let _ = writeln!(
            out,
            "# capacities: cpu {} core(s), memory {} MiB, bandwidth {} bit/s",
            c.cpu_cores,
            c.memory_bytes / (1024.0 * 1024.0),
            c.bandwidth_bps
        );
        for (f, d) in &self.header.q_definitions {
            let _ = writeln!(out, "# Q({f}) = {d}");
        }
        let _ = write!(out, "{:<4} {:<16} {:>6}", "rank", "tool", "FCAPS");
        for f in ManagementFunction::ALL {
            let _ = write!(out, " {:>14}", f.as_str());
        }
        let _ = writeln!(out, " {:>14}", "aggregate");
        for (i, t) in self.tools.iter().enumerate() {
            let _ = write!(out, "{:<4} {:<16} {:>5.0}%", i + 1, t.tool_name, t.fcaps_score * 100.0);
            for f in ManagementFunction::ALL {
                let _ = write!(out, " {:>14.4}", t.per_function.get(&f).copied().unwrap_or(0.0));
            }
            let _ = writeln!(out, " {:>14.4}", t.aggregate);
        }
        out
    }
}

/// Profile file: a note on where the numbers come from, optional
/// capacities, and the tools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacities: Option<Capacities>,
    pub tools: Vec<ToolProfile>,
}

impl ProfileDocument {
    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let doc: ProfileDocument = serde_json::from_str(text)
            .map_err(|e| EvalError::Profile(format!("line {} column {}: {e}", e.line(), e.column())))?;
        let mut names = BTreeSet::new();
        for t in &doc.tools {
            if !names.insert(t.tool_name.as_str()) {
                return Err(EvalError::Profile(format!("duplicate tool '{}'", t.tool_name)));
            }
            t.validate()?;
        }
        Ok(doc)
    }
}

/// Default comparison set. The numbers are synthetic placeholders chosen
/// only to give the comparison its shape.
pub const DEFAULT_PROFILES: &str = r#"{
  "note": "SYNTHETIC illustrative values, not measurements of any tool",
  "tools": [
    {"tool_name": "NB-ITMS", "coverage": ["FAULT", "CONFIGURATION"],
     "samples": {"FAULT": {"q": 0.95, "o": 2.0, "c": 0.05},
                 "CONFIGURATION": {"q": 0.9, "o": 0.5, "c": 0.05}}},
    {"tool_name": "Nagios", "coverage": ["FAULT"],
     "samples": {"FAULT": {"q": 0.95, "o": 2.0, "c": 0.05}}},
    {"tool_name": "Icinga", "coverage": ["FAULT"],
     "samples": {"FAULT": {"q": 0.93, "o": 2.0, "c": 0.05}}},
    {"tool_name": "Cfengine", "coverage": ["CONFIGURATION"],
     "samples": {"CONFIGURATION": {"q": 0.9, "o": 0.5, "c": 0.05}}},
    {"tool_name": "MRTG", "coverage": ["PERFORMANCE"],
     "samples": {"PERFORMANCE": {"q": 0.9, "o": 1.0, "c": 0.05}}}
  ]
}"#;
