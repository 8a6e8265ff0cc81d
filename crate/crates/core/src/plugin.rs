//! External plugins: registry, macro expansion, execution and output parsing.
//!
//! Plugins follow the usual Nagios contract: a command line goes in, one
//! line of status text (optionally followed by `|` and performance data)
//! comes out on stdout, and the exit code carries the status.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::io::Read;
use std::os::unix::process::CommandExt;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state::{CheckStatus, MonitoredObject, ObjectKind};

/// Extra time `execute_plugin` may take beyond the descriptor's timeout.
pub const TIMEOUT_GRACE: Duration = Duration::from_secs(2);
pub const DEFAULT_PARALLELISM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PluginKind {
    Monitoring,
    Configuration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuntimeClass {
    Script,
    #[default]
    Executable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PluginDescriptor {
    pub name: String,
    pub kind: PluginKind,
    pub command_template: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
    #[serde(default)]
    pub expected_runtime_class: RuntimeClass,
}

fn default_timeout() -> u64 {
    10
}

impl PluginDescriptor {
    pub fn new(name: &str, kind: PluginKind, command_template: &str, timeout_s: u64) -> Self {
        PluginDescriptor {
            name: name.to_string(),
            kind,
            command_template: command_template.to_string(),
            timeout_s,
            expected_runtime_class: RuntimeClass::Executable,
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfDatum {
    pub label: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warn: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crit: Option<f64>,
}

impl fmt::Display for PerfDatum {
    /// `label=value[unit][;warn[;crit]]`, quoting labels that need it.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.label.contains([' ', '=', '\'', '\t']) {
            write!(f, "'{}'", self.label.replace('\'', "''"))?;
        } else {
            f.write_str(&self.label)?;
        }
        write!(f, "={}", self.value)?;
        if let Some(u) = &self.unit {
            f.write_str(u)?;
        }
        match (self.warn, self.crit) {
            (None, None) => Ok(()),
            (Some(w), None) => write!(f, ";{w}"),
            (w, Some(c)) => {
                f.write_char(';')?;
                if let Some(w) = w {
                    write!(f, "{w}")?;
                }
                write!(f, ";{c}")
            }
        }
    }
}

pub fn format_perfdata(data: &[PerfDatum]) -> String {
    data.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginOutcome {
    pub exit_code: i32,
    pub stdout_text: String,
    pub status_text: String,
    pub perfdata: Vec<PerfDatum>,
    pub duration_ms: u64,
    pub timed_out: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl PluginOutcome {
    /// Status for the state machine. A timeout is a failed measurement.
    pub fn status(&self) -> CheckStatus {
        if self.timed_out {
            CheckStatus::Unknown
        } else {
            map_exit_code(self.exit_code)
        }
    }
}

#[derive(Debug, Error)]
pub enum PluginError {
    #[error("unbalanced '$' at byte {0} in command template")]
    UnbalancedMacro(usize),
    #[error("cannot split command line: {0}")]
    BadCommandLine(String),
    #[error("empty command line")]
    EmptyCommand,
    #[error("failed to launch '{program}': {source}")]
    Launch {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("plugin runtime error: {0}")]
    Runtime(String),
    #[error("unknown plugin '{0}'")]
    UnknownPlugin(String),
    #[error("duplicate plugin '{0}'")]
    DuplicatePlugin(String),
    #[error("contract violation: plugin '{name}' is {actual:?}, expected {expected:?}")]
    WrongKind {
        name: String,
        expected: PluginKind,
        actual: PluginKind,
    },
}

/// Declarative plugin table loaded from the engine configuration.
#[derive(Debug, Clone, Default)]
pub struct PluginRegistry {
    plugins: BTreeMap<String, PluginDescriptor>,
}

impl PluginRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_descriptors(
        descs: impl IntoIterator<Item = PluginDescriptor>,
    ) -> Result<Self, PluginError> {
        let mut reg = Self::new();
        for d in descs {
            reg.register(d)?;
        }
        Ok(reg)
    }

    pub fn register(&mut self, desc: PluginDescriptor) -> Result<(), PluginError> {
        if desc.command_template.trim().is_empty() {
            return Err(PluginError::EmptyCommand);
        }
        if self.plugins.contains_key(&desc.name) {
            return Err(PluginError::DuplicatePlugin(desc.name));
        }
        self.plugins.insert(desc.name.clone(), desc);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&PluginDescriptor> {
        self.plugins.get(name)
    }

    pub fn require(&self, name: &str, kind: PluginKind) -> Result<&PluginDescriptor, PluginError> {
        let d = self
            .get(name)
            .ok_or_else(|| PluginError::UnknownPlugin(name.to_string()))?;
        if d.kind != kind {
            return Err(PluginError::WrongKind {
                name: name.to_string(),
                expected: kind,
                actual: d.kind,
            });
        }
        Ok(d)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PluginDescriptor> {
        self.plugins.values()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expansion {
    pub command: String,
    /// Macro names that had no value and were left verbatim.
    pub unknown: Vec<String>,
}

/// Splits a Nagios-style `name!arg1!arg2` check command.
pub fn split_check_command(check_command: &str) -> (&str, Vec<&str>) {
    let mut parts = check_command.split('!');
    let name = parts.next().unwrap_or("").trim();
    (name, parts.collect())
}

/// Builds the `$ARGn$` map for a `name!arg1!arg2` check command.
pub fn argument_macros(args: &[&str]) -> HashMap<String, String> {
    args.iter()
        .enumerate()
        .map(|(i, a)| (format!("ARG{}", i + 1), a.to_string()))
        .collect()
}

/// Replaces `$NAME$` macros in `template`.
///
/// Built-ins are `HOSTADDRESS`, `HOSTNAME`, `SERVICEDESC` and `OBJECTID`;
/// entries in `extra` take precedence. `$$` is a literal dollar sign.
/// Macros with no value are kept verbatim and listed in
/// [`Expansion::unknown`].
pub fn expand_macros(
    template: &str,
    obj: &MonitoredObject,
    extra: &HashMap<String, String>,
) -> Result<Expansion, PluginError> {
    let host_name = match obj.kind {
        ObjectKind::Host => obj.id.as_str(),
        ObjectKind::Service => obj.parent_host.as_deref().unwrap_or(""),
    };
    let builtin = |name: &str| -> Option<String> {
        match name {
            "HOSTADDRESS" => Some(obj.address.clone()),
            "HOSTNAME" => Some(host_name.to_string()),
            "OBJECTID" => Some(obj.id.clone()),
            "SERVICEDESC" if obj.kind == ObjectKind::Service => Some(obj.display_name.clone()),
            _ => None,
        }
    };

    let mut out = String::with_capacity(template.len());
    let mut unknown = Vec::new();
    let mut rest = template;
    let mut offset = 0;
    while let Some(start) = rest.find('$') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        let end = after
            .find('$')
            .ok_or(PluginError::UnbalancedMacro(offset + start))?;
        let name = &after[..end];
        if name.is_empty() {
            out.push('$');
        } else if let Some(v) = extra.get(name).cloned().or_else(|| builtin(name)) {
            out.push_str(&v);
        } else {
            out.push('$');
            out.push_str(name);
            out.push('$');
            if !unknown.iter().any(|u| u == name) {
                unknown.push(name.to_string());
            }
        }
        let consumed = start + 1 + end + 1;
        offset += consumed;
        rest = &rest[consumed..];
    }
    out.push_str(rest);
    Ok(Expansion {
        command: out,
        unknown,
    })
}

pub fn map_exit_code(code: i32) -> CheckStatus {
    match code {
        0 => CheckStatus::Ok,
        1 => CheckStatus::Warning,
        2 => CheckStatus::Critical,
        _ => CheckStatus::Unknown,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedOutput {
    pub status_text: String,
    pub perfdata: Vec<PerfDatum>,
    pub warnings: Vec<String>,
}

/// Splits plugin stdout into status text and performance data. Never fails:
/// malformed perfdata tokens are skipped and reported in `warnings`.
pub fn parse_plugin_output(stdout_text: &str) -> ParsedOutput {
    let mut text = String::new();
    let mut perf: Option<&str> = None;
    let mut chars = stdout_text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        match c {
            '\\' if matches!(chars.peek(), Some((_, '|'))) => {
                text.push('|');
                chars.next();
            }
            '|' => {
                perf = Some(&stdout_text[i + 1..]);
                break;
            }
            _ => text.push(c),
        }
    }
    let (perfdata, warnings) = perf.map(parse_perfdata).unwrap_or_default();
    ParsedOutput {
        status_text: text.trim().to_string(),
        perfdata,
        warnings,
    }
}

pub fn parse_perfdata(s: &str) -> (Vec<PerfDatum>, Vec<String>) {
    let mut data = Vec::new();
    let mut warnings = Vec::new();
    for token in perf_tokens(s) {
        match parse_perf_token(&token) {
            Ok((d, mut w)) => {
                data.push(d);
                warnings.append(&mut w);
            }
            Err(e) => warnings.push(format!("skipped perfdata token '{token}': {e}")),
        }
    }
    (data, warnings)
}

/// Whitespace-separated tokens; single-quoted labels may contain spaces and
/// `''` stands for a literal quote.
fn perf_tokens(s: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\'' if quoted && chars.peek() == Some(&'\'') => {
                cur.push_str("''");
                chars.next();
            }
            '\'' => {
                quoted = !quoted;
                cur.push('\'');
            }
            c if c.is_whitespace() && !quoted => {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

fn parse_perf_token(token: &str) -> Result<(PerfDatum, Vec<String>), String> {
    let (label, rest) = if let Some(inner) = token.strip_prefix('\'') {
        // Find the closing quote that is not part of a doubled pair.
        let bytes = inner.as_bytes();
        let mut i = 0;
        let close = loop {
            match bytes.get(i) {
                None => return Err("unterminated quoted label".into()),
                Some(b'\'') if bytes.get(i + 1) == Some(&b'\'') => i += 2,
                Some(b'\'') => break i,
                Some(_) => i += 1,
            }
        };
        let rest = inner[close + 1..]
            .strip_prefix('=')
            .ok_or("missing '=' after label")?;
        (inner[..close].replace("''", "'"), rest)
    } else {
        let (l, r) = token.split_once('=').ok_or("missing '='")?;
        (l.to_string(), r)
    };
    if label.is_empty() {
        return Err("empty label".into());
    }
    let mut fields = rest.split(';');
    let value_field = fields.next().unwrap_or("");
    let num_len = number_prefix_len(value_field);
    if num_len == 0 {
        return Err("value is not a number".into());
    }
    let value: f64 = value_field[..num_len]
        .parse()
        .map_err(|_| "value is not a number".to_string())?;
    if !value.is_finite() {
        return Err("value is not finite".into());
    }
    let unit = &value_field[num_len..];
    if unit.chars().any(|c| c.is_ascii_digit() || c == '=' || c == ';') {
        return Err(format!("bad unit '{unit}'"));
    }
    let mut warnings = Vec::new();
    let mut threshold = |name: &str, f: Option<&str>| -> Option<f64> {
        let f = f?.trim();
        if f.is_empty() {
            return None;
        }
        match f.parse::<f64>() {
            Ok(v) if v.is_finite() => Some(v),
            _ => {
                warnings.push(format!("'{label}': ignored non-numeric {name} threshold '{f}'"));
                None
            }
        }
    };
    let warn = threshold("warn", fields.next());
    let crit = threshold("crit", fields.next());
    Ok((
        PerfDatum {
            label,
            value,
            unit: (!unit.is_empty()).then(|| unit.to_string()),
            warn,
            crit,
        },
        warnings,
    ))
}

/// Length of the leading `[-+]?digits[.digits]` run.
fn number_prefix_len(s: &str) -> usize {
    let b = s.as_bytes();
    let mut i = 0;
    if matches!(b.first(), Some(b'-' | b'+')) {
        i += 1;
    }
    let int_start = i;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    let mut digits = i - int_start;
    if i < b.len() && b[i] == b'.' {
        let frac_start = i + 1;
        let mut j = frac_start;
        while j < b.len() && b[j].is_ascii_digit() {
            j += 1;
        }
        if j > frac_start {
            digits += j - frac_start;
            i = j;
        }
    }
    if digits == 0 {
        0
    } else {
        i
    }
}

/// Runs `command` as a child process, capped at the descriptor's timeout.
///
/// The child gets its own process group, and the whole group is killed on
/// timeout so that shell scripts cannot leave sleepers holding stdout.
pub fn execute_plugin(desc: &PluginDescriptor, command: &str) -> Result<PluginOutcome, PluginError> {
    let argv = shell_words::split(command).map_err(|e| PluginError::BadCommandLine(e.to_string()))?;
    let (program, args) = argv.split_first().ok_or(PluginError::EmptyCommand)?;
    let started = Instant::now();
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .process_group(0)
        .spawn()
        .map_err(|source| PluginError::Launch {
            program: program.clone(),
            source,
        })?;

    let mut stdout = child
        .stdout
        .take()
        .ok_or_else(|| PluginError::Runtime("stdout not captured".into()))?;
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        let r = stdout.read_to_end(&mut buf).map(|_| buf);
        let _ = tx.send(r);
    });

    let deadline = started + desc.timeout();
    let mut timed_out = false;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) if Instant::now() >= deadline => {
                timed_out = true;
                kill_group(&mut child);
                break child.wait().ok();
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => {
                kill_group(&mut child);
                return Err(PluginError::Runtime(e.to_string()));
            }
        }
    };

    let captured = match rx.recv_timeout(TIMEOUT_GRACE / 2) {
        Ok(Ok(bytes)) => String::from_utf8_lossy(&bytes).into_owned(),
        Ok(Err(e)) => return Err(PluginError::Runtime(format!("reading stdout: {e}"))),
        // A descendant that escaped the group still holds the pipe.
        Err(_) if timed_out => String::new(),
        Err(_) => return Err(PluginError::Runtime("stdout capture did not finish".into())),
    };

    let exit_code = if timed_out {
        3
    } else {
        status.and_then(|s| s.code()).unwrap_or(3)
    };
    let parsed = parse_plugin_output(&captured);
    let status_text = if timed_out {
        format!("plugin timed out after {}s", desc.timeout_s)
    } else {
        parsed.status_text
    };
    Ok(PluginOutcome {
        exit_code,
        stdout_text: captured,
        status_text,
        perfdata: parsed.perfdata,
        duration_ms: started.elapsed().as_millis() as u64,
        timed_out,
        warnings: parsed.warnings,
    })
}

fn kill_group(child: &mut std::process::Child) {
    let pid = child.id() as libc::pid_t;
    // SAFETY: signalling our own child's process group; no memory is touched.
    unsafe {
        libc::kill(-pid, libc::SIGKILL);
    }
    let _ = child.kill();
}

/// Runs independent jobs on at most `parallelism` worker threads, returning
/// results in input order.
pub fn run_parallel<T, R, F>(jobs: Vec<T>, parallelism: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = parallelism.max(1).min(jobs.len());
    if workers <= 1 {
        return jobs.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = (0..jobs.len()).map(|_| None).collect();
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (jobs, next, f) = (&jobs, &next, &f);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                let _ = tx.send((i, f(job)));
            });
        }
        drop(tx);
        for (i, r) in rx {
            slots[i] = Some(r);
        }
    });
    slots.into_iter().map(|s| s.expect("every job ran")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn host() -> MonitoredObject {
        MonitoredObject::host("edge1", "10.0.0.5", "check_ping")
    }

    #[test]
    fn macro_substitution() {
        let e = expand_macros("check_ping -H $HOSTADDRESS$", &host(), &HashMap::new()).unwrap();
        assert_eq!(e.command, "check_ping -H 10.0.0.5");
        assert!(e.unknown.is_empty());

        let e = expand_macros("check_dummy 0", &host(), &HashMap::new()).unwrap();
        assert_eq!(e.command, "check_dummy 0");

        let e = expand_macros("x $UNDEFINED$ y", &host(), &HashMap::new()).unwrap();
        assert_eq!(e.command, "x $UNDEFINED$ y");
        assert_eq!(e.unknown, vec!["UNDEFINED".to_string()]);
    }

    #[test]
    fn macro_extras_and_literal_dollar() {
        let svc = MonitoredObject::service("edge1-if1", "edge1", "10.0.0.5", "c");
        let extra = argument_macros(&["public", "1.3.6"]);
        let e = expand_macros("snmp -H $HOSTNAME$ -C $ARG1$ -o $ARG2$ cost=$$5", &svc, &extra).unwrap();
        assert_eq!(e.command, "snmp -H edge1 -C public -o 1.3.6 cost=$5");
    }

    #[test]
    fn unbalanced_macro_is_an_error() {
        let err = expand_macros("check -H $HOSTADDRESS", &host(), &HashMap::new()).unwrap_err();
        assert!(matches!(err, PluginError::UnbalancedMacro(9)));
    }

    #[test]
    fn exit_code_table() {
        assert_eq!(map_exit_code(0), CheckStatus::Ok);
        assert_eq!(map_exit_code(1), CheckStatus::Warning);
        assert_eq!(map_exit_code(2), CheckStatus::Critical);
        assert_eq!(map_exit_code(3), CheckStatus::Unknown);
        assert_eq!(map_exit_code(7), CheckStatus::Unknown);
        assert_eq!(map_exit_code(-1), CheckStatus::Unknown);
    }

    #[test]
    fn output_parsing() {
        let p = parse_plugin_output("OK - load 0.50 | load=0.50;1;2");
        assert_eq!(p.status_text, "OK - load 0.50");
        assert_eq!(
            p.perfdata,
            vec![PerfDatum {
                label: "load".into(),
                value: 0.5,
                unit: None,
                warn: Some(1.0),
                crit: Some(2.0)
            }]
        );

        let p = parse_plugin_output("CRITICAL - down");
        assert_eq!((p.status_text.as_str(), p.perfdata.len()), ("CRITICAL - down", 0));

        let p = parse_plugin_output("OK | bogus==;;");
        assert_eq!(p.status_text, "OK");
        assert!(p.perfdata.is_empty());
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn output_parsing_details() {
        let p = parse_plugin_output(r"OK a\|b | 'rx bytes'=12.5KB;;99 time=0.01s;0:1 pct=3%;;;0;100");
        assert_eq!(p.status_text, "OK a|b");
        assert_eq!(p.perfdata.len(), 3);
        assert_eq!(p.perfdata[0].label, "rx bytes");
        assert_eq!(p.perfdata[0].unit.as_deref(), Some("KB"));
        assert_eq!((p.perfdata[0].warn, p.perfdata[0].crit), (None, Some(99.0)));
        // Range thresholds are reported but the datum survives.
        assert_eq!(p.perfdata[1].warn, None);
        assert_eq!(p.warnings.len(), 1);
        assert_eq!(p.perfdata[2].unit.as_deref(), Some("%"));
    }

    #[test]
    fn registry_rules() {
        let mut reg = PluginRegistry::new();
        reg.register(PluginDescriptor::new("check_ping", PluginKind::Monitoring, "ping $HOSTADDRESS$", 5))
            .unwrap();
        assert!(matches!(
            reg.register(PluginDescriptor::new("check_ping", PluginKind::Monitoring, "x", 5)),
            Err(PluginError::DuplicatePlugin(_))
        ));
        assert!(matches!(
            reg.register(PluginDescriptor::new("empty", PluginKind::Monitoring, " ", 5)),
            Err(PluginError::EmptyCommand)
        ));
        assert!(matches!(
            reg.require("check_ping", PluginKind::Configuration),
            Err(PluginError::WrongKind { .. })
        ));
    }

    #[test]
    fn split_command_forms() {
        assert_eq!(split_check_command("check_ping"), ("check_ping", vec![]));
        assert_eq!(split_check_command("snmp_probe!1.3.6!1"), ("snmp_probe", vec!["1.3.6", "1"]));
    }

    #[test]
    fn parallel_runs_keep_order() {
        let out = run_parallel((0..50).collect(), 8, |x: &i32| x * 2);
        assert_eq!(out, (0..50).map(|x| x * 2).collect::<Vec<_>>());
        assert!(run_parallel(Vec::<i32>::new(), 8, |x| *x).is_empty());
    }

    fn perf_strategy() -> impl Strategy<Value = PerfDatum> {
        (
            "[a-zA-Z_][a-zA-Z0-9_ ./'=-]{0,11}",
            -1.0e9f64..1.0e9,
            proptest::option::of("[a-zA-Z%]{1,3}"),
            proptest::option::of(-1.0e6f64..1.0e6),
            proptest::option::of(-1.0e6f64..1.0e6),
        )
            .prop_map(|(label, value, unit, warn, crit)| PerfDatum {
                label: label.trim().to_string().replace(char::is_whitespace, "_"),
                value,
                unit,
                warn,
                crit,
            })
            .prop_filter("label", |d| !d.label.is_empty())
    }

    proptest! {
        #[test]
        fn perfdata_round_trip(data in proptest::collection::vec(perf_strategy(), 0..6)) {
            let text = format!("OK - fine | {}", format_perfdata(&data));
            let parsed = parse_plugin_output(&text);
            prop_assert!(parsed.warnings.is_empty(), "{:?}", parsed.warnings);
            prop_assert_eq!(parsed.perfdata, data);
        }

        #[test]
        fn quoted_labels_with_spaces_round_trip(words in proptest::collection::vec("[a-z']{1,5}", 1..4), v in -100.0f64..100.0) {
            let d = PerfDatum { label: words.join(" "), value: v, unit: None, warn: None, crit: None };
            let parsed = parse_plugin_output(&format!("OK | {d}"));
            prop_assert_eq!(parsed.perfdata, vec![d]);
        }
    }
}
