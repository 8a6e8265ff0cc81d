//! Map model: host graph, reachability and equipment-type icon matching.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::snmp::Oid;
use crate::state::{CheckStatus, HostStatus, MonitoredObject, ObjectKind, ObservedState};

/// Implicit parent of every host that names no parent.
pub const ROOT_ID: &str = "management-station";
/// Icon for devices no rule recognises.
pub const UNKNOWN_ICON: &str = "?";
pub const MAP_API_VERSION: &str = "v1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("parent cycle through {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("host '{host}' names unknown parent '{parent}'")]
    UnknownParent { host: String, parent: String },
    #[error("duplicate host '{0}'")]
    DuplicateHost(String),
    #[error("icon rules line {line}: {reason}")]
    RuleParse { line: usize, reason: String },
    #[error("reading {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceIdentity {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sys_object_id: Option<Oid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sys_descr: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapNode {
    pub host_id: String,
    pub label: String,
    pub position: Option<Position>,
    pub identity: DeviceIdentity,
    pub resolved_icon: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "arg", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Matcher {
    OidPrefix(Oid),
    /// Case-insensitive.
    DescrSubstring(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IconRule {
    pub rule_id: u32,
    pub matcher: Matcher,
    pub icon_id: String,
    pub priority: i64,
}

impl IconRule {
    fn matches(&self, identity: &DeviceIdentity) -> bool {
        match &self.matcher {
            Matcher::OidPrefix(prefix) => identity
                .sys_object_id
                .as_ref()
                .is_some_and(|oid| oid.starts_with(prefix)),
            Matcher::DescrSubstring(needle) => identity
                .sys_descr
                .as_ref()
                .is_some_and(|d| d.to_lowercase().contains(&needle.to_lowercase())),
        }
    }

    fn prefix_len(&self) -> usize {
        match &self.matcher {
            Matcher::OidPrefix(p) => p.len(),
            Matcher::DescrSubstring(_) => 0,
        }
    }
}

/// Parses `priority<TAB>matcher_kind<TAB>matcher_arg<TAB>icon_id` lines.
/// Rule ids are assigned in file order starting at 1.
pub fn parse_icon_rules(text: &str) -> Result<Vec<IconRule>, TopologyError> {
    let mut rules = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        let err = |reason: String| TopologyError::RuleParse { line, reason };
        let fields: Vec<&str> = raw.split('\t').map(str::trim).collect();
        let [priority, kind, arg, icon] = fields[..] else {
            return Err(err(format!("expected 4 tab-separated fields, got {}", fields.len())));
        };
        let priority: i64 = priority.parse().map_err(|_| err(format!("bad priority '{priority}'")))?;
        let matcher = match kind {
            "OID_PREFIX" => Matcher::OidPrefix(arg.parse().map_err(|e| err(format!("{e}")))?),
            "DESCR_SUBSTRING" if !arg.is_empty() => Matcher::DescrSubstring(arg.to_string()),
            "DESCR_SUBSTRING" => return Err(err("empty substring".into())),
            other => return Err(err(format!("unknown matcher kind '{other}'"))),
        };
        if icon.is_empty() || icon.chars().any(char::is_whitespace) {
            return Err(err(format!("bad icon id '{icon}'")));
        }
        rules.push(IconRule {
            rule_id: rules.len() as u32 + 1,
            matcher,
            icon_id: icon.to_string(),
            priority,
        });
    }
    Ok(rules)
}

pub fn load_icon_rules(path: &Path) -> Result<Vec<IconRule>, TopologyError> {
    let text = std::fs::read_to_string(path).map_err(|e| TopologyError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_icon_rules(&text)
}

/// Highest priority wins, then the longest OID prefix, then the lowest
/// rule id. No match gives [`UNKNOWN_ICON`].
pub fn match_icon(identity: &DeviceIdentity, rules: &[IconRule]) -> String {
    rules
        .iter()
        .filter(|r| r.matches(identity))
        .max_by(|a, b| {
            a.priority
                .cmp(&b.priority)
                .then(a.prefix_len().cmp(&b.prefix_len()))
                .then(b.rule_id.cmp(&a.rule_id))
        })
        .map_or_else(|| UNKNOWN_ICON.to_string(), |r| r.icon_id.clone())
}

/// Host as seen by the map.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub host_id: String,
    pub label: String,
    pub parent: Option<String>,
    pub position: Option<Position>,
    pub identity: DeviceIdentity,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TopologyGraph {
    nodes: BTreeMap<String, MapNode>,
    /// Host to parent host. Hosts absent here hang off the root.
    parents: BTreeMap<String, String>,
    /// Host to its services.
    services: BTreeMap<String, BTreeSet<String>>,
}

impl TopologyGraph {
    pub fn build(nodes: impl IntoIterator<Item = NodeSpec>) -> Result<Self, TopologyError> {
        let mut g = TopologyGraph::default();
        for n in nodes {
            if g.nodes.contains_key(&n.host_id) {
                return Err(TopologyError::DuplicateHost(n.host_id));
            }
            if let Some(p) = n.parent.filter(|p| p != ROOT_ID) {
                g.parents.insert(n.host_id.clone(), p);
            }
            g.nodes.insert(
                n.host_id.clone(),
                MapNode {
                    host_id: n.host_id,
                    label: n.label,
                    position: n.position,
                    identity: n.identity,
                    resolved_icon: UNKNOWN_ICON.to_string(),
                },
            );
        }
        for (host, parent) in &g.parents {
            if !g.nodes.contains_key(parent) {
                return Err(TopologyError::UnknownParent {
                    host: host.clone(),
                    parent: parent.clone(),
                });
            }
        }
        g.check_acyclic()?;
        Ok(g)
    }

    /// Graph over the host objects; services are attached to their host.
    pub fn from_objects<'a>(
        objects: impl IntoIterator<Item = &'a MonitoredObject>,
        identities: &BTreeMap<String, DeviceIdentity>,
        positions: &BTreeMap<String, Position>,
    ) -> Result<Self, TopologyError> {
        let objects: Vec<&MonitoredObject> = objects.into_iter().collect();
        let mut g = Self::build(objects.iter().filter(|o| o.kind == ObjectKind::Host).map(|o| NodeSpec {
            host_id: o.id.clone(),
            label: if o.display_name.is_empty() { o.id.clone() } else { o.display_name.clone() },
            parent: o.parent_host.clone(),
            position: positions.get(&o.id).copied(),
            identity: identities.get(&o.id).cloned().unwrap_or_default(),
        }))?;
        for o in objects.iter().filter(|o| o.kind == ObjectKind::Service) {
            if let Some(h) = &o.parent_host {
                if !g.nodes.contains_key(h) {
                    return Err(TopologyError::UnknownParent {
                        host: o.id.clone(),
                        parent: h.clone(),
                    });
                }
                g.services.entry(h.clone()).or_default().insert(o.id.clone());
            }
        }
        Ok(g)
    }

    fn check_acyclic(&self) -> Result<(), TopologyError> {
        let mut done: BTreeSet<&str> = BTreeSet::new();
        for start in self.nodes.keys() {
            let mut path: Vec<&str> = Vec::new();
            let mut cur = Some(start.as_str());
            while let Some(c) = cur {
                if done.contains(c) {
                    break;
                }
                if let Some(pos) = path.iter().position(|p| *p == c) {
                    let mut cycle: Vec<String> = path[pos..].iter().map(|s| s.to_string()).collect();
                    cycle.push(c.to_string());
                    return Err(TopologyError::Cycle(cycle));
                }
                path.push(c);
                cur = self.parents.get(c).map(String::as_str);
            }
            done.extend(path);
        }
        Ok(())
    }

    pub fn nodes(&self) -> impl Iterator<Item = &MapNode> {
        self.nodes.values()
    }

    pub fn node(&self, host_id: &str) -> Option<&MapNode> {
        self.nodes.get(host_id)
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Parent host, or `None` for hosts directly under the root.
    pub fn parent(&self, host_id: &str) -> Option<&str> {
        self.parents.get(host_id).map(String::as_str)
    }

    /// Ancestors from the parent upwards, excluding the root.
    pub fn ancestors<'a>(&'a self, host_id: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        std::iter::successors(self.parent(host_id), move |h| self.parent(h))
    }

    pub fn services_of(&self, host_id: &str) -> impl Iterator<Item = &str> {
        self.services.get(host_id).into_iter().flatten().map(String::as_str)
    }

    /// Host owning `object_id`, which may itself be a host.
    pub fn host_of(&self, object_id: &str) -> Option<&str> {
        if let Some((k, _)) = self.nodes.get_key_value(object_id) {
            return Some(k.as_str());
        }
        self.services
            .iter()
            .find(|(_, s)| s.contains(object_id))
            .map(|(h, _)| h.as_str())
    }

    pub fn set_identity(&mut self, host_id: &str, identity: DeviceIdentity) {
        if let Some(n) = self.nodes.get_mut(host_id) {
            n.identity = identity;
        }
    }

    pub fn resolve_icons(&mut self, rules: &[IconRule]) {
        for n in self.nodes.values_mut() {
            n.resolved_icon = match_icon(&n.identity, rules);
        }
    }
}

/// DOWN hosts with a DOWN ancestor become UNREACHABLE. Hosts missing from
/// `host_states` count as UP.
pub fn compute_reachability(
    graph: &TopologyGraph,
    host_states: &BTreeMap<String, HostStatus>,
) -> BTreeMap<String, HostStatus> {
    let down = |h: &str| host_states.get(h).is_some_and(|s| *s != HostStatus::Up);
    graph
        .nodes
        .keys()
        .map(|h| {
            let own = host_states.get(h).copied().unwrap_or(HostStatus::Up);
            let status = if own != HostStatus::Up && graph.ancestors(h).any(down) {
                HostStatus::Unreachable
            } else {
                own
            };
            (h.clone(), status)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MapStatus {
    Ok,
    Warning,
    Critical,
    Unknown,
    Unreachable,
}

impl From<CheckStatus> for MapStatus {
    fn from(s: CheckStatus) -> Self {
        match s {
            CheckStatus::Ok => MapStatus::Ok,
            CheckStatus::Warning => MapStatus::Warning,
            CheckStatus::Critical => MapStatus::Critical,
            CheckStatus::Unknown => MapStatus::Unknown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapEntry {
    pub host_id: String,
    pub label: String,
    pub icon: String,
    pub status: MapStatus,
    pub alarmed: bool,
    pub parent: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position: Option<Position>,
    #[serde(flatten)]
    pub identity: DeviceIdentity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapEdge {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapDocument {
    pub api_version: String,
    pub generated_at: Timestamp,
    pub root: String,
    pub nodes: Vec<MapEntry>,
    /// Child to parent; hosts under the root have an edge to [`ROOT_ID`].
    pub edges: Vec<MapEdge>,
}

/// Pure function of its inputs; entries are ordered by host id.
pub fn render_map_document(graph: &TopologyGraph, snapshot: &ObservedState, rules: &[IconRule]) -> MapDocument {
    let status_of = |id: &str| snapshot.record(id).map_or(CheckStatus::Ok, |r| r.current_status);
    let host_states: BTreeMap<String, HostStatus> = graph
        .nodes
        .keys()
        .map(|h| (h.clone(), HostStatus::from_check(status_of(h))))
        .collect();
    let reach = compute_reachability(graph, &host_states);
    let nodes = graph
        .nodes
        .values()
        .map(|n| {
            let status = match reach.get(&n.host_id) {
                Some(HostStatus::Unreachable) => MapStatus::Unreachable,
                _ => status_of(&n.host_id).into(),
            };
            let alarmed = snapshot.has_open_alarm(&n.host_id)
                || graph.services_of(&n.host_id).any(|s| snapshot.has_open_alarm(s));
            MapEntry {
                host_id: n.host_id.clone(),
                label: n.label.clone(),
                icon: match_icon(&n.identity, rules),
                status,
                alarmed,
                parent: graph.parent(&n.host_id).map(str::to_string),
                position: n.position,
                identity: n.identity.clone(),
            }
        })
        .collect();
    let edges = graph
        .nodes
        .keys()
        .map(|h| MapEdge {
            from: h.clone(),
            to: graph.parent(h).unwrap_or(ROOT_ID).to_string(),
        })
        .collect();
    MapDocument {
        api_version: MAP_API_VERSION.to_string(),
        generated_at: snapshot.taken_at,
        root: ROOT_ID.to_string(),
        nodes,
        edges,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{Alarm, AlarmId, AlarmState, StateRecord, StateType};
    use proptest::prelude::*;

    fn ident(oid: &str) -> DeviceIdentity {
        DeviceIdentity {
            sys_object_id: Some(oid.parse().unwrap()),
            sys_descr: None,
        }
    }

    fn node(id: &str, parent: Option<&str>) -> NodeSpec {
        NodeSpec {
            host_id: id.into(),
            label: id.into(),
            parent: parent.map(str::to_string),
            position: None,
            identity: DeviceIdentity::default(),
        }
    }

    const RULES: &str = "# vendor icons\n10\tOID_PREFIX\t1.3.6.1.4.1\tgeneric\n10\tOID_PREFIX\t1.3.6.1.4.1.9\trouter-vendorA\n5\tDESCR_SUBSTRING\tlinux\tserver\n";

    #[test]
    fn icon_examples() {
        let rules = parse_icon_rules(RULES).unwrap();
        assert_eq!(rules.iter().map(|r| r.rule_id).collect::<Vec<_>>(), [1, 2, 3]);
        assert_eq!(match_icon(&ident("1.3.6.1.4.1.9.1.620"), &rules), "router-vendorA");
        assert_eq!(match_icon(&ident("1.3.6.1.4.1.2636.1"), &rules), "generic");
        assert_eq!(match_icon(&ident("1.3.6.1.2.1"), &rules), "?");
        assert_eq!(match_icon(&DeviceIdentity::default(), &rules), "?");
        let d = DeviceIdentity {
            sys_object_id: None,
            sys_descr: Some("Net-SNMP on LINUX".into()),
        };
        assert_eq!(match_icon(&d, &rules), "server");
    }

    #[test]
    fn equal_rules_tie_on_rule_id() {
        let rules = parse_icon_rules("1\tOID_PREFIX\t1.3.6\ta\n1\tOID_PREFIX\t1.3.6\tb\n").unwrap();
        assert_eq!(match_icon(&ident("1.3.6.1"), &rules), "a");
    }

    #[test]
    fn rule_parse_errors() {
        assert!(matches!(parse_icon_rules("x\tOID_PREFIX\t1.3\ta"), Err(TopologyError::RuleParse { line: 1, .. })));
        assert!(matches!(parse_icon_rules("\n1\tREGEX\t.*\ta"), Err(TopologyError::RuleParse { line: 2, .. })));
        assert!(parse_icon_rules("1\tOID_PREFIX\t1.3").is_err());
    }

    #[test]
    fn reachability_examples() {
        let g = TopologyGraph::build([node("core", None), node("edge", Some("core"))]).unwrap();
        let st = |a, b| BTreeMap::from([("core".to_string(), a), ("edge".to_string(), b)]);
        let r = compute_reachability(&g, &st(HostStatus::Down, HostStatus::Down));
        assert_eq!(r["edge"], HostStatus::Unreachable);
        assert_eq!(r["core"], HostStatus::Down);
        let r = compute_reachability(&g, &st(HostStatus::Up, HostStatus::Down));
        assert_eq!(r["edge"], HostStatus::Down);
        let all_up = st(HostStatus::Up, HostStatus::Up);
        assert_eq!(compute_reachability(&g, &all_up), all_up);
    }

    #[test]
    fn cycle_and_unknown_parent() {
        let err = TopologyGraph::build([node("a", Some("b")), node("b", Some("a"))]).unwrap_err();
        assert!(matches!(err, TopologyError::Cycle(_)));
        let err = TopologyGraph::build([node("a", Some("zz"))]).unwrap_err();
        assert!(matches!(err, TopologyError::UnknownParent { .. }));
    }

    fn snapshot(host: &str, status: CheckStatus, alarm: bool) -> ObservedState {
        let mut r = StateRecord::initial(host, Timestamp(0));
        r.current_status = status;
        r.state_type = StateType::Hard;
        ObservedState {
            taken_at: Timestamp(5),
            states: vec![r],
            open_alarms: alarm
                .then(|| Alarm {
                    alarm_id: AlarmId(1),
                    object_id: host.to_string(),
                    severity: status,
                    opened_ts: Timestamp(1),
                    state: AlarmState::Open,
                    ack_by: None,
                    closed_ts: None,
                })
                .into_iter()
                .collect(),
        }
    }

    #[test]
    fn render_examples() {
        let rules = parse_icon_rules(RULES).unwrap();
        let mut spec = node("r1", None);
        spec.identity = ident("1.3.6.1.4.1.9.1.620");
        let g = TopologyGraph::build([spec, node("u", None)]).unwrap();
        let doc = render_map_document(&g, &snapshot("r1", CheckStatus::Critical, true), &rules);
        let e = &doc.nodes[0];
        assert_eq!((e.icon.as_str(), e.status, e.alarmed), ("router-vendorA", MapStatus::Critical, true));
        assert_eq!(doc.nodes[1].icon, "?");
        let empty = render_map_document(&TopologyGraph::default(), &snapshot("r1", CheckStatus::Ok, false), &rules);
        assert!(empty.nodes.is_empty() && empty.edges.is_empty());
    }

    #[test]
    fn render_is_byte_stable() {
        let rules = parse_icon_rules(RULES).unwrap();
        let g = TopologyGraph::build([node("b", None), node("a", Some("b"))]).unwrap();
        let s = snapshot("b", CheckStatus::Critical, false);
        let one = serde_json::to_string(&render_map_document(&g, &s, &rules)).unwrap();
        let two = serde_json::to_string(&render_map_document(&g, &s, &rules)).unwrap();
        assert_eq!(one, two);
        let doc = render_map_document(&g, &s, &rules);
        assert_eq!(doc.nodes[0].host_id, "a");
    }

    fn arb_rules() -> impl Strategy<Value = Vec<IconRule>> {
        proptest::collection::vec((0i64..5, 2usize..9, 0u8..3), 0..8).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (priority, len, icon))| IconRule {
                    rule_id: i as u32 + 1,
                    matcher: Matcher::OidPrefix(Oid::from_arcs(&[1, 3, 6, 1, 4, 1, 9, 1, 620][..len])),
                    icon_id: format!("icon{icon}"),
                    priority,
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn raising_priority_wins(rules in arb_rules(), pick in 0usize..8) {
            prop_assume!(!rules.is_empty());
            let id = ident("1.3.6.1.4.1.9.1.620");
            let mut rules = rules;
            let i = pick % rules.len();
            let top = rules.iter().map(|r| r.priority).max().unwrap();
            rules[i].priority = top + 1;
            rules[i].icon_id = "winner".into();
            prop_assert_eq!(match_icon(&id, &rules), "winner");
        }

        #[test]
        fn more_down_hosts_keep_unreachable(parents in proptest::collection::vec(0usize..6, 6), down in proptest::collection::vec(any::<bool>(), 6), extra in 0usize..6) {
            // parents[i] < i makes a forest; otherwise the node hangs off the root.
            let specs = (0..6).map(|i| node(&format!("h{i}"), (parents[i] < i).then(|| format!("h{}", parents[i])).as_deref()));
            let g = TopologyGraph::build(specs).unwrap();
            let mut states: BTreeMap<String, HostStatus> = (0..6)
                .map(|i| (format!("h{i}"), if down[i] { HostStatus::Down } else { HostStatus::Up }))
                .collect();
            let before = compute_reachability(&g, &states);
            states.insert(format!("h{extra}"), HostStatus::Down);
            let after = compute_reachability(&g, &states);
            for (h, s) in &before {
                if *s == HostStatus::Unreachable {
                    prop_assert_eq!(after[h], HostStatus::Unreachable);
                }
                if states[h] == HostStatus::Up {
                    prop_assert_eq!(after[h], HostStatus::Up);
                }
            }
        }
    }

}
