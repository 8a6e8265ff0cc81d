//! Check scheduling: interleaved initial offsets, due batches and
//! retry-aware rescheduling.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::state::{MonitoredObject, StateRecord, StateType};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub object_id: String,
    pub next_due_ts: Timestamp,
    pub interval_in_use_s: u64,
}

/// One entry per enabled object, keyed by object id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    entries: BTreeMap<String, ScheduleEntry>,
}

impl Schedule {
    pub fn from_entries(entries: impl IntoIterator<Item = ScheduleEntry>) -> Self {
        Schedule {
            entries: entries
                .into_iter()
                .map(|e| (e.object_id.clone(), e))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, object_id: &str) -> Option<&ScheduleEntry> {
        self.entries.get(object_id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &ScheduleEntry> {
        self.entries.values()
    }

    pub fn upsert(&mut self, entry: ScheduleEntry) {
        self.entries.insert(entry.object_id.clone(), entry);
    }

    /// Earliest due time, if any entry exists.
    pub fn earliest_due(&self) -> Option<Timestamp> {
        self.entries.values().map(|e| e.next_due_ts).min()
    }
}

/// Spreads objects sharing an interval `T` over offsets `k*T/N`, in id order.
pub fn build_schedule<'a>(
    objects: impl IntoIterator<Item = &'a MonitoredObject>,
    now: Timestamp,
) -> Schedule {
    let mut by_interval: BTreeMap<u64, Vec<&MonitoredObject>> = BTreeMap::new();
    for o in objects {
        by_interval.entry(o.check_interval_s).or_default().push(o);
    }
    let mut entries = Vec::new();
    for (interval_s, mut group) in by_interval {
        group.sort_by(|a, b| a.id.cmp(&b.id));
        let n = group.len() as u64;
        let period_ms = interval_s * 1000;
        for (k, o) in group.into_iter().enumerate() {
            entries.push(ScheduleEntry {
                object_id: o.id.clone(),
                next_due_ts: Timestamp(now.0 + k as u64 * period_ms / n),
                interval_in_use_s: interval_s,
            });
        }
    }
    Schedule::from_entries(entries)
}

/// Ids of every entry due at `now`, ordered by due time then id.
pub fn next_due(schedule: &Schedule, now: Timestamp) -> Vec<String> {
    let mut due: Vec<&ScheduleEntry> = schedule
        .entries
        .values()
        .filter(|e| e.next_due_ts <= now)
        .collect();
    due.sort_by(|a, b| {
        a.next_due_ts
            .cmp(&b.next_due_ts)
            .then_with(|| a.object_id.cmp(&b.object_id))
    });
    due.into_iter().map(|e| e.object_id.clone()).collect()
}

/// SOFT states retry on `retry_interval_s`; HARD states use `check_interval_s`.
pub fn reschedule_after_result(
    entry: &ScheduleEntry,
    new_record: &StateRecord,
    obj: &MonitoredObject,
    now: Timestamp,
) -> ScheduleEntry {
    let interval = match new_record.state_type {
        StateType::Soft => obj.retry_interval_s,
        StateType::Hard => obj.check_interval_s,
    }
    .max(1);
    ScheduleEntry {
        object_id: entry.object_id.clone(),
        next_due_ts: now.add_secs(interval),
        interval_in_use_s: interval,
    }
}
