//! Ordered event fan-out. Every envelope gets the next sequence number; a
//! bounded ring keeps recent envelopes for `since` replay. A subscriber that
//! asks for something the ring no longer holds, or falls behind the live
//! channel, receives one RESYNC envelope and continues from what is left.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use nbitms_core::Timestamp;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::broadcast;

pub const DEFAULT_RING: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    StateChanged,
    AlarmOpened,
    AlarmClosed,
    AlarmAcknowledged,
    TxnPhase,
    MapChanged,
    Resync,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventEnvelope {
    pub api_version: String,
    pub seq: u64,
    pub ts: Timestamp,
    pub kind: EventKind,
    pub payload: Value,
}

struct Ring {
    last_seq: u64,
    buf: VecDeque<EventEnvelope>,
    capacity: usize,
}

#[derive(Clone)]
pub struct EventHub {
    ring: Arc<Mutex<Ring>>,
    live: broadcast::Sender<EventEnvelope>,
}

impl EventHub {
    /// `capacity` bounds both the replay ring and each subscriber's backlog.
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        EventHub {
            ring: Arc::new(Mutex::new(Ring {
                last_seq: 0,
                buf: VecDeque::with_capacity(capacity),
                capacity,
            })),
            live: broadcast::channel(capacity).0,
        }
    }

    pub fn last_seq(&self) -> u64 {
        self.ring.lock().expect("ring lock").last_seq
    }

    pub fn publish(&self, kind: EventKind, ts: Timestamp, payload: Value) -> u64 {
        let mut ring = self.ring.lock().expect("ring lock");
        ring.last_seq += 1;
        let env = EventEnvelope {
            api_version: nbitms_core::topology::MAP_API_VERSION.to_string(),
            seq: ring.last_seq,
            ts,
            kind,
            payload,
        };
        if ring.buf.len() == ring.capacity {
            ring.buf.pop_front();
        }
        ring.buf.push_back(env.clone());
        // Sent under the lock so replay and live never interleave out of order.
        let _ = self.live.send(env);
        ring.last_seq
    }

    /// Stream of envelopes after `since`, or only new ones when `None`.
    pub fn subscribe(&self, since: Option<u64>) -> Subscription {
        let ring = self.ring.lock().expect("ring lock");
        let rx = self.live.subscribe();
        let mut sub = Subscription {
            hub: self.clone(),
            rx,
            pending: VecDeque::new(),
            last_seen: ring.last_seq,
        };
        if let Some(since) = since {
            sub.last_seen = since;
            sub.fill_from(&ring);
        }
        sub
    }
}

pub struct Subscription {
    hub: EventHub,
    rx: broadcast::Receiver<EventEnvelope>,
    pending: VecDeque<EventEnvelope>,
    last_seen: u64,
}

impl Subscription {
    /// Queues what the ring holds after `last_seen`, preceded by RESYNC when
    /// that leaves a gap.
    fn fill_from(&mut self, ring: &Ring) {
        let oldest = ring.buf.front().map_or(ring.last_seq + 1, |e| e.seq);
        let gap = self.last_seen + 1 < oldest || self.last_seen > ring.last_seq;
        if gap {
            let resume = oldest.saturating_sub(1);
            let ts = ring.buf.front().map_or(Timestamp::ZERO, |e| e.ts);
            self.pending.push_back(EventEnvelope {
                api_version: nbitms_core::topology::MAP_API_VERSION.to_string(),
                seq: resume,
                ts,
                kind: EventKind::Resync,
                payload: serde_json::json!({
                    "requested_since": self.last_seen,
                    "replay_from": oldest,
                    "latest": ring.last_seq,
                }),
            });
            self.last_seen = resume;
        }
        let from = self.last_seen;
        self.pending.extend(ring.buf.iter().filter(|e| e.seq > from).cloned());
        if let Some(e) = self.pending.back() {
            self.last_seen = self.last_seen.max(e.seq);
        }
        // Whatever the live channel buffered so far is now covered.
        while let Ok(_) | Err(broadcast::error::TryRecvError::Lagged(_)) = self.rx.try_recv() {}
        if self.last_seen < ring.last_seq {
            self.last_seen = ring.last_seq;
        }
    }

    /// Next envelope, waiting if needed. `None` once the hub is gone.
    pub async fn next(&mut self) -> Option<EventEnvelope> {
        loop {
            if let Some(e) = self.pending.pop_front() {
                return Some(e);
            }
            match self.rx.recv().await {
                Ok(e) if e.seq <= self.last_seen => continue,
                Ok(e) => {
                    self.last_seen = e.seq;
                    return Some(e);
                }
                Err(broadcast::error::RecvError::Lagged(_)) => {
                    let hub = self.hub.clone();
                    let ring = hub.ring.lock().expect("ring lock");
                    self.fill_from(&ring);
                }
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    }

    /// Non-blocking variant for tests and draining.
    pub fn try_next(&mut self) -> Option<EventEnvelope> {
        loop {
            if let Some(e) = self.pending.pop_front() {
                return Some(e);
            }
            match self.rx.try_recv() {
                Ok(e) if e.seq <= self.last_seen => continue,
                Ok(e) => {
                    self.last_seen = e.seq;
                    return Some(e);
                }
                Err(broadcast::error::TryRecvError::Lagged(_)) => {
                    let hub = self.hub.clone();
                    let ring = hub.ring.lock().expect("ring lock");
                    self.fill_from(&ring);
                }
                Err(_) => return None,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    fn drain(sub: &mut Subscription) -> Vec<(u64, EventKind)> {
        std::iter::from_fn(|| sub.try_next()).map(|e| (e.seq, e.kind)).collect()
    }

    #[test]
    fn live_subscriber_sees_new_events_only() {
        let hub = EventHub::new(8);
        hub.publish(EventKind::MapChanged, Timestamp(1), json!({}));
        let mut sub = hub.subscribe(None);
        hub.publish(EventKind::AlarmOpened, Timestamp(2), json!({}));
        assert_eq!(drain(&mut sub), vec![(2, EventKind::AlarmOpened)]);
    }

    #[test]
    fn since_replays_from_next() {
        let hub = EventHub::new(8);
        for i in 0..5 {
            hub.publish(EventKind::StateChanged, Timestamp(i), json!(i));
        }
        let mut sub = hub.subscribe(Some(2));
        hub.publish(EventKind::MapChanged, Timestamp(9), json!({}));
        let seqs: Vec<u64> = drain(&mut sub).into_iter().map(|x| x.0).collect();
        assert_eq!(seqs, vec![3, 4, 5, 6]);
    }

    #[test]
    fn overflow_yields_resync() {
        let hub = EventHub::new(4);
        for i in 0..10 {
            hub.publish(EventKind::StateChanged, Timestamp(i), json!(i));
        }
        let mut sub = hub.subscribe(Some(1));
        let got = drain(&mut sub);
        assert_eq!(got[0], (6, EventKind::Resync));
        assert_eq!(got[1..].iter().map(|x| x.0).collect::<Vec<_>>(), vec![7, 8, 9, 10]);
    }

    #[test]
    fn since_beyond_latest_is_resync() {
        let hub = EventHub::new(4);
        hub.publish(EventKind::StateChanged, Timestamp(0), json!(0));
        let mut sub = hub.subscribe(Some(50));
        let got = drain(&mut sub);
        assert_eq!(got[0].1, EventKind::Resync);
        assert_eq!(got.len(), 2);
    }

    #[test]
    fn slow_subscriber_gets_resync_not_gap() {
        let hub = EventHub::new(4);
        let mut sub = hub.subscribe(None);
        for i in 0..20 {
            hub.publish(EventKind::StateChanged, Timestamp(i), json!(i));
        }
        let got = drain(&mut sub);
        assert_eq!(got[0].1, EventKind::Resync);
        let seqs: Vec<u64> = got.iter().map(|x| x.0).collect();
        assert!(seqs.windows(2).all(|w| w[1] == w[0] + 1), "{seqs:?}");
        assert_eq!(*seqs.last().unwrap(), 20);
    }

    proptest! {
        #[test]
        fn strictly_increasing_without_gaps(cap in 1usize..16, plan in prop::collection::vec((0usize..10, any::<bool>()), 1..30), since in prop::option::of(0u64..40)) {
            let hub = EventHub::new(cap);
            let mut sub = hub.subscribe(since);
            let mut got = Vec::new();
            for (burst, read) in plan {
                for _ in 0..burst {
                    hub.publish(EventKind::StateChanged, Timestamp(0), json!(null));
                }
                if read {
                    got.extend(drain(&mut sub));
                }
            }
            got.extend(drain(&mut sub));
            for w in got.windows(2) {
                prop_assert!(w[1].0 > w[0].0);
                // Skips only happen right after a RESYNC.
                prop_assert!(w[1].0 == w[0].0 + 1 || w[1].1 == EventKind::Resync, "{:?}", w);
            }
            if let Some(last) = got.last() {
                prop_assert_eq!(last.0, hub.last_seq());
            }
        }
    }
}
