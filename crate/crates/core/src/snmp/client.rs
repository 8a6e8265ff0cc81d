//! SNMPv2c manager side: GET, GETNEXT, SET and walk with timeout and retry.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ber::{BerValue, EncodeError};
use super::message::{decode_message, encode_message, error_status, Message, Pdu, PduType, VarBind};
use super::oid::Oid;
use super::transport::{Transport, TransportError};
use crate::clock::Clock;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(2);
pub const DEFAULT_RETRIES: u32 = 1;

/// Where and how to reach one agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnmpTarget {
    pub address: String,
    pub community: String,
    pub timeout: Duration,
    pub retries: u32,
}

impl SnmpTarget {
    pub fn new(address: impl Into<String>, community: impl Into<String>) -> Self {
        SnmpTarget {
            address: address.into(),
            community: community.into(),
            timeout: DEFAULT_TIMEOUT,
            retries: DEFAULT_RETRIES,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration, retries: u32) -> Self {
        self.timeout = timeout;
        self.retries = retries;
        self
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("no response from {target} after {attempts} attempt(s)")]
    Timeout { target: String, attempts: u32 },
    #[error("agent returned {} (status {status}) at varbind {index}", error_status::name(*status))]
    Protocol { status: i32, index: i32 },
    #[error("walk did not advance past {0}")]
    NonIncreasing(Oid),
    #[error("encode: {0}")]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

impl ClientError {
    /// The agent answered, just not with success.
    pub fn is_protocol(&self) -> bool {
        matches!(self, ClientError::Protocol { .. })
    }
}

/// PDU and byte totals, shared so that evaluators can sample them while
/// clients run.
#[derive(Debug, Default)]
pub struct ProtocolCounters {
    pdus_sent: AtomicU64,
    pdus_received: AtomicU64,
    bytes_sent: AtomicU64,
    bytes_received: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterSnapshot {
    pub pdus_sent: u64,
    pub pdus_received: u64,
    pub bytes_sent: u64,
    pub bytes_received: u64,
}

impl CounterSnapshot {
    pub fn pdus(&self) -> u64 {
        self.pdus_sent + self.pdus_received
    }

    pub fn bytes(&self) -> u64 {
        self.bytes_sent + self.bytes_received
    }

    pub fn delta(&self, earlier: &CounterSnapshot) -> CounterSnapshot {
        CounterSnapshot {
            pdus_sent: self.pdus_sent.saturating_sub(earlier.pdus_sent),
            pdus_received: self.pdus_received.saturating_sub(earlier.pdus_received),
            bytes_sent: self.bytes_sent.saturating_sub(earlier.bytes_sent),
            bytes_received: self.bytes_received.saturating_sub(earlier.bytes_received),
        }
    }
}

impl ProtocolCounters {
    pub fn record_sent(&self, bytes: usize) {
        self.pdus_sent.fetch_add(1, Ordering::Relaxed);
        self.bytes_sent.fetch_add(bytes as u64, Ordering::Relaxed);
    }

    pub fn record_received(&self, bytes: usize) {
        self.pdus_received.fetch_add(1, Ordering::Relaxed);
        self.bytes_received.fetch_add(bytes as u64, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> CounterSnapshot {
        CounterSnapshot {
            pdus_sent: self.pdus_sent.load(Ordering::Relaxed),
            pdus_received: self.pdus_received.load(Ordering::Relaxed),
            bytes_sent: self.bytes_sent.load(Ordering::Relaxed),
            bytes_received: self.bytes_received.load(Ordering::Relaxed),
        }
    }
}

pub struct SnmpClient {
    transport: Box<dyn Transport>,
    clock: Arc<dyn Clock>,
    counters: Arc<ProtocolCounters>,
    next_request_id: i32,
}

impl SnmpClient {
    pub fn new(transport: Box<dyn Transport>, clock: Arc<dyn Clock>, counters: Arc<ProtocolCounters>) -> Self {
        SnmpClient {
            transport,
            clock,
            counters,
            next_request_id: 1,
        }
    }

    pub fn counters(&self) -> &Arc<ProtocolCounters> {
        &self.counters
    }

    fn allocate_request_id(&mut self) -> i32 {
        let id = self.next_request_id;
        self.next_request_id = if id == i32::MAX { 1 } else { id + 1 };
        id
    }

    /// Response varbinds, in request order. Exception values
    /// (`noSuchObject` and friends) are returned in place.
    pub fn get(&mut self, target: &SnmpTarget, oids: &[Oid]) -> Result<Vec<VarBind>, ClientError> {
        let vbs = oids.iter().cloned().map(VarBind::null).collect();
        Ok(self.exchange(target, PduType::Get, vbs)?.varbinds)
    }

    pub fn get_next(&mut self, target: &SnmpTarget, oids: &[Oid]) -> Result<Vec<VarBind>, ClientError> {
        let vbs = oids.iter().cloned().map(VarBind::null).collect();
        Ok(self.exchange(target, PduType::GetNext, vbs)?.varbinds)
    }

    pub fn set(&mut self, target: &SnmpTarget, varbinds: Vec<VarBind>) -> Result<Vec<VarBind>, ClientError> {
        Ok(self.exchange(target, PduType::Set, varbinds)?.varbinds)
    }

    /// Every varbind under `root`, in lexicographic order.
    pub fn walk(&mut self, target: &SnmpTarget, root: &Oid) -> Result<Vec<VarBind>, ClientError> {
        let mut out = Vec::new();
        let mut cursor = root.clone();
        while let Some(vb) = self.get_next(target, std::slice::from_ref(&cursor))?.into_iter().next() {
            if vb.value.is_exception() || !vb.oid.starts_with(root) {
                break;
            }
            if vb.oid <= cursor {
                return Err(ClientError::NonIncreasing(cursor));
            }
            cursor = vb.oid.clone();
            out.push(vb);
        }
        Ok(out)
    }

    /// One request with retries. The request id stays the same across
    /// retransmissions so a late reply to an earlier attempt still counts.
    fn exchange(&mut self, target: &SnmpTarget, pdu_type: PduType, varbinds: Vec<VarBind>) -> Result<Pdu, ClientError> {
        let request_id = self.allocate_request_id();
        let msg = Message::v2c(target.community.as_bytes(), Pdu::request(pdu_type, request_id, varbinds));
        let bytes = encode_message(&msg)?;
        let attempts = target.retries + 1;
        for attempt in 1..=attempts {
            self.transport.send(&target.address, &bytes)?;
            self.counters.record_sent(bytes.len());
            let deadline = self.clock.now().saturating_add(target.timeout);
            loop {
                let remaining = deadline.since(self.clock.now());
                if remaining.is_zero() {
                    break;
                }
                let Some(reply) = self.transport.recv(remaining)? else {
                    break;
                };
                self.counters.record_received(reply.len());
                match decode_message(&reply) {
                    Ok(m) if m.pdu.pdu_type == PduType::Response && m.pdu.request_id == request_id => {
                        if m.pdu.error_status != error_status::NO_ERROR {
                            return Err(ClientError::Protocol {
                                status: m.pdu.error_status,
                                index: m.pdu.error_index,
                            });
                        }
                        return Ok(m.pdu);
                    }
                    Ok(m) => tracing::debug!(
                        expected = request_id,
                        got = m.pdu.request_id,
                        "discarding unrelated datagram"
                    ),
                    Err(e) => tracing::debug!(error = %e, "discarding undecodable datagram"),
                }
            }
            tracing::debug!(target = %target.address, attempt, "request timed out");
        }
        Err(ClientError::Timeout {
            target: target.address.clone(),
            attempts,
        })
    }
}

/// First value of a GET, for single-OID probes.
pub fn first_value(varbinds: &[VarBind]) -> Option<&BerValue> {
    varbinds.first().map(|vb| &vb.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::VirtualClock;
    use crate::snmp::transport::{DatagramEndpoint, InProcessTransport};
    use std::sync::Mutex;

    /// Answers GETs with the OID as an OctetString and records what it saw.
    /// Stays silent for the first `drop_first` requests.
    struct Echo {
        seen: Mutex<Vec<i32>>,
        drop_first: usize,
        latency: Duration,
    }

    impl DatagramEndpoint for Echo {
        fn deliver(&self, _target: &str, bytes: &[u8]) -> Result<Option<(Vec<u8>, Duration)>, TransportError> {
            let m = decode_message(bytes).unwrap();
            let mut seen = self.seen.lock().unwrap();
            seen.push(m.pdu.request_id);
            if seen.len() <= self.drop_first {
                return Ok(None);
            }
            let vbs = m
                .pdu
                .varbinds
                .iter()
                .map(|vb| VarBind::new(vb.oid.clone(), BerValue::octets(vb.oid.to_string())))
                .collect();
            let reply = Message::v2c(m.community, Pdu::response(m.pdu.request_id, 0, 0, vbs));
            Ok(Some((encode_message(&reply).unwrap(), self.latency)))
        }
    }

    fn client(ep: Arc<Echo>, clock: Arc<VirtualClock>) -> SnmpClient {
        let t = InProcessTransport::new(ep, clock.clone());
        SnmpClient::new(Box::new(t), clock, Arc::default())
    }

    #[test]
    fn retry_reuses_request_id_and_counts_pdus() {
        let ep = Arc::new(Echo {
            seen: Mutex::default(),
            drop_first: 1,
            latency: Duration::from_millis(5),
        });
        let clock = Arc::new(VirtualClock::new(crate::clock::Timestamp(0)));
        let mut c = client(ep.clone(), clock.clone());
        let target = SnmpTarget::new("sim://a", "public").with_timeout(Duration::from_secs(1), 1);
        let vbs = c.get(&target, &[crate::snmp::well_known::sys_name()]).unwrap();
        assert_eq!(vbs[0].value, BerValue::octets("1.3.6.1.2.1.1.5.0"));
        let ids = ep.seen.lock().unwrap().clone();
        assert_eq!(ids.len(), 2);
        assert_eq!(ids[0], ids[1]);
        assert_eq!(clock.now().as_millis(), 1005);
        let snap = c.counters().snapshot();
        assert_eq!((snap.pdus_sent, snap.pdus_received), (2, 1));
    }

    #[test]
    fn timeout_after_all_attempts() {
        let ep = Arc::new(Echo {
            seen: Mutex::default(),
            drop_first: usize::MAX,
            latency: Duration::ZERO,
        });
        let clock = Arc::new(VirtualClock::new(crate::clock::Timestamp(0)));
        let mut c = client(ep, clock.clone());
        let target = SnmpTarget::new("sim://a", "public").with_timeout(Duration::from_millis(500), 2);
        let err = c.get(&target, &[crate::snmp::well_known::sys_name()]).unwrap_err();
        assert!(matches!(err, ClientError::Timeout { attempts: 3, .. }));
        assert_eq!(clock.now().as_millis(), 1500);
    }

    #[test]
    fn late_reply_past_timeout_is_not_accepted() {
        let ep = Arc::new(Echo {
            seen: Mutex::default(),
            drop_first: 0,
            latency: Duration::from_secs(3),
        });
        let clock = Arc::new(VirtualClock::new(crate::clock::Timestamp(0)));
        let mut c = client(ep, clock);
        let target = SnmpTarget::new("sim://a", "public").with_timeout(Duration::from_secs(1), 0);
        assert!(matches!(
            c.get(&target, &[crate::snmp::well_known::sys_name()]),
            Err(ClientError::Timeout { .. })
        ));
    }
}
