//! Datagram transports for the SNMP client.
//!
//! [`UdpTransport`] talks to real agents. [`InProcessTransport`] hands
//! datagrams straight to a [`DatagramEndpoint`] (the simulated fleet) and
//! models agent latency on the injected clock, so the same client code runs
//! on virtual time.

use std::collections::VecDeque;
use std::net::{ToSocketAddrs, UdpSocket};
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::clock::{Clock, Timestamp};

/// Address prefix that selects the in-process transport.
pub const IN_PROCESS_SCHEME: &str = "sim://";

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("cannot resolve target '{0}'")]
    Resolve(String),
    #[error("transport i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("no in-process endpoint for '{0}'")]
    NoEndpoint(String),
}

pub trait Transport: Send {
    fn send(&mut self, target: &str, datagram: &[u8]) -> Result<(), TransportError>;
    /// Next datagram received within `timeout`, or `None` on timeout.
    fn recv(&mut self, timeout: Duration) -> Result<Option<Vec<u8>>, TransportError>;
}

/// Receiver side of the in-process transport.
pub trait DatagramEndpoint: Send + Sync {
    /// Delivers a request. Returns the reply and its latency, or `None` if
    /// the agent stays silent.
    fn deliver(&self, target: &str, datagram: &[u8]) -> Result<Option<(Vec<u8>, Duration)>, TransportError>;
}

pub struct UdpTransport {
    socket: UdpSocket,
    buf: Vec<u8>,
}

impl UdpTransport {
    pub fn bind() -> Result<Self, TransportError> {
        Ok(UdpTransport {
            socket: UdpSocket::bind("0.0.0.0:0")?,
            buf: vec![0; 65_535],
        })
    }
}

impl Transport for UdpTransport {
    fn send(&mut self, target: &str, datagram: &[u8]) -> Result<(), TransportError> {
        let addr = target
            .to_socket_addrs()
            .map_err(|_| TransportError::Resolve(target.to_string()))?
            .next()
            .ok_or_else(|| TransportError::Resolve(target.to_string()))?;
        self.socket.send_to(datagram, addr)?;
        Ok(())
    }

    fn recv(&mut self, timeout: Duration) -> Result<Option<Vec<u8>>, TransportError> {
        if timeout.is_zero() {
            return Ok(None);
        }
        self.socket.set_read_timeout(Some(timeout))?;
        match self.socket.recv_from(&mut self.buf) {
            Ok((n, _)) => Ok(Some(self.buf[..n].to_vec())),
            Err(e)
                if matches!(
                    e.kind(),
                    std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
                ) =>
            {
                Ok(None)
            }
            Err(e) => Err(e.into()),
        }
    }
}

pub struct InProcessTransport {
    endpoint: Arc<dyn DatagramEndpoint>,
    clock: Arc<dyn Clock>,
    pending: VecDeque<(Timestamp, Vec<u8>)>,
}

impl InProcessTransport {
    pub fn new(endpoint: Arc<dyn DatagramEndpoint>, clock: Arc<dyn Clock>) -> Self {
        InProcessTransport {
            endpoint,
            clock,
            pending: VecDeque::new(),
        }
    }
}

impl Transport for InProcessTransport {
    fn send(&mut self, target: &str, datagram: &[u8]) -> Result<(), TransportError> {
        if let Some((reply, latency)) = self.endpoint.deliver(target, datagram)? {
            let ready = self.clock.now().saturating_add(latency);
            let at = self.pending.partition_point(|(t, _)| *t <= ready);
            self.pending.insert(at, (ready, reply));
        }
        Ok(())
    }

    fn recv(&mut self, timeout: Duration) -> Result<Option<Vec<u8>>, TransportError> {
        let now = self.clock.now();
        let deadline = now.saturating_add(timeout);
        match self.pending.front() {
            Some((ready, _)) if *ready <= deadline => {
                let wait = ready.since(now);
                if !wait.is_zero() {
                    self.clock.sleep(wait);
                }
                Ok(self.pending.pop_front().map(|(_, b)| b))
            }
            _ => {
                self.clock.sleep(timeout);
                Ok(None)
            }
        }
    }
}

/// Dispatches `sim://` targets in-process and everything else over UDP.
pub struct RoutingTransport {
    in_process: Option<InProcessTransport>,
    udp: Option<UdpTransport>,
    last_in_process: bool,
}

impl RoutingTransport {
    pub fn new(in_process: Option<InProcessTransport>) -> Self {
        RoutingTransport {
            in_process,
            udp: None,
            last_in_process: false,
        }
    }
}

impl Transport for RoutingTransport {
    fn send(&mut self, target: &str, datagram: &[u8]) -> Result<(), TransportError> {
        if target.starts_with(IN_PROCESS_SCHEME) {
            self.last_in_process = true;
            self.in_process
                .as_mut()
                .ok_or_else(|| TransportError::NoEndpoint(target.to_string()))?
                .send(target, datagram)
        } else {
            self.last_in_process = false;
            if self.udp.is_none() {
                self.udp = Some(UdpTransport::bind()?);
            }
            self.udp.as_mut().expect("bound above").send(target, datagram)
        }
    }

    fn recv(&mut self, timeout: Duration) -> Result<Option<Vec<u8>>, TransportError> {
        match (self.last_in_process, &mut self.in_process, &mut self.udp) {
            (true, Some(t), _) => t.recv(timeout),
            (false, _, Some(u)) => u.recv(timeout),
            _ => Ok(None),
        }
    }
}

/// Opens fresh transports, one per client session.
pub trait TransportFactory: Send + Sync {
    fn open(&self) -> Result<Box<dyn Transport>, TransportError>;
}

/// Factory for [`RoutingTransport`]s.
#[derive(Clone)]
pub struct RoutingFactory {
    endpoint: Option<Arc<dyn DatagramEndpoint>>,
    clock: Arc<dyn Clock>,
}

impl RoutingFactory {
    pub fn new(endpoint: Option<Arc<dyn DatagramEndpoint>>, clock: Arc<dyn Clock>) -> Self {
        RoutingFactory { endpoint, clock }
    }

    pub fn udp_only(clock: Arc<dyn Clock>) -> Self {
        RoutingFactory { endpoint: None, clock }
    }
}

impl TransportFactory for RoutingFactory {
    fn open(&self) -> Result<Box<dyn Transport>, TransportError> {
        let in_process = self
            .endpoint
            .as_ref()
            .map(|e| InProcessTransport::new(e.clone(), self.clock.clone()));
        Ok(Box::new(RoutingTransport::new(in_process)))
    }
}
