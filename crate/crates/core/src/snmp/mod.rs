//! SNMPv2c: OIDs, BER codec, messages, MIB registry, transports and client.

pub mod ber;
pub mod client;
pub mod message;
pub mod mib;
pub mod oid;
pub mod transport;

pub use ber::{BerValue, DecodeError, DecodeErrorKind, EncodeError, ValueKind};
pub use client::{ClientError, CounterSnapshot, ProtocolCounters, SnmpClient, SnmpTarget};
pub use message::{decode_message, encode_message, error_status, Message, Pdu, PduType, VarBind};
pub use mib::{Access, MibEntry, MibError, MibRegistry};
pub use oid::{well_known, Oid, OidError};
pub use transport::{
    DatagramEndpoint, InProcessTransport, RoutingFactory, RoutingTransport, Transport, TransportError,
    TransportFactory, UdpTransport, IN_PROCESS_SCHEME,
};
