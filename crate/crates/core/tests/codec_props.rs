use nbitms_core::snmp::ber::BerValue;
use nbitms_core::snmp::message::{decode_message, encode_message, Message, Pdu, PduType, VarBind};
use nbitms_core::snmp::oid::Oid;
use proptest::prelude::*;

fn oid() -> impl Strategy<Value = Oid> {
    (0u32..=2, prop::collection::vec(any::<u32>(), 0..12)).prop_flat_map(|(first, rest)| {
        let second = if first < 2 { (0u32..40).boxed() } else { (0u32..100_000).boxed() };
        second.prop_map(move |s| {
            let mut arcs = vec![first, s];
            arcs.extend(rest.iter().copied());
            Oid::new(arcs).unwrap()
        })
    })
}

fn value() -> impl Strategy<Value = BerValue> {
    prop_oneof![
        any::<i64>().prop_map(BerValue::Integer),
        prop::collection::vec(any::<u8>(), 0..300).prop_map(BerValue::OctetString),
        Just(BerValue::Null),
        oid().prop_map(BerValue::ObjectIdentifier),
        any::<[u8; 4]>().prop_map(BerValue::IpAddress),
        any::<u32>().prop_map(BerValue::Counter32),
        any::<u32>().prop_map(BerValue::Gauge32),
        any::<u32>().prop_map(BerValue::TimeTicks),
        (0x44u8..=0x5E, prop::collection::vec(any::<u8>(), 0..20)).prop_map(|(tag, data)| BerValue::Unknown { tag, data }),
        Just(BerValue::NoSuchObject),
        Just(BerValue::NoSuchInstance),
        Just(BerValue::EndOfMibView),
    ]
}

fn message() -> impl Strategy<Value = Message> {
    let pdu_type = prop_oneof![
        Just(PduType::Get),
        Just(PduType::GetNext),
        Just(PduType::Set),
        Just(PduType::Response),
    ];
    (
        prop::collection::vec(any::<u8>(), 0..40),
        pdu_type,
        any::<i32>(),
        prop::collection::vec((oid(), value()).prop_map(|(o, v)| VarBind::new(o, v)), 0..8),
        0i32..=18,
        any::<prop::sample::Index>(),
    )
        .prop_map(|(community, pdu_type, id, varbinds, status, idx)| {
            let pdu = if pdu_type == PduType::Response {
                let index = if varbinds.is_empty() { 0 } else { idx.index(varbinds.len() + 1) as i32 };
                Pdu::response(id, status, index, varbinds)
            } else {
                Pdu::request(pdu_type, id, varbinds)
            };
            Message::v2c(community, pdu)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn encode_decode_round_trip(m in message()) {
        let bytes = encode_message(&m).unwrap();
        let back = decode_message(&bytes).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(encode_message(&back).unwrap(), bytes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        let _ = decode_message(&bytes);
    }

    #[test]
    fn truncation_is_an_error(m in message(), cut in any::<prop::sample::Index>()) {
        let bytes = encode_message(&m).unwrap();
        let n = cut.index(bytes.len());
        prop_assert!(decode_message(&bytes[..n]).is_err());
    }
}
