//! Agent responses checked against a plain sorted-list model.

use nbitms_core::snmp::ber::BerValue;
use nbitms_core::snmp::message::{Message, Pdu, PduType, VarBind};
use nbitms_core::snmp::mib::Access;
use nbitms_core::snmp::oid::Oid;
use nbitms_core::sim::{handle_pdu, AgentState, DeviceProfile, StoredValue};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Op {
    Get(Vec<usize>),
    GetNext(Vec<usize>),
    Set(Vec<(usize, BerValue)>),
}

/// Model: unsorted vec of (arcs, value, writable); ordering done by brute force.
struct Model {
    rows: Vec<(Vec<u32>, BerValue, bool)>,
}

impl Model {
    fn find(&self, arcs: &[u32]) -> Option<usize> {
        self.rows.iter().position(|r| r.0 == arcs)
    }

    fn successor(&self, arcs: &[u32]) -> Option<&(Vec<u32>, BerValue, bool)> {
        self.rows
            .iter()
            .filter(|r| r.0.as_slice() > arcs)
            .min_by(|a, b| a.0.cmp(&b.0))
    }

    fn respond(&mut self, op: &Op, pool: &[Vec<u32>]) -> (i32, i32, Vec<(Vec<u32>, BerValue)>) {
        match op {
            Op::Get(ix) => (
                0,
                0,
                ix.iter()
                    .map(|&i| {
                        let a = &pool[i];
                        let v = self.find(a).map_or(BerValue::NoSuchObject, |p| self.rows[p].1.clone());
                        (a.clone(), v)
                    })
                    .collect(),
            ),
            Op::GetNext(ix) => (
                0,
                0,
                ix.iter()
                    .map(|&i| match self.successor(&pool[i]) {
                        Some(r) => (r.0.clone(), r.1.clone()),
                        None => (pool[i].clone(), BerValue::EndOfMibView),
                    })
                    .collect(),
            ),
            Op::Set(items) => {
                let echo: Vec<_> = items.iter().map(|(i, v)| (pool[*i].clone(), v.clone())).collect();
                for (n, (a, v)) in echo.iter().enumerate() {
                    let status = match self.find(a) {
                        None => 11,
                        Some(p) if !self.rows[p].2 => 17,
                        Some(p) if std::mem::discriminant(&self.rows[p].1) != std::mem::discriminant(v) => 7,
                        Some(_) => 0,
                    };
                    if status != 0 {
                        return (status, n as i32 + 1, echo);
                    }
                }
                for (a, v) in &echo {
                    let p = self.find(a).unwrap();
                    self.rows[p].1 = v.clone();
                }
                (0, 0, echo)
            }
        }
    }
}

fn small_value() -> impl Strategy<Value = BerValue> {
    prop_oneof![
        (0i64..5).prop_map(BerValue::Integer),
        "[a-z]{0,6}".prop_map(BerValue::octets),
        (0u32..100).prop_map(BerValue::Gauge32),
    ]
}

type Seed = Vec<(Vec<u32>, BerValue, bool)>;

fn scenario() -> impl Strategy<Value = (Seed, Vec<Vec<u32>>, Vec<Op>)> {
    let arcs = prop::collection::vec(0u32..4, 0..4).prop_map(|tail| {
        let mut a = vec![1, 3, 6, 1];
        a.extend(tail);
        a
    });
    let rows = prop::collection::vec((arcs.clone(), small_value(), any::<bool>()), 1..12);
    let extra = prop::collection::vec(arcs, 0..6);
    (rows, extra).prop_flat_map(|(rows, extra)| {
        let mut dedup: Vec<(Vec<u32>, BerValue, bool)> = Vec::new();
        for r in rows {
            if !dedup.iter().any(|d| d.0 == r.0) {
                dedup.push(r);
            }
        }
        let mut pool: Vec<Vec<u32>> = dedup.iter().map(|r| r.0.clone()).collect();
        pool.extend(extra);
        let n = pool.len();
        let idx = prop::collection::vec(0..n, 1..4);
        let op = prop_oneof![
            idx.clone().prop_map(Op::Get),
            idx.prop_map(Op::GetNext),
            prop::collection::vec((0..n, small_value()), 1..4).prop_map(Op::Set),
        ];
        (Just(dedup), Just(pool), prop::collection::vec(op, 1..20))
    })
}

fn agent_for(rows: &[(Vec<u32>, BerValue, bool)]) -> AgentState {
    let mut profile = DeviceProfile::new("conf", Oid::from_arcs(&[1, 3, 6, 1, 4, 1, 9]));
    profile.oid_store.clear();
    for (arcs, v, w) in rows {
        let sv = StoredValue {
            value: v.clone(),
            access: if *w { Access::ReadWrite } else { Access::ReadOnly },
        };
        profile.oid_store.insert(Oid::new(arcs.clone()).unwrap(), sv);
    }
    AgentState::from_profile(&profile)
}

fn request(op: &Op, pool: &[Vec<u32>], id: i32) -> Message {
    let oid = |i: usize| Oid::new(pool[i].clone()).unwrap();
    let (t, vbs) = match op {
        Op::Get(ix) => (PduType::Get, ix.iter().map(|&i| VarBind::null(oid(i))).collect()),
        Op::GetNext(ix) => (PduType::GetNext, ix.iter().map(|&i| VarBind::null(oid(i))).collect()),
        Op::Set(items) => (PduType::Set, items.iter().map(|(i, v)| VarBind::new(oid(*i), v.clone())).collect()),
    };
    Message::v2c("public", Pdu::request(t, id, vbs))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn agent_matches_model((rows, pool, ops) in scenario()) {
        let mut agent = agent_for(&rows);
        let mut model = Model { rows };
        for (n, op) in ops.iter().enumerate() {
            let id = n as i32 + 100;
            let resp = handle_pdu(&mut agent, &request(op, &pool, id)).expect("agent answers");
            let (status, index, vbs) = model.respond(op, &pool);
            prop_assert_eq!(resp.pdu.pdu_type, PduType::Response);
            prop_assert_eq!(resp.pdu.request_id, id);
            prop_assert_eq!((resp.pdu.error_status, resp.pdu.error_index), (status, index));
            let got: Vec<_> = resp.pdu.varbinds.iter().map(|vb| (vb.oid.arcs().to_vec(), vb.value.clone())).collect();
            prop_assert_eq!(got, vbs);
        }
    }

    #[test]
    fn wrong_community_is_silent((rows, pool, ops) in scenario()) {
        let mut agent = agent_for(&rows);
        let mut m = request(&ops[0], &pool, 1);
        m.community = b"private".to_vec();
        prop_assert!(handle_pdu(&mut agent, &m).is_none());
    }
}
