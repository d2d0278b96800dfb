mod common;

use common::*;
use faultlens::netlist::{emit_edif, parse_edif, Direction, Driver, Endpoint, Netlist, NetlistBuilder, PrimitiveKind};
use proptest::prelude::*;

const KINDS: [PrimitiveKind; 15] = [
    PrimitiveKind::Const0,
    PrimitiveKind::Const1,
    PrimitiveKind::Buf,
    PrimitiveKind::Not,
    PrimitiveKind::And2,
    PrimitiveKind::Or2,
    PrimitiveKind::Nand2,
    PrimitiveKind::Nor2,
    PrimitiveKind::Xor2,
    PrimitiveKind::Xnor2,
    PrimitiveKind::Mux2,
    PrimitiveKind::Lut3,
    PrimitiveKind::Lut6,
    PrimitiveKind::Dff,
    PrimitiveKind::Lut2,
];

#[derive(Debug, Clone)]
struct CellPlan {
    kind: usize,
    picks: Vec<usize>,
    init: u64,
    prefix: usize,
}

fn arb_plan() -> impl Strategy<Value = (usize, Vec<CellPlan>, Vec<usize>)> {
    let cell = (0..KINDS.len(), prop::collection::vec(any::<usize>(), 6), any::<u64>(), 0usize..3)
        .prop_map(|(kind, picks, init, prefix)| CellPlan { kind, picks, init, prefix });
    (1usize..5, prop::collection::vec(cell, 1..40), prop::collection::vec(any::<usize>(), 1..5))
}

/// Combinational inputs pick from primary inputs, earlier cells and any
/// flip-flop, so the combinational part stays acyclic.
fn build((n_in, cells, outs): &(usize, Vec<CellPlan>, Vec<usize>)) -> Netlist {
    let mut b = NetlistBuilder::new("random");
    let name = |i: usize, c: &CellPlan| format!("{}c{i}", ["u_a/", "u_b/", "w_"][c.prefix]);
    let mut signals: Vec<Endpoint> = Vec::new();
    for k in 0..*n_in {
        b.port(&format!("x{k}"), Direction::Input).unwrap();
        b.net(&format!("x{k}"), [port(&format!("x{k}"))]);
        signals.push(port(&format!("x{k}")));
    }
    let dffs: Vec<usize> = (0..cells.len()).filter(|&i| KINDS[cells[i].kind] == PrimitiveKind::Dff).collect();
    for (i, c) in cells.iter().enumerate() {
        let kind = KINDS[c.kind];
        let init = kind.lut_inputs().map(|k| if k == 6 { c.init } else { c.init & ((1u64 << (1 << k)) - 1) });
        b.cell(&name(i, c), kind, init).unwrap();
    }
    let net_of = |ep: &Endpoint| -> String {
        match ep {
            Endpoint::Port(p) => p.clone(),
            Endpoint::Pin(inst, _) => format!("n_{inst}"),
        }
    };
    let out_ep = |i: usize| pin(&name(i, &cells[i]), KINDS[cells[i].kind].output_pin());
    for i in 0..cells.len() {
        b.net(&format!("n_{}", name(i, &cells[i])), [out_ep(i)]);
    }
    let mut avail: Vec<Endpoint> = signals.clone();
    avail.extend(dffs.iter().map(|&d| out_ep(d)));
    for (i, c) in cells.iter().enumerate() {
        let kind = KINDS[c.kind];
        let pool: &Vec<Endpoint> = &avail;
        for (p, pick) in kind.input_pins().iter().zip(&c.picks) {
            let src = &pool[pick % pool.len()];
            b.net(&net_of(src), [pin(&name(i, c), p)]);
        }
        if kind != PrimitiveKind::Dff {
            avail.push(out_ep(i));
        }
    }
    for (k, pick) in outs.iter().enumerate() {
        b.port(&format!("y{k}"), Direction::Output).unwrap();
        let src = avail[pick % avail.len()].clone();
        b.net(&net_of(&src), [port(&format!("y{k}"))]);
    }
    b.port("done", Direction::Output).unwrap();
    b.net(&net_of(&avail[avail.len() - 1].clone()), [port("done")]);
    b.finish().unwrap()
}

fn assert_isomorphic(a: &Netlist, b: &Netlist) {
    assert_eq!(a.canonical_hash(), b.canonical_hash());
    assert_eq!(a.cells().len(), b.cells().len());
    assert_eq!(a.ports().len(), b.ports().len());
    for ca in a.cells() {
        let cb = b.cell(b.find_cell(&ca.id).expect("cell survives"));
        assert_eq!((ca.kind, ca.init, ca.replica), (cb.kind, cb.init, cb.replica));
        let src = |n: &Netlist, net| match n.net(net).driver {
            Driver::Cell(c) => n.cell(c).id.clone(),
            Driver::Port(p) => format!("port:{}", n.port(p).name),
        };
        for (&na, &nb) in ca.inputs.iter().zip(&cb.inputs) {
            assert_eq!(src(a, na), src(b, nb));
        }
    }
    for pa in a.ports() {
        let pb = b.port(b.find_port(&pa.name).unwrap());
        assert_eq!(pa.direction, pb.direction);
    }
    assert_eq!(a.port(a.done_port()).name, b.port(b.done_port()).name);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn random_netlists_round_trip(plan in arb_plan()) {
        let n = build(&plan);
        let text = emit_edif(&n);
        let back = parse_edif(&text).unwrap();
        assert_isomorphic(&n, &back);
        prop_assert_eq!(emit_edif(&back), text);
    }
}

#[test]
fn generated_design_round_trips_with_its_cell_count() {
    for (seed, i) in [("sbox_towerfield", 0), ("sbox_towerfield", 9), ("alu4", 1)] {
        let g = design(seed, 21, i);
        let back = parse_edif(&g.edif).unwrap();
        assert_eq!(back.cells().len(), g.netlist.cells().len());
        assert_isomorphic(&g.netlist, &back);
    }
}

#[test]
fn thousand_cell_design_keeps_its_hash() {
    let g = (0..).map(|i| design("sbox_towerfield", 2, i)).find(|g| g.netlist.cells().len() >= 1000).unwrap();
    let back = parse_edif(&emit_edif(&g.netlist)).unwrap();
    assert_eq!(back.canonical_hash(), g.netlist.canonical_hash());
}

#[test]
fn emission_is_byte_stable() {
    let a = design("crc8", 77, 3);
    let b = design("crc8", 77, 3);
    assert_eq!(a.edif, b.edif);
    assert_eq!(emit_edif(&a.netlist), a.edif);
}
