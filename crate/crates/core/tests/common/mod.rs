#![allow(dead_code)]

use faultlens::campaign::{derive_dbf, run_sbf_campaign, sbf_rates, ErrorRates, SbfCampaign};
use faultlens::designgen::{generate_design, GeneratedDesign};
use faultlens::netlist::{
    partition_modules, Direction, Endpoint, ModuleMap, Netlist, NetlistBuilder, PrefixRule, PrimitiveKind,
};
use faultlens::sim::{compile, SimProgram, Stimulus};

pub fn pin(inst: &str, pin: &str) -> Endpoint {
    Endpoint::Pin(inst.to_string(), pin.to_string())
}

pub fn port(name: &str) -> Endpoint {
    Endpoint::Port(name.to_string())
}

/// Hand-built DMR wrapper. Each replica inverts the `width` inputs and passes
/// them through `out_depth` register stages (0 = combinational) while a
/// CONST1 runs down a valid chain of `vld_depth` flip-flops; `done` is the AND
/// of both chains. With `dead` each replica also gets a flip-flop that drives
/// nothing.
pub fn registered_dmr(width: usize, out_depth: usize, vld_depth: usize, dead: bool) -> Netlist {
    let mut b = NetlistBuilder::new("fixture");
    for k in 0..width {
        b.port(&format!("x_{k}"), Direction::Input).unwrap();
        b.net(&format!("x_{k}"), [port(&format!("x_{k}"))]);
    }
    for (p, side) in [("u_a/", "a"), ("u_b/", "b")] {
        for k in 0..width {
            b.port(&format!("out_{side}_{k}"), Direction::Output).unwrap();
        }
        b.cell(&format!("{p}one"), PrimitiveKind::Const1, None).unwrap();
        let mut prev = pin(&format!("{p}one"), "O");
        for j in 0..vld_depth {
            let name = format!("{p}vld{j}");
            b.cell(&name, PrimitiveKind::Dff, None).unwrap();
            b.net(&format!("{p}v{j}"), [prev, pin(&name, "D")]);
            prev = pin(&name, "Q");
        }
        b.net(&format!("{p}valid"), [prev, pin("done_and", if side == "a" { "A" } else { "B" })]);
        for k in 0..width {
            let inv = format!("{p}inv{k}");
            b.cell(&inv, PrimitiveKind::Not, None).unwrap();
            b.net(&format!("x_{k}"), [pin(&inv, "I")]);
            let mut prev = pin(&inv, "O");
            for j in 0..out_depth {
                let r = format!("{p}r{k}_{j}");
                b.cell(&r, PrimitiveKind::Dff, None).unwrap();
                b.net(&format!("{p}s{k}_{j}"), [prev, pin(&r, "D")]);
                prev = pin(&r, "Q");
            }
            b.net(&format!("{p}y{k}"), [prev, port(&format!("out_{side}_{k}"))]);
        }
        if dead {
            let d = format!("{p}dead");
            b.cell(&d, PrimitiveKind::Dff, None).unwrap();
            b.net("x_0", [pin(&d, "D")]);
            b.net(&format!("{d}_q"), [pin(&d, "Q")]);
        }
    }
    b.port("done", Direction::Output).unwrap();
    b.cell("done_and", PrimitiveKind::And2, None).unwrap();
    b.net("done", [pin("done_and", "O"), port("done")]);
    b.finish().unwrap()
}

pub struct Prepared {
    pub netlist: Netlist,
    pub prog: SimProgram,
    pub map: ModuleMap,
    pub stim: Stimulus,
}

pub fn prepare(netlist: Netlist, word: u64) -> Prepared {
    let prog = compile(&netlist).unwrap();
    let map = partition_modules(&netlist, &PrefixRule::dmr_defaults()).unwrap();
    let stim = Stimulus::from_word(&prog, word, 64);
    Prepared { netlist, prog, map, stim }
}

pub fn prepare_generated(g: &GeneratedDesign) -> Prepared {
    prepare(g.netlist.clone(), g.row.stimulus)
}

pub fn design(seed: &str, master: u64, index: usize) -> GeneratedDesign {
    generate_design(seed, master, index).unwrap()
}

pub fn campaign(p: &Prepared) -> (SbfCampaign, ErrorRates, ErrorRates) {
    let c = run_sbf_campaign(&p.prog, &p.stim, &p.map).unwrap();
    let sbf = sbf_rates(&c.records).unwrap();
    let dbf = derive_dbf(&c, &p.map).unwrap();
    (c, sbf, dbf)
}

/// Generated designs labelled with one DBF rate.
pub fn samples(seed: &str, master: u64, count: usize, label: faultlens::campaign::RateLabel) -> Vec<faultlens::gnn::TrainSample> {
    (0..count)
        .map(|i| {
            let g = design(seed, master, i);
            let p = prepare_generated(&g);
            let (_, _, dbf) = campaign(&p);
            faultlens::gnn::TrainSample {
                id: g.row.design_id.clone(),
                graph: faultlens::graph::extract_graph(&g.netlist),
                rate: dbf.rate(label),
            }
        })
        .collect()
}
