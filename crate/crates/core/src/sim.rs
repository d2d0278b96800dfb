//! Cycle-accurate two-valued simulation with flip-flop bit-flip injection.
//!
//! Every net carries a `u64`; each bit lane is an independent run, so up to
//! 64 fault scenarios share one pass over the evaluation plan. A cycle is:
//! clock edge (DFFs load `D`, skipped at cycle 0 where state powers on at 0),
//! bit flips scheduled for this cycle, then combinational settling.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::netlist::{CellId, Driver, Netlist, PrimitiveKind};

pub const LANES: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("combinational cycle through {}", .0.join(" -> "))]
    CombinationalCycle(Vec<String>),
    #[error("done never asserted within {max_cycles} cycles")]
    GoldNeverDone { max_cycles: usize },
    #[error("invalid fault: {0}")]
    InvalidFault(String),
    #[error("stimulus has {got} input bits, design has {expected}")]
    StimulusWidth { expected: usize, got: usize },
    #[error("output word wider than 64 bits")]
    OutputTooWide,
    #[error("output bit {bit} of replica {replica} has no port")]
    MissingOutputBit { replica: char, bit: usize },
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Const { out: u32, value: u64 },
    Buf { a: u32, out: u32 },
    Not { a: u32, out: u32 },
    And { a: u32, b: u32, out: u32 },
    Or { a: u32, b: u32, out: u32 },
    Nand { a: u32, b: u32, out: u32 },
    Nor { a: u32, b: u32, out: u32 },
    Xor { a: u32, b: u32, out: u32 },
    Xnor { a: u32, b: u32, out: u32 },
    Mux { i0: u32, i1: u32, s: u32, out: u32 },
    Lut { inputs: [u32; 6], k: u8, init: u64, out: u32 },
}

/// Evaluates a LUT over 64 lanes by folding the truth table through a mux
/// tree, one input at a time starting from `I0`.
fn eval_lut(init: u64, inputs: &[u64]) -> u64 {
    let mut level = [0u64; 64];
    let n = 1usize << inputs.len();
    for (j, slot) in level.iter_mut().enumerate().take(n) {
        *slot = if (init >> j) & 1 == 1 { !0 } else { 0 };
    }
    let mut width = n;
    for &sel in inputs {
        width /= 2;
        for m in 0..width {
            level[m] = (sel & level[2 * m + 1]) | (!sel & level[2 * m]);
        }
    }
    level[0]
}

/// The fixed input vector held on the primary inputs every cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stimulus {
    /// One value per primary input, in port declaration order.
    pub inputs: Vec<bool>,
    pub max_cycles: usize,
}

impl Stimulus {
    /// Bit `i` of `word` drives the `i`-th primary input.
    pub fn from_word(prog: &SimProgram, word: u64, max_cycles: usize) -> Stimulus {
        Stimulus {
            inputs: (0..prog.input_count()).map(|i| i < 64 && (word >> i) & 1 == 1).collect(),
            max_cycles,
        }
    }
}

/// One bit flip: invert flip-flop `ff` right after the clock edge of `cycle`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Injection {
    pub ff: CellId,
    pub cycle: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultSpec {
    pub injections: Vec<Injection>,
}

impl FaultSpec {
    pub fn single(ff: CellId, cycle: usize) -> Self {
        FaultSpec {
            injections: vec![Injection { ff, cycle }],
        }
    }

    pub fn pair(a: Injection, b: Injection) -> Self {
        FaultSpec {
            injections: vec![a, b],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RunResult {
    /// First cycle with `done` high, if any within the simulated horizon.
    pub done_time: Option<usize>,
    /// `done` is high at the sampling cycle.
    pub done_ok_at_t: bool,
    pub out_a: u64,
    pub out_b: u64,
}

/// Nets observed at the sampling cycle.
#[derive(Debug, Clone)]
pub struct Watch {
    pub out_a: Vec<u32>,
    pub out_b: Vec<u32>,
    pub done: u32,
}

/// A netlist compiled into a flat evaluation plan.
#[derive(Debug, Clone)]
pub struct SimProgram {
    ops: Vec<Op>,
    eval_order: Vec<CellId>,
    input_nets: Vec<u32>,
    dff_cells: Vec<CellId>,
    dff_d: Vec<u32>,
    dff_q: Vec<u32>,
    slot_of: HashMap<CellId, usize>,
    watch: Watch,
    net_count: usize,
}

fn word_nets(netlist: &Netlist, ports: &[Option<usize>], replica: char) -> Result<Vec<u32>, SimError> {
    if ports.len() > 64 {
        return Err(SimError::OutputTooWide);
    }
    ports
        .iter()
        .enumerate()
        .map(|(bit, p)| {
            p.map(|p| netlist.port(p).net as u32)
                .ok_or(SimError::MissingOutputBit { replica, bit })
        })
        .collect()
}

/// Builds the evaluation plan: combinational cells in dependency order, one
/// state slot per DFF, and the watched output nets.
pub fn compile(netlist: &Netlist) -> Result<SimProgram, SimError> {
    let comb_count = netlist.cells().iter().filter(|c| !c.kind.is_stateful()).count();
    let eval_order = netlist.comb_order().to_vec();
    if eval_order.len() != comb_count {
        return Err(SimError::CombinationalCycle(Vec::new()));
    }
    let mut ops = Vec::with_capacity(eval_order.len());
    for &cid in &eval_order {
        let c = netlist.cell(cid);
        let i = |k: usize| c.inputs[k] as u32;
        let out = c.output as u32;
        use PrimitiveKind::*;
        ops.push(match c.kind {
            Const0 => Op::Const { out, value: 0 },
            Const1 => Op::Const { out, value: !0 },
            Buf => Op::Buf { a: i(0), out },
            Not => Op::Not { a: i(0), out },
            And2 => Op::And { a: i(0), b: i(1), out },
            Or2 => Op::Or { a: i(0), b: i(1), out },
            Nand2 => Op::Nand { a: i(0), b: i(1), out },
            Nor2 => Op::Nor { a: i(0), b: i(1), out },
            Xor2 => Op::Xor { a: i(0), b: i(1), out },
            Xnor2 => Op::Xnor { a: i(0), b: i(1), out },
            Mux2 => Op::Mux { i0: i(0), i1: i(1), s: i(2), out },
            Lut2 | Lut3 | Lut4 | Lut5 | Lut6 => {
                let mut inputs = [0u32; 6];
                for (k, slot) in inputs.iter_mut().enumerate().take(c.inputs.len()) {
                    *slot = i(k);
                }
                Op::Lut {
                    inputs,
                    k: c.inputs.len() as u8,
                    init: c.init.unwrap_or(0),
                    out,
                }
            }
            Dff => unreachable!("DFFs are not in the combinational order"),
        });
    }
    let dff_cells = netlist.dffs();
    let dff_d = dff_cells.iter().map(|&c| netlist.cell(c).inputs[0] as u32).collect();
    let dff_q = dff_cells.iter().map(|&c| netlist.cell(c).output as u32).collect();
    let slot_of = dff_cells.iter().enumerate().map(|(s, &c)| (c, s)).collect();
    let input_nets = netlist.inputs().map(|p| netlist.port(p).net as u32).collect();
    let (a, b) = netlist.output_words();
    let watch = Watch {
        out_a: word_nets(netlist, &a, 'A')?,
        out_b: word_nets(netlist, &b, 'B')?,
        done: netlist.port(netlist.done_port()).net as u32,
    };
    debug_assert!(netlist
        .nets()
        .iter()
        .all(|n| !matches!(n.driver, Driver::Cell(c) if c >= netlist.cells().len())));
    Ok(SimProgram {
        ops,
        eval_order,
        input_nets,
        dff_cells,
        dff_d,
        dff_q,
        slot_of,
        watch,
        net_count: netlist.nets().len(),
    })
}

impl SimProgram {
    pub fn eval_order(&self) -> &[CellId] {
        &self.eval_order
    }

    /// DFF cell ids; index `i` is state slot `i`.
    pub fn state_slots(&self) -> &[CellId] {
        &self.dff_cells
    }

    pub fn input_count(&self) -> usize {
        self.input_nets.len()
    }

    pub fn watch(&self) -> &Watch {
        &self.watch
    }

    fn check_stimulus(&self, stim: &Stimulus) -> Result<(), SimError> {
        if stim.inputs.len() != self.input_nets.len() {
            return Err(SimError::StimulusWidth {
                expected: self.input_nets.len(),
                got: stim.inputs.len(),
            });
        }
        Ok(())
    }

    fn settle(&self, values: &mut [u64]) {
        for op in &self.ops {
            match *op {
                Op::Const { out, value } => values[out as usize] = value,
                Op::Buf { a, out } => values[out as usize] = values[a as usize],
                Op::Not { a, out } => values[out as usize] = !values[a as usize],
                Op::And { a, b, out } => values[out as usize] = values[a as usize] & values[b as usize],
                Op::Or { a, b, out } => values[out as usize] = values[a as usize] | values[b as usize],
                Op::Nand { a, b, out } => {
                    values[out as usize] = !(values[a as usize] & values[b as usize])
                }
                Op::Nor { a, b, out } => {
                    values[out as usize] = !(values[a as usize] | values[b as usize])
                }
                Op::Xor { a, b, out } => values[out as usize] = values[a as usize] ^ values[b as usize],
                Op::Xnor { a, b, out } => {
                    values[out as usize] = !(values[a as usize] ^ values[b as usize])
                }
                Op::Mux { i0, i1, s, out } => {
                    let sel = values[s as usize];
                    values[out as usize] = (sel & values[i1 as usize]) | (!sel & values[i0 as usize]);
                }
                Op::Lut { inputs, k, init, out } => {
                    let mut ins = [0u64; 6];
                    for j in 0..k as usize {
                        ins[j] = values[inputs[j] as usize];
                    }
                    values[out as usize] = eval_lut(init, &ins[..k as usize]);
                }
            }
        }
    }

    fn initial_values(&self, stim: &Stimulus) -> Vec<u64> {
        let mut values = vec![0u64; self.net_count];
        for (&net, &v) in self.input_nets.iter().zip(&stim.inputs) {
            values[net as usize] = if v { !0 } else { 0 };
        }
        values
    }

    /// Advances one cycle: clock edge (unless `cycle == 0`), flips, settle.
    fn step(&self, values: &mut [u64], cycle: usize, flips: &[(usize, u64)]) {
        if cycle > 0 {
            let next: Vec<u64> = self.dff_d.iter().map(|&d| values[d as usize]).collect();
            for (&q, v) in self.dff_q.iter().zip(next) {
                values[q as usize] = v;
            }
        }
        for &(slot, mask) in flips {
            values[self.dff_q[slot] as usize] ^= mask;
        }
        self.settle(values);
    }

    fn sample_word(values: &[u64], nets: &[u32], lane: usize) -> u64 {
        nets.iter()
            .enumerate()
            .fold(0u64, |w, (bit, &n)| w | (((values[n as usize] >> lane) & 1) << bit))
    }

    /// Fault-free run until `done` first rises.
    pub fn run_gold(&self, stim: &Stimulus) -> Result<RunResult, SimError> {
        self.check_stimulus(stim)?;
        let mut values = self.initial_values(stim);
        for cycle in 0..stim.max_cycles {
            self.step(&mut values, cycle, &[]);
            if values[self.watch.done as usize] & 1 == 1 {
                return Ok(RunResult {
                    done_time: Some(cycle),
                    done_ok_at_t: true,
                    out_a: Self::sample_word(&values, &self.watch.out_a, 0),
                    out_b: Self::sample_word(&values, &self.watch.out_b, 0),
                });
            }
        }
        Err(SimError::GoldNeverDone {
            max_cycles: stim.max_cycles,
        })
    }

    pub fn run_with_fault(
        &self,
        stim: &Stimulus,
        fault: &FaultSpec,
        gold: &RunResult,
    ) -> Result<RunResult, SimError> {
        Ok(self.run_faults(stim, std::slice::from_ref(fault), gold)?[0])
    }

    /// Runs every fault scenario up to the gold completion time `T` and
    /// samples each at exactly `T`. Scenarios are packed 64 per pass.
    pub fn run_faults(
        &self,
        stim: &Stimulus,
        faults: &[FaultSpec],
        gold: &RunResult,
    ) -> Result<Vec<RunResult>, SimError> {
        self.check_stimulus(stim)?;
        let t = gold.done_time.ok_or(SimError::GoldNeverDone {
            max_cycles: stim.max_cycles,
        })?;
        let mut schedule: Vec<Vec<(usize, u64)>> = vec![Vec::new(); t + 1];
        let mut results = Vec::with_capacity(faults.len());
        for chunk in faults.chunks(LANES) {
            schedule.iter_mut().for_each(Vec::clear);
            for (lane, fault) in chunk.iter().enumerate() {
                for inj in &fault.injections {
                    let &slot = self.slot_of.get(&inj.ff).ok_or_else(|| {
                        SimError::InvalidFault(format!("cell {} is not a flip-flop", inj.ff))
                    })?;
                    if inj.cycle > t {
                        return Err(SimError::InvalidFault(format!(
                            "cycle {} is after the gold completion time {t}",
                            inj.cycle
                        )));
                    }
                    schedule[inj.cycle].push((slot, 1u64 << lane));
                }
            }
            let mut values = self.initial_values(stim);
            let mut done_seen = 0u64;
            let mut done_time = [None; LANES];
            for (cycle, flips) in schedule.iter().enumerate() {
                self.step(&mut values, cycle, flips);
                let newly = values[self.watch.done as usize] & !done_seen;
                for lane in 0..chunk.len() {
                    if (newly >> lane) & 1 == 1 {
                        done_time[lane] = Some(cycle);
                    }
                }
                done_seen |= newly;
            }
            let done = values[self.watch.done as usize];
            for lane in 0..chunk.len() {
                results.push(RunResult {
                    done_time: done_time[lane],
                    done_ok_at_t: (done >> lane) & 1 == 1,
                    out_a: Self::sample_word(&values, &self.watch.out_a, lane),
                    out_b: Self::sample_word(&values, &self.watch.out_b, lane),
                });
            }
        }
        Ok(results)
    }

    /// Text dump of the watched signals, one line per cycle and signal:
    /// `<cycle> <signal> <hex value>`.
    pub fn trace(&self, stim: &Stimulus, cycles: usize) -> Result<String, SimError> {
        self.check_stimulus(stim)?;
        let mut values = self.initial_values(stim);
        let mut out = String::new();
        for cycle in 0..cycles {
            self.step(&mut values, cycle, &[]);
            let _ = writeln!(out, "{cycle} out_a {:x}", Self::sample_word(&values, &self.watch.out_a, 0));
            let _ = writeln!(out, "{cycle} out_b {:x}", Self::sample_word(&values, &self.watch.out_b, 0));
            let _ = writeln!(out, "{cycle} done {:x}", values[self.watch.done as usize] & 1);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lut_fold_matches_truth_table() {
        for k in 1..=6usize {
            let init = 0x9d3a_5c71_e8f4_2b06u64 & if k == 6 { !0 } else { (1u64 << (1 << k)) - 1 };
            let mut lanes = vec![0u64; k];
            for lane in 0..(1usize << k) {
                for (i, l) in lanes.iter_mut().enumerate() {
                    *l |= (((lane >> i) & 1) as u64) << lane;
                }
            }
            let out = eval_lut(init, &lanes);
            for j in 0..(1usize << k) {
                assert_eq!((out >> j) & 1, (init >> j) & 1, "k={k} j={j}");
            }
        }
    }
}
