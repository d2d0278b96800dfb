//! Function-preserving structural rewrites applied per region.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ir::{IrDesign, IrNode, IrOp, NodeId};
use super::DesignError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeShape {
    Keep,
    Balanced,
    Chain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XorStyle {
    Native,
    NandNet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sharing {
    Share,
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegionTransform {
    pub region: String,
    pub tree_rebalance: TreeShape,
    pub gate_decompose: XorStyle,
    /// Seed of the operand permutation, if reordering is enabled.
    pub operand_reorder: Option<u64>,
    pub sharing: Sharing,
    pub lut_pack: bool,
}

impl RegionTransform {
    pub fn identity(region: &str) -> Self {
        RegionTransform {
            region: region.to_string(),
            tree_rebalance: TreeShape::Keep,
            gate_decompose: XorStyle::Native,
            operand_reorder: None,
            sharing: Sharing::Share,
            lut_pack: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TransformSet {
    pub regions: Vec<RegionTransform>,
    pub pipeline_depth: usize,
    /// Logic levels at which register stages are cut, one per stage.
    pub pipeline_cuts: Vec<usize>,
}

pub const MAX_PIPELINE_DEPTH: usize = 3;

impl TransformSet {
    pub fn identity(design: &IrDesign) -> Self {
        TransformSet {
            regions: design.regions.iter().map(|r| RegionTransform::identity(r)).collect(),
            pipeline_depth: 0,
            pipeline_cuts: Vec::new(),
        }
    }
}

/// Applies `ts` to `design`. The result computes the same function.
pub fn apply_transforms(design: &IrDesign, ts: &TransformSet) -> Result<IrDesign, DesignError> {
    let per_region = region_table(design, ts)?;
    if ts.pipeline_cuts.len() != ts.pipeline_depth || ts.pipeline_depth > MAX_PIPELINE_DEPTH {
        return Err(DesignError::InvalidTransform("pipeline cuts do not match depth".into()));
    }
    if per_region.iter().all(|r| *r == RegionTransform::identity(&r.region)) && ts.pipeline_depth == 0 {
        return Ok(design.clone());
    }
    let mut d = reorder(design, &per_region);
    d = reshape_trees(&d, &per_region);
    d = decompose_xor(&d, &per_region);
    d = duplicate_shared(&d, &per_region);
    d = pack_luts(&d, &per_region);
    d = prune(&d);
    d = pipeline(&d, &ts.pipeline_cuts);
    Ok(d)
}

/// Samples a transform per region plus a pipeline depth, and applies them.
pub fn diversify(design: &IrDesign, rng_seed: u64) -> Result<(IrDesign, TransformSet), DesignError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let regions = design
        .regions
        .iter()
        .map(|r| RegionTransform {
            region: r.clone(),
            tree_rebalance: *[TreeShape::Keep, TreeShape::Balanced, TreeShape::Chain]
                .choose(&mut rng)
                .unwrap(),
            gate_decompose: if rng.gen_bool(0.5) { XorStyle::NandNet } else { XorStyle::Native },
            operand_reorder: rng.gen_bool(0.5).then(|| rng.gen()),
            sharing: if rng.gen_bool(0.5) { Sharing::Duplicate } else { Sharing::Share },
            lut_pack: rng.gen_bool(0.3),
        })
        .collect();
    let mut ts = TransformSet {
        regions,
        pipeline_depth: rng.gen_range(0..=MAX_PIPELINE_DEPTH),
        pipeline_cuts: Vec::new(),
    };
    let depth = ts.pipeline_depth;
    ts.pipeline_depth = 0;
    let comb = apply_transforms(design, &ts)?;
    let max_level = levels(&comb).into_iter().max().unwrap_or(0).max(1);
    let mut cuts: Vec<usize> = if max_level >= depth {
        rand::seq::index::sample(&mut rng, max_level, depth)
            .into_iter()
            .map(|l| l + 1)
            .collect()
    } else {
        (0..depth).map(|_| rng.gen_range(1..=max_level)).collect()
    };
    cuts.sort_unstable();
    ts.pipeline_depth = depth;
    ts.pipeline_cuts = cuts;
    let out = apply_transforms(design, &ts)?;
    Ok((out, ts))
}

fn region_table(design: &IrDesign, ts: &TransformSet) -> Result<Vec<RegionTransform>, DesignError> {
    design
        .regions
        .iter()
        .map(|name| {
            Ok(ts
                .regions
                .iter()
                .find(|r| &r.region == name)
                .cloned()
                .unwrap_or_else(|| RegionTransform::identity(name)))
        })
        .collect::<Result<Vec<_>, DesignError>>()
        .and_then(|v| {
            match ts.regions.iter().find(|r| !design.regions.contains(&r.region)) {
                Some(r) => Err(DesignError::InvalidTransform(format!("unknown region `{}`", r.region))),
                None => Ok(v),
            }
        })
}

/// Rebuilds a design node by node. `emit` receives the node with operands
/// already remapped and returns the id standing for it in the new design.
fn rebuild(design: &IrDesign, mut emit: impl FnMut(&mut Vec<IrNode>, NodeId, IrNode) -> NodeId) -> IrDesign {
    let mut nodes = Vec::with_capacity(design.nodes.len());
    let mut map = vec![usize::MAX; design.nodes.len()];
    for (i, n) in design.nodes.iter().enumerate() {
        let op = n.op.map_operands(|o| map[o]);
        map[i] = emit(&mut nodes, i, IrNode { op, region: n.region });
    }
    IrDesign {
        name: design.name.clone(),
        input_width: design.input_width,
        regions: design.regions.clone(),
        nodes,
        outputs: design.outputs.iter().map(|&o| map[o]).collect(),
    }
}

fn push(nodes: &mut Vec<IrNode>, op: IrOp, region: usize) -> NodeId {
    nodes.push(IrNode { op, region });
    nodes.len() - 1
}

fn reorder(design: &IrDesign, t: &[RegionTransform]) -> IrDesign {
    let mut rngs: Vec<Option<ChaCha8Rng>> = t
        .iter()
        .map(|r| r.operand_reorder.map(ChaCha8Rng::seed_from_u64))
        .collect();
    rebuild(design, |nodes, _, mut n| {
        if let Some(rng) = rngs[n.region].as_mut() {
            use IrOp::*;
            n.op = match n.op {
                And(a, b) if rng.gen_bool(0.5) => And(b, a),
                Or(a, b) if rng.gen_bool(0.5) => Or(b, a),
                Xor(a, b) if rng.gen_bool(0.5) => Xor(b, a),
                Nand(a, b) if rng.gen_bool(0.5) => Nand(b, a),
                Nor(a, b) if rng.gen_bool(0.5) => Nor(b, a),
                Xnor(a, b) if rng.gen_bool(0.5) => Xnor(b, a),
                XorN(mut v) => {
                    v.shuffle(rng);
                    XorN(v)
                }
                op => op,
            };
        }
        push(nodes, n.op, n.region)
    })
}

fn xor_tree(nodes: &mut Vec<IrNode>, terms: &[NodeId], shape: TreeShape, region: usize) -> NodeId {
    match (terms.len(), shape) {
        (1, _) => terms[0],
        (_, TreeShape::Chain) => {
            let mut acc = terms[0];
            for &t in &terms[1..] {
                acc = push(nodes, IrOp::Xor(acc, t), region);
            }
            acc
        }
        _ => {
            let (l, r) = terms.split_at(terms.len() / 2);
            let a = xor_tree(nodes, l, shape, region);
            let b = xor_tree(nodes, r, shape, region);
            push(nodes, IrOp::Xor(a, b), region)
        }
    }
}

fn reshape_trees(design: &IrDesign, t: &[RegionTransform]) -> IrDesign {
    rebuild(design, |nodes, _, n| match (&n.op, t[n.region].tree_rebalance) {
        (IrOp::XorN(v), shape @ (TreeShape::Balanced | TreeShape::Chain)) => xor_tree(nodes, v, shape, n.region),
        _ => push(nodes, n.op, n.region),
    })
}

fn nand_xor(nodes: &mut Vec<IrNode>, a: NodeId, b: NodeId, region: usize) -> NodeId {
    let m = push(nodes, IrOp::Nand(a, b), region);
    let p = push(nodes, IrOp::Nand(a, m), region);
    let q = push(nodes, IrOp::Nand(b, m), region);
    push(nodes, IrOp::Nand(p, q), region)
}

fn decompose_xor(design: &IrDesign, t: &[RegionTransform]) -> IrDesign {
    rebuild(design, |nodes, _, n| {
        let r = n.region;
        if t[r].gate_decompose == XorStyle::Native {
            return push(nodes, n.op, r);
        }
        match n.op {
            IrOp::Xor(a, b) => nand_xor(nodes, a, b, r),
            IrOp::Xnor(a, b) => {
                let x = nand_xor(nodes, a, b, r);
                push(nodes, IrOp::Not(x), r)
            }
            IrOp::XorN(v) => {
                let mut level = v;
                while level.len() > 1 {
                    level = level
                        .chunks(2)
                        .map(|c| if c.len() == 2 { nand_xor(nodes, c[0], c[1], r) } else { c[0] })
                        .collect();
                }
                level[0]
            }
            op => push(nodes, op, r),
        }
    })
}

fn is_logic(op: &IrOp) -> bool {
    !matches!(op, IrOp::Input(_) | IrOp::Const(_) | IrOp::Reg(_))
}

/// Gives each consumer of a multi-fanout gate in a duplicating region its
/// own copy of that gate.
fn duplicate_shared(design: &IrDesign, t: &[RegionTransform]) -> IrDesign {
    let fanout = design.fanout_counts();
    let dup: Vec<bool> = design
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| t[n.region].sharing == Sharing::Duplicate && is_logic(&n.op) && fanout[i] > 1)
        .collect();
    let mut used = vec![false; design.nodes.len()];
    let mut map = vec![usize::MAX; design.nodes.len()];
    let mut nodes: Vec<IrNode> = Vec::new();
    for (i, n) in design.nodes.iter().enumerate() {
        let op = n.op.map_operands(|o| {
            if dup[o] && used[o] {
                let copy = design.nodes[o].op.map_operands(|x| map[x]);
                push(&mut nodes, copy, design.nodes[o].region)
            } else {
                used[o] = true;
                map[o]
            }
        });
        map[i] = push(&mut nodes, op, n.region);
    }
    IrDesign {
        name: design.name.clone(),
        input_width: design.input_width,
        regions: design.regions.clone(),
        nodes,
        outputs: design.outputs.iter().map(|&o| map[o]).collect(),
    }
}

const LUT_PACK_MAX_INPUTS: usize = 4;

/// Merges a two-input gate with single-fanout gate operands from its own
/// region into one LUT when the merged cone has at most four leaves.
fn pack_luts(design: &IrDesign, t: &[RegionTransform]) -> IrDesign {
    let fanout = design.fanout_counts();
    let mut replacement: HashMap<NodeId, IrOp> = HashMap::new();
    for (i, n) in design.nodes.iter().enumerate() {
        if !t[n.region].lut_pack || !n.op.is_binary_gate() {
            continue;
        }
        let absorbed: Vec<NodeId> = n
            .op
            .operands()
            .into_iter()
            .filter(|&o| {
                let on = &design.nodes[o];
                on.region == n.region
                    && fanout[o] == 1
                    && (on.op.is_binary_gate() || matches!(on.op, IrOp::Not(_)))
                    && !replacement.contains_key(&o)
            })
            .collect();
        if absorbed.is_empty() {
            continue;
        }
        let mut leaves: Vec<NodeId> = Vec::new();
        for o in n.op.operands() {
            let srcs = if absorbed.contains(&o) { design.nodes[o].op.operands() } else { vec![o] };
            for s in srcs {
                if !leaves.contains(&s) {
                    leaves.push(s);
                }
            }
        }
        if leaves.len() < 2 || leaves.len() > LUT_PACK_MAX_INPUTS {
            continue;
        }
        // leaf k takes the value of bit k of the truth-table index
        let leaf_val = |id: NodeId| -> Option<u64> {
            leaves.iter().position(|&l| l == id).map(|k| {
                (0..64u64).filter(|j| (j >> k) & 1 == 1).fold(0, |m, j| m | (1 << j))
            })
        };
        let get = |id: NodeId| -> u64 {
            leaf_val(id).unwrap_or_else(|| design.nodes[id].op.eval_by(|x| leaf_val(x).unwrap(), &[]))
        };
        let table = n.op.eval_by(get, &[]);
        let init = table & ((1u64 << (1 << leaves.len())) - 1);
        replacement.insert(i, IrOp::Lut { inputs: leaves, init });
    }
    // absorbed nodes become dead and are dropped by `prune`
    let mut out = design.clone();
    for (i, op) in replacement {
        out.nodes[i].op = op;
    }
    out
}

/// Drops nodes not reachable from any output; keeps input nodes.
pub(crate) fn prune(design: &IrDesign) -> IrDesign {
    let mut live = vec![false; design.nodes.len()];
    for &o in &design.outputs {
        live[o] = true;
    }
    for i in (0..design.nodes.len()).rev() {
        if live[i] || matches!(design.nodes[i].op, IrOp::Input(_)) {
            live[i] = true;
            for o in design.nodes[i].op.operands() {
                live[o] = true;
            }
        }
    }
    let mut map = vec![usize::MAX; design.nodes.len()];
    let mut nodes = Vec::new();
    for (i, n) in design.nodes.iter().enumerate() {
        if live[i] {
            map[i] = push(&mut nodes, n.op.map_operands(|o| map[o]), n.region);
        }
    }
    IrDesign {
        name: design.name.clone(),
        input_width: design.input_width,
        regions: design.regions.clone(),
        nodes,
        outputs: design.outputs.iter().map(|&o| map[o]).collect(),
    }
}

/// Logic level of every node; inputs and constants are level 0.
pub fn levels(design: &IrDesign) -> Vec<usize> {
    let mut lv = vec![0usize; design.nodes.len()];
    for (i, n) in design.nodes.iter().enumerate() {
        lv[i] = match n.op {
            IrOp::Input(_) | IrOp::Const(_) => 0,
            _ => 1 + n.op.operands().iter().map(|&o| lv[o]).max().unwrap_or(0),
        };
    }
    lv
}

/// Inserts register stages: a node at level `l` sits in stage
/// `#{c in cuts : c <= l}`, every wire crossing stages gets one register per
/// stage crossed, and outputs are delayed to the last stage.
pub fn pipeline(design: &IrDesign, cuts: &[usize]) -> IrDesign {
    if cuts.is_empty() {
        return design.clone();
    }
    let depth = cuts.len();
    let lv = levels(design);
    let stage: Vec<usize> = lv.iter().map(|&l| cuts.iter().filter(|&&c| c <= l).count()).collect();
    let is_const: Vec<bool> = design.nodes.iter().map(|n| matches!(n.op, IrOp::Const(_))).collect();
    let mut chains: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
    let mut map = vec![usize::MAX; design.nodes.len()];
    let mut nodes: Vec<IrNode> = Vec::new();
    let mut delayed = |nodes: &mut Vec<IrNode>, map: &[NodeId], o: NodeId, to: usize| -> NodeId {
        if is_const[o] || to <= stage[o] {
            return map[o];
        }
        let chain = chains.entry(o).or_insert_with(|| vec![map[o]]);
        while chain.len() <= to - stage[o] {
            let prev = *chain.last().unwrap();
            chain.push(push(nodes, IrOp::Reg(prev), design.nodes[o].region));
        }
        chain[to - stage[o]]
    };
    for (i, n) in design.nodes.iter().enumerate() {
        let op = n.op.map_operands(|o| delayed(&mut nodes, &map, o, stage[i]));
        map[i] = push(&mut nodes, op, n.region);
    }
    let outputs = design.outputs.iter().map(|&o| delayed(&mut nodes, &map, o, depth)).collect();
    IrDesign {
        name: design.name.clone(),
        input_width: design.input_width,
        regions: design.regions.clone(),
        nodes,
        outputs,
    }
}
