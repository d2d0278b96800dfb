//! Bit-level dataflow IR for seed circuits and their diversified variants.

use serde::{Deserialize, Serialize};

use super::DesignError;

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IrOp {
    Input(usize),
    Const(bool),
    Not(NodeId),
    And(NodeId, NodeId),
    Or(NodeId, NodeId),
    Xor(NodeId, NodeId),
    Nand(NodeId, NodeId),
    Nor(NodeId, NodeId),
    Xnor(NodeId, NodeId),
    /// `hi` when `sel` is 1.
    Mux { sel: NodeId, lo: NodeId, hi: NodeId },
    /// Parity of the operands; lowered to a tree of XOR2.
    XorN(Vec<NodeId>),
    /// Truth table over `inputs`, `inputs[0]` being the least significant index bit.
    Lut { inputs: Vec<NodeId>, init: u64 },
    /// Pipeline register; transparent in steady state.
    Reg(NodeId),
}

impl IrOp {
    pub fn operands(&self) -> Vec<NodeId> {
        use IrOp::*;
        match self {
            Input(_) | Const(_) => Vec::new(),
            Not(a) | Reg(a) => vec![*a],
            And(a, b) | Or(a, b) | Xor(a, b) | Nand(a, b) | Nor(a, b) | Xnor(a, b) => vec![*a, *b],
            Mux { sel, lo, hi } => vec![*sel, *lo, *hi],
            XorN(v) => v.clone(),
            Lut { inputs, .. } => inputs.clone(),
        }
    }

    /// Same operation with every operand passed through `f`.
    pub fn map_operands(&self, mut f: impl FnMut(NodeId) -> NodeId) -> IrOp {
        use IrOp::*;
        match self {
            Input(i) => Input(*i),
            Const(v) => Const(*v),
            Not(a) => Not(f(*a)),
            Reg(a) => Reg(f(*a)),
            And(a, b) => And(f(*a), f(*b)),
            Or(a, b) => Or(f(*a), f(*b)),
            Xor(a, b) => Xor(f(*a), f(*b)),
            Nand(a, b) => Nand(f(*a), f(*b)),
            Nor(a, b) => Nor(f(*a), f(*b)),
            Xnor(a, b) => Xnor(f(*a), f(*b)),
            Mux { sel, lo, hi } => Mux {
                sel: f(*sel),
                lo: f(*lo),
                hi: f(*hi),
            },
            XorN(v) => XorN(v.iter().map(|&x| f(x)).collect()),
            Lut { inputs, init } => Lut {
                inputs: inputs.iter().map(|&x| f(x)).collect(),
                init: *init,
            },
        }
    }

    pub fn is_binary_gate(&self) -> bool {
        use IrOp::*;
        matches!(self, And(..) | Or(..) | Xor(..) | Nand(..) | Nor(..) | Xnor(..))
    }

    /// Evaluates the operation over 64 lanes given operand values.
    pub fn eval(&self, v: &[u64], inputs: &[u64]) -> u64 {
        self.eval_by(|i| v[i], inputs)
    }

    /// As [`IrOp::eval`], with operand values supplied by `get`.
    pub fn eval_by(&self, get: impl Fn(NodeId) -> u64, inputs: &[u64]) -> u64 {
        use IrOp::*;
        match self {
            Input(i) => inputs[*i],
            Const(c) => {
                if *c {
                    !0
                } else {
                    0
                }
            }
            Not(a) => !get(*a),
            Reg(a) => get(*a),
            And(a, b) => get(*a) & get(*b),
            Or(a, b) => get(*a) | get(*b),
            Xor(a, b) => get(*a) ^ get(*b),
            Nand(a, b) => !(get(*a) & get(*b)),
            Nor(a, b) => !(get(*a) | get(*b)),
            Xnor(a, b) => !(get(*a) ^ get(*b)),
            Mux { sel, lo, hi } => {
                let s = get(*sel);
                (s & get(*hi)) | (!s & get(*lo))
            }
            XorN(xs) => xs.iter().fold(0, |acc, &x| acc ^ get(x)),
            Lut { inputs: ins, init } => {
                let vals: Vec<u64> = ins.iter().map(|&x| get(x)).collect();
                let mut out = 0u64;
                for j in 0..(1usize << ins.len()) {
                    if (init >> j) & 1 == 1 {
                        out |= vals
                            .iter()
                            .enumerate()
                            .fold(!0u64, |m, (k, &x)| m & if (j >> k) & 1 == 1 { x } else { !x });
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IrNode {
    pub op: IrOp,
    pub region: usize,
}

/// A single-assignment dataflow graph. Operands always refer to earlier
/// nodes, so node order is a topological order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IrDesign {
    pub name: String,
    pub input_width: usize,
    pub regions: Vec<String>,
    pub nodes: Vec<IrNode>,
    pub outputs: Vec<NodeId>,
}

impl IrDesign {
    pub fn validate(&self) -> Result<(), DesignError> {
        for (i, n) in self.nodes.iter().enumerate() {
            if n.region >= self.regions.len() {
                return Err(DesignError::InvalidIr(format!("node {i} has no region")));
            }
            if let IrOp::Input(b) = n.op {
                if b >= self.input_width {
                    return Err(DesignError::InvalidIr(format!("node {i} reads input {b}")));
                }
            }
            if let IrOp::Lut { inputs, init } = &n.op {
                if inputs.len() < 2 || inputs.len() > 6 || (inputs.len() < 6 && init >> (1 << inputs.len()) != 0) {
                    return Err(DesignError::InvalidIr(format!("node {i} has a malformed LUT")));
                }
            }
            if n.op.operands().iter().any(|&o| o >= i) {
                return Err(DesignError::InvalidIr(format!("node {i} is not in topological order")));
            }
        }
        if self.outputs.is_empty() || self.outputs.iter().any(|&o| o >= self.nodes.len()) {
            return Err(DesignError::InvalidIr("bad output list".into()));
        }
        Ok(())
    }

    /// Evaluates all outputs over 64 lanes; `inputs[i]` holds input bit `i`.
    pub fn eval_lanes(&self, inputs: &[u64]) -> Vec<u64> {
        let mut v = vec![0u64; self.nodes.len()];
        for i in 0..self.nodes.len() {
            v[i] = self.nodes[i].op.eval(&v, inputs);
        }
        self.outputs.iter().map(|&o| v[o]).collect()
    }

    /// Steady-state output word for one input word.
    pub fn eval(&self, input: u64) -> u64 {
        let lanes: Vec<u64> = (0..self.input_width)
            .map(|i| if (input >> i) & 1 == 1 { !0 } else { 0 })
            .collect();
        self.eval_lanes(&lanes)
            .iter()
            .enumerate()
            .fold(0, |w, (k, &o)| w | ((o & 1) << k))
    }

    pub fn fanout_counts(&self) -> Vec<usize> {
        let mut f = vec![0; self.nodes.len()];
        for n in &self.nodes {
            for o in n.op.operands() {
                f[o] += 1;
            }
        }
        for &o in &self.outputs {
            f[o] += 1;
        }
        f
    }

    /// Number of registers on the longest input-to-output path.
    pub fn latency(&self) -> usize {
        let mut regs = vec![0usize; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            let base = n.op.operands().iter().map(|&o| regs[o]).max().unwrap_or(0);
            regs[i] = base + usize::from(matches!(n.op, IrOp::Reg(_)));
        }
        self.outputs.iter().map(|&o| regs[o]).max().unwrap_or(0)
    }

    pub fn count_ops(&self, pred: impl Fn(&IrOp) -> bool) -> usize {
        self.nodes.iter().filter(|n| pred(&n.op)).count()
    }
}

/// Outcome of an exhaustive equivalence sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Equivalence {
    Equivalent,
    Mismatch { input: u64, expected: u64, actual: u64 },
}

impl Equivalence {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, Equivalence::Equivalent)
    }
}

pub const MAX_EQUIVALENCE_INPUT_BITS: usize = 16;

/// Compares steady-state outputs on every input word, 64 words per pass.
pub fn check_equivalence(design: &IrDesign, reference: &IrDesign) -> Result<Equivalence, DesignError> {
    if design.input_width != reference.input_width || design.outputs.len() != reference.outputs.len() {
        return Err(DesignError::InterfaceMismatch);
    }
    let width = design.input_width;
    if width > MAX_EQUIVALENCE_INPUT_BITS {
        return Err(DesignError::InputSpaceTooLarge(width));
    }
    let total = 1u64 << width;
    let mut base = 0u64;
    while base < total {
        let lanes = (total - base).min(64) as usize;
        let inputs: Vec<u64> = (0..width)
            .map(|bit| {
                (0..lanes).fold(0u64, |m, l| m | ((((base + l as u64) >> bit) & 1) << l))
            })
            .collect();
        let got = design.eval_lanes(&inputs);
        let want = reference.eval_lanes(&inputs);
        let mask = if lanes == 64 { !0 } else { (1u64 << lanes) - 1 };
        let diff = got
            .iter()
            .zip(&want)
            .fold(0u64, |d, (g, w)| d | ((g ^ w) & mask));
        if diff != 0 {
            let input = base + diff.trailing_zeros() as u64;
            return Ok(Equivalence::Mismatch {
                input,
                expected: reference.eval(input),
                actual: design.eval(input),
            });
        }
        base += 64;
    }
    Ok(Equivalence::Equivalent)
}

/// Appends nodes in the current region with light constant folding.
#[derive(Debug)]
pub struct IrBuilder {
    design: IrDesign,
    region: usize,
}

impl IrBuilder {
    pub fn new(name: &str, input_width: usize) -> Self {
        IrBuilder {
            design: IrDesign {
                name: name.to_string(),
                input_width,
                regions: vec!["top".to_string()],
                nodes: Vec::new(),
                outputs: Vec::new(),
            },
            region: 0,
        }
    }

    /// Switches to (and creates if needed) the named region.
    pub fn region(&mut self, name: &str) {
        self.region = match self.design.regions.iter().position(|r| r == name) {
            Some(r) => r,
            None => {
                self.design.regions.push(name.to_string());
                self.design.regions.len() - 1
            }
        };
    }

    pub fn push(&mut self, op: IrOp) -> NodeId {
        self.design.nodes.push(IrNode {
            op,
            region: self.region,
        });
        self.design.nodes.len() - 1
    }

    pub fn inputs(&mut self) -> Vec<NodeId> {
        (0..self.design.input_width).map(|i| self.push(IrOp::Input(i))).collect()
    }

    fn constant(&self, id: NodeId) -> Option<bool> {
        match self.design.nodes[id].op {
            IrOp::Const(v) => Some(v),
            _ => None,
        }
    }

    pub fn konst(&mut self, v: bool) -> NodeId {
        self.push(IrOp::Const(v))
    }

    pub fn not(&mut self, a: NodeId) -> NodeId {
        match self.constant(a) {
            Some(v) => self.konst(!v),
            None => self.push(IrOp::Not(a)),
        }
    }

    pub fn and(&mut self, a: NodeId, b: NodeId) -> NodeId {
        match (self.constant(a), self.constant(b)) {
            (Some(false), _) | (_, Some(false)) => self.konst(false),
            (Some(true), _) => b,
            (_, Some(true)) => a,
            _ => self.push(IrOp::And(a, b)),
        }
    }

    pub fn or(&mut self, a: NodeId, b: NodeId) -> NodeId {
        match (self.constant(a), self.constant(b)) {
            (Some(true), _) | (_, Some(true)) => self.konst(true),
            (Some(false), _) => b,
            (_, Some(false)) => a,
            _ => self.push(IrOp::Or(a, b)),
        }
    }

    pub fn xor(&mut self, a: NodeId, b: NodeId) -> NodeId {
        match (self.constant(a), self.constant(b)) {
            (Some(false), _) => b,
            (_, Some(false)) => a,
            (Some(true), _) => self.not(b),
            (_, Some(true)) => self.not(a),
            _ => self.push(IrOp::Xor(a, b)),
        }
    }

    /// Parity of `terms`, dropping constant-zero operands.
    pub fn xor_n(&mut self, terms: &[NodeId]) -> NodeId {
        let mut invert = false;
        let mut live = Vec::new();
        for &t in terms {
            match self.constant(t) {
                Some(v) => invert ^= v,
                None => live.push(t),
            }
        }
        let base = match live.len() {
            0 => self.konst(false),
            1 => live[0],
            2 => self.push(IrOp::Xor(live[0], live[1])),
            _ => self.push(IrOp::XorN(live)),
        };
        if invert {
            self.not(base)
        } else {
            base
        }
    }

    pub fn mux(&mut self, sel: NodeId, lo: NodeId, hi: NodeId) -> NodeId {
        match self.constant(sel) {
            Some(false) => lo,
            Some(true) => hi,
            None => self.push(IrOp::Mux { sel, lo, hi }),
        }
    }

    pub fn finish(mut self, outputs: Vec<NodeId>) -> IrDesign {
        self.design.outputs = outputs;
        self.design
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor2() -> IrDesign {
        let mut b = IrBuilder::new("x", 2);
        let i = b.inputs();
        let o = b.xor(i[0], i[1]);
        b.finish(vec![o])
    }

    #[test]
    fn equivalence_self_and_mutation() {
        let d = xor2();
        assert_eq!(check_equivalence(&d, &d).unwrap(), Equivalence::Equivalent);
        let mut m = d.clone();
        m.nodes[2].op = IrOp::Or(0, 1);
        match check_equivalence(&m, &d).unwrap() {
            Equivalence::Mismatch { input, expected, actual } => {
                assert_eq!(input, 3);
                assert_eq!((expected, actual), (0, 1));
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn wide_inputs_are_refused() {
        let mut b = IrBuilder::new("w", 17);
        let i = b.inputs();
        let d = b.finish(vec![i[16]]);
        assert_eq!(check_equivalence(&d, &d), Err(DesignError::InputSpaceTooLarge(17)));
    }

    #[test]
    fn lut_eval_matches_init() {
        let mut b = IrBuilder::new("l", 3);
        let i = b.inputs();
        let l = b.push(IrOp::Lut {
            inputs: i.clone(),
            init: 0b1001_0110,
        });
        let d = b.finish(vec![l]);
        d.validate().unwrap();
        for x in 0..8u64 {
            assert_eq!(d.eval(x), (x.count_ones() & 1) as u64);
        }
    }

    #[test]
    fn registers_are_transparent_and_counted() {
        let mut b = IrBuilder::new("r", 2);
        let i = b.inputs();
        let r0 = b.push(IrOp::Reg(i[0]));
        let r1 = b.push(IrOp::Reg(r0));
        let o = b.xor(r1, i[1]);
        let d = b.finish(vec![o]);
        assert_eq!(d.latency(), 2);
        assert_eq!(check_equivalence(&d, &xor2()).unwrap(), Equivalence::Equivalent);
    }
}
