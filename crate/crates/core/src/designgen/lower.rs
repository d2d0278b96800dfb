use crate::netlist::{
    Direction, Endpoint, Netlist, NetlistBuilder, PrimitiveKind, DONE_PORT, REPLICA_A_PREFIX, REPLICA_B_PREFIX,
};

use super::ir::{IrDesign, IrOp};
use super::DesignError;

pub fn input_port(k: usize) -> String {
    format!("x_{k}")
}

/// Name of the wrapper's done gate. It is the only cell outside both replicas.
pub const DONE_GATE: &str = "done_and";

struct Lowering<'a> {
    b: &'a mut NetlistBuilder,
    prefix: &'a str,
    const_nets: [Option<String>; 2],
}

fn pin(cell: &str, pin: &str) -> Endpoint {
    Endpoint::Pin(cell.to_string(), pin.to_string())
}

impl Lowering<'_> {
    fn constant(&mut self, v: bool) -> Result<String, DesignError> {
        if let Some(n) = &self.const_nets[v as usize] {
            return Ok(n.clone());
        }
        let (kind, tag) = if v { (PrimitiveKind::Const1, "one") } else { (PrimitiveKind::Const0, "zero") };
        let cell = format!("{}{tag}", self.prefix);
        self.b.cell(&cell, kind, None)?;
        let net = format!("{}{tag}_n", self.prefix);
        self.b.net(&net, [pin(&cell, "O")]);
        self.const_nets[v as usize] = Some(net.clone());
        Ok(net)
    }

    /// Emits one cell reading `ins`; returns its output net.
    fn gate(
        &mut self,
        name: &str,
        kind: PrimitiveKind,
        init: Option<u64>,
        ins: &[&str],
    ) -> Result<String, DesignError> {
        let cell = format!("{}{name}", self.prefix);
        self.b.cell(&cell, kind, init)?;
        for (p, net) in kind.input_pins().iter().zip(ins) {
            self.b.net(net, [pin(&cell, p)]);
        }
        let out = format!("{cell}_n");
        self.b.net(&out, [pin(&cell, kind.output_pin())]);
        Ok(out)
    }

    fn replica(&mut self, d: &IrDesign, tag: char) -> Result<String, DesignError> {
        use PrimitiveKind as K;
        let mut nets: Vec<String> = Vec::with_capacity(d.nodes.len());
        for (i, n) in d.nodes.iter().enumerate() {
            let name = format!("g{i}");
            let o: Vec<String> = n.op.operands().iter().map(|&x| nets[x].clone()).collect();
            let o: Vec<&str> = o.iter().map(String::as_str).collect();
            let net = match &n.op {
                IrOp::Input(k) => input_port(*k),
                IrOp::Const(v) => self.constant(*v)?,
                IrOp::Not(_) => self.gate(&name, K::Not, None, &o)?,
                IrOp::And(..) => self.gate(&name, K::And2, None, &o)?,
                IrOp::Or(..) => self.gate(&name, K::Or2, None, &o)?,
                IrOp::Xor(..) => self.gate(&name, K::Xor2, None, &o)?,
                IrOp::Nand(..) => self.gate(&name, K::Nand2, None, &o)?,
                IrOp::Nor(..) => self.gate(&name, K::Nor2, None, &o)?,
                IrOp::Xnor(..) => self.gate(&name, K::Xnor2, None, &o)?,
                // operands are (sel, lo, hi); pins are (I0, I1, S)
                IrOp::Mux { .. } => self.gate(&name, K::Mux2, None, &[o[1], o[2], o[0]])?,
                IrOp::Reg(_) => self.gate(&name, K::Dff, None, &o)?,
                IrOp::Lut { inputs, init } => {
                    let kind = K::lut_with_inputs(inputs.len())
                        .ok_or_else(|| DesignError::InvalidIr(format!("LUT with {} inputs", inputs.len())))?;
                    self.gate(&name, kind, Some(*init), &o)?
                }
                IrOp::XorN(_) => {
                    let mut level: Vec<String> = o.iter().map(|s| s.to_string()).collect();
                    let mut k = 0;
                    while level.len() > 1 {
                        let mut next = Vec::new();
                        for c in level.chunks(2) {
                            if c.len() == 2 {
                                next.push(self.gate(&format!("{name}_{k}"), K::Xor2, None, &[&c[0], &c[1]])?);
                                k += 1;
                            } else {
                                next.push(c[0].clone());
                            }
                        }
                        level = next;
                    }
                    level.pop().ok_or_else(|| DesignError::InvalidIr("empty parity".into()))?
                }
            };
            nets.push(net);
        }
        for (k, &o) in d.outputs.iter().enumerate() {
            let q = self.gate(&format!("out_r{k}"), K::Dff, None, &[&nets[o]])?;
            self.b.net(&q, [Endpoint::Port(format!("out_{tag}_{k}"))]);
        }
        let mut valid = self.constant(true)?;
        for j in 0..=d.latency() {
            valid = self.gate(&format!("vld_r{j}"), K::Dff, None, &[&valid])?;
        }
        Ok(valid)
    }
}

/// Lowers two replicas into one DMR netlist with shared inputs `x_<k>`,
/// outputs `out_a_<k>` / `out_b_<k>` and `done`. Each replica registers its
/// outputs and owns a valid chain one longer than its pipeline latency;
/// `done` is the AND of both chains.
pub fn make_dmr(name: &str, a: &IrDesign, b: &IrDesign) -> Result<Netlist, DesignError> {
    if a.input_width != b.input_width || a.outputs.len() != b.outputs.len() {
        return Err(DesignError::InterfaceMismatch);
    }
    let mut nb = NetlistBuilder::new(name);
    for k in 0..a.input_width {
        nb.port(&input_port(k), Direction::Input)?;
        nb.net(&input_port(k), [Endpoint::Port(input_port(k))]);
    }
    for tag in ['a', 'b'] {
        for k in 0..a.outputs.len() {
            nb.port(&format!("out_{tag}_{k}"), Direction::Output)?;
        }
    }
    nb.port(DONE_PORT, Direction::Output)?;
    let mut valids = Vec::new();
    for (prefix, design, tag) in [(REPLICA_A_PREFIX, a, 'a'), (REPLICA_B_PREFIX, b, 'b')] {
        let mut l = Lowering {
            b: &mut nb,
            prefix,
            const_nets: [None, None],
        };
        valids.push(l.replica(design, tag)?);
    }
    nb.cell(DONE_GATE, PrimitiveKind::And2, None)?;
    nb.net(&valids[0], [pin(DONE_GATE, "A")]);
    nb.net(&valids[1], [pin(DONE_GATE, "B")]);
    nb.net(DONE_PORT, [pin(DONE_GATE, "O"), Endpoint::Port(DONE_PORT.to_string())]);
    Ok(nb.finish()?)
}
