//! Flat single-bit netlist model shared by the generator, the simulator and
//! the graph extractor.
//!
//! A [`Netlist`] is built through [`NetlistBuilder`], which checks every
//! structural invariant before handing out an immutable value: one driver per
//! net, every pin connected exactly once, an acyclic combinational core and a
//! one-bit `done` output.

mod edif;
mod partition;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use edif::{emit_edif, parse_edif};
pub use partition::{partition_modules, ModuleMap, PrefixRule};

/// Name of the primary output that flags completion.
pub const DONE_PORT: &str = "done";
/// Instance-name prefix of the first replica.
pub const REPLICA_A_PREFIX: &str = "u_a/";
/// Instance-name prefix of the second replica.
pub const REPLICA_B_PREFIX: &str = "u_b/";

pub type CellId = usize;
pub type NetId = usize;
pub type PortId = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetlistError {
    #[error("line {line}: {msg}")]
    Lex { line: usize, msg: String },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown primitive `{0}`")]
    UnknownPrimitive(String),
    #[error("net `{net}` has more than one driver")]
    MultiDriver { net: String },
    #[error("net `{net}` has no driver")]
    DanglingNet { net: String },
    #[error("pin `{pin}` of `{cell}` is not connected")]
    UnconnectedPin { cell: String, pin: String },
    #[error("pin `{pin}` of `{cell}` is connected more than once")]
    PinConnectedTwice { cell: String, pin: String },
    #[error("port `{port}` is connected to {count} nets")]
    PortConnections { port: String, count: usize },
    #[error("cell `{cell}` of kind {kind} has no pin `{pin}`")]
    UnknownPin { cell: String, kind: PrimitiveKind, pin: String },
    #[error("reference to undeclared instance `{0}`")]
    UnknownInstance(String),
    #[error("reference to undeclared port `{0}`")]
    UnknownPort(String),
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("cell `{cell}`: {msg}")]
    BadInit { cell: String, msg: String },
    #[error("no 1-bit primary output named `done`")]
    MissingDonePort,
    #[error("combinational cycle through {}", .witness.join(" -> "))]
    CombinationalCycle { witness: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PrimitiveKind {
    Const0,
    Const1,
    Buf,
    Not,
    And2,
    Or2,
    Nand2,
    Nor2,
    Xor2,
    Xnor2,
    Mux2,
    Lut2,
    Lut3,
    Lut4,
    Lut5,
    Lut6,
    Dff,
}

const MUX_PINS: &[&str] = &["I0", "I1", "S"];
const LUT_PINS: &[&str] = &["I0", "I1", "I2", "I3", "I4", "I5"];

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 17] = [
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
        PrimitiveKind::Lut2,
        PrimitiveKind::Lut3,
        PrimitiveKind::Lut4,
        PrimitiveKind::Lut5,
        PrimitiveKind::Lut6,
        PrimitiveKind::Dff,
    ];

    pub fn name(self) -> &'static str {
        use PrimitiveKind::*;
        match self {
            Const0 => "CONST0",
            Const1 => "CONST1",
            Buf => "BUF",
            Not => "NOT",
            And2 => "AND2",
            Or2 => "OR2",
            Nand2 => "NAND2",
            Nor2 => "NOR2",
            Xor2 => "XOR2",
            Xnor2 => "XNOR2",
            Mux2 => "MUX2",
            Lut2 => "LUT2",
            Lut3 => "LUT3",
            Lut4 => "LUT4",
            Lut5 => "LUT5",
            Lut6 => "LUT6",
            Dff => "DFF",
        }
    }

    /// Input pin names in connection order.
    ///
    /// `MUX2` selects `I1` when `S` is high. `LUTk` reads `I0` as the least
    /// significant bit of the truth-table index.
    pub fn input_pins(self) -> &'static [&'static str] {
        use PrimitiveKind::*;
        match self {
            Const0 | Const1 => &[],
            Buf | Not => &["I"],
            And2 | Or2 | Nand2 | Nor2 | Xor2 | Xnor2 => &["A", "B"],
            Mux2 => MUX_PINS,
            Dff => &["D"],
            _ => &LUT_PINS[..self.lut_inputs().unwrap_or(0)],
        }
    }

    pub fn output_pin(self) -> &'static str {
        match self {
            PrimitiveKind::Dff => "Q",
            _ => "O",
        }
    }

    pub fn arity(self) -> usize {
        self.input_pins().len()
    }

    pub fn lut_inputs(self) -> Option<usize> {
        use PrimitiveKind::*;
        match self {
            Lut2 => Some(2),
            Lut3 => Some(3),
            Lut4 => Some(4),
            Lut5 => Some(5),
            Lut6 => Some(6),
            _ => None,
        }
    }

    pub fn lut_with_inputs(k: usize) -> Option<PrimitiveKind> {
        use PrimitiveKind::*;
        match k {
            2 => Some(Lut2),
            3 => Some(Lut3),
            4 => Some(Lut4),
            5 => Some(Lut5),
            6 => Some(Lut6),
            _ => None,
        }
    }

    pub fn is_stateful(self) -> bool {
        self == PrimitiveKind::Dff
    }
}

impl fmt::Display for PrimitiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PrimitiveKind {
    type Err = NetlistError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PrimitiveKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| NetlistError::UnknownPrimitive(s.to_string()))
    }
}

/// Which redundant module a cell belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReplicaTag {
    A,
    B,
    Shared,
}

impl ReplicaTag {
    /// Tag implied by the default `u_a/` / `u_b/` instance prefixes.
    pub fn from_instance_name(name: &str) -> ReplicaTag {
        if name.starts_with(REPLICA_A_PREFIX) {
            ReplicaTag::A
        } else if name.starts_with(REPLICA_B_PREFIX) {
            ReplicaTag::B
        } else {
            ReplicaTag::Shared
        }
    }
}

impl fmt::Display for ReplicaTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReplicaTag::A => "A",
            ReplicaTag::B => "B",
            ReplicaTag::Shared => "S",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Input,
    Output,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimaryPort {
    pub name: String,
    pub direction: Direction,
    pub net: NetId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellInstance {
    pub id: String,
    pub kind: PrimitiveKind,
    /// LUT truth table; bit `j` is the output for input index `j`.
    pub init: Option<u64>,
    /// Nets on the input pins, in [`PrimitiveKind::input_pins`] order.
    pub inputs: Vec<NetId>,
    pub output: NetId,
    pub replica: ReplicaTag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Driver {
    Cell(CellId),
    Port(PortId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sink {
    /// Input pin `pin` of a cell.
    Cell(CellId, usize),
    Port(PortId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Net {
    pub name: String,
    pub driver: Driver,
    pub sinks: Vec<Sink>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Netlist {
    name: String,
    cells: Vec<CellInstance>,
    nets: Vec<Net>,
    ports: Vec<PrimaryPort>,
    done_port: PortId,
    comb_order: Vec<CellId>,
}

impl Netlist {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn cells(&self) -> &[CellInstance] {
        &self.cells
    }

    pub fn nets(&self) -> &[Net] {
        &self.nets
    }

    pub fn ports(&self) -> &[PrimaryPort] {
        &self.ports
    }

    pub fn done_port(&self) -> PortId {
        self.done_port
    }

    pub fn cell(&self, id: CellId) -> &CellInstance {
        &self.cells[id]
    }

    pub fn net(&self, id: NetId) -> &Net {
        &self.nets[id]
    }

    pub fn port(&self, id: PortId) -> &PrimaryPort {
        &self.ports[id]
    }

    pub fn find_cell(&self, name: &str) -> Option<CellId> {
        self.cells.iter().position(|c| c.id == name)
    }

    pub fn find_port(&self, name: &str) -> Option<PortId> {
        self.ports.iter().position(|p| p.name == name)
    }

    pub fn inputs(&self) -> impl Iterator<Item = PortId> + '_ {
        self.ports
            .iter()
            .enumerate()
            .filter(|(_, p)| p.direction == Direction::Input)
            .map(|(i, _)| i)
    }

    pub fn outputs(&self) -> impl Iterator<Item = PortId> + '_ {
        self.ports
            .iter()
            .enumerate()
            .filter(|(_, p)| p.direction == Direction::Output)
            .map(|(i, _)| i)
    }

    /// DFF cell ids in netlist order.
    pub fn dffs(&self) -> Vec<CellId> {
        (0..self.cells.len())
            .filter(|&c| self.cells[c].kind.is_stateful())
            .collect()
    }

    /// Combinational cells in a dependency-respecting order, computed once at
    /// validation time.
    pub fn comb_order(&self) -> &[CellId] {
        &self.comb_order
    }

    /// Output ports that form the replica output words.
    ///
    /// Ports named `out_a_<k>` / `out_b_<k>` contribute bit `k` of the A / B
    /// word. The returned vectors are indexed by bit; missing bits are `None`.
    pub fn output_words(&self) -> (Vec<Option<PortId>>, Vec<Option<PortId>>) {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for p in self.outputs() {
            let name = &self.ports[p].name;
            let (word, rest) = if let Some(rest) = name.strip_prefix("out_a_") {
                (&mut a, rest)
            } else if let Some(rest) = name.strip_prefix("out_b_") {
                (&mut b, rest)
            } else {
                continue;
            };
            if let Ok(bit) = rest.parse::<usize>() {
                if word.len() <= bit {
                    word.resize(bit + 1, None);
                }
                word[bit] = Some(p);
            }
        }
        (a, b)
    }

    /// Name-independent structural hash.
    ///
    /// Each cell is summarised by its kind, LUT mask and the sorted signatures
    /// of its fan-in drivers (cell kind or primary input); the sorted multiset
    /// of these, together with the port fan-in signatures, is hashed.
    pub fn canonical_hash(&self) -> String {
        let driver_sig = |net: NetId| -> String {
            match self.nets[net].driver {
                Driver::Cell(c) => {
                    let cell = &self.cells[c];
                    match cell.init {
                        Some(init) => format!("{}:{init:x}", cell.kind),
                        None => cell.kind.name().to_string(),
                    }
                }
                Driver::Port(_) => "PI".to_string(),
            }
        };
        let mut rows: Vec<String> = self
            .cells
            .iter()
            .map(|c| {
                let mut fanin: Vec<String> = c.inputs.iter().map(|&n| driver_sig(n)).collect();
                if !matches!(
                    c.kind,
                    PrimitiveKind::Mux2 | PrimitiveKind::Dff
                ) && c.kind.lut_inputs().is_none()
                {
                    fanin.sort();
                }
                let fanout = self.nets[c.output].sinks.len();
                format!(
                    "{}:{}:{}|{}",
                    c.kind,
                    c.init.map(|i| format!("{i:x}")).unwrap_or_default(),
                    fanout,
                    fanin.join(",")
                )
            })
            .collect();
        rows.extend(self.outputs().map(|p| format!("PO|{}", driver_sig(self.ports[p].net))));
        rows.sort();
        let mut hasher = Sha256::new();
        for r in &rows {
            hasher.update(r.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

/// Incremental construction of a [`Netlist`] by name.
///
/// Connections are recorded as they arrive and resolved in [`finish`]
/// (`NetlistBuilder::finish`), which is where every invariant is checked.
#[derive(Debug, Default)]
pub struct NetlistBuilder {
    name: String,
    cells: Vec<(String, PrimitiveKind, Option<u64>)>,
    cell_index: HashMap<String, CellId>,
    ports: Vec<(String, Direction)>,
    port_index: HashMap<String, PortId>,
    nets: Vec<(String, Vec<Endpoint>)>,
    net_index: HashMap<String, NetId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// `(instance, pin)`.
    Pin(String, String),
    Port(String),
}

impl NetlistBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        NetlistBuilder {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn port(&mut self, name: &str, direction: Direction) -> Result<PortId, NetlistError> {
        if self.port_index.contains_key(name) {
            return Err(NetlistError::DuplicateName(name.to_string()));
        }
        let id = self.ports.len();
        self.ports.push((name.to_string(), direction));
        self.port_index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn cell(
        &mut self,
        name: &str,
        kind: PrimitiveKind,
        init: Option<u64>,
    ) -> Result<CellId, NetlistError> {
        if self.cell_index.contains_key(name) {
            return Err(NetlistError::DuplicateName(name.to_string()));
        }
        let id = self.cells.len();
        self.cells.push((name.to_string(), kind, init));
        self.cell_index.insert(name.to_string(), id);
        Ok(id)
    }

    /// Declares a net joining the given endpoints. Declaring the same net name
    /// twice appends to the existing endpoint list.
    pub fn net(&mut self, name: &str, endpoints: impl IntoIterator<Item = Endpoint>) -> NetId {
        let id = match self.net_index.get(name) {
            Some(&id) => id,
            None => {
                let id = self.nets.len();
                self.nets.push((name.to_string(), Vec::new()));
                self.net_index.insert(name.to_string(), id);
                id
            }
        };
        self.nets[id].1.extend(endpoints);
        id
    }

    pub fn finish(self) -> Result<Netlist, NetlistError> {
        let NetlistBuilder {
            name,
            cells,
            cell_index,
            ports,
            port_index,
            nets,
            ..
        } = self;

        let mut cell_inputs: Vec<Vec<Option<NetId>>> =
            cells.iter().map(|(_, k, _)| vec![None; k.arity()]).collect();
        let mut cell_output: Vec<Option<NetId>> = vec![None; cells.len()];
        let mut port_net: Vec<Vec<NetId>> = vec![Vec::new(); ports.len()];
        let mut out_nets = Vec::with_capacity(nets.len());

        for (net_id, (net_name, endpoints)) in nets.iter().enumerate() {
            let mut driver = None;
            let mut sinks = Vec::new();
            for ep in endpoints {
                let (is_driver, sink) = match ep {
                    Endpoint::Pin(inst, pin) => {
                        let &cid = cell_index
                            .get(inst)
                            .ok_or_else(|| NetlistError::UnknownInstance(inst.clone()))?;
                        let (cname, kind, _) = &cells[cid];
                        if kind.output_pin().eq_ignore_ascii_case(pin) {
                            if cell_output[cid].is_some() {
                                return Err(NetlistError::PinConnectedTwice {
                                    cell: cname.clone(),
                                    pin: pin.clone(),
                                });
                            }
                            cell_output[cid] = Some(net_id);
                            (Some(Driver::Cell(cid)), None)
                        } else {
                            let idx = kind
                                .input_pins()
                                .iter()
                                .position(|p| p.eq_ignore_ascii_case(pin))
                                .ok_or_else(|| NetlistError::UnknownPin {
                                    cell: cname.clone(),
                                    kind: *kind,
                                    pin: pin.clone(),
                                })?;
                            if cell_inputs[cid][idx].is_some() {
                                return Err(NetlistError::PinConnectedTwice {
                                    cell: cname.clone(),
                                    pin: pin.clone(),
                                });
                            }
                            cell_inputs[cid][idx] = Some(net_id);
                            (None, Some(Sink::Cell(cid, idx)))
                        }
                    }
                    Endpoint::Port(p) => {
                        let &pid = port_index
                            .get(p)
                            .ok_or_else(|| NetlistError::UnknownPort(p.clone()))?;
                        port_net[pid].push(net_id);
                        match ports[pid].1 {
                            Direction::Input => (Some(Driver::Port(pid)), None),
                            Direction::Output => (None, Some(Sink::Port(pid))),
                        }
                    }
                };
                if let Some(d) = is_driver {
                    if driver.replace(d).is_some() {
                        return Err(NetlistError::MultiDriver {
                            net: net_name.clone(),
                        });
                    }
                }
                sinks.extend(sink);
            }
            let driver = driver.ok_or_else(|| NetlistError::DanglingNet {
                net: net_name.clone(),
            })?;
            out_nets.push(Net {
                name: net_name.clone(),
                driver,
                sinks,
            });
        }

        let mut out_cells = Vec::with_capacity(cells.len());
        for (cid, (cname, kind, init)) in cells.into_iter().enumerate() {
            let inputs = cell_inputs[cid]
                .iter()
                .enumerate()
                .map(|(i, n)| {
                    n.ok_or_else(|| NetlistError::UnconnectedPin {
                        cell: cname.clone(),
                        pin: kind.input_pins()[i].to_string(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let output = cell_output[cid].ok_or_else(|| NetlistError::UnconnectedPin {
                cell: cname.clone(),
                pin: kind.output_pin().to_string(),
            })?;
            let init = match (kind.lut_inputs(), init) {
                (Some(k), Some(mask)) => {
                    if k < 6 && mask >> (1u32 << k) != 0 {
                        return Err(NetlistError::BadInit {
                            cell: cname,
                            msg: format!("INIT {mask:x} wider than 2^{k} bits"),
                        });
                    }
                    Some(mask)
                }
                (Some(_), None) => {
                    return Err(NetlistError::BadInit {
                        cell: cname,
                        msg: "LUT without INIT".to_string(),
                    })
                }
                (None, _) => None,
            };
            out_cells.push(CellInstance {
                replica: ReplicaTag::from_instance_name(&cname),
                id: cname,
                kind,
                init,
                inputs,
                output,
            });
        }

        let mut out_ports = Vec::with_capacity(ports.len());
        for (pid, (pname, direction)) in ports.into_iter().enumerate() {
            let net = match port_net[pid].as_slice() {
                [n] => *n,
                other => {
                    return Err(NetlistError::PortConnections {
                        port: pname,
                        count: other.len(),
                    })
                }
            };
            out_ports.push(PrimaryPort {
                name: pname,
                direction,
                net,
            });
        }

        let done_port = out_ports
            .iter()
            .position(|p| p.name == DONE_PORT && p.direction == Direction::Output)
            .ok_or(NetlistError::MissingDonePort)?;

        let comb_order = comb_topo_order(&out_cells, &out_nets)?;

        Ok(Netlist {
            name,
            cells: out_cells,
            nets: out_nets,
            ports: out_ports,
            done_port,
            comb_order,
        })
    }
}

/// Kahn's algorithm over combinational cells; DFF outputs and primary inputs
/// are sources. Ties are broken by cell index so the order is reproducible.
fn comb_topo_order(cells: &[CellInstance], nets: &[Net]) -> Result<Vec<CellId>, NetlistError> {
    let mut indeg = vec![0usize; cells.len()];
    for (cid, c) in cells.iter().enumerate() {
        if c.kind.is_stateful() {
            continue;
        }
        indeg[cid] = c
            .inputs
            .iter()
            .filter(|&&n| matches!(nets[n].driver, Driver::Cell(d) if !cells[d].kind.is_stateful()))
            .count();
    }
    let mut ready: std::collections::BTreeSet<CellId> = (0..cells.len())
        .filter(|&c| !cells[c].kind.is_stateful() && indeg[c] == 0)
        .collect();
    let mut order = Vec::new();
    while let Some(c) = ready.pop_first() {
        order.push(c);
        for sink in &nets[cells[c].output].sinks {
            if let Sink::Cell(s, _) = *sink {
                if !cells[s].kind.is_stateful() {
                    indeg[s] -= 1;
                    if indeg[s] == 0 {
                        ready.insert(s);
                    }
                }
            }
        }
    }
    let comb_count = cells.iter().filter(|c| !c.kind.is_stateful()).count();
    if order.len() != comb_count {
        return Err(NetlistError::CombinationalCycle {
            witness: cycle_witness(cells, nets, &indeg),
        });
    }
    Ok(order)
}

/// Walks backwards through cells still carrying unresolved fan-in until a
/// cell repeats; the repeated suffix is the cycle.
fn cycle_witness(cells: &[CellInstance], nets: &[Net], indeg: &[usize]) -> Vec<String> {
    let Some(start) = (0..cells.len()).find(|&c| !cells[c].kind.is_stateful() && indeg[c] > 0)
    else {
        return Vec::new();
    };
    let mut seen: HashMap<CellId, usize> = HashMap::new();
    let mut path = Vec::new();
    let mut cur = start;
    loop {
        if let Some(&pos) = seen.get(&cur) {
            let mut cyc: Vec<String> = path[pos..].iter().map(|&c: &CellId| cells[c].id.clone()).collect();
            cyc.reverse();
            return cyc;
        }
        seen.insert(cur, path.len());
        path.push(cur);
        let next = cells[cur].inputs.iter().find_map(|&n| match nets[n].driver {
            Driver::Cell(d) if !cells[d].kind.is_stateful() && indeg[d] > 0 => Some(d),
            _ => None,
        });
        match next {
            Some(n) => cur = n,
            None => return path.iter().map(|&c| cells[c].id.clone()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pin(i: &str, p: &str) -> Endpoint {
        Endpoint::Pin(i.into(), p.into())
    }

    #[test]
    fn kind_names_round_trip() {
        for k in PrimitiveKind::ALL {
            assert_eq!(k.name().to_lowercase().parse::<PrimitiveKind>().unwrap(), k);
        }
        assert!(matches!(
            "FDRE".parse::<PrimitiveKind>(),
            Err(NetlistError::UnknownPrimitive(_))
        ));
        assert_eq!(PrimitiveKind::Lut4.input_pins(), &["I0", "I1", "I2", "I3"]);
        assert!(PrimitiveKind::ALL.iter().filter(|k| k.is_stateful()).eq([&PrimitiveKind::Dff]));
    }

    #[test]
    fn rejects_multi_driver() {
        let mut b = NetlistBuilder::new("t");
        b.port("x", Direction::Input).unwrap();
        b.port("done", Direction::Output).unwrap();
        b.cell("c1", PrimitiveKind::Const1, None).unwrap();
        b.net("n", [Endpoint::Port("x".into()), pin("c1", "O"), Endpoint::Port("done".into())]);
        assert!(matches!(b.finish(), Err(NetlistError::MultiDriver { .. })));
    }

    #[test]
    fn rejects_undriven_net_and_missing_done() {
        let mut b = NetlistBuilder::new("t");
        b.port("y", Direction::Output).unwrap();
        b.net("n", [Endpoint::Port("y".into())]);
        assert!(matches!(b.finish(), Err(NetlistError::DanglingNet { .. })));

        let mut b = NetlistBuilder::new("t");
        b.port("y", Direction::Output).unwrap();
        b.cell("c1", PrimitiveKind::Const1, None).unwrap();
        b.net("n", [pin("c1", "O"), Endpoint::Port("y".into())]);
        assert_eq!(b.finish(), Err(NetlistError::MissingDonePort));
    }

    #[test]
    fn rejects_cycle_with_witness() {
        let mut b = NetlistBuilder::new("t");
        b.port("done", Direction::Output).unwrap();
        b.cell("g1", PrimitiveKind::Not, None).unwrap();
        b.cell("g2", PrimitiveKind::Buf, None).unwrap();
        b.net("a", [pin("g1", "O"), pin("g2", "I"), Endpoint::Port("done".into())]);
        b.net("b", [pin("g2", "O"), pin("g1", "I")]);
        match b.finish() {
            Err(NetlistError::CombinationalCycle { witness }) => {
                let mut w = witness.clone();
                w.sort();
                assert_eq!(w, vec!["g1", "g2"]);
            }
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn dff_breaks_cycles() {
        let mut b = NetlistBuilder::new("t");
        b.port("done", Direction::Output).unwrap();
        b.cell("inv", PrimitiveKind::Not, None).unwrap();
        b.cell("r", PrimitiveKind::Dff, None).unwrap();
        b.net("q", [pin("r", "Q"), pin("inv", "I"), Endpoint::Port("done".into())]);
        b.net("d", [pin("inv", "O"), pin("r", "D")]);
        let n = b.finish().unwrap();
        assert_eq!(n.comb_order(), &[0]);
        assert_eq!(n.dffs(), vec![1]);
    }

    #[test]
    fn unconnected_pin_is_an_error() {
        let mut b = NetlistBuilder::new("t");
        b.port("done", Direction::Output).unwrap();
        b.cell("g", PrimitiveKind::And2, None).unwrap();
        b.cell("c", PrimitiveKind::Const1, None).unwrap();
        b.net("n", [pin("c", "O"), pin("g", "A")]);
        b.net("o", [pin("g", "O"), Endpoint::Port("done".into())]);
        assert!(matches!(
            b.finish(),
            Err(NetlistError::UnconnectedPin { pin, .. }) if pin == "B"
        ));
    }

    #[test]
    fn lut_init_width_is_checked() {
        let mut b = NetlistBuilder::new("t");
        b.port("done", Direction::Output).unwrap();
        b.cell("c", PrimitiveKind::Const1, None).unwrap();
        b.cell("l", PrimitiveKind::Lut2, Some(0x1f)).unwrap();
        b.net("n", [pin("c", "O"), pin("l", "I0"), pin("l", "I1")]);
        b.net("o", [pin("l", "O"), Endpoint::Port("done".into())]);
        assert!(matches!(b.finish(), Err(NetlistError::BadInit { .. })));
    }
}
