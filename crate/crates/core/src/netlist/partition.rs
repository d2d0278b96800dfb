use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CellId, Netlist, ReplicaTag, REPLICA_A_PREFIX, REPLICA_B_PREFIX};

/// Maps instances whose name starts with `prefix` to a replica.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixRule {
    pub prefix: String,
    pub tag: ReplicaTag,
}

impl PrefixRule {
    pub fn new(prefix: impl Into<String>, tag: ReplicaTag) -> Self {
        PrefixRule {
            prefix: prefix.into(),
            tag,
        }
    }

    /// The `u_a/` / `u_b/` rules used by generated DMR wrappers.
    pub fn dmr_defaults() -> Vec<PrefixRule> {
        vec![
            PrefixRule::new(REPLICA_A_PREFIX, ReplicaTag::A),
            PrefixRule::new(REPLICA_B_PREFIX, ReplicaTag::B),
        ]
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("flip-flop `{instance}` matches {matches} prefix rules (expected exactly one)")]
pub struct UnmatchedInstance {
    pub instance: String,
    pub matches: usize,
}

/// Replica membership of every flip-flop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleMap {
    pub rules: Vec<PrefixRule>,
    pub ffs_a: Vec<CellId>,
    pub ffs_b: Vec<CellId>,
    pub ffs_shared: Vec<CellId>,
}

impl ModuleMap {
    pub fn dff_count(&self) -> usize {
        self.ffs_a.len() + self.ffs_b.len() + self.ffs_shared.len()
    }

    pub fn tag_of(&self, cell: CellId) -> Option<ReplicaTag> {
        if self.ffs_a.contains(&cell) {
            Some(ReplicaTag::A)
        } else if self.ffs_b.contains(&cell) {
            Some(ReplicaTag::B)
        } else if self.ffs_shared.contains(&cell) {
            Some(ReplicaTag::Shared)
        } else {
            None
        }
    }
}

/// Assigns every DFF to exactly one replica according to `rules`.
pub fn partition_modules(netlist: &Netlist, rules: &[PrefixRule]) -> Result<ModuleMap, UnmatchedInstance> {
    let mut map = ModuleMap {
        rules: rules.to_vec(),
        ffs_a: Vec::new(),
        ffs_b: Vec::new(),
        ffs_shared: Vec::new(),
    };
    for ff in netlist.dffs() {
        let name = &netlist.cell(ff).id;
        let mut hits = rules.iter().filter(|r| name.starts_with(&r.prefix));
        let (Some(rule), None) = (hits.next(), hits.next()) else {
            return Err(UnmatchedInstance {
                instance: name.clone(),
                matches: rules.iter().filter(|r| name.starts_with(&r.prefix)).count(),
            });
        };
        match rule.tag {
            ReplicaTag::A => map.ffs_a.push(ff),
            ReplicaTag::B => map.ffs_b.push(ff),
            ReplicaTag::Shared => map.ffs_shared.push(ff),
        }
    }
    Ok(map)
}
