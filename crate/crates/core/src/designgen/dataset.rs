use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::campaign::ErrorRates;
use crate::netlist::{emit_edif, Netlist};

use super::ir::{check_equivalence, Equivalence, IrDesign};
use super::lower::make_dmr;
use super::seeds::build_seed;
use super::transforms::{diversify, TransformSet};
use super::DesignError;

pub const MANIFEST_VERSION: u32 = 1;

/// Probability that replica B reuses replica A's transform seed, giving an
/// undiversified pair.
pub const MIRROR_PROBABILITY: f64 = 0.15;

/// Ground truth attached to a design by the campaign stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labels {
    pub done_time: usize,
    pub dff_count: usize,
    pub sbf: ErrorRates,
    pub dbf: ErrorRates,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub design_id: String,
    pub index: usize,
    pub seed: u64,
    pub seed_circuit: String,
    /// Both replicas were built from the same transform seed.
    pub mirrored: bool,
    pub transforms_a: TransformSet,
    pub transforms_b: TransformSet,
    /// Input word held on `x_<k>` during simulation.
    pub stimulus: u64,
    pub edif_path: String,
    pub graph_path: String,
    #[serde(default)]
    pub labels: Option<Labels>,
    /// Why the campaign stage excluded this design, if it did.
    #[serde(default)]
    pub excluded: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed_circuit: String,
    pub master_seed: u64,
    pub rows: Vec<ManifestRow>,
}

impl DatasetManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<DatasetManifest, DesignError> {
        let m: DatasetManifest = serde_json::from_str(text).map_err(|e| DesignError::Manifest(e.to_string()))?;
        if m.version != MANIFEST_VERSION {
            return Err(DesignError::Manifest(format!("unsupported manifest version {}", m.version)));
        }
        let mut ids: Vec<&str> = m.rows.iter().map(|r| r.design_id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(DesignError::Manifest("duplicate design_id".into()));
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<DatasetManifest, DesignError> {
        let text = fs::read_to_string(path).map_err(|e| DesignError::Io(format!("{}: {e}", path.display())))?;
        DatasetManifest::from_json(&text)
    }

    /// Writes through a temporary file so a crash never leaves half a manifest.
    pub fn save(&self, path: &Path) -> Result<(), DesignError> {
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, self.to_json()).map_err(|e| DesignError::Io(format!("{}: {e}", tmp.display())))?;
        fs::rename(&tmp, path).map_err(|e| DesignError::Io(format!("{}: {e}", path.display())))
    }
}

/// One generated design, not yet written anywhere.
#[derive(Debug, Clone)]
pub struct GeneratedDesign {
    pub row: ManifestRow,
    pub replica_a: IrDesign,
    pub replica_b: IrDesign,
    pub netlist: Netlist,
    pub edif: String,
}

/// SplitMix64 finalizer, used to derive independent per-design seeds.
pub fn mix_seed(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn design_seed(master_seed: u64, index: usize) -> u64 {
    mix_seed(master_seed ^ mix_seed(index as u64))
}

fn verify(replica: &IrDesign, seed: &IrDesign, which: char, index: usize) -> Result<(), DesignError> {
    match check_equivalence(replica, seed)? {
        Equivalence::Equivalent => Ok(()),
        Equivalence::Mismatch { input, expected, actual } => Err(DesignError::EquivalenceFailure {
            index,
            replica: which,
            input,
            expected,
            actual,
        }),
    }
}

/// Deterministically builds design `index` of the dataset.
pub fn generate_design(seed_circuit: &str, master_seed: u64, index: usize) -> Result<GeneratedDesign, DesignError> {
    let seed_ir = build_seed(seed_circuit)?;
    let seed = design_seed(master_seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seed_a: u64 = rng.gen();
    let mirrored = rng.gen_bool(MIRROR_PROBABILITY);
    let seed_b: u64 = if mirrored { seed_a } else { rng.gen() };
    let stimulus = rng.gen::<u64>() & ((1u64 << seed_ir.input_width) - 1);
    let (replica_a, transforms_a) = diversify(&seed_ir, seed_a)?;
    let (replica_b, transforms_b) = diversify(&seed_ir, seed_b)?;
    verify(&replica_a, &seed_ir, 'a', index)?;
    verify(&replica_b, &seed_ir, 'b', index)?;
    let netlist = make_dmr(&format!("{seed_circuit}_dmr"), &replica_a, &replica_b)?;
    let edif = emit_edif(&netlist);
    let digest = hex::encode(Sha256::digest(edif.as_bytes()));
    let design_id = format!("d{index:04}_{}", &digest[..8]);
    let row = ManifestRow {
        edif_path: format!("designs/{design_id}.edif"),
        graph_path: format!("graphs/{design_id}.json"),
        design_id,
        index,
        seed,
        seed_circuit: seed_circuit.to_string(),
        mirrored,
        transforms_a,
        transforms_b,
        stimulus,
        labels: None,
        excluded: None,
    };
    Ok(GeneratedDesign {
        row,
        replica_a,
        replica_b,
        netlist,
        edif,
    })
}

/// Generates `count` designs into `workspace` (EDIF under `designs/`) and
/// returns the manifest. Files whose content is unchanged are not rewritten.
pub fn generate_dataset(
    workspace: &Path,
    count: usize,
    seed_circuit: &str,
    master_seed: u64,
) -> Result<DatasetManifest, DesignError> {
    if count == 0 {
        return Err(DesignError::EmptyDataset);
    }
    let io = |p: &Path, e: std::io::Error| DesignError::Io(format!("{}: {e}", p.display()));
    let dir = workspace.join("designs");
    fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
    let mut rows = Vec::with_capacity(count);
    for index in 0..count {
        let g = generate_design(seed_circuit, master_seed, index)?;
        let path = workspace.join(&g.row.edif_path);
        if fs::read_to_string(&path).ok().as_deref() != Some(g.edif.as_str()) {
            fs::write(&path, &g.edif).map_err(|e| io(&path, e))?;
        }
        log::debug!("generated {}", g.row.design_id);
        rows.push(g.row);
    }
    Ok(DatasetManifest {
        version: MANIFEST_VERSION,
        seed_circuit: seed_circuit.to_string(),
        master_seed,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn design_generation_is_deterministic() {
        let a = generate_design("parity_tree", 5, 3).unwrap();
        let b = generate_design("parity_tree", 5, 3).unwrap();
        assert_eq!(a.edif, b.edif);
        assert_eq!(a.row, b.row);
        let c = generate_design("parity_tree", 5, 4).unwrap();
        assert_ne!(a.row.seed, c.row.seed);
    }

    #[test]
    fn manifest_round_trips() {
        let g = generate_design("alu4", 1, 0).unwrap();
        let m = DatasetManifest {
            version: MANIFEST_VERSION,
            seed_circuit: "alu4".into(),
            master_seed: 1,
            rows: vec![g.row],
        };
        assert_eq!(DatasetManifest::from_json(&m.to_json()).unwrap(), m);
    }
}
