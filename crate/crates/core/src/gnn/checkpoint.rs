use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::campaign::RateLabel;
use crate::graph::FeatureVocabulary;

use super::model::{GcnModel, LabelTransform, Params};
use super::GnnError;

pub const CHECKPOINT_FORMAT: &str = "faultlens-gcn";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct LayerFile {
    /// Row-major, `in x out`.
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    hidden_dim: usize,
    target_label: RateLabel,
    label_transform: LabelTransform,
    label_mean: f64,
    label_std: f64,
    vocab: FeatureVocabulary,
    layers: Vec<LayerFile>,
    head_weight: Vec<f64>,
    head_bias: f64,
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

fn matrix(rows: &[Vec<f64>], shape: (usize, usize)) -> Result<Array2<f64>, GnnError> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(GnnError::Checkpoint(format!("weight matrix is not {}x{}", shape.0, shape.1)));
    }
    Ok(Array2::from_shape_vec(shape, rows.concat()).expect("shape checked"))
}

/// Serializes a model as JSON; floats are written with round-trip precision.
pub fn save_checkpoint(model: &GcnModel) -> String {
    let p = &model.params;
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        hidden_dim: model.hidden_dim(),
        target_label: model.target_label,
        label_transform: model.label_transform,
        label_mean: model.label_mean,
        label_std: model.label_std,
        vocab: model.vocab.clone(),
        layers: (0..3)
            .map(|i| LayerFile {
                weight: rows(&p.w[i]),
                bias: p.b[i].to_vec(),
            })
            .collect(),
        head_weight: p.w_out.to_vec(),
        head_bias: p.b_out,
    };
    let mut s = serde_json::to_string(&file).expect("checkpoint serializes");
    s.push('\n');
    s
}

pub fn load_checkpoint(text: &str) -> Result<GcnModel, GnnError> {
    let f: CheckpointFile = serde_json::from_str(text).map_err(|e| GnnError::Checkpoint(e.to_string()))?;
    if f.format != CHECKPOINT_FORMAT || f.version != CHECKPOINT_VERSION {
        return Err(GnnError::Checkpoint(format!("unsupported checkpoint {} v{}", f.format, f.version)));
    }
    if f.layers.len() != 3 {
        return Err(GnnError::Checkpoint("expected three layers".into()));
    }
    let h = f.hidden_dim;
    let in_dim = f.vocab.total_dim();
    let shapes = [(in_dim, h), (h, h), (h, h)];
    let mut w = Vec::new();
    let mut b = Vec::new();
    for (l, &shape) in f.layers.iter().zip(&shapes) {
        w.push(matrix(&l.weight, shape)?);
        if l.bias.len() != h {
            return Err(GnnError::Checkpoint("bias length differs from hidden_dim".into()));
        }
        b.push(Array1::from(l.bias.clone()));
    }
    if f.head_weight.len() != h {
        return Err(GnnError::Checkpoint("head length differs from hidden_dim".into()));
    }
    let w: [Array2<f64>; 3] = w.try_into().expect("three layers");
    let b: [Array1<f64>; 3] = b.try_into().expect("three layers");
    Ok(GcnModel {
        params: Params {
            w,
            b,
            w_out: Array1::from(f.head_weight),
            b_out: f.head_bias,
        },
        vocab: f.vocab,
        target_label: f.target_label,
        label_transform: f.label_transform,
        label_mean: f.label_mean,
        label_std: f.label_std,
    })
}
