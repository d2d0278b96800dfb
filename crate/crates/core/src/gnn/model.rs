use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::campaign::RateLabel;
use crate::graph::{encode_features, CircuitGraph, FeatureVocabulary};

use super::layer::{add_bias, relu_inplace, NormAdjacency, SparseRows};
use super::GnnError;

pub const LOG_EPSILON: f64 = 1e-6;

/// Map from a rate to the value the network regresses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelTransform {
    Identity,
    /// `log10(rate + eps)`.
    Log10Eps { eps: f64 },
}

impl LabelTransform {
    /// Log transform for CER, identity for the other rates.
    pub fn default_for(label: RateLabel) -> LabelTransform {
        match label {
            RateLabel::Cer => LabelTransform::Log10Eps { eps: LOG_EPSILON },
            _ => LabelTransform::Identity,
        }
    }

    pub fn apply(&self, rate: f64) -> f64 {
        match *self {
            LabelTransform::Identity => rate,
            LabelTransform::Log10Eps { eps } => (rate + eps).log10(),
        }
    }

    pub fn invert(&self, y: f64) -> f64 {
        match *self {
            LabelTransform::Identity => y,
            LabelTransform::Log10Eps { eps } => 10f64.powf(y) - eps,
        }
    }
}

/// Trainable weights: three graph-convolution layers and a linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub w: [Array2<f64>; 3],
    pub b: [Array1<f64>; 3],
    pub w_out: Array1<f64>,
    pub b_out: f64,
}

fn glorot(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((fan_in, fan_out), || rng.gen_range(-limit..limit))
}

impl Params {
    /// Uniform Glorot weights, zero biases.
    pub fn init(in_dim: usize, hidden: usize, rng: &mut impl Rng) -> Params {
        let w1 = glorot(rng, in_dim, hidden);
        let w2 = glorot(rng, hidden, hidden);
        let w3 = glorot(rng, hidden, hidden);
        let w_out = glorot(rng, hidden, 1).into_shape_with_order(hidden).expect("column vector");
        Params {
            w: [w1, w2, w3],
            b: [Array1::zeros(hidden), Array1::zeros(hidden), Array1::zeros(hidden)],
            w_out,
            b_out: 0.0,
        }
    }

    pub fn zeros_like(&self) -> Params {
        Params {
            w: self.w.clone().map(|w| Array2::zeros(w.dim())),
            b: self.b.clone().map(|b| Array1::zeros(b.len())),
            w_out: Array1::zeros(self.w_out.len()),
            b_out: 0.0,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w[0].nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_out.len()
    }

    /// Every parameter tensor as a flat slice, in a fixed order.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::with_capacity(8);
        for i in 0..3 {
            v.push(self.w[i].as_slice().expect("standard layout"));
            v.push(self.b[i].as_slice().expect("standard layout"));
        }
        v.push(self.w_out.as_slice().expect("standard layout"));
        v.push(std::slice::from_ref(&self.b_out));
        v
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let Params { w, b, w_out, b_out } = self;
        let mut v: Vec<&mut [f64]> = Vec::with_capacity(8);
        for (wi, bi) in w.iter_mut().zip(b.iter_mut()) {
            v.push(wi.as_slice_mut().expect("standard layout"));
            v.push(bi.as_slice_mut().expect("standard layout"));
        }
        v.push(w_out.as_slice_mut().expect("standard layout"));
        v.push(std::slice::from_mut(b_out));
        v
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A graph ready for the network: normalized adjacency plus the active
/// one-hot column of every feature group per node.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedGraph {
    pub adj: NormAdjacency,
    pub rows: Vec<[usize; 5]>,
}

impl PreparedGraph {
    pub fn new(graph: &CircuitGraph, vocab: &FeatureVocabulary) -> Result<PreparedGraph, GnnError> {
        let features = encode_features(graph, vocab).map_err(|e| GnnError::VocabularyMismatch(e.to_string()))?;
        Ok(PreparedGraph {
            adj: NormAdjacency::from_edges(graph.node_count(), &graph.edges),
            rows: features.rows,
        })
    }

    pub fn node_count(&self) -> usize {
        self.rows.len()
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Activations {
    pub z: [Array2<f64>; 3],
    pub h: [Array2<f64>; 3],
    pub pooled: Array1<f64>,
    /// Node attaining each pooled maximum (lowest index on ties).
    pub argmax: Vec<usize>,
    pub output: f64,
}

/// Forward pass on one graph with order-independent neighbour sums, so the
/// output is exactly invariant to node numbering.
pub fn forward_cached(p: &Params, g: &PreparedGraph) -> Result<Activations, GnnError> {
    forward_impl(p, g, true)
}

/// Forward pass for training: neighbour sums in index order.
pub fn forward_train(p: &Params, g: &PreparedGraph) -> Result<Activations, GnnError> {
    forward_impl(p, g, false)
}

fn forward_impl(p: &Params, g: &PreparedGraph, canonical: bool) -> Result<Activations, GnnError> {
    let n = g.node_count();
    if n == 0 {
        return Err(GnnError::DimensionMismatch("graph has no nodes".into()));
    }
    let hidden = p.hidden_dim();
    let in_dim = p.in_dim();
    if g.rows.iter().flatten().any(|&c| c >= in_dim) {
        return Err(GnnError::DimensionMismatch(format!("feature column beyond input width {in_dim}")));
    }
    // X·W1 for one-hot X is a sum of five rows of W1
    let mut xw = Array2::zeros((n, hidden));
    for (i, row) in g.rows.iter().enumerate() {
        let mut out = xw.row_mut(i);
        for &c in row {
            out += &p.w[0].row(c);
        }
    }
    let prop = |m: &Array2<f64>| {
        if canonical {
            g.adj.propagate(m.view())
        } else {
            g.adj.propagate_fast(m.view())
        }
    };
    let mut z1 = prop(&xw);
    add_bias(&mut z1, &p.b[0]);
    let mut h1 = z1.clone();
    relu_inplace(&mut h1);
    let mut z2 = prop(&h1.dot(&p.w[1]));
    add_bias(&mut z2, &p.b[1]);
    let mut h2 = z2.clone();
    relu_inplace(&mut h2);
    let mut z3 = prop(&h2.dot(&p.w[2]));
    add_bias(&mut z3, &p.b[2]);
    let mut h3 = z3.clone();
    relu_inplace(&mut h3);

    let mut pooled = h3.row(0).to_owned();
    let mut argmax = vec![0usize; hidden];
    for (i, row) in h3.axis_iter(Axis(0)).enumerate().skip(1) {
        for k in 0..hidden {
            if row[k] > pooled[k] {
                pooled[k] = row[k];
                argmax[k] = i;
            }
        }
    }
    let output = pooled.dot(&p.w_out) + p.b_out;
    Ok(Activations {
        z: [z1, z2, z3],
        h: [h1, h2, h3],
        pooled,
        argmax,
        output,
    })
}

pub fn forward_raw(p: &Params, g: &PreparedGraph) -> Result<f64, GnnError> {
    Ok(forward_cached(p, g)?.output)
}

fn mask_rows(d: &mut SparseRows, z: &Array2<f64>) {
    for (k, &r) in d.rows.iter().enumerate() {
        Zip::from(d.data.row_mut(k)).and(z.row(r)).for_each(|d, &z| {
            if z <= 0.0 {
                *d = 0.0;
            }
        });
    }
}

/// Adds `d_out · d(output)/d(params)` into `grads`.
///
/// Max pooling sends gradient to one node per channel, so only rows within
/// reach of those nodes are carried through the layers.
pub fn backward(p: &Params, g: &PreparedGraph, act: &Activations, d_out: f64, grads: &mut Params) {
    let hidden = p.hidden_dim();
    grads.b_out += d_out;
    grads.w_out.scaled_add(d_out, &act.pooled);
    let mut seeds: Vec<usize> = act.argmax.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let mut dz = SparseRows {
        data: Array2::zeros((seeds.len(), hidden)),
        rows: seeds,
    };
    for k in 0..hidden {
        let r = dz.rows.binary_search(&act.argmax[k]).expect("seeded row");
        dz.data[[r, k]] = d_out * p.w_out[k];
    }
    mask_rows(&mut dz, &act.z[2]);
    let mut slot = vec![usize::MAX; g.node_count()];
    for layer in (0..3).rev() {
        grads.b[layer] += &dz.data.sum_axis(Axis(0));
        let dm = g.adj.propagate_sparse(&dz, &mut slot);
        if layer == 0 {
            for (k, &r) in dm.rows.iter().enumerate() {
                for &c in &g.rows[r] {
                    let mut gw = grads.w[0].row_mut(c);
                    gw += &dm.data.row(k);
                }
            }
            break;
        }
        let h_prev = act.h[layer - 1].select(Axis(0), &dm.rows);
        grads.w[layer] += &h_prev.t().dot(&dm.data);
        dz = SparseRows {
            data: dm.data.dot(&p.w[layer].t()),
            rows: dm.rows,
        };
        mask_rows(&mut dz, &act.z[layer - 1]);
    }
}

/// Batch-mean squared error of raw outputs against `targets`; gradients are
/// accumulated into `grads` when given. Graphs are processed one at a time,
/// which is the block-diagonal batch with one pooling segment per graph.
pub fn batch_loss(
    p: &Params,
    graphs: &[&PreparedGraph],
    targets: &[f64],
    mut grads: Option<&mut Params>,
) -> Result<f64, GnnError> {
    let m = graphs.len() as f64;
    let mut loss = 0.0;
    for (g, &y) in graphs.iter().zip(targets) {
        let act = forward_train(p, g)?;
        let r = act.output - y;
        loss += r * r / m;
        if let Some(gr) = grads.as_deref_mut() {
            backward(p, g, &act, 2.0 * r / m, gr);
        }
    }
    Ok(loss)
}

/// A trained regressor for one rate.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    pub params: Params,
    pub vocab: FeatureVocabulary,
    pub target_label: RateLabel,
    pub label_transform: LabelTransform,
    /// Network outputs are standardized: transformed label = mean + std · output.
    pub label_mean: f64,
    pub label_std: f64,
}

impl GcnModel {
    pub fn hidden_dim(&self) -> usize {
        self.params.hidden_dim()
    }

    /// Prediction in transformed-label space.
    pub fn forward(&self, g: &PreparedGraph) -> Result<f64, GnnError> {
        if self.params.in_dim() != self.vocab.total_dim() {
            return Err(GnnError::DimensionMismatch("weights do not match the vocabulary".into()));
        }
        Ok(self.label_mean + self.label_std * forward_raw(&self.params, g)?)
    }

    pub fn prepare(&self, graph: &CircuitGraph) -> Result<PreparedGraph, GnnError> {
        PreparedGraph::new(graph, &self.vocab)
    }

    /// Predicted rate, clamped to `[0, 1]`.
    pub fn predict(&self, graph: &CircuitGraph) -> Result<f64, GnnError> {
        let g = self.prepare(graph)?;
        Ok(self.predict_prepared(&g)?)
    }

    pub fn predict_prepared(&self, g: &PreparedGraph) -> Result<f64, GnnError> {
        Ok(self.label_transform.invert(self.forward(g)?).clamp(0.0, 1.0))
    }
}

/// Free-function form of [`GcnModel::predict`].
pub fn predict(model: &GcnModel, graph: &CircuitGraph) -> Result<f64, GnnError> {
    model.predict(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(n: usize, edges: &[(usize, usize)], in_dim: usize) -> PreparedGraph {
        PreparedGraph {
            adj: NormAdjacency::from_edges(n, edges),
            rows: (0..n).map(|i| [i % in_dim; 5]).collect(),
        }
    }

    #[test]
    fn log_transform_inverts() {
        let t = LabelTransform::Log10Eps { eps: LOG_EPSILON };
        for &r in &[1e-6, 3.7e-5, 1e-3, 0.25, 1.0] {
            assert!((t.invert(t.apply(r)) - r).abs() < 1e-12);
        }
    }

    #[test]
    fn single_node_pools_its_own_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = Params::init(4, 8, &mut rng);
        let act = forward_cached(&p, &toy(1, &[], 4)).unwrap();
        assert_eq!(act.pooled, act.h[2].row(0));
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = Params::init(4, 8, &mut rng);
        let g = toy(3, &[(0, 1), (1, 2)], 4);
        let y = forward_raw(&p, &g).unwrap();
        let mut grads = p.zeros_like();
        let loss = batch_loss(&p, &[&g], &[y], Some(&mut grads)).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.slices().iter().all(|s| s.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn dead_unit_has_no_incoming_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = Params::init(4, 8, &mut rng);
        // unit 5 of layer 2 never activates
        p.w[1].column_mut(5).fill(0.0);
        p.b[1][5] = -1.0;
        let g = toy(4, &[(0, 1), (1, 2), (2, 3)], 4);
        let mut grads = p.zeros_like();
        batch_loss(&p, &[&g], &[1.0], Some(&mut grads)).unwrap();
        assert!(grads.w[1].column(5).iter().all(|&v| v == 0.0));
        assert_eq!(grads.b[1][5], 0.0);
    }
}
