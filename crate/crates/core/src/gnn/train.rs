use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::campaign::RateLabel;
use crate::graph::{build_vocab, CircuitGraph};

use super::model::{backward, batch_loss, forward_raw, forward_train, GcnModel, LabelTransform, Params, PreparedGraph};
use super::GnnError;

pub const MIN_DATASET: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub k_folds: usize,
    pub test_fraction: f64,
    pub val_fraction_of_remainder: f64,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub initial_lr: f64,
    pub min_lr: f64,
    pub batch_size: usize,
    pub hidden_dim: usize,
    pub rng_seed: u64,
    /// Overrides the per-label default transform.
    pub label_transform: Option<LabelTransform>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k_folds: 5,
            test_fraction: 0.10,
            val_fraction_of_remainder: 0.20,
            max_epochs: 1000,
            early_stop_patience: 100,
            plateau_patience: 10,
            plateau_factor: 0.1,
            initial_lr: 1e-3,
            min_lr: 1e-6,
            batch_size: 16,
            hidden_dim: 128,
            rng_seed: 0,
            label_transform: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GnnError> {
        let frac = |x: f64| x > 0.0 && x < 1.0;
        let ok = frac(self.test_fraction)
            && frac(self.val_fraction_of_remainder)
            && self.k_folds >= 1
            && self.max_epochs >= 1
            && self.early_stop_patience >= 1
            && self.plateau_patience >= 1
            && self.plateau_factor > 0.0
            && self.plateau_factor < 1.0
            && self.initial_lr > 0.0
            && self.min_lr > 0.0
            && self.min_lr <= self.initial_lr
            && self.batch_size >= 1
            && self.hidden_dim >= 1;
        if ok {
            Ok(())
        } else {
            Err(GnnError::InvalidConfig(format!("{self:?}")))
        }
    }
}

/// First/second-moment gradient descent.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize) -> Adam {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut Params, grads: &Params, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let mut k = 0;
        for (p, g) in params.slices_mut().into_iter().zip(grads.slices()) {
            for (p, &g) in p.iter_mut().zip(g) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
                k += 1;
            }
        }
    }
}

/// Reduce-on-plateau learning-rate state.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub best: f64,
    /// Consecutive epochs without strict improvement.
    pub stall: usize,
    pub patience: usize,
    pub factor: f64,
    pub min_lr: f64,
}

impl PlateauScheduler {
    pub fn new(cfg: &TrainConfig) -> Self {
        PlateauScheduler {
            lr: cfg.initial_lr,
            best: f64::INFINITY,
            stall: 0,
            patience: cfg.plateau_patience,
            factor: cfg.plateau_factor,
            min_lr: cfg.min_lr,
        }
    }

    /// Feeds one validation loss and returns the learning rate to use next.
    pub fn step(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best {
            self.best = val_loss;
            self.stall = 0;
        } else {
            self.stall += 1;
            if self.stall >= self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr);
                self.stall = 0;
            }
        }
        self.lr
    }
}

/// Free-function form of [`PlateauScheduler::step`].
pub fn lr_schedule_step(state: &mut PlateauScheduler, current_val_loss: f64) -> f64 {
    state.step(current_val_loss)
}

pub fn mse(preds: &[f64], truths: &[f64]) -> f64 {
    preds.iter().zip(truths).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / preds.len() as f64
}

pub fn r_squared(preds: &[f64], truths: &[f64]) -> Result<f64, GnnError> {
    if preds.len() != truths.len() || truths.is_empty() {
        return Err(GnnError::DimensionMismatch(format!(
            "{} predictions for {} truths",
            preds.len(),
            truths.len()
        )));
    }
    let mean = truths.iter().sum::<f64>() / truths.len() as f64;
    let ss_tot: f64 = truths.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot == 0.0 {
        return Err(GnnError::DegenerateTruths);
    }
    let ss_res: f64 = preds.iter().zip(truths).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Validation loss strictly below every earlier epoch's.
    pub improved: bool,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub params: Params,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub trace: Vec<EpochRecord>,
}

/// Trains `params` on `(graph, target)` pairs, keeping the parameters of the
/// epoch with the lowest validation loss. Losses are in target units.
pub fn fit(
    mut params: Params,
    train: &[(&PreparedGraph, f64)],
    val: &[(&PreparedGraph, f64)],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<FitOutcome, GnnError> {
    if train.is_empty() || val.is_empty() {
        return Err(GnnError::DatasetTooSmall(train.len() + val.len()));
    }
    let mut adam = Adam::new(params.len());
    let mut sched = PlateauScheduler::new(cfg);
    let mut best = (f64::INFINITY, 0usize, params.clone());
    let mut trace = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grads = params.zeros_like();
    for epoch in 1..=cfg.max_epochs {
        let lr = sched.lr;
        order.shuffle(rng);
        let mut train_sq = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            for s in grads.slices_mut() {
                s.fill(0.0);
            }
            let m = batch.len() as f64;
            for &i in batch {
                let (g, y) = train[i];
                let act = forward_train(&params, g)?;
                let r = act.output - y;
                train_sq += r * r;
                backward(&params, g, &act, 2.0 * r / m, &mut grads);
            }
            adam.step(&mut params, &grads, lr);
        }
        let val_loss = evaluate(&params, val)?;
        let improved = val_loss < best.0;
        if improved {
            best = (val_loss, epoch, params.clone());
        }
        sched.step(val_loss);
        trace.push(EpochRecord {
            epoch,
            lr,
            train_loss: train_sq / train.len() as f64,
            val_loss,
            improved,
        });
        if epoch >= best.1 + cfg.early_stop_patience {
            break;
        }
    }
    Ok(FitOutcome {
        params: best.2,
        best_val_loss: best.0,
        best_epoch: best.1,
        trace,
    })
}

/// Mean squared error of raw outputs.
pub fn evaluate(params: &Params, set: &[(&PreparedGraph, f64)]) -> Result<f64, GnnError> {
    let graphs: Vec<&PreparedGraph> = set.iter().map(|s| s.0).collect();
    let targets: Vec<f64> = set.iter().map(|s| s.1).collect();
    batch_loss(params, &graphs, &targets, None)
}

/// One labelled design.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub id: String,
    pub graph: CircuitGraph,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    /// In transformed-label units.
    pub best_val_mse: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub test_mse: f64,
    /// `None` when the test truths have no variance.
    pub test_r2: Option<f64>,
    pub trace: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub target_label: RateLabel,
    pub hidden_dim: usize,
    pub label_transform: LabelTransform,
    pub test_ids: Vec<String>,
    pub folds: Vec<FoldResult>,
    pub selected: usize,
}

impl FoldReport {
    pub fn selected_fold(&self) -> &FoldResult {
        &self.folds[self.selected]
    }
}

fn fold_seed(seed: u64, fold: usize) -> u64 {
    crate::designgen::dataset::mix_seed(seed ^ (fold as u64 + 1).wrapping_mul(0xA24B_AED4_963E_E407))
}

/// Test/train/validation split as index lists into the dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub test: Vec<usize>,
    pub folds: Vec<(Vec<usize>, Vec<usize>)>,
}

pub fn split_dataset(n: usize, cfg: &TrainConfig) -> Split {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.rng_seed));
    let n_test = ((n as f64 * cfg.test_fraction).round() as usize).clamp(1, n.saturating_sub(2));
    let (test, rest) = order.split_at(n_test);
    let len = rest.len();
    let folds = if cfg.k_folds >= 2 {
        (0..cfg.k_folds)
            .map(|f| {
                let (lo, hi) = (f * len / cfg.k_folds, (f + 1) * len / cfg.k_folds);
                let val = rest[lo..hi].to_vec();
                let train = rest[..lo].iter().chain(&rest[hi..]).copied().collect();
                (train, val)
            })
            .collect()
    } else {
        let n_val = ((len as f64 * cfg.val_fraction_of_remainder).round() as usize).clamp(1, len - 1);
        vec![(rest[..len - n_val].to_vec(), rest[len - n_val..].to_vec())]
    };
    Split {
        test: test.to_vec(),
        folds,
    }
}

/// k-fold training with a held-out test set. Returns the model of the fold
/// with the lowest validation error and the per-fold report.
pub fn train_kfold(
    dataset: &[TrainSample],
    label: RateLabel,
    cfg: &TrainConfig,
) -> Result<(GcnModel, FoldReport), GnnError> {
    cfg.validate()?;
    if dataset.len() < MIN_DATASET {
        return Err(GnnError::DatasetTooSmall(dataset.len()));
    }
    let transform = cfg.label_transform.unwrap_or_else(|| LabelTransform::default_for(label));
    let vocab = build_vocab(dataset.iter().map(|s| &s.graph));
    let prepared: Vec<PreparedGraph> = dataset
        .iter()
        .map(|s| PreparedGraph::new(&s.graph, &vocab))
        .collect::<Result<_, _>>()?;
    let y: Vec<f64> = dataset.iter().map(|s| transform.apply(s.rate)).collect();
    let split = split_dataset(dataset.len(), cfg);
    let ids = |v: &[usize]| -> Vec<String> { v.iter().map(|&i| dataset[i].id.clone()).collect() };

    let mut folds = Vec::new();
    let mut models = Vec::new();
    for (f, (train_idx, val_idx)) in split.folds.iter().enumerate() {
        let ty: Vec<f64> = train_idx.iter().map(|&i| y[i]).collect();
        let mean = ty.iter().sum::<f64>() / ty.len() as f64;
        let var = ty.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / ty.len() as f64;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        let pairs = |idx: &[usize]| -> Vec<(&PreparedGraph, f64)> {
            idx.iter().map(|&i| (&prepared[i], (y[i] - mean) / std)).collect()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(fold_seed(cfg.rng_seed, f));
        let init = Params::init(vocab.total_dim(), cfg.hidden_dim, &mut rng);
        let out = fit(init, &pairs(train_idx), &pairs(val_idx), cfg, &mut rng)?;
        log::info!(
            "{label} fold {f}: best val {:.4e} at epoch {} of {}",
            out.best_val_loss * std * std,
            out.best_epoch,
            out.trace.len()
        );
        let model = GcnModel {
            params: out.params,
            vocab: vocab.clone(),
            target_label: label,
            label_transform: transform,
            label_mean: mean,
            label_std: std,
        };
        let preds: Vec<f64> = split
            .test
            .iter()
            .map(|&i| model.forward(&prepared[i]))
            .collect::<Result<_, _>>()?;
        let truths: Vec<f64> = split.test.iter().map(|&i| y[i]).collect();
        folds.push(FoldResult {
            fold: f,
            train_ids: ids(train_idx),
            val_ids: ids(val_idx),
            best_val_mse: out.best_val_loss * std * std,
            best_epoch: out.best_epoch,
            epochs_run: out.trace.len(),
            test_mse: mse(&preds, &truths),
            test_r2: r_squared(&preds, &truths).ok(),
            trace: out.trace,
        });
        models.push(model);
    }
    let selected = (0..folds.len())
        .min_by(|&a, &b| folds[a].best_val_mse.total_cmp(&folds[b].best_val_mse))
        .expect("at least one fold");
    let report = FoldReport {
        target_label: label,
        hidden_dim: cfg.hidden_dim,
        label_transform: transform,
        test_ids: ids(&split.test),
        folds,
        selected,
    };
    Ok((models.swap_remove(selected), report))
}

/// Raw network output for each graph, for callers that batch predictions.
pub fn forward_many(params: &Params, graphs: &[&PreparedGraph]) -> Result<Vec<f64>, GnnError> {
    graphs.iter().map(|g| forward_raw(params, g)).collect()
}
