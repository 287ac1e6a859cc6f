//! Embedding classifiers: a one-hidden-layer MLP and a logistic baseline,
//! trained with Adam on binary cross-entropy.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::label::Label;
use crate::metrics::{classification_metrics, ConfusionMatrix, MetricsReport};

pub const FEATURE_DIM: usize = 768;
pub const ARTIFACT_VERSION: u32 = 1;
pub const FINITE_DIFFERENCE_STEP: f64 = 1e-5;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, thiserror::Error)]
pub enum ClassifierError {
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("class {label} has {count} items; at least {needed} required")]
    DegenerateClass { label: Label, count: usize, needed: usize },
    #[error("need at least {needed} items, got {got}")]
    TooFewItems { needed: usize, got: usize },
    #[error("loss became non-finite at epoch {epoch} (batch loss {loss}, max |weight| {max_weight})")]
    NonFiniteLoss { epoch: usize, loss: f64, max_weight: f64 },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("malformed model artifact: {0}")]
    Malformed(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mlp,
    Logistic,
}

impl std::str::FromStr for ModelKind {
    type Err = ClassifierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Ok(ModelKind::Mlp),
            "logistic" | "logreg" => Ok(ModelKind::Logistic),
            other => Err(ClassifierError::InvalidConfig(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { hidden_units: 256, learning_rate: 0.001, epochs: 200, batch_size: 32, seed: 0, l2: 0.0001 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidConfig(m.to_string()));
        if self.hidden_units == 0 {
            return bad("hidden_units must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if self.l2.is_nan() || self.l2 < 0.0 {
            return bad("l2 must be >= 0");
        }
        Ok(())
    }
}

/// One labeled feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub features: Vec<f64>,
    pub label: Label,
}

fn target(label: Label) -> f64 {
    match label {
        Label::Buggy => 1.0,
        Label::NotBuggy => 0.0,
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Cross-entropy of logit `z` against target `y`, computed stably.
fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z
}

/// Weights in one flat vector.
///
/// MLP layout: `w1` (hidden × dim, row-major), `b1` (hidden), `w2`
/// (hidden), `b2`. Logistic layout: `w` (dim), `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub kind: ModelKind,
    pub dim: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
}

impl Network {
    pub fn param_count(kind: ModelKind, dim: usize, hidden: usize) -> usize {
        match kind {
            ModelKind::Mlp => hidden * dim + 2 * hidden + 1,
            ModelKind::Logistic => dim + 1,
        }
    }

    pub fn zeros(kind: ModelKind, dim: usize, hidden: usize) -> Self {
        let hidden = if kind == ModelKind::Logistic { 0 } else { hidden };
        Self { kind, dim, hidden, params: vec![0.0; Self::param_count(kind, dim, hidden)] }
    }

    /// Weights uniform in ±1/sqrt(fan-in), biases zero.
    pub fn init(kind: ModelKind, dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut net = Self::zeros(kind, dim, hidden);
        let (h, d) = (net.hidden, dim);
        match kind {
            ModelKind::Mlp => {
                let r1 = 1.0 / (d as f64).sqrt();
                let r2 = 1.0 / (h as f64).sqrt();
                net.params[..h * d].iter_mut().for_each(|w| *w = rng.gen_range(-r1..r1));
                let w2 = h * d + h;
                net.params[w2..w2 + h].iter_mut().for_each(|w| *w = rng.gen_range(-r2..r2));
            }
            ModelKind::Logistic => {
                let r = 1.0 / (d as f64).sqrt();
                net.params[..d].iter_mut().for_each(|w| *w = rng.gen_range(-r..r));
            }
        }
        net
    }

    /// Whether parameter `k` is a weight (regularized) rather than a bias.
    fn is_weight(&self, k: usize) -> bool {
        let (h, d) = (self.hidden, self.dim);
        match self.kind {
            ModelKind::Mlp => k < h * d || (h * d + h..h * d + 2 * h).contains(&k),
            ModelKind::Logistic => k < d,
        }
    }

    fn hidden_pre(&self, x: &[f64], out: &mut Vec<f64>) {
        let (h, d) = (self.hidden, self.dim);
        out.clear();
        out.extend((0..h).map(|j| {
            let row = &self.params[j * d..(j + 1) * d];
            self.params[h * d + j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        }));
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        let (h, d) = (self.hidden, self.dim);
        match self.kind {
            ModelKind::Logistic => self.params[d] + self.params[..d].iter().zip(x).map(|(w, v)| w * v).sum::<f64>(),
            ModelKind::Mlp => {
                let mut a = Vec::with_capacity(h);
                self.hidden_pre(x, &mut a);
                let w2 = &self.params[h * d + h..h * d + 2 * h];
                self.params[h * d + 2 * h] + a.iter().zip(w2).map(|(a, w)| a.max(0.0) * w).sum::<f64>()
            }
        }
    }

    /// Add `scale · ∂loss/∂params` for one example to `grad`; returns the
    /// unregularized loss.
    fn accumulate(&self, x: &[f64], y: f64, scale: f64, grad: &mut [f64], buf: &mut Vec<f64>) -> f64 {
        let (h, d) = (self.hidden, self.dim);
        match self.kind {
            ModelKind::Logistic => {
                let z = self.logit(x);
                let dz = (sigmoid(z) - y) * scale;
                for (g, v) in grad[..d].iter_mut().zip(x) {
                    *g += dz * v;
                }
                grad[d] += dz;
                bce_with_logit(z, y)
            }
            ModelKind::Mlp => {
                self.hidden_pre(x, buf);
                let w2_at = h * d + h;
                let z = self.params[w2_at + h]
                    + buf.iter().zip(&self.params[w2_at..w2_at + h]).map(|(a, w)| a.max(0.0) * w).sum::<f64>();
                let dz = (sigmoid(z) - y) * scale;
                grad[w2_at + h] += dz;
                for j in 0..h {
                    let a = buf[j];
                    grad[w2_at + j] += dz * a.max(0.0);
                    if a > 0.0 {
                        let da = dz * self.params[w2_at + j];
                        grad[h * d + j] += da;
                        for (g, v) in grad[j * d..(j + 1) * d].iter_mut().zip(x) {
                            *g += da * v;
                        }
                    }
                }
                bce_with_logit(z, y)
            }
        }
    }

    /// Mean cross-entropy over `batch` plus `l2/2 · ‖weights‖²`, with its
    /// gradient.
    pub fn loss_and_gradient(&self, batch: &[(&[f64], f64)], l2: f64) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let mut buf = Vec::with_capacity(self.hidden);
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for (x, y) in batch {
            loss += self.accumulate(x, *y, scale, &mut grad, &mut buf) * scale;
        }
        if l2 > 0.0 {
            for (k, (g, w)) in grad.iter_mut().zip(&self.params).enumerate() {
                if self.is_weight(k) {
                    *g += l2 * w;
                    loss += 0.5 * l2 * w * w;
                }
            }
        }
        (loss, grad)
    }

    pub fn loss(&self, batch: &[(&[f64], f64)], l2: f64) -> f64 {
        let mut loss = batch.iter().map(|(x, y)| bce_with_logit(self.logit(x), *y)).sum::<f64>() / batch.len() as f64;
        if l2 > 0.0 {
            loss += self
                .params
                .iter()
                .enumerate()
                .filter(|(k, _)| self.is_weight(*k))
                .map(|(_, w)| 0.5 * l2 * w * w)
                .sum::<f64>();
        }
        loss
    }
}

/// Trained model plus everything needed to score new vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub version: u32,
    pub kind: ModelKind,
    pub feature_dim: usize,
    pub hidden_units: usize,
    pub classes: [Label; 2],
    pub train_config: TrainConfig,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub params: Vec<f64>,
}

impl ModelArtifact {
    /// Untrained model with all weights zero and identity scaling.
    pub fn zeros(kind: ModelKind, cfg: &TrainConfig) -> Self {
        let net = Network::zeros(kind, FEATURE_DIM, cfg.hidden_units);
        Self::from_network(net, cfg.clone(), vec![0.0; FEATURE_DIM], vec![1.0; FEATURE_DIM])
    }

    fn from_network(net: Network, train_config: TrainConfig, feature_mean: Vec<f64>, feature_scale: Vec<f64>) -> Self {
        Self {
            version: ARTIFACT_VERSION,
            kind: net.kind,
            feature_dim: net.dim,
            hidden_units: net.hidden,
            classes: [Label::Buggy, Label::NotBuggy],
            train_config,
            feature_mean,
            feature_scale,
            params: net.params,
        }
    }

    pub fn network(&self) -> Network {
        Network { kind: self.kind, dim: self.feature_dim, hidden: self.hidden_units, params: self.params.clone() }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        let expect = Network::param_count(self.kind, self.feature_dim, self.hidden_units);
        let bad = |m: String| Err(ClassifierError::Malformed(m));
        if self.version != ARTIFACT_VERSION {
            return bad(format!("unsupported artifact version {}", self.version));
        }
        if self.params.len() != expect {
            return bad(format!("{} parameters, expected {expect}", self.params.len()));
        }
        if self.feature_mean.len() != self.feature_dim || self.feature_scale.len() != self.feature_dim {
            return bad("scaling vectors do not match feature_dim".into());
        }
        if self.kind == ModelKind::Logistic && self.hidden_units != 0 {
            return bad("logistic model with hidden units".into());
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        let text = serde_json::to_string(self).map_err(|e| ClassifierError::Malformed(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        let text = std::fs::read_to_string(path)?;
        let model: Self = serde_json::from_str(&text).map_err(|e| ClassifierError::Malformed(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.feature_mean).zip(&self.feature_scale).map(|((v, m), s)| (v - m) / s).collect()
    }
}

/// Score in [0, 1]; `Buggy` iff score ≥ 0.5.
pub fn predict(model: &ModelArtifact, vector: &[f64]) -> Result<(Label, f64), ClassifierError> {
    if vector.len() != model.feature_dim {
        return Err(ClassifierError::DimensionMismatch { expected: model.feature_dim, got: vector.len() });
    }
    let net = model.network();
    let score = sigmoid(net.logit(&model.standardize(vector)));
    let label = if score >= 0.5 { Label::Buggy } else { Label::NotBuggy };
    Ok((label, score))
}

fn check_dims(items: &[Sample]) -> Result<(), ClassifierError> {
    match items.iter().find(|s| s.features.len() != FEATURE_DIM) {
        Some(s) => Err(ClassifierError::DimensionMismatch { expected: FEATURE_DIM, got: s.features.len() }),
        None => Ok(()),
    }
}

fn class_counts(items: &[Sample]) -> (usize, usize) {
    let buggy = items.iter().filter(|s| s.label == Label::Buggy).count();
    (buggy, items.len() - buggy)
}

/// Per-dimension mean and standard deviation; constant dimensions get
/// scale 1.
fn fit_scaler(items: &[Sample]) -> (Vec<f64>, Vec<f64>) {
    let n = items.len() as f64;
    let mut mean = vec![0.0; FEATURE_DIM];
    for s in items {
        for (m, v) in mean.iter_mut().zip(&s.features) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; FEATURE_DIM];
    for s in items {
        for ((acc, v), m) in var.iter_mut().zip(&s.features).zip(&mean) {
            *acc += (v - m) * (v - m);
        }
    }
    let scale = var
        .iter()
        .map(|v| {
            let sd = (v / n).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

/// Train one model. Deterministic given data, config and seed.
pub fn train(items: &[Sample], cfg: &TrainConfig, kind: ModelKind) -> Result<ModelArtifact, ClassifierError> {
    cfg.validate()?;
    check_dims(items)?;
    let (buggy, notbuggy) = class_counts(items);
    for (label, count) in [(Label::Buggy, buggy), (Label::NotBuggy, notbuggy)] {
        if count == 0 {
            return Err(ClassifierError::DegenerateClass { label, count, needed: 1 });
        }
    }

    let (mean, scale) = fit_scaler(items);
    let xs: Vec<Vec<f64>> = items
        .iter()
        .map(|s| s.features.iter().zip(&mean).zip(&scale).map(|((v, m), sd)| (v - m) / sd).collect())
        .collect();
    let ys: Vec<f64> = items.iter().map(|s| target(s.label)).collect();

    let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed);
    let mut net = Network::init(kind, FEATURE_DIM, cfg.hidden_units, &mut rng);
    let mut m = vec![0.0; net.params.len()];
    let mut v = vec![0.0; net.params.len()];
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut step = 0i32;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&[f64], f64)> = chunk.iter().map(|&i| (xs[i].as_slice(), ys[i])).collect();
            let (loss, grad) = net.loss_and_gradient(&batch, cfg.l2);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                let max_weight = net.params.iter().fold(0.0f64, |a, w| a.max(w.abs()));
                return Err(ClassifierError::NonFiniteLoss { epoch, loss, max_weight });
            }
            step += 1;
            let c1 = 1.0 - ADAM_BETA1.powi(step);
            let c2 = 1.0 - ADAM_BETA2.powi(step);
            for k in 0..net.params.len() {
                let g = grad[k];
                m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * g;
                v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * g * g;
                net.params[k] -= cfg.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + ADAM_EPS);
            }
        }
    }
    tracing::debug!(?kind, n = items.len(), "training finished");
    Ok(ModelArtifact::from_network(net, cfg.clone(), mean, scale))
}

/// Stratified split into (train, test) indices, both ascending.
///
/// The train size is `floor(fraction · n)`; it is shared between classes
/// in proportion to their sizes using largest remainders. Shuffling is
/// seeded per class.
pub fn split_indices(
    labels: &[Label],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), ClassifierError> {
    if labels.is_empty() {
        return Err(ClassifierError::TooFewItems { needed: 1, got: 0 });
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(ClassifierError::InvalidConfig(format!("train fraction {train_fraction} not in (0, 1)")));
    }
    let n = labels.len();
    let total = (train_fraction * n as f64).floor() as usize;
    let mut groups: Vec<(Label, Vec<usize>)> = [Label::Buggy, Label::NotBuggy]
        .into_iter()
        .map(|l| (l, (0..n).filter(|&i| labels[i] == l).collect::<Vec<_>>()))
        .collect();
    for (label, idx) in &groups {
        if idx.len() < 2 {
            return Err(ClassifierError::DegenerateClass { label: *label, count: idx.len(), needed: 2 });
        }
    }

    let exact: Vec<f64> = groups.iter().map(|(_, idx)| total as f64 * idx.len() as f64 / n as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut by_remainder: Vec<usize> = (0..groups.len()).collect();
    by_remainder
        .sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let mut missing = total - quota.iter().sum::<usize>();
    for g in by_remainder.into_iter().cycle().take(2 * groups.len()) {
        if missing == 0 {
            break;
        }
        if quota[g] < groups[g].1.len() {
            quota[g] += 1;
            missing -= 1;
        }
    }

    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for ((_, idx), q) in groups.iter_mut().zip(quota) {
        idx.shuffle(&mut rng);
        train.extend_from_slice(&idx[..q]);
        test.extend_from_slice(&idx[q..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split_dataset(
    items: &[Sample],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<Sample>, Vec<Sample>), ClassifierError> {
    let labels: Vec<Label> = items.iter().map(|s| s.label).collect();
    let (train, test) = split_indices(&labels, train_fraction, seed)?;
    Ok((train.into_iter().map(|i| items[i].clone()).collect(), test.into_iter().map(|i| items[i].clone()).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub truth: Label,
    pub predicted: Label,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: String,
    pub model_kind: ModelKind,
    pub n: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
    pub predictions: Vec<Prediction>,
}

fn report(protocol: &str, kind: ModelKind, predictions: Vec<Prediction>) -> EvalReport {
    let mut cm = ConfusionMatrix::default();
    for p in &predictions {
        cm.record(p.predicted, p.truth, Label::Buggy);
    }
    EvalReport {
        protocol: protocol.to_string(),
        model_kind: kind,
        n: predictions.len(),
        metrics: classification_metrics(&cm, 0),
        confusion: cm,
        predictions,
    }
}

pub fn evaluate_model(model: &ModelArtifact, test: &[Sample]) -> Result<EvalReport, ClassifierError> {
    let predictions = test
        .iter()
        .map(|s| {
            let (predicted, score) = predict(model, &s.features)?;
            Ok(Prediction { id: s.id.clone(), truth: s.label, predicted, score })
        })
        .collect::<Result<Vec<_>, ClassifierError>>()?;
    Ok(report("holdout", model.kind, predictions))
}

/// Train on `train`, score on `test`.
pub fn evaluate_holdout(
    train_items: &[Sample],
    test: &[Sample],
    cfg: &TrainConfig,
    kind: ModelKind,
) -> Result<(ModelArtifact, EvalReport), ClassifierError> {
    let model = train(train_items, cfg, kind)?;
    let report = evaluate_model(&model, test)?;
    Ok((model, report))
}

/// Leave-one-out: n rounds, each holding out one item. Rounds are
/// independent and may run in parallel; results are aggregated in index
/// order.
pub fn evaluate_loo(
    items: &[Sample],
    cfg: &TrainConfig,
    kind: ModelKind,
    exec: Exec,
) -> Result<EvalReport, ClassifierError> {
    if items.len() < 3 {
        return Err(ClassifierError::TooFewItems { needed: 3, got: items.len() });
    }
    cfg.validate()?;
    check_dims(items)?;
    let rounds = exec.map_range(items.len(), |held| {
        let rest: Vec<Sample> = items.iter().enumerate().filter(|(i, _)| *i != held).map(|(_, s)| s.clone()).collect();
        let model = train(&rest, cfg, kind)?;
        let (predicted, score) = predict(&model, &items[held].features)?;
        Ok(Prediction { id: items[held].id.clone(), truth: items[held].label, predicted, score })
    });
    let predictions = rounds.into_iter().collect::<Result<Vec<_>, ClassifierError>>()?;
    Ok(report("loo", kind, predictions))
}

/// Max relative error between the analytic gradient and central finite
/// differences, over a seeded subset of at least 50 coordinates (all of
/// them when the model is smaller). Relative error uses
/// `max(|analytic| + |numeric|, 1e-4)` as denominator so coordinates whose
/// true gradient is zero do not amplify rounding noise.
pub fn gradient_check(kind: ModelKind, sample: (&[f64], Label), cfg: &TrainConfig) -> f64 {
    let (x, label) = sample;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed);
    let mut net = Network::init(kind, x.len(), cfg.hidden_units, &mut rng);
    // Move biases off zero so the check is not at a special point.
    for k in 0..net.params.len() {
        if !net.is_weight(k) {
            net.params[k] = rng.gen_range(-0.1..0.1);
        }
    }
    let batch = [(x, target(label))];
    let (_, analytic) = net.loss_and_gradient(&batch, cfg.l2);
    let count = net.params.len().min(64);
    let coords = rand::seq::index::sample(&mut rng, net.params.len(), count).into_vec();
    let h = FINITE_DIFFERENCE_STEP;
    let mut worst = 0.0f64;
    for k in coords {
        let orig = net.params[k];
        net.params[k] = orig + h;
        let up = net.loss(&batch, cfg.l2);
        net.params[k] = orig - h;
        let down = net.loss(&batch, cfg.l2);
        net.params[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        let err = (analytic[k] - numeric).abs() / (analytic[k].abs() + numeric.abs()).max(1e-4);
        worst = worst.max(err);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lift(id: usize, xy: [f64; 2], label: Label) -> Sample {
        let mut features = vec![0.0; FEATURE_DIM];
        features[0] = xy[0];
        features[1] = xy[1];
        Sample { id: format!("s{id}"), features, label }
    }

    fn separable(n: usize, seed: u64) -> Vec<Sample> {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Buggy } else { Label::NotBuggy };
                let shift = if label == Label::Buggy { 2.0 } else { -2.0 };
                lift(i, [shift + rng.gen_range(-1.0..1.0), rng.gen_range(-3.0..3.0)], label)
            })
            .collect()
    }

    fn xor() -> Vec<Sample> {
        let pts = [
            ([0.0, 0.0], Label::NotBuggy),
            ([1.0, 1.0], Label::NotBuggy),
            ([0.0, 1.0], Label::Buggy),
            ([1.0, 0.0], Label::Buggy),
        ];
        (0..32).map(|i| lift(i, pts[i % 4].0, pts[i % 4].1)).collect()
    }

    fn accuracy(model: &ModelArtifact, items: &[Sample]) -> f64 {
        evaluate_model(model, items).unwrap().metrics.accuracy
    }

    fn small(hidden: usize) -> TrainConfig {
        TrainConfig { hidden_units: hidden, ..TrainConfig::default() }
    }

    #[test]
    fn logistic_fits_separable_set() {
        let data = separable(40, 1);
        let model = train(&data, &TrainConfig::default(), ModelKind::Logistic).unwrap();
        assert_eq!(accuracy(&model, &data), 1.0);
    }

    #[test]
    fn mlp_fits_xor_logistic_cannot() {
        let data = xor();
        let cfg = TrainConfig { hidden_units: 16, learning_rate: 0.01, ..TrainConfig::default() };
        let mlp = train(&data, &cfg, ModelKind::Mlp).unwrap();
        assert_eq!(accuracy(&mlp, &data), 1.0);
        let lr = train(&data, &cfg, ModelKind::Logistic).unwrap();
        assert!(accuracy(&lr, &data) <= 0.75);
    }

    #[test]
    fn training_is_bit_reproducible_and_artifact_round_trips() {
        let data = separable(20, 3);
        let a = train(&data, &small(8), ModelKind::Mlp).unwrap();
        let b = train(&data, &small(8), ModelKind::Mlp).unwrap();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        a.save(&path).unwrap();
        let back = ModelArtifact::load(&path).unwrap();
        assert!(a.params.iter().zip(&back.params).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(a, back);
    }

    #[test]
    fn zero_model_predicts_boundary() {
        let model = ModelArtifact::zeros(ModelKind::Mlp, &small(4));
        let (label, score) = predict(&model, &vec![3.0; FEATURE_DIM]).unwrap();
        assert_eq!(score, 0.5);
        assert_eq!(label, Label::Buggy);
        assert!(matches!(
            predict(&model, &[1.0, 2.0]),
            Err(ClassifierError::DimensionMismatch { expected: 768, got: 2 })
        ));
    }

    #[test]
    fn stratified_split_sizes() {
        let labels: Vec<Label> = (0..10).map(|i| if i < 5 { Label::Buggy } else { Label::NotBuggy }).collect();
        let (train, test) = split_indices(&labels, 0.8, 9).unwrap();
        assert_eq!(train.iter().filter(|&&i| labels[i] == Label::Buggy).count(), 4);
        assert_eq!(train.iter().filter(|&&i| labels[i] == Label::NotBuggy).count(), 4);
        assert_eq!(test.len(), 2);
        assert_eq!(split_indices(&labels, 0.8, 9).unwrap(), (train.clone(), test.clone()));

        let big: Vec<Label> = (0..1764).map(|i| if i % 3 == 0 { Label::Buggy } else { Label::NotBuggy }).collect();
        let (train, test) = split_indices(&big, 0.8, 1).unwrap();
        assert_eq!((train.len(), test.len()), (1411, 353));
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1764).collect::<Vec<_>>());

        let lonely = [Label::Buggy, Label::NotBuggy, Label::NotBuggy];
        assert!(matches!(split_indices(&lonely, 0.8, 0), Err(ClassifierError::DegenerateClass { .. })));
    }

    #[test]
    fn loo_on_trivial_and_small_sets() {
        let data = vec![
            lift(0, [5.0, 0.0], Label::Buggy),
            lift(1, [6.0, 0.0], Label::Buggy),
            lift(2, [-5.0, 0.0], Label::NotBuggy),
            lift(3, [-6.0, 0.0], Label::NotBuggy),
        ];
        let r = evaluate_loo(&data[..3], &TrainConfig::default(), ModelKind::Logistic, Exec::Parallel);
        // Holding out the lone NotBuggy item leaves a single class.
        assert!(matches!(r, Err(ClassifierError::DegenerateClass { .. })));
        let r = evaluate_loo(&data, &TrainConfig::default(), ModelKind::Logistic, Exec::Parallel).unwrap();
        assert_eq!(r.confusion.total(), 4);
        assert_eq!(r.metrics.accuracy, 1.0);
        assert!(matches!(
            evaluate_loo(&data[..2], &TrainConfig::default(), ModelKind::Logistic, Exec::Sequential),
            Err(ClassifierError::TooFewItems { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn loo_modes_agree() {
        let data = separable(12, 5);
        let cfg = TrainConfig { epochs: 20, ..small(4) };
        let a = evaluate_loo(&data, &cfg, ModelKind::Mlp, Exec::Sequential).unwrap();
        let b = evaluate_loo(&data, &cfg, ModelKind::Mlp, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
        let x: Vec<f64> = (0..FEATURE_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect();
        assert!(gradient_check(ModelKind::Logistic, (&x, Label::Buggy), &TrainConfig::default()) <= 1e-6);
        assert!(gradient_check(ModelKind::Mlp, (&x, Label::NotBuggy), &small(32)) <= 1e-4);
    }

    #[test]
    fn zero_input_gives_zero_weight_gradient() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(2);
        let net = Network::init(ModelKind::Logistic, FEATURE_DIM, 0, &mut rng);
        let x = vec![0.0; FEATURE_DIM];
        let (_, grad) = net.loss_and_gradient(&[(&x, 1.0)], 0.0);
        assert!(grad[..FEATURE_DIM].iter().all(|g| *g == 0.0));
        assert!(grad[FEATURE_DIM] != 0.0);
    }

    #[test]
    fn bad_inputs() {
        let data = separable(6, 0);
        let one_class: Vec<Sample> = data.iter().filter(|s| s.label == Label::Buggy).cloned().collect();
        assert!(matches!(train(&one_class, &small(4), ModelKind::Mlp), Err(ClassifierError::DegenerateClass { .. })));
        let mut short = data.clone();
        short[0].features.pop();
        assert!(matches!(train(&short, &small(4), ModelKind::Mlp), Err(ClassifierError::DimensionMismatch { .. })));
        let mut huge = data;
        huge[0].features[0] = f64::NAN;
        assert!(matches!(train(&huge, &small(4), ModelKind::Logistic), Err(ClassifierError::NonFiniteLoss { .. })));
    }
}
