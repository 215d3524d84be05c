//! A linear next-frame box forecaster trained with trend-aware weights.
//!
//! Inputs are the previous and current boxes of an object in center-size
//! form, divided by the image width/height, plus a bias term. The model
//! predicts the offset from the current box to the next one, so
//! `next = cur + W x`. The regression loss is the L1 distance on these
//! normalized parameters.

use std::collections::HashMap;

use nalgebra::{SMatrix, SVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Triplet;
use crate::geometry::{BBox, GroundTruthBox};
use crate::rng::{rng_from_seed, Rng};
use crate::trend_loss::{matching_iou, normalize_weights, trend_factor, NormalizationScope, TrendConfig, TrendError};

pub const INPUTS: usize = 9;
pub const OUTPUTS: usize = 4;

pub type Weights = [[f64; INPUTS]; OUTPUTS];

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no object has a previous/current/next chain; nothing to train on")]
    EmptyTrainingSet,
    #[error("learning rate must be positive and finite, got {0}")]
    LearningRate(f64),
    #[error(transparent)]
    Trend(#[from] TrendError),
    #[error("model file: {0}")]
    Model(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearForecaster {
    pub weights: Weights,
}

/// `[cx / W, cy / H, w / W, h / H]`.
pub fn normalize_box(b: &BBox, image_size: (u32, u32)) -> [f64; 4] {
    let (iw, ih) = (image_size.0 as f64, image_size.1 as f64);
    let c = b.to_center_size();
    [c[0] / iw, c[1] / ih, c[2] / iw, c[3] / ih]
}

pub fn denormalize_box(p: [f64; 4], image_size: (u32, u32)) -> [f64; 4] {
    let (iw, ih) = (image_size.0 as f64, image_size.1 as f64);
    [p[0] * iw, p[1] * ih, p[2] * iw, p[3] * ih]
}

pub fn features(prev: [f64; 4], cur: [f64; 4]) -> [f64; INPUTS] {
    [prev[0], prev[1], prev[2], prev[3], cur[0], cur[1], cur[2], cur[3], 1.0]
}

impl LinearForecaster {
    pub fn zeros() -> Self {
        Self { weights: [[0.0; INPUTS]; OUTPUTS] }
    }

    /// The constant-velocity extrapolator `next = 2 cur - prev`.
    pub fn constant_velocity() -> Self {
        let mut w = [[0.0; INPUTS]; OUTPUTS];
        for (c, row) in w.iter_mut().enumerate() {
            row[c] = -1.0;
            row[c + 4] = 1.0;
        }
        Self { weights: w }
    }

    pub fn random(seed: u64, scale: f64) -> Self {
        let mut rng = rng_from_seed(seed);
        let mut w = [[0.0; INPUTS]; OUTPUTS];
        for v in w.iter_mut().flatten() {
            *v = scale * (2.0 * rng.random::<f64>() - 1.0);
        }
        Self { weights: w }
    }

    /// Normalized next-box prediction.
    pub fn predict(&self, x: &[f64; INPUTS], cur: &[f64; 4]) -> [f64; 4] {
        let mut out = *cur;
        for (c, row) in self.weights.iter().enumerate() {
            out[c] += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        out
    }

    /// Next-frame box in pixels; `None` if the predicted size is not positive.
    pub fn forecast_box(&self, prev: &BBox, cur: &BBox, image_size: (u32, u32)) -> Option<BBox> {
        let p = normalize_box(prev, image_size);
        let c = normalize_box(cur, image_size);
        let out = denormalize_box(self.predict(&features(p, c), &c), image_size);
        super::kalman::center_size_box(out)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().flatten().all(|v| v.is_finite())
    }
}

/// Model file: row-major weights plus metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub metadata: ModelMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMetadata {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub tal_enabled: bool,
    pub tau: f64,
    pub nu: f64,
    pub final_loss: f64,
}

pub const MODEL_FORMAT: &str = "linear-forecaster/v1";

impl ModelFile {
    pub fn new(model: &LinearForecaster, metadata: ModelMetadata) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            rows: OUTPUTS,
            cols: INPUTS,
            weights: model.weights.iter().flatten().copied().collect(),
            metadata,
        }
    }

    pub fn model(&self) -> Result<LinearForecaster, TrainError> {
        if self.format != MODEL_FORMAT {
            return Err(TrainError::Model(format!("unknown format {:?}", self.format)));
        }
        if self.rows != OUTPUTS || self.cols != INPUTS || self.weights.len() != OUTPUTS * INPUTS {
            return Err(TrainError::Model(format!("expected {OUTPUTS}x{INPUTS} weights")));
        }
        let mut w = [[0.0; INPUTS]; OUTPUTS];
        for (i, v) in self.weights.iter().enumerate() {
            w[i / INPUTS][i % INPUTS] = *v;
        }
        let m = LinearForecaster { weights: w };
        if !m.is_finite() {
            return Err(TrainError::Model("non-finite weights".into()));
        }
        Ok(m)
    }
}

// ---------------------------------------------------------------------------
// Samples and loss

/// One object with a full previous/current/next chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub x: [f64; INPUTS],
    pub cur: [f64; 4],
    pub target: [f64; 4],
    /// Matching IoU of the target box against the current frame.
    pub m_iou: f64,
    /// Supervision frame this sample belongs to (normalization group).
    pub group: usize,
}

/// Extracts samples by aligning track ids across each triplet. Objects
/// without a track id, or missing from one of the three frames, are skipped;
/// the matching IoU is still computed against every current-frame box.
pub fn samples_from_triplets(triplets: &[Triplet<'_>]) -> Vec<Sample> {
    let mut out = Vec::new();
    for (group, t) in triplets.iter().enumerate() {
        let by_track = |gts: &[GroundTruthBox]| -> HashMap<u64, BBox> {
            gts.iter().filter_map(|g| g.track_id.map(|id| (id, g.bbox))).collect()
        };
        let prev = by_track(&t.prev.gt);
        let cur = by_track(&t.cur.gt);
        let m = matching_iou(t.target_gt, &t.cur.gt);
        for (g, m_iou) in t.target_gt.iter().zip(m) {
            let Some(id) = g.track_id else { continue };
            let (Some(p), Some(c)) = (prev.get(&id), cur.get(&id)) else { continue };
            let pn = normalize_box(p, t.prev.image_size);
            let cn = normalize_box(c, t.cur.image_size);
            out.push(Sample {
                x: features(pn, cn),
                cur: cn,
                target: normalize_box(&g.bbox, t.cur.image_size),
                m_iou,
                group,
            });
        }
    }
    out
}

fn residuals(model: &LinearForecaster, s: &Sample) -> [f64; 4] {
    let p = model.predict(&s.x, &s.cur);
    [p[0] - s.target[0], p[1] - s.target[1], p[2] - s.target[2], p[3] - s.target[3]]
}

/// Per-object L1 regression loss.
pub fn object_losses(model: &LinearForecaster, samples: &[Sample]) -> Vec<f64> {
    samples.iter().map(|s| residuals(model, s).iter().map(|r| r.abs()).sum()).collect()
}

/// `(1/N) sum_i w_i L_i`.
pub fn weighted_loss(model: &LinearForecaster, samples: &[Sample], weights: &[f64]) -> f64 {
    let l = object_losses(model, samples);
    l.iter().zip(weights).map(|(l, w)| l * w).sum::<f64>() / samples.len() as f64
}

/// Gradient of [`weighted_loss`] with the weights held constant.
pub fn weighted_gradient(model: &LinearForecaster, samples: &[Sample], weights: &[f64]) -> Weights {
    let mut g = [[0.0; INPUTS]; OUTPUTS];
    let n = samples.len() as f64;
    for (s, &w) in samples.iter().zip(weights) {
        let r = residuals(model, s);
        for (c, row) in g.iter_mut().enumerate() {
            let k = w * sign(r[c]) / n;
            for (gi, xi) in row.iter_mut().zip(&s.x) {
                *gi += k * xi;
            }
        }
    }
    g
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Residuals at most this large count as sitting on a kink of |r|.
const ACTIVE_RESIDUAL: f64 = 1e-10;

/// Coordinate-descent sweeps for the min-norm subgradient.
const MIN_NORM_SWEEPS: usize = 200;

/// Minimum-norm subgradient of the weighted L1 loss; its negation is the
/// steepest descent direction.
///
/// Per output row, a sample whose residual sits on a kink may contribute any
/// multiple in `[-w/N, w/N]` of its input. The multiples are chosen by
/// coordinate descent on the squared norm of the total. When the result is
/// nonzero, moving against it strictly lowers the loss; a plain subgradient
/// step would instead push kinked residuals back and forth and stall.
pub fn descent_direction(model: &LinearForecaster, samples: &[Sample], weights: &[f64]) -> Weights {
    let n = samples.len() as f64;
    let res: Vec<[f64; 4]> = samples.iter().map(|s| residuals(model, s)).collect();
    let mut out = [[0.0; INPUTS]; OUTPUTS];
    for (c, row) in out.iter_mut().enumerate() {
        let mut kinked: Vec<(&[f64; INPUTS], f64, f64)> = Vec::new();
        for ((s, r), &w) in samples.iter().zip(&res).zip(weights) {
            if r[c].abs() <= ACTIVE_RESIDUAL {
                let xx = dot(&s.x, &s.x);
                if xx > 0.0 {
                    kinked.push((&s.x, w / n, xx));
                }
            } else {
                let k = w * sign(r[c]) / n;
                row.iter_mut().zip(&s.x).for_each(|(gi, xi)| *gi += k * xi);
            }
        }
        let mut coef = vec![0.0; kinked.len()];
        for _ in 0..MIN_NORM_SWEEPS {
            let mut moved: f64 = 0.0;
            for ((x, bound, xx), k) in kinked.iter().zip(coef.iter_mut()) {
                let next = (*k - dot(row, x) / xx).clamp(-bound, *bound);
                let delta = next - *k;
                if delta != 0.0 {
                    row.iter_mut().zip(x.iter()).for_each(|(gi, xi)| *gi += delta * xi);
                    *k = next;
                    moved = moved.max(delta.abs() / bound);
                }
            }
            if moved < 1e-12 {
                break;
            }
        }
    }
    out
}

/// Minimizer over `t >= 0` of the weighted L1 loss at `W - t dir`.
///
/// The loss is convex and piecewise linear in `t`, with a kink where each
/// residual crosses zero; its minimizer is the weighted median of those
/// crossings, each weighted by its slope contribution.
pub fn line_minimizer(model: &LinearForecaster, samples: &[Sample], weights: &[f64], dir: &Weights) -> f64 {
    let mut kinks: Vec<(f64, f64)> = Vec::new();
    for (s, &w) in samples.iter().zip(weights) {
        let r = residuals(model, s);
        for c in 0..OUTPUTS {
            let a = dot(&dir[c], &s.x);
            if a != 0.0 {
                kinks.push((r[c] / a, w * a.abs()));
            }
        }
    }
    let total: f64 = kinks.iter().map(|k| k.1).sum();
    if total == 0.0 {
        return 0.0;
    }
    kinks.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = 0.0;
    for (t, wt) in kinks {
        acc += wt;
        if acc >= 0.5 * total {
            return t.max(0.0);
        }
    }
    0.0
}

fn dot(a: &[f64; INPUTS], b: &[f64; INPUTS]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Trend weights per sample: `omega` from each sample's matching IoU,
/// rescaled to preserve the loss sum within each normalization group.
pub fn sample_trend_weights(
    samples: &[Sample],
    losses: &[f64],
    cfg: &TrendConfig,
    scope: NormalizationScope,
) -> Result<Vec<f64>, TrendError> {
    let omegas: Vec<f64> = samples.iter().map(|s| trend_factor(s.m_iou, cfg)).collect();
    match scope {
        NormalizationScope::PerBatch => normalize_weights(&omegas, losses),
        NormalizationScope::PerImage => {
            let mut out = vec![0.0; samples.len()];
            let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
            for (i, s) in samples.iter().enumerate() {
                match groups.last_mut() {
                    Some((g, idx)) if *g == s.group => idx.push(i),
                    _ => groups.push((s.group, vec![i])),
                }
            }
            for (_, idx) in groups {
                let w: Vec<f64> = idx.iter().map(|&i| omegas[i]).collect();
                let l: Vec<f64> = idx.iter().map(|&i| losses[i]).collect();
                for (&i, v) in idx.iter().zip(normalize_weights(&w, &l)?) {
                    out[i] = v;
                }
            }
            Ok(out)
        }
    }
}

// ---------------------------------------------------------------------------
// Training

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub tal_enabled: bool,
    pub trend: TrendConfig,
    pub normalization: NormalizationScope,
    /// Half-width of the uniform initial weights.
    pub init_scale: f64,
    /// Step halvings tried before an epoch leaves the weights unchanged.
    pub max_backoff: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 300,
            seed: 0,
            tal_enabled: true,
            trend: TrendConfig::default(),
            normalization: NormalizationScope::PerImage,
            init_scale: 0.01,
            max_backoff: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean weighted L1 with this epoch's weights, before and after the
    /// update.
    pub loss_before: f64,
    pub loss: f64,
    /// Unweighted mean L1 after the update.
    pub mean_l1: f64,
    /// Mean normalized weight of fast / slow objects in this epoch.
    pub mean_w_fast: Option<f64>,
    pub mean_w_slow: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Objects with matching IoU strictly below this are "fast".
    pub fast_miou_split: f64,
    pub samples: usize,
}

/// Median matching IoU; the fast/slow split used in logs and evaluation.
pub fn miou_median(samples: &[Sample]) -> f64 {
    let mut m: Vec<f64> = samples.iter().map(|s| s.m_iou).collect();
    if m.is_empty() {
        return 0.0;
    }
    m.sort_by(f64::total_cmp);
    let n = m.len();
    if n % 2 == 1 {
        m[n / 2]
    } else {
        0.5 * (m[n / 2 - 1] + m[n / 2])
    }
}

fn mean_where(values: &[f64], keep: impl Fn(usize) -> bool) -> Option<f64> {
    let (s, n) = values.iter().enumerate().filter(|(i, _)| keep(*i)).fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn step(model: &LinearForecaster, grad: &Weights, lr: f64) -> LinearForecaster {
    let mut w = model.weights;
    for (row, grow) in w.iter_mut().zip(grad) {
        for (v, g) in row.iter_mut().zip(grow) {
            *v -= lr * g;
        }
    }
    LinearForecaster { weights: w }
}

/// Full-batch gradient descent on the mean (optionally trend-weighted) L1
/// loss.
///
/// Inputs are whitened with the inverse square root of their second-moment
/// matrix before optimizing, which is preconditioned descent in the original
/// weights; the previous and current boxes are nearly collinear and plain
/// descent crawls along the velocity directions.
///
/// Each epoch recomputes the per-object weights from the current losses and
/// freezes them, then moves along [`descent_direction`] of the frozen-weight
/// loss. The step is the exact minimizer along that line, capped so the
/// weights move at most `learning_rate` in Frobenius norm. A step that does
/// not lower the frozen-weight loss is halved up to `max_backoff` times,
/// after which the epoch leaves the model unchanged; hence `loss <=
/// loss_before` in every epoch, and with uniform weights the loss is
/// non-increasing across epochs.
pub fn train_linear_forecaster(
    triplets: &[Triplet<'_>],
    cfg: &TrainConfig,
) -> Result<(LinearForecaster, TrainLog), TrainError> {
    let samples = samples_from_triplets(triplets);
    train_on_samples(&samples, cfg)
}

pub fn train_on_samples(samples: &[Sample], cfg: &TrainConfig) -> Result<(LinearForecaster, TrainLog), TrainError> {
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate > 0.0) {
        return Err(TrainError::LearningRate(cfg.learning_rate));
    }
    cfg.trend.validate()?;
    if samples.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let split = miou_median(samples);
    let is_fast = |i: usize| samples[i].m_iou < split;

    // Optimize V over whitened inputs T x; the model is W = V T.
    let white = Whitening::fit(samples);
    let whitened: Vec<Sample> = samples.iter().map(|s| Sample { x: white.apply(&s.x), ..*s }).collect();
    let samples = whitened.as_slice();

    let weights_for = |model: &LinearForecaster| -> Result<Vec<f64>, TrendError> {
        if cfg.tal_enabled {
            let losses = object_losses(model, samples);
            sample_trend_weights(samples, &losses, &cfg.trend, cfg.normalization)
        } else {
            Ok(vec![1.0; samples.len()])
        }
    };

    let init = LinearForecaster::random(cfg.seed, cfg.init_scale);
    let mut model = LinearForecaster { weights: right_mul(&init.weights, &white.inverse) };
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let w = weights_for(&model)?;
        let before = weighted_loss(&model, samples, &w);
        let dir = descent_direction(&model, samples, &w);
        let norm = dir.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        let mut t = if norm > 0.0 { line_minimizer(&model, samples, &w, &dir).min(cfg.learning_rate / norm) } else { 0.0 };
        let mut after = before;
        for _ in 0..=cfg.max_backoff {
            if t <= 0.0 {
                break;
            }
            let cand = step(&model, &dir, t);
            let l = weighted_loss(&cand, samples, &w);
            if l <= before {
                model = cand;
                after = l;
                break;
            }
            t *= 0.5;
        }
        
        log.push(EpochLog {
            epoch,
            loss_before: before,
            loss: after,
            mean_l1: object_losses(&model, samples).iter().sum::<f64>() / samples.len() as f64,
            mean_w_fast: mean_where(&w, is_fast),
            mean_w_slow: mean_where(&w, |i| !is_fast(i)),
        });
    }
    let model = LinearForecaster { weights: right_mul(&model.weights, &white.forward) };
    Ok((model, TrainLog { epochs: log, fast_miou_split: split, samples: samples.len() }))
}

type Square = [[f64; INPUTS]; INPUTS];

/// `T = (C + eps I)^(-1/2)` for the input second moments `C`, and its inverse.
struct Whitening {
    forward: Square,
    inverse: Square,
}

impl Whitening {
    fn fit(samples: &[Sample]) -> Self {
        let mut c = SMatrix::<f64, INPUTS, INPUTS>::zeros();
        for s in samples {
            let x = SVector::<f64, INPUTS>::from_column_slice(&s.x);
            c += x * x.transpose();
        }
        c /= samples.len() as f64;
        let eig = c.symmetric_eigen();
        let eps = 1e-12 * eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
        let root = |p: f64| {
            let d = SMatrix::<f64, INPUTS, INPUTS>::from_diagonal(&eig.eigenvalues.map(|l| (l.max(0.0) + eps).powf(p)));
            let m = eig.eigenvectors * d * eig.eigenvectors.transpose();
            let mut out = [[0.0; INPUTS]; INPUTS];
            for (i, row) in out.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = m[(i, j)];
                }
            }
            out
        };
        Self { forward: root(-0.5), inverse: root(0.5) }
    }

    fn apply(&self, x: &[f64; INPUTS]) -> [f64; INPUTS] {
        let mut out = [0.0; INPUTS];
        for (o, row) in out.iter_mut().zip(&self.forward) {
            *o = dot(row, x);
        }
        out
    }
}

fn right_mul(w: &Weights, t: &Square) -> Weights {
    let mut out = [[0.0; INPUTS]; OUTPUTS];
    for (orow, wrow) in out.iter_mut().zip(w) {
        for (j, v) in orow.iter_mut().enumerate() {
            *v = (0..INPUTS).map(|k| wrow[k] * t[k][j]).sum();
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastErrors {
    pub mean_l1: f64,
    pub mean_l1_fast: Option<f64>,
    pub mean_l1_slow: Option<f64>,
}

/// Mean per-object L1 error, overall and split at `fast_split` matching IoU.
pub fn evaluate_forecaster(model: &LinearForecaster, samples: &[Sample], fast_split: f64) -> ForecastErrors {
    let l = object_losses(model, samples);
    ForecastErrors {
        mean_l1: mean_where(&l, |_| true).unwrap_or(0.0),
        mean_l1_fast: mean_where(&l, |i| samples[i].m_iou < fast_split),
        mean_l1_slow: mean_where(&l, |i| samples[i].m_iou >= fast_split),
    }
}

// ---------------------------------------------------------------------------
// Gradient check

/// Samples with fixed per-object weights for gradient verification.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBatch {
    pub samples: Vec<Sample>,
    pub weights: Vec<f64>,
}

/// Smallest residual magnitude accepted in a gradient-check batch; keeps the
/// finite-difference probe away from the kinks of |r|.
pub const KINK_MARGIN: f64 = 1e-3;

impl GradBatch {
    /// Random normalized boxes and positive weights; targets are redrawn
    /// until every residual under `model` clears [`KINK_MARGIN`].
    pub fn random(model: &LinearForecaster, seed: u64, n: usize) -> Self {
        let mut rng = rng_from_seed(seed);
        let mut samples = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let rand_box = |rng: &mut Rng| -> [f64; 4] {
            [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9), rng.random_range(0.02..0.3), rng.random_range(0.02..0.3)]
        };
        for group in 0..n {
            let prev = rand_box(&mut rng);
            let cur = rand_box(&mut rng);
            let x = features(prev, cur);
            let pred = model.predict(&x, &cur);
            let target = loop {
                let t = rand_box(&mut rng);
                if (0..4).all(|c| (pred[c] - t[c]).abs() >= KINK_MARGIN) {
                    break t;
                }
            };
            samples.push(Sample { x, cur, target, m_iou: rng.random_range(0.0..1.0), group });
            weights.push(rng.random_range(0.2..3.0));
        }
        Self { samples, weights }
    }

    pub fn loss(&self, model: &LinearForecaster) -> f64 {
        weighted_loss(model, &self.samples, &self.weights)
    }

    pub fn gradient(&self, model: &LinearForecaster) -> Weights {
        weighted_gradient(model, &self.samples, &self.weights)
    }
}

/// `|a - f| / max(|a|, |f|, 1e-8)`.
pub fn relative_error(a: f64, f: f64) -> f64 {
    (a - f).abs() / a.abs().max(f.abs()).max(1e-8)
}

/// Largest relative error between the analytic gradient and central finite
/// differences with step `h`. `bias` is added to every analytic component
/// and exists only to exercise failure paths.
pub fn grad_check_with(model: &LinearForecaster, batch: &GradBatch, h: f64, bias: f64) -> f64 {
    let analytic = batch.gradient(model);
    let mut worst: f64 = 0.0;
    for c in 0..OUTPUTS {
        for k in 0..INPUTS {
            let mut plus = model.clone();
            plus.weights[c][k] += h;
            let mut minus = model.clone();
            minus.weights[c][k] -= h;
            let fd = (batch.loss(&plus) - batch.loss(&minus)) / (2.0 * h);
            worst = worst.max(relative_error(analytic[c][k] + bias, fd));
        }
    }
    worst
}

/// [`grad_check_with`] at step `1e-5` and no bias.
pub fn grad_check(model: &LinearForecaster, batch: &GradBatch) -> f64 {
    grad_check_with(model, batch, 1e-5, 0.0)
}
