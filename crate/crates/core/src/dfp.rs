//! Dual-flow feature fusion on small explicit feature maps.
//!
//! Both frames go through one shared per-pixel projection
//! `silu(scale * (W x) + shift)`. The dynamic flow combines the two
//! projections (channel concat, current first, or element-wise sum) and the
//! static flow adds the current features back as a residual.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::rng_from_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DfpError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("concat fusion needs an even channel count, got {0}")]
    OddChannels(usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// `C x H x W`, stored channel-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFeatureMap", into = "RawFeatureMap")]
pub struct FeatureMap {
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFeatureMap {
    shape: [usize; 3],
    values: Vec<f64>,
}

impl TryFrom<RawFeatureMap> for FeatureMap {
    type Error = DfpError;
    fn try_from(r: RawFeatureMap) -> Result<Self, DfpError> {
        FeatureMap::new(r.shape[0], r.shape[1], r.shape[2], r.values)
    }
}

impl From<FeatureMap> for RawFeatureMap {
    fn from(f: FeatureMap) -> Self {
        RawFeatureMap { shape: [f.c, f.h, f.w], values: f.data }
    }
}

impl FeatureMap {
    pub fn new(c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self, DfpError> {
        if data.len() != c * h * w {
            return Err(DfpError::Shape(format!("{} values for shape {c}x{h}x{w}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(DfpError::NonFinite("feature map"));
        }
        Ok(Self { c, h, w, data })
    }

    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w, data: vec![0.0; c * h * w] }
    }

    /// Uniform values in `[-1, 1)`.
    pub fn random(seed: u64, c: usize, h: usize, w: usize) -> Self {
        let mut rng = rng_from_seed(seed);
        let data = (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self { c, h, w, data }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }

    pub fn pixels(&self) -> usize {
        self.h * self.w
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }

    fn at(&self, c: usize, p: usize) -> f64 {
        self.data[c * self.pixels() + p]
    }

    /// Channels `[from, to)` as a new map.
    pub fn channels(&self, from: usize, to: usize) -> FeatureMap {
        let n = self.pixels();
        FeatureMap { c: to - from, h: self.h, w: self.w, data: self.data[from * n..to * n].to_vec() }
    }
}

/// 1x1 convolution `out_c x in_c` followed by a per-channel affine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionParams {
    pub in_c: usize,
    pub out_c: usize,
    /// Row-major, `out_c * in_c`.
    pub weight: Vec<f64>,
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl ProjectionParams {
    pub fn zeros(in_c: usize, out_c: usize) -> Self {
        Self { in_c, out_c, weight: vec![0.0; in_c * out_c], scale: vec![1.0; out_c], shift: vec![0.0; out_c] }
    }

    /// Weights uniform in `[-1, 1)`, scales in `[0.5, 1.5)`, shifts in
    /// `[-0.5, 0.5)`.
    pub fn random(seed: u64, in_c: usize, out_c: usize) -> Self {
        let mut rng = rng_from_seed(seed);
        let weight = (0..in_c * out_c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let scale = (0..out_c).map(|_| rng.random_range(0.5..1.5)).collect();
        let shift = (0..out_c).map(|_| rng.random_range(-0.5..0.5)).collect();
        Self { in_c, out_c, weight, scale, shift }
    }

    pub fn validate(&self) -> Result<(), DfpError> {
        if self.weight.len() != self.in_c * self.out_c || self.scale.len() != self.out_c || self.shift.len() != self.out_c {
            return Err(DfpError::Shape(format!(
                "params declare {}x{} but hold {} weights, {} scales, {} shifts",
                self.out_c,
                self.in_c,
                self.weight.len(),
                self.scale.len(),
                self.shift.len()
            )));
        }
        if self.weight.iter().chain(&self.scale).chain(&self.shift).any(|v| !v.is_finite()) {
            return Err(DfpError::NonFinite("projection params"));
        }
        Ok(())
    }

    fn w(&self, o: usize, i: usize) -> f64 {
        self.weight[o * self.in_c + i]
    }

    fn pre_activation(&self, f: &FeatureMap, o: usize, p: usize) -> (f64, f64) {
        let u: f64 = (0..self.in_c).map(|i| self.w(o, i) * f.at(i, p)).sum();
        (u, self.scale[o] * u + self.shift[o])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    #[default]
    Concat,
    Add,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DfpConfig {
    pub fusion: Fusion,
    /// Add the current features back (static flow).
    pub residual: bool,
}

impl Default for DfpConfig {
    fn default() -> Self {
        Self { fusion: Fusion::Concat, residual: true }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

/// `d silu / dx = s (1 + x (1 - s))` with `s = sigmoid(x)`.
pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

pub fn reduce_project(f: &FeatureMap, p: &ProjectionParams) -> Result<FeatureMap, DfpError> {
    p.validate()?;
    if f.c != p.in_c {
        return Err(DfpError::Shape(format!("map has {} channels, params expect {}", f.c, p.in_c)));
    }
    let n = f.pixels();
    let mut data = Vec::with_capacity(p.out_c * n);
    for o in 0..p.out_c {
        for px in 0..n {
            data.push(silu(p.pre_activation(f, o, px).1));
        }
    }
    Ok(FeatureMap { c: p.out_c, h: f.h, w: f.w, data })
}

fn check_pair(f_prev: &FeatureMap, f_cur: &FeatureMap, p: &ProjectionParams, cfg: &DfpConfig) -> Result<(), DfpError> {
    if f_prev.shape() != f_cur.shape() {
        return Err(DfpError::Shape(format!("previous {:?} vs current {:?}", f_prev.shape(), f_cur.shape())));
    }
    let c = f_cur.c;
    let want = match cfg.fusion {
        Fusion::Concat => {
            if !c.is_multiple_of(2) {
                return Err(DfpError::OddChannels(c));
            }
            c / 2
        }
        Fusion::Add => c,
    };
    if p.in_c != c || p.out_c != want {
        return Err(DfpError::Shape(format!("params {}x{} do not fit {c} channels ({:?})", p.out_c, p.in_c, cfg.fusion)));
    }
    Ok(())
}

/// Dynamic flow only.
pub fn dynamic_flow(f_prev: &FeatureMap, f_cur: &FeatureMap, p: &ProjectionParams, cfg: &DfpConfig) -> Result<FeatureMap, DfpError> {
    check_pair(f_prev, f_cur, p, cfg)?;
    let cur = reduce_project(f_cur, p)?;
    let prev = reduce_project(f_prev, p)?;
    let data = match cfg.fusion {
        Fusion::Concat => cur.data.into_iter().chain(prev.data).collect(),
        Fusion::Add => cur.data.iter().zip(&prev.data).map(|(a, b)| a + b).collect(),
    };
    Ok(FeatureMap { c: f_cur.c, h: f_cur.h, w: f_cur.w, data })
}

/// Output has the shape of `f_cur` in both fusion modes.
pub fn dfp_fuse(f_prev: &FeatureMap, f_cur: &FeatureMap, p: &ProjectionParams, cfg: &DfpConfig) -> Result<FeatureMap, DfpError> {
    let mut out = dynamic_flow(f_prev, f_cur, p, cfg)?;
    if cfg.residual {
        for (o, c) in out.data.iter_mut().zip(&f_cur.data) {
            *o += c;
        }
    }
    Ok(out)
}

/// First-frame rule: the current map doubles as its own history.
pub fn dfp_fuse_first(f_cur: &FeatureMap, p: &ProjectionParams, cfg: &DfpConfig) -> Result<FeatureMap, DfpError> {
    let buffer = f_cur.clone();
    dfp_fuse(&buffer, f_cur, p, cfg)
}

// ---------------------------------------------------------------------------
// Gradients

/// Inputs of the scalar objective `coef * sum(dfp_fuse(prev, cur))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DfpObjective {
    pub f_prev: FeatureMap,
    pub f_cur: FeatureMap,
    pub cfg: DfpConfig,
    pub coef: f64,
}

impl DfpObjective {
    /// Random `c x h x w` maps and matching random params.
    pub fn random(seed: u64, c: usize, h: usize, w: usize, cfg: DfpConfig) -> (Self, ProjectionParams) {
        let out_c = match cfg.fusion {
            Fusion::Concat => c / 2,
            Fusion::Add => c,
        };
        let obj = Self {
            f_prev: FeatureMap::random(seed.wrapping_mul(3).wrapping_add(1), c, h, w),
            f_cur: FeatureMap::random(seed.wrapping_mul(3).wrapping_add(2), c, h, w),
            cfg,
            coef: 1.0,
        };
        (obj, ProjectionParams::random(seed.wrapping_mul(3).wrapping_add(3), c, out_c))
    }

    pub fn value(&self, p: &ProjectionParams) -> Result<f64, DfpError> {
        Ok(self.coef * dfp_fuse(&self.f_prev, &self.f_cur, p, &self.cfg)?.data.iter().sum::<f64>())
    }

    /// Gradient with the layout of `p`.
    pub fn gradient(&self, p: &ProjectionParams) -> Result<ProjectionParams, DfpError> {
        check_pair(&self.f_prev, &self.f_cur, p, &self.cfg)?;
        p.validate()?;
        let mut g = ProjectionParams {
            in_c: p.in_c,
            out_c: p.out_c,
            weight: vec![0.0; p.weight.len()],
            scale: vec![0.0; p.out_c],
            shift: vec![0.0; p.out_c],
        };
        // Both fusion modes sum every projected value exactly once per frame.
        for f in [&self.f_cur, &self.f_prev] {
            for o in 0..p.out_c {
                for px in 0..f.pixels() {
                    let (u, z) = p.pre_activation(f, o, px);
                    let dz = self.coef * silu_grad(z);
                    g.shift[o] += dz;
                    g.scale[o] += dz * u;
                    for i in 0..p.in_c {
                        g.weight[o * p.in_c + i] += dz * p.scale[o] * f.at(i, px);
                    }
                }
            }
        }
        Ok(g)
    }
}

fn params_mut(p: &mut ProjectionParams) -> impl Iterator<Item = &mut f64> {
    p.weight.iter_mut().chain(p.scale.iter_mut()).chain(p.shift.iter_mut())
}

fn params_iter(p: &ProjectionParams) -> impl Iterator<Item = &f64> {
    p.weight.iter().chain(&p.scale).chain(&p.shift)
}

/// Largest relative error between analytic and central finite-difference
/// gradients with step `h`. `bias` is added to every analytic component and
/// exists only to exercise failure paths.
pub fn dfp_grad_check_with(p: &ProjectionParams, obj: &DfpObjective, h: f64, bias: f64) -> Result<f64, DfpError> {
    let analytic: Vec<f64> = params_iter(&obj.gradient(p)?).copied().collect();
    let mut worst: f64 = 0.0;
    for (k, a) in analytic.iter().enumerate() {
        let mut plus = p.clone();
        *params_mut(&mut plus).nth(k).expect("index in range") += h;
        let mut minus = p.clone();
        *params_mut(&mut minus).nth(k).expect("index in range") -= h;
        let fd = (obj.value(&plus)? - obj.value(&minus)?) / (2.0 * h);
        worst = worst.max(crate::forecast::linear::relative_error(a + bias, fd));
    }
    Ok(worst)
}

pub fn dfp_grad_check(p: &ProjectionParams, obj: &DfpObjective) -> Result<f64, DfpError> {
    dfp_grad_check_with(p, obj, 1e-5, 0.0)
}
