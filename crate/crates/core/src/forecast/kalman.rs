//! Constant-velocity Kalman filter over center-size boxes.
//!
//! State is `(cx, cy, w, h, vcx, vcy, vw, vh)` in px and px/frame; the
//! transition adds `dt * velocity` to each position component and the
//! measurement observes the first four components directly.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;

pub type State = SVector<f64, 8>;
pub type Covariance = SMatrix<f64, 8, 8>;
type Measurement = SVector<f64, 4>;
type Obs = SMatrix<f64, 4, 8>;

const PSD_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KalmanError {
    #[error("covariance is not positive semi-definite (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("innovation covariance is singular")]
    Singular,
    #[error("invalid Kalman config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KfConfig {
    /// Process noise variance per frame, position and velocity alike.
    pub process_noise: f64,
    /// Measurement noise variance (px²).
    pub measurement_noise: f64,
    /// Velocity variance of a fresh track (zero-velocity init only).
    pub initial_velocity_variance: f64,
    /// Minimum IoU for detection-to-track association.
    pub iou_threshold: f64,
    /// Frames a track may go unmatched before it is dropped.
    pub max_age: usize,
    /// Set velocity from the first two measurements exactly.
    pub two_point_velocity_init: bool,
}

impl Default for KfConfig {
    fn default() -> Self {
        Self {
            process_noise: 1.0,
            measurement_noise: 1.0,
            initial_velocity_variance: 100.0,
            iou_threshold: 0.3,
            max_age: 3,
            two_point_velocity_init: true,
        }
    }
}

impl KfConfig {
    pub fn validate(&self) -> Result<(), KalmanError> {
        for (name, v) in [
            ("process_noise", self.process_noise),
            ("measurement_noise", self.measurement_noise),
            ("initial_velocity_variance", self.initial_velocity_variance),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(KalmanError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(KalmanError::Config(format!("iou_threshold must lie in (0, 1], got {}", self.iou_threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanTrack {
    pub state: State,
    pub covariance: Covariance,
    pub category: u32,
    pub score: f64,
    /// Frames since the track was created.
    pub age: usize,
    /// Frames since the last measurement.
    pub time_since_update: usize,
    /// Number of measurements absorbed.
    pub hits: usize,
    last_measurement: [f64; 4],
}

fn transition(dt: f64) -> Covariance {
    let mut f = Covariance::identity();
    for i in 0..4 {
        f[(i, i + 4)] = dt;
    }
    f
}

fn observation() -> Obs {
    let mut h = Obs::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

fn min_eigenvalue(p: &Covariance) -> f64 {
    p.symmetric_eigenvalues().min()
}

/// Symmetrize, then reject covariances with a clearly negative eigenvalue.
fn settle(p: &mut Covariance) -> Result<(), KalmanError> {
    *p = (*p + p.transpose()) * 0.5;
    let scale = p.amax().max(1.0);
    let m = min_eigenvalue(p);
    if !(m >= -PSD_TOL * scale) {
        return Err(KalmanError::NotPsd(m));
    }
    Ok(())
}

impl KalmanTrack {
    pub fn new(bbox: &BBox, category: u32, score: f64, cfg: &KfConfig) -> Self {
        let z = bbox.to_center_size();
        let mut state = State::zeros();
        for i in 0..4 {
            state[i] = z[i];
        }
        let mut covariance = Covariance::zeros();
        for i in 0..4 {
            covariance[(i, i)] = cfg.measurement_noise;
            covariance[(i + 4, i + 4)] = cfg.initial_velocity_variance;
        }
        Self { state, covariance, category, score, age: 0, time_since_update: 0, hits: 1, last_measurement: z }
    }

    pub fn position(&self) -> [f64; 4] {
        [self.state[0], self.state[1], self.state[2], self.state[3]]
    }

    pub fn velocity(&self) -> [f64; 4] {
        [self.state[4], self.state[5], self.state[6], self.state[7]]
    }

    /// Center-size box `frames` ahead of the current state, without touching
    /// the filter.
    pub fn forecast(&self, frames: f64) -> [f64; 4] {
        let p = self.position();
        let v = self.velocity();
        [p[0] + frames * v[0], p[1] + frames * v[1], p[2] + frames * v[2], p[3] + frames * v[3]]
    }

    /// Current estimate as a box, or `None` if its size has collapsed.
    pub fn bbox(&self) -> Option<BBox> {
        center_size_box(self.position())
    }

    /// Advance `dt` frames.
    pub fn predict(&mut self, dt: usize, cfg: &KfConfig) -> Result<(), KalmanError> {
        if dt == 0 {
            return Ok(());
        }
        let f = transition(dt as f64);
        self.state = f * self.state;
        self.covariance = f * self.covariance * f.transpose() + Covariance::identity() * (cfg.process_noise * dt as f64);
        settle(&mut self.covariance)?;
        self.age += dt;
        self.time_since_update += dt;
        Ok(())
    }

    /// Absorb a measurement at the current (already predicted) time.
    pub fn update(&mut self, bbox: &BBox, score: f64, cfg: &KfConfig) -> Result<(), KalmanError> {
        let z = bbox.to_center_size();
        if cfg.two_point_velocity_init && self.hits == 1 && self.time_since_update > 0 {
            let dt = self.time_since_update as f64;
            for i in 0..4 {
                self.state[i] = z[i];
                self.state[i + 4] = (z[i] - self.last_measurement[i]) / dt;
            }
            self.covariance = Covariance::zeros();
            for i in 0..4 {
                self.covariance[(i, i)] = cfg.measurement_noise;
                self.covariance[(i + 4, i + 4)] = 2.0 * cfg.measurement_noise / (dt * dt);
                self.covariance[(i, i + 4)] = cfg.measurement_noise / dt;
                self.covariance[(i + 4, i)] = cfg.measurement_noise / dt;
            }
        } else {
            let h = observation();
            let r = SMatrix::<f64, 4, 4>::identity() * cfg.measurement_noise;
            let zv = Measurement::from_column_slice(&z);
            let innovation = zv - h * self.state;
            let s = h * self.covariance * h.transpose() + r;
            let s_inv = s.try_inverse().ok_or(KalmanError::Singular)?;
            let k = self.covariance * h.transpose() * s_inv;
            self.state += k * innovation;
            // Joseph form keeps the update PSD under rounding.
            let i_kh = Covariance::identity() - k * h;
            self.covariance = i_kh * self.covariance * i_kh.transpose() + k * r * k.transpose();
        }
        settle(&mut self.covariance)?;
        self.last_measurement = z;
        self.time_since_update = 0;
        self.hits += 1;
        self.score = score;
        Ok(())
    }
}

pub(crate) fn center_size_box(p: [f64; 4]) -> Option<BBox> {
    if !(p[2] > 0.0 && p[3] > 0.0) {
        return None;
    }
    BBox::from_center_size(p[0], p[1], p[2], p[3]).ok()
}

/// One frame of constant-velocity prediction followed by an optional
/// measurement update.
pub fn kf_step(track: &KalmanTrack, measurement: Option<&BBox>, cfg: &KfConfig) -> Result<KalmanTrack, KalmanError> {
    let mut t = track.clone();
    t.predict(1, cfg)?;
    if let Some(m) = measurement {
        t.update(m, t.score, cfg)?;
    }
    Ok(t)
}
