//! Trend-aware re-weighting of per-object regression losses.
//!
//! An object's motion is measured by its matching IoU: the best IoU between
//! its box in the supervision frame and any same-category box in the current
//! frame. Tracked objects (matching IoU at least `tau`) get weight
//! `1 / mIoU`, so fast movers count more; objects with no good match are
//! treated as new and get the constant `1 / nu`. The weights are then
//! rescaled so the weighted regression loss sums to the unweighted one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou, GroundTruthBox};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrendError {
    #[error("tau must lie in (0, 1), got {0}")]
    Tau(f64),
    #[error("nu must be positive and finite, got {0}")]
    Nu(f64),
    #[error("length mismatch: {0} weights vs {1} losses")]
    Length(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrendConfig {
    pub tau: f64,
    pub nu: f64,
}

impl Default for TrendConfig {
    fn default() -> Self {
        Self { tau: 0.3, nu: 1.4 }
    }
}

impl TrendConfig {
    pub fn new(tau: f64, nu: f64) -> Result<Self, TrendError> {
        let cfg = Self { tau, nu };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), TrendError> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(TrendError::Tau(self.tau));
        }
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(TrendError::Nu(self.nu));
        }
        Ok(())
    }
}

/// Where the loss-preserving rescaling is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationScope {
    /// Separately for each supervision frame.
    #[default]
    PerImage,
    /// Once over all objects of a batch.
    PerBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectWeight {
    pub m_iou: f64,
    pub omega: f64,
    pub omega_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendWeights {
    pub objects: Vec<ObjectWeight>,
}

impl TrendWeights {
    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn omega_hat(&self) -> Vec<f64> {
        self.objects.iter().map(|o| o.omega_hat).collect()
    }
}

/// For each box of the supervision frame, the best IoU against same-category
/// boxes of the current frame (0 if there are none).
pub fn matching_iou(gts_next: &[GroundTruthBox], gts_cur: &[GroundTruthBox]) -> Vec<f64> {
    gts_next
        .iter()
        .map(|n| {
            gts_cur
                .iter()
                .filter(|c| c.category == n.category)
                .map(|c| iou(&n.bbox, &c.bbox))
                .fold(0.0, f64::max)
        })
        .collect()
}

/// `1 / m_iou` for tracked objects, `1 / nu` below `tau`.
pub fn trend_factor(m_iou: f64, cfg: &TrendConfig) -> f64 {
    if m_iou >= cfg.tau {
        1.0 / m_iou
    } else {
        1.0 / cfg.nu
    }
}

/// `w_hat[i] = w[i] * sum(L) / sum(w * L)`, so that `sum(w_hat * L) = sum(L)`.
/// When `sum(w * L)` is zero there is nothing to preserve and the weights
/// pass through unchanged.
pub fn normalize_weights(omegas: &[f64], reg_losses: &[f64]) -> Result<Vec<f64>, TrendError> {
    if omegas.len() != reg_losses.len() {
        return Err(TrendError::Length(omegas.len(), reg_losses.len()));
    }
    let plain: f64 = reg_losses.iter().sum();
    let weighted: f64 = omegas.iter().zip(reg_losses).map(|(w, l)| w * l).sum();
    if weighted <= 0.0 {
        return Ok(omegas.to_vec());
    }
    let k = plain / weighted;
    Ok(omegas.iter().map(|w| w * k).collect())
}

/// Regression, classification and objectness losses of one step.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub reg_losses: Vec<f64>,
    pub cls_loss: f64,
    pub obj_loss: f64,
}

/// `sum(w_hat * L_reg) + L_cls + L_obj`.
pub fn total_loss(weights: &[f64], terms: &LossTerms) -> Result<f64, TrendError> {
    if weights.len() != terms.reg_losses.len() {
        return Err(TrendError::Length(weights.len(), terms.reg_losses.len()));
    }
    let reg: f64 = weights.iter().zip(&terms.reg_losses).map(|(w, l)| w * l).sum();
    Ok(reg + terms.cls_loss + terms.obj_loss)
}

/// Matching IoU, trend factor and normalized weight for every box of the
/// supervision frame.
pub fn trend_weights(
    gts_next: &[GroundTruthBox],
    gts_cur: &[GroundTruthBox],
    reg_losses: &[f64],
    cfg: &TrendConfig,
) -> Result<TrendWeights, TrendError> {
    let m = matching_iou(gts_next, gts_cur);
    let omegas: Vec<f64> = m.iter().map(|&v| trend_factor(v, cfg)).collect();
    let hats = normalize_weights(&omegas, reg_losses)?;
    Ok(TrendWeights {
        objects: m
            .into_iter()
            .zip(omegas)
            .zip(hats)
            .map(|((m_iou, omega), omega_hat)| ObjectWeight { m_iou, omega, omega_hat })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use proptest::prelude::*;

    fn g(x1: f64, y1: f64, x2: f64, y2: f64, cat: u32) -> GroundTruthBox {
        GroundTruthBox::new(BBox::new(x1, y1, x2, y2).unwrap(), cat, None)
    }

    #[test]
    fn matching_iou_examples() {
        let a = g(0.0, 0.0, 2.0, 2.0, 0);
        assert_eq!(matching_iou(&[a], &[a]), vec![1.0]);
        assert_eq!(matching_iou(&[a], &[g(5.0, 5.0, 6.0, 6.0, 0)]), vec![0.0]);
        let m = matching_iou(&[a], &[g(1.0, 0.0, 3.0, 2.0, 0), g(10.0, 10.0, 11.0, 11.0, 0)]);
        assert!((m[0] - 1.0 / 3.0).abs() < 1e-15);
        // class-aware: an identical box of another category does not count
        assert_eq!(matching_iou(&[a], &[g(0.0, 0.0, 2.0, 2.0, 1)]), vec![0.0]);
        assert_eq!(matching_iou(&[a], &[]), vec![0.0]);
        assert!(matching_iou(&[], &[a]).is_empty());
    }

    #[test]
    fn trend_factor_examples() {
        let c = TrendConfig::default();
        assert_eq!(trend_factor(0.5, &c), 2.0);
        assert!((trend_factor(0.2, &c) - 1.0 / 1.4).abs() < 1e-15);
        assert!((trend_factor(0.2, &c) - 0.714286).abs() < 1e-6);
        assert_eq!(trend_factor(1.0, &c), 1.0);
        assert_eq!(trend_factor(0.3, &c), 1.0 / 0.3);
        // new objects (no match) take the 1/nu branch
        assert_eq!(trend_factor(0.0, &c), 1.0 / 1.4);
    }

    #[test]
    fn config_validation() {
        assert!(TrendConfig::new(0.0, 1.4).is_err());
        assert!(TrendConfig::new(-0.1, 1.4).is_err());
        assert!(TrendConfig::new(1.0, 1.4).is_err());
        assert!(TrendConfig::new(0.3, 0.0).is_err());
        // nu below 1 is allowed
        assert!(TrendConfig::new(0.3, 0.7).is_ok());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_weights(&[1.0, 1.0], &[0.3, 2.5]).unwrap(), vec![1.0, 1.0]);
        let w = normalize_weights(&[2.0, 1.0], &[1.0, 1.0]).unwrap();
        assert!((w[0] - 4.0 / 3.0).abs() < 1e-15 && (w[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(normalize_weights(&[2.0, 1.0], &[0.0, 0.0]).unwrap(), vec![2.0, 1.0]);
        assert!(matches!(normalize_weights(&[1.0], &[1.0, 2.0]), Err(TrendError::Length(1, 2))));
        assert!(normalize_weights(&[], &[]).unwrap().is_empty());
    }

    #[test]
    fn total_loss_examples() {
        let t = LossTerms { reg_losses: vec![1.0, 2.0], cls_loss: 0.5, obj_loss: 0.25 };
        assert_eq!(total_loss(&[1.0, 1.0], &t).unwrap(), 3.75);
        let empty = LossTerms { reg_losses: vec![], cls_loss: 1.0, obj_loss: 1.0 };
        assert_eq!(total_loss(&[], &empty).unwrap(), 2.0);
        let w = normalize_weights(&[2.0, 1.0], &[1.0, 1.0]).unwrap();
        let reg = LossTerms { reg_losses: vec![1.0, 1.0], cls_loss: 0.0, obj_loss: 0.0 };
        assert!((total_loss(&w, &reg).unwrap() - 2.0).abs() < 1e-15);
        assert!(total_loss(&[1.0], &t).is_err());
    }

    #[test]
    fn trend_weights_record() {
        let cur = [g(0.0, 0.0, 10.0, 10.0, 0), g(50.0, 0.0, 60.0, 10.0, 0)];
        // first object barely moved, second moved half a box, third is new
        let next = [g(0.0, 0.0, 10.0, 10.0, 0), g(55.0, 0.0, 65.0, 10.0, 0), g(200.0, 0.0, 210.0, 10.0, 0)];
        let w = trend_weights(&next, &cur, &[1.0, 1.0, 1.0], &TrendConfig::default()).unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(w.objects[0].omega, 1.0);
        assert!((w.objects[1].m_iou - 1.0 / 3.0).abs() < 1e-15);
        assert!((w.objects[1].omega - 3.0).abs() < 1e-12);
        assert_eq!(w.objects[2].omega, 1.0 / 1.4);
        let s: f64 = w.omega_hat().iter().sum();
        assert!((s - 3.0).abs() < 1e-12);
        assert!(w.objects[1].omega_hat > w.objects[0].omega_hat);
    }

    proptest! {
        #[test]
        fn loss_sum_preserved(pairs in prop::collection::vec((0.01..10.0f64, 0.0..5.0f64), 1..30)) {
            let (w, l): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assume!(w.iter().zip(&l).map(|(a, b)| a * b).sum::<f64>() > 0.0);
            let hat = normalize_weights(&w, &l).unwrap();
            let lhs: f64 = hat.iter().zip(&l).map(|(a, b)| a * b).sum();
            let rhs: f64 = l.iter().sum();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs());
        }

        #[test]
        fn scale_invariant(pairs in prop::collection::vec((0.01..10.0f64, 0.01..5.0f64), 1..20), c in 0.01..100.0f64) {
            let (w, l): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
            let a = normalize_weights(&w, &l).unwrap();
            let b = normalize_weights(&scaled, &l).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }

        #[test]
        fn monotone_on_tracked_branch(a in 0.3..1.0f64, b in 0.3..1.0f64) {
            let c = TrendConfig::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(trend_factor(lo, &c) >= trend_factor(hi, &c));
            if lo < hi {
                prop_assert!(trend_factor(lo, &c) > trend_factor(hi, &c));
            }
        }

        #[test]
        fn equal_miou_gives_unit_weights(m in 0.3..1.0f64, l in prop::collection::vec(0.01..5.0f64, 1..10)) {
            let c = TrendConfig::default();
            let w = vec![trend_factor(m, &c); l.len()];
            for v in normalize_weights(&w, &l).unwrap() {
                prop_assert!((v - 1.0).abs() < 1e-12);
            }
        }
    }
}
