//! Detector agents for the streaming simulator.
//!
//! Every agent reads one frame per invocation through a [`FrameDetector`]
//! and emits boxes. The forecasting agents emit boxes for the frame after
//! the one they read, which is the frame their output is judged against
//! when processing fits inside one frame interval.

use serde::{Deserialize, Serialize};

use crate::data::Frame;
use crate::geometry::{greedy_match, BBox, Detection, GroundTruthBox};
use crate::rng::{derive_seed, rng_from_seed};
use crate::scene_sim::{mock_detect, MockDetectorConfig};
use crate::stream_sim::DetectorAgent;

use super::kalman::{KalmanTrack, KfConfig};
use super::linear::LinearForecaster;

/// Produces detections for a single frame, deterministically.
pub trait FrameDetector {
    fn detect(&self, frame: &Frame) -> Vec<Detection>;
}

/// Noisy ground-truth detector. Each frame draws from its own stream seeded
/// by `(rng_seed, frame_index)`, so the output for a frame does not depend on
/// which other frames were processed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MockDetector {
    pub cfg: MockDetectorConfig,
}

impl FrameDetector for MockDetector {
    fn detect(&self, frame: &Frame) -> Vec<Detection> {
        let mut rng = rng_from_seed(derive_seed(self.cfg.rng_seed, "detector", frame.frame_index as u64));
        mock_detect(frame, &self.cfg, &mut rng)
    }
}

/// Exact ground truth with score 1.
pub fn exact_detections(frame: &Frame) -> Vec<Detection> {
    frame.gt.iter().map(|g| Detection { bbox: g.bbox, category: g.category, score: 1.0 }).collect()
}

/// Emits the detector's output for the frame it read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleAgent<D> {
    pub detector: D,
}

impl<D: FrameDetector> DetectorAgent for OracleAgent<D> {
    type State = ();

    fn initial_state(&self, _first: &Frame) -> Self::State {}

    fn process(&self, frame: &Frame, _state: ()) -> (Vec<Detection>, ()) {
        (self.detector.detect(frame), ())
    }
}

/// Emits the exact ground truth of the frame it read; any loss comes from
/// latency alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DelayedOracleAgent;

impl DetectorAgent for DelayedOracleAgent {
    type State = ();

    fn initial_state(&self, _first: &Frame) -> Self::State {}

    fn process(&self, frame: &Frame, _state: ()) -> (Vec<Detection>, ()) {
        (exact_detections(frame), ())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KalmanState {
    pub tracks: Vec<KalmanTrack>,
    pub last_frame: Option<usize>,
}

/// Tracks detections with one constant-velocity filter per object and emits
/// each live track extrapolated one frame ahead.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanAgent<D> {
    pub detector: D,
    pub cfg: KfConfig,
}

pub fn kalman_agent<D: FrameDetector>(detector: D, cfg: KfConfig) -> KalmanAgent<D> {
    KalmanAgent { detector, cfg }
}

/// Minimum side used when a collapsed track still needs a box for matching.
const MIN_SIDE: f64 = 1e-6;

fn matching_box(t: &KalmanTrack) -> BBox {
    let p = t.position();
    BBox::from_center_size(p[0], p[1], p[2].max(MIN_SIDE), p[3].max(MIN_SIDE)).expect("finite track state")
}

fn emit(bbox: Option<BBox>, category: u32, score: f64, image_size: (u32, u32)) -> Option<Detection> {
    let clipped = bbox?.clip_to(image_size.0 as f64, image_size.1 as f64)?;
    Some(Detection { bbox: clipped, category, score })
}

impl<D: FrameDetector> KalmanAgent<D> {
    /// Associates `dets` with the tracks and advances them to `frame_index`.
    pub fn step(&self, mut state: KalmanState, frame_index: usize, dets: &[Detection]) -> KalmanState {
        let dt = state.last_frame.map_or(0, |l| frame_index.saturating_sub(l));
        // A track whose filter fails numerically is dropped rather than
        // allowed to emit garbage.
        state.tracks.retain_mut(|t| t.predict(dt, &self.cfg).is_ok());

        let pseudo: Vec<GroundTruthBox> = state
            .tracks
            .iter()
            .map(|t| GroundTruthBox { bbox: matching_box(t), category: t.category, track_id: None })
            .collect();
        let pairs = greedy_match(dets, &pseudo, self.cfg.iou_threshold);
        let mut det_used = vec![false; dets.len()];
        let mut failed = vec![false; state.tracks.len()];
        for &(d, t) in &pairs {
            det_used[d] = true;
            if state.tracks[t].update(&dets[d].bbox, dets[d].score, &self.cfg).is_err() {
                failed[t] = true;
            }
        }
        let mut kept = Vec::with_capacity(state.tracks.len() + dets.len());
        for (t, bad) in state.tracks.into_iter().zip(failed) {
            if !bad && t.time_since_update <= self.cfg.max_age {
                kept.push(t);
            }
        }
        for (d, used) in dets.iter().zip(det_used) {
            if !used {
                kept.push(KalmanTrack::new(&d.bbox, d.category, d.score, &self.cfg));
            }
        }
        KalmanState { tracks: kept, last_frame: Some(frame_index) }
    }

    /// Every live track extrapolated one frame, clipped to the image.
    pub fn forecasts(&self, state: &KalmanState, image_size: (u32, u32)) -> Vec<Detection> {
        state
            .tracks
            .iter()
            .filter_map(|t| emit(super::kalman::center_size_box(t.forecast(1.0)), t.category, t.score, image_size))
            .collect()
    }
}

impl<D: FrameDetector> DetectorAgent for KalmanAgent<D> {
    type State = KalmanState;

    fn initial_state(&self, _first: &Frame) -> Self::State {
        KalmanState::default()
    }

    fn process(&self, frame: &Frame, state: KalmanState) -> (Vec<Detection>, KalmanState) {
        let dets = self.detector.detect(frame);
        let next = self.step(state, frame.frame_index, &dets);
        (self.forecasts(&next, frame.image_size), next)
    }
}

/// Detections of the last processed frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameBuffer {
    pub detections: Vec<Detection>,
}

/// Pairs each current detection with the best-overlapping detection from the
/// buffered frame and feeds both boxes to a [`LinearForecaster`]. The first
/// frame is duplicated into the buffer, so the first call sees (cur, cur).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearForecasterAgent<D> {
    pub detector: D,
    pub model: LinearForecaster,
    /// Minimum IoU for pairing with the buffered frame.
    pub iou_threshold: f64,
}

impl<D: FrameDetector> LinearForecasterAgent<D> {
    pub fn new(detector: D, model: LinearForecaster) -> Self {
        Self { detector, model, iou_threshold: 0.3 }
    }

    pub fn forecast(&self, prev: &[Detection], cur: &[Detection], image_size: (u32, u32)) -> Vec<Detection> {
        let pseudo: Vec<GroundTruthBox> =
            prev.iter().map(|d| GroundTruthBox { bbox: d.bbox, category: d.category, track_id: None }).collect();
        let mut partner: Vec<Option<usize>> = vec![None; cur.len()];
        for (d, p) in greedy_match(cur, &pseudo, self.iou_threshold) {
            partner[d] = Some(p);
        }
        cur.iter()
            .zip(partner)
            .filter_map(|(d, p)| {
                let prev_box = p.map_or(d.bbox, |p| prev[p].bbox);
                emit(self.model.forecast_box(&prev_box, &d.bbox, image_size), d.category, d.score, image_size)
            })
            .collect()
    }
}

impl<D: FrameDetector> DetectorAgent for LinearForecasterAgent<D> {
    type State = FrameBuffer;

    fn initial_state(&self, first: &Frame) -> Self::State {
        FrameBuffer { detections: self.detector.detect(first) }
    }

    fn process(&self, frame: &Frame, state: FrameBuffer) -> (Vec<Detection>, FrameBuffer) {
        let cur = self.detector.detect(frame);
        let out = self.forecast(&state.detections, &cur, frame.image_size);
        (out, FrameBuffer { detections: cur })
    }
}
