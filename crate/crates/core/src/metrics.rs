//! COCO-style average precision over evaluation instants, and its streaming
//! (latency-aware) and offline compositions with the simulator.
//!
//! Per category and IoU threshold, detections from all instants are pooled
//! and ranked by score (ties: earlier instant, then input order). Matching is
//! greedy within an instant. The precision envelope is read off at evenly
//! spaced recall points and averaged. Categories without ground truth are
//! left out of the category mean rather than counted as zero.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::VideoStream;
use crate::geometry::{iou, Detection, GroundTruthBox};
use crate::stream_sim::{pair_for_sap, pair_offline, EvalPairing, ScheduleTrace, SimError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("invalid AP parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Pairing(#[from] SimError),
}

/// Area strata in px². Small is `area < small_max`, medium is
/// `small_max <= area < large_min`, large is `area >= large_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaRanges {
    pub small_max: f64,
    pub large_min: f64,
}

impl Default for AreaRanges {
    fn default() -> Self {
        Self { small_max: 32.0 * 32.0, large_min: 96.0 * 96.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ApParams {
    pub iou_thresholds: Vec<f64>,
    pub recall_points: usize,
    pub area_ranges: AreaRanges,
    /// Per instant and category.
    pub max_dets: usize,
}

impl Default for ApParams {
    fn default() -> Self {
        Self {
            iou_thresholds: (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect(),
            recall_points: 101,
            area_ranges: AreaRanges::default(),
            max_dets: 100,
        }
    }
}

impl ApParams {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let t = &self.iou_thresholds;
        if t.is_empty() {
            return Err(MetricsError::Params("no IoU thresholds".into()));
        }
        if t.iter().any(|&v| !(v > 0.0 && v <= 1.0)) {
            return Err(MetricsError::Params("IoU thresholds must lie in (0, 1]".into()));
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MetricsError::Params("IoU thresholds must be strictly increasing".into()));
        }
        if self.recall_points < 2 {
            return Err(MetricsError::Params("need at least 2 recall points".into()));
        }
        if self.max_dets == 0 {
            return Err(MetricsError::Params("max_dets must be positive".into()));
        }
        let a = self.area_ranges;
        if !(a.small_max > 0.0 && a.small_max <= a.large_min) {
            return Err(MetricsError::Params("area ranges must satisfy 0 < small_max <= large_min".into()));
        }
        Ok(())
    }

    fn recall_grid(&self) -> Vec<f64> {
        let last = (self.recall_points - 1) as f64;
        (0..self.recall_points).map(|i| i as f64 / last).collect()
    }

    fn threshold_index(&self, t: f64) -> Option<usize> {
        self.iou_thresholds.iter().position(|&v| (v - t).abs() < 1e-9)
    }
}

/// One ground-truth instant and the detections judged against it.
#[derive(Debug, Clone, Copy)]
pub struct EvalInstance<'a> {
    pub dets: &'a [Detection],
    pub gts: &'a [GroundTruthBox],
}

/// `None` marks a stratum with no ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApResult {
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ap_small: Option<f64>,
    pub ap_medium: Option<f64>,
    pub ap_large: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Area {
    All,
    Small,
    Medium,
    Large,
}

impl Area {
    fn contains(self, area: f64, r: &AreaRanges) -> bool {
        match self {
            Area::All => true,
            Area::Small => area < r.small_max,
            Area::Medium => area >= r.small_max && area < r.large_min,
            Area::Large => area >= r.large_min,
        }
    }
}

/// Per-(threshold, category) AP table for one area stratum; `None` where
/// the category has no ground truth in the stratum.
fn ap_table(instances: &[EvalInstance<'_>], params: &ApParams, categories: &[u32], area: Area) -> Vec<Vec<Option<f64>>> {
    let nt = params.iou_thresholds.len();
    let recall_grid = params.recall_grid();
    let ranges = &params.area_ranges;
    let mut table = vec![vec![None; categories.len()]; nt];

    for (ki, &cat) in categories.iter().enumerate() {
        // pooled detections: score, plus per threshold (matched, ignored)
        let mut scores: Vec<f64> = Vec::new();
        let mut matched: Vec<Vec<bool>> = vec![Vec::new(); nt];
        let mut ignored: Vec<Vec<bool>> = vec![Vec::new(); nt];
        let mut n_gt = 0usize;

        for inst in instances {
            let mut dets: Vec<&Detection> = inst.dets.iter().filter(|d| d.category == cat).collect();
            dets.sort_by(|a, b| b.score.total_cmp(&a.score));
            dets.truncate(params.max_dets);

            let mut gts: Vec<(&GroundTruthBox, bool)> = inst
                .gts
                .iter()
                .filter(|g| g.category == cat)
                .map(|g| (g, !area.contains(g.bbox.area(), ranges)))
                .collect();
            gts.sort_by_key(|&(_, ig)| ig);
            n_gt += gts.iter().filter(|(_, ig)| !ig).count();

            let ious: Vec<Vec<f64>> =
                dets.iter().map(|d| gts.iter().map(|(g, _)| iou(&d.bbox, &g.bbox)).collect()).collect();

            for (ti, &thr) in params.iou_thresholds.iter().enumerate() {
                let mut gt_taken = vec![false; gts.len()];
                for (di, d) in dets.iter().enumerate() {
                    let mut best: Option<(usize, f64)> = None;
                    for (gi, &(_, g_ig)) in gts.iter().enumerate() {
                        if gt_taken[gi] {
                            continue;
                        }
                        // a regular match is never traded for an ignored one
                        if let Some((m, _)) = best {
                            if !gts[m].1 && g_ig {
                                break;
                            }
                        }
                        let v = ious[di][gi];
                        if v < thr || best.is_some_and(|(_, bv)| v <= bv) {
                            continue;
                        }
                        best = Some((gi, v));
                    }
                    match best {
                        Some((gi, _)) => {
                            gt_taken[gi] = true;
                            matched[ti].push(true);
                            ignored[ti].push(gts[gi].1);
                        }
                        None => {
                            matched[ti].push(false);
                            ignored[ti].push(!area.contains(d.bbox.area(), ranges));
                        }
                    }
                }
            }
            scores.extend(dets.iter().map(|d| d.score));
        }

        if n_gt == 0 {
            continue;
        }
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

        for ti in 0..nt {
            let mut tp = 0usize;
            let mut fp = 0usize;
            let mut recall = Vec::with_capacity(order.len());
            let mut precision = Vec::with_capacity(order.len());
            for &d in &order {
                if ignored[ti][d] {
                    continue;
                }
                if matched[ti][d] {
                    tp += 1;
                } else {
                    fp += 1;
                }
                recall.push(tp as f64 / n_gt as f64);
                precision.push(tp as f64 / (tp + fp) as f64);
            }
            for i in (1..precision.len()).rev() {
                if precision[i] > precision[i - 1] {
                    precision[i - 1] = precision[i];
                }
            }
            let sum: f64 = recall_grid
                .iter()
                .map(|&r| {
                    let j = recall.partition_point(|&rc| rc < r);
                    precision.get(j).copied().unwrap_or(0.0)
                })
                .sum();
            table[ti][ki] = Some(sum / recall_grid.len() as f64);
        }
    }
    table
}

fn mean_defined<'a>(values: impl Iterator<Item = &'a Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// COCO-style AP over a set of evaluation instants.
pub fn evaluate_ap(instances: &[EvalInstance<'_>], params: &ApParams) -> Result<ApResult, MetricsError> {
    params.validate()?;
    let categories: Vec<u32> = instances
        .iter()
        .flat_map(|i| i.gts.iter().map(|g| g.category))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let summary = |area: Area| -> Option<f64> {
        let t = ap_table(instances, params, &categories, area);
        mean_defined(t.iter().flatten())
    };
    let all = ap_table(instances, params, &categories, Area::All);
    let at = |thr: f64| params.threshold_index(thr).and_then(|ti| mean_defined(all[ti].iter()));

    Ok(ApResult {
        ap: mean_defined(all.iter().flatten()),
        ap50: at(0.5),
        ap75: at(0.75),
        ap_small: summary(Area::Small),
        ap_medium: summary(Area::Medium),
        ap_large: summary(Area::Large),
    })
}

/// Instants for one stream under a pairing; `None` sources contribute their
/// ground truth as unmatched.
pub fn paired_instances<'a>(
    trace: &'a ScheduleTrace,
    stream: &'a VideoStream,
    pairings: &[EvalPairing],
) -> Vec<EvalInstance<'a>> {
    pairings
        .iter()
        .map(|p| EvalInstance {
            dets: p.source.map_or(&[][..], |k| trace.records[k].detections.as_slice()),
            gts: &stream.frames[p.frame_index].gt,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingMode {
    Streaming,
    Offline,
}

/// AP pooled over several `(trace, stream)` runs.
pub fn evaluate_runs(
    runs: &[(&ScheduleTrace, &VideoStream)],
    mode: PairingMode,
    params: &ApParams,
) -> Result<ApResult, MetricsError> {
    let mut instances = Vec::new();
    for &(trace, stream) in runs {
        let pairings = match mode {
            PairingMode::Streaming => pair_for_sap(trace, stream)?,
            PairingMode::Offline => pair_offline(trace, stream)?,
        };
        instances.extend(paired_instances(trace, stream, &pairings));
    }
    evaluate_ap(&instances, params)
}

/// Streaming AP: latency-aware pairing followed by [`evaluate_ap`].
pub fn streaming_ap(trace: &ScheduleTrace, stream: &VideoStream, params: &ApParams) -> Result<ApResult, MetricsError> {
    evaluate_runs(&[(trace, stream)], PairingMode::Streaming, params)
}

/// AP with each frame judged against its own output.
pub fn offline_pairing_ap(
    trace: &ScheduleTrace,
    stream: &VideoStream,
    params: &ApParams,
) -> Result<ApResult, MetricsError> {
    evaluate_runs(&[(trace, stream)], PairingMode::Offline, params)
}

/// CSV/JSON result row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub video_id: String,
    pub latency_ms: f64,
    pub speed_factor: u32,
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ap_s: Option<f64>,
    pub ap_m: Option<f64>,
    pub ap_l: Option<f64>,
}

impl ResultRow {
    pub fn new(video_id: impl Into<String>, latency_ms: f64, speed_factor: u32, r: &ApResult) -> Self {
        Self {
            video_id: video_id.into(),
            latency_ms,
            speed_factor,
            ap: r.ap,
            ap50: r.ap50,
            ap75: r.ap75,
            ap_s: r.ap_small,
            ap_m: r.ap_medium,
            ap_l: r.ap_large,
        }
    }
}
