//! Discrete-event simulation of a single detector consuming a frame stream
//! under latency, and the streaming evaluation pairing built from it.
//!
//! The detector handles one frame at a time. It starts the first frame on
//! arrival; whenever it finishes it moves to the newest frame that has
//! already arrived (everything older is skipped for good), or idles until
//! the next arrival. Each ground-truth instant is then judged against the
//! most recent output completed no later than that instant.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Frame, VideoStream};
use crate::geometry::Detection;
use crate::rng::{derive_seed, rng_from_seed};

/// Slack for comparing simulated instants. Timestamps are `i / fps` and
/// completions are sums of such values, so exact ties (latency equal to the
/// frame interval) otherwise depend on rounding.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("latency for frame {frame} must be positive and finite, got {value}")]
    Latency { frame: usize, value: f64 },
    #[error("per-frame latency list has no entry for frame {0}")]
    MissingLatency(usize),
    #[error("cannot simulate an empty stream")]
    EmptyStream,
    #[error("trace/stream mismatch: {0}")]
    Mismatch(String),
}

/// Detector processing time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatencyModel {
    Constant { seconds: f64 },
    /// Indexed by input frame.
    PerFrame { seconds: Vec<f64> },
    /// Uniform on `[mean - jitter, mean + jitter]`, drawn from a generator
    /// seeded per input frame so a frame's latency does not depend on the
    /// schedule.
    Jitter { mean: f64, jitter: f64, seed: u64 },
}

impl LatencyModel {
    pub fn constant(seconds: f64) -> Self {
        LatencyModel::Constant { seconds }
    }

    /// Processing time for input frame `frame`.
    pub fn sample(&self, frame: usize) -> Result<f64, SimError> {
        let value = match self {
            LatencyModel::Constant { seconds } => *seconds,
            LatencyModel::PerFrame { seconds } => *seconds.get(frame).ok_or(SimError::MissingLatency(frame))?,
            LatencyModel::Jitter { mean, jitter, seed } => {
                let mut rng = rng_from_seed(derive_seed(*seed, "latency", frame as u64));
                mean + jitter * (2.0 * rng.random::<f64>() - 1.0)
            }
        };
        if !(value.is_finite() && value > 0.0) {
            return Err(SimError::Latency { frame, value });
        }
        Ok(value)
    }

    /// Same model with `extra` seconds added to every sample.
    pub fn with_extra(&self, extra: f64) -> Self {
        match self {
            LatencyModel::Constant { seconds } => LatencyModel::Constant { seconds: seconds + extra },
            LatencyModel::PerFrame { seconds } => {
                LatencyModel::PerFrame { seconds: seconds.iter().map(|s| s + extra).collect() }
            }
            LatencyModel::Jitter { mean, jitter, seed } => {
                LatencyModel::Jitter { mean: mean + extra, jitter: *jitter, seed: *seed }
            }
        }
    }
}

/// A detector with state carried from one invocation to the next.
///
/// The simulator treats the state as opaque: the first invocation receives
/// [`DetectorAgent::initial_state`] built from the first frame processed,
/// and every later one receives what the previous invocation returned.
pub trait DetectorAgent {
    type State;

    /// First-frame rule. Two-frame agents duplicate the first frame into
    /// their history buffer here.
    fn initial_state(&self, first: &Frame) -> Self::State;

    fn process(&self, frame: &Frame, state: Self::State) -> (Vec<Detection>, Self::State);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub input_frame_index: usize,
    pub start_time: f64,
    pub completion_time: f64,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleTrace {
    pub video_id: String,
    pub records: Vec<TraceRecord>,
}

impl ScheduleTrace {
    pub fn processed_frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.records.iter().map(|r| r.input_frame_index)
    }
}

/// Which output a ground-truth instant is judged against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPairing {
    pub frame_index: usize,
    /// Index into [`ScheduleTrace::records`]; `None` means no output yet.
    pub source: Option<usize>,
}

pub fn simulate<A: DetectorAgent>(
    stream: &VideoStream,
    agent: &A,
    latency: &LatencyModel,
) -> Result<ScheduleTrace, SimError> {
    let frames = &stream.frames;
    if frames.is_empty() {
        return Err(SimError::EmptyStream);
    }
    let n = frames.len();
    let mut records = Vec::new();
    let mut state = Some(agent.initial_state(&frames[0]));
    let mut next = 0usize;
    let mut free_at = f64::NEG_INFINITY;
    while next < n {
        let frame = &frames[next];
        let start = frame.timestamp.max(free_at);
        let done = start + latency.sample(next)?;
        let (detections, new_state) = agent.process(frame, state.take().expect("state threaded"));
        state = Some(new_state);
        records.push(TraceRecord { input_frame_index: next, start_time: start, completion_time: done, detections });

        // newest frame already arrived at completion time
        let arrived = frames.partition_point(|f| f.timestamp <= done + TIME_EPS);
        let newest = arrived.saturating_sub(1);
        next = if newest > next { newest } else { next + 1 };
        free_at = done;
    }
    Ok(ScheduleTrace { video_id: stream.video_id.clone(), records })
}

/// Every frame processed in order at its own arrival, with zero latency.
/// Paired offline this gives the conventional per-frame evaluation.
pub fn simulate_offline<A: DetectorAgent>(stream: &VideoStream, agent: &A) -> Result<ScheduleTrace, SimError> {
    let frames = &stream.frames;
    if frames.is_empty() {
        return Err(SimError::EmptyStream);
    }
    let mut state = Some(agent.initial_state(&frames[0]));
    let records = frames
        .iter()
        .map(|f| {
            let (detections, s) = agent.process(f, state.take().expect("state threaded"));
            state = Some(s);
            TraceRecord { input_frame_index: f.frame_index, start_time: f.timestamp, completion_time: f.timestamp, detections }
        })
        .collect();
    Ok(ScheduleTrace { video_id: stream.video_id.clone(), records })
}

fn check_trace(trace: &ScheduleTrace, stream: &VideoStream) -> Result<(), SimError> {
    if trace.video_id != stream.video_id {
        return Err(SimError::Mismatch(format!("trace is for video {}, stream is {}", trace.video_id, stream.video_id)));
    }
    let mut prev_completion = f64::NEG_INFINITY;
    for r in &trace.records {
        if r.input_frame_index >= stream.frames.len() {
            return Err(SimError::Mismatch(format!(
                "record for frame {} but stream has {} frames",
                r.input_frame_index,
                stream.frames.len()
            )));
        }
        if r.completion_time < prev_completion {
            return Err(SimError::Mismatch("records are not in completion order".into()));
        }
        prev_completion = r.completion_time;
    }
    Ok(())
}

/// For each frame, the record with the latest completion time not after the
/// frame's timestamp (a completion exactly at the timestamp counts).
pub fn pair_for_sap(trace: &ScheduleTrace, stream: &VideoStream) -> Result<Vec<EvalPairing>, SimError> {
    check_trace(trace, stream)?;
    Ok(stream
        .frames
        .iter()
        .map(|f| {
            let available = trace.records.partition_point(|r| r.completion_time <= f.timestamp + TIME_EPS);
            EvalPairing { frame_index: f.frame_index, source: available.checked_sub(1) }
        })
        .collect())
}

/// Each frame paired with the output computed from that same frame, or
/// `None` when the frame was skipped.
pub fn pair_offline(trace: &ScheduleTrace, stream: &VideoStream) -> Result<Vec<EvalPairing>, SimError> {
    check_trace(trace, stream)?;
    let mut by_frame = vec![None; stream.frames.len()];
    for (k, r) in trace.records.iter().enumerate() {
        by_frame[r.input_frame_index] = Some(k);
    }
    Ok(stream
        .frames
        .iter()
        .map(|f| EvalPairing { frame_index: f.frame_index, source: by_frame[f.frame_index] })
        .collect())
}
