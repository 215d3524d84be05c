//! Agent construction and the agent x latency x speed comparison matrix.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{resample_stream, SpeedFactor, VideoStream};
use crate::forecast::{
    DelayedOracleAgent, KalmanAgent, KfConfig, LinearForecaster, LinearForecasterAgent, MockDetector, OracleAgent,
};
use crate::metrics::{evaluate_runs, ApParams, MetricsError, PairingMode};
use crate::scene_sim::{generate_stream, MockDetectorConfig, SceneConfig, SceneError};
use crate::stream_sim::{simulate, simulate_offline, LatencyModel, ScheduleTrace, SimError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown agent {0:?} (expected oracle, delayed-oracle, kalman or linear-forecaster)")]
    UnknownAgent(String),
    #[error("linear-forecaster agent needs a model")]
    MissingModel,
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Oracle,
    DelayedOracle,
    Kalman,
    LinearForecaster,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Oracle => "oracle",
            AgentKind::DelayedOracle => "delayed-oracle",
            AgentKind::Kalman => "kalman",
            AgentKind::LinearForecaster => "linear-forecaster",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = ExperimentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(AgentKind::Oracle),
            "delayed-oracle" => Ok(AgentKind::DelayedOracle),
            "kalman" => Ok(AgentKind::Kalman),
            "linear-forecaster" => Ok(AgentKind::LinearForecaster),
            other => Err(ExperimentError::UnknownAgent(other.to_string())),
        }
    }
}

/// A runnable agent of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Agent {
    Oracle(OracleAgent<MockDetector>),
    DelayedOracle(DelayedOracleAgent),
    Kalman(KalmanAgent<MockDetector>),
    Linear(LinearForecasterAgent<MockDetector>),
}

impl Agent {
    pub fn build(
        kind: AgentKind,
        detector: MockDetectorConfig,
        kalman: KfConfig,
        model: Option<&LinearForecaster>,
    ) -> Result<Self, ExperimentError> {
        detector.validate()?;
        let detector = MockDetector { cfg: detector };
        Ok(match kind {
            AgentKind::Oracle => Agent::Oracle(OracleAgent { detector }),
            AgentKind::DelayedOracle => Agent::DelayedOracle(DelayedOracleAgent),
            AgentKind::Kalman => {
                kalman.validate().map_err(|e| ExperimentError::Invalid(e.to_string()))?;
                Agent::Kalman(KalmanAgent { detector, cfg: kalman })
            }
            AgentKind::LinearForecaster => {
                let m = model.ok_or(ExperimentError::MissingModel)?;
                Agent::Linear(LinearForecasterAgent::new(detector, m.clone()))
            }
        })
    }

    pub fn simulate(&self, stream: &VideoStream, latency: &LatencyModel) -> Result<ScheduleTrace, SimError> {
        match self {
            Agent::Oracle(a) => simulate(stream, a, latency),
            Agent::DelayedOracle(a) => simulate(stream, a, latency),
            Agent::Kalman(a) => simulate(stream, a, latency),
            Agent::Linear(a) => simulate(stream, a, latency),
        }
    }

    pub fn simulate_offline(&self, stream: &VideoStream) -> Result<ScheduleTrace, SimError> {
        match self {
            Agent::Oracle(a) => simulate_offline(stream, a),
            Agent::DelayedOracle(a) => simulate_offline(stream, a),
            Agent::Kalman(a) => simulate_offline(stream, a),
            Agent::Linear(a) => simulate_offline(stream, a),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareAgent {
    pub kind: AgentKind,
    pub agent: Agent,
    /// Added to every latency in the grid for this agent (forecasting cost).
    pub extra_latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareSpec {
    pub scenes: Vec<SceneConfig>,
    pub agents: Vec<CompareAgent>,
    pub latencies_ms: Vec<f64>,
    pub speeds: Vec<SpeedFactor>,
    pub ap: ApParams,
}

/// One agent at one latency; sAP pooled over all scenes per speed, `None`
/// for speeds not run or without ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub agent: String,
    pub latency_ms: f64,
    pub extra_latency_ms: f64,
    pub sap_0x: Option<f64>,
    pub sap_1x: Option<f64>,
    pub sap_2x: Option<f64>,
}

pub const COMPARE_CSV_HEADER: &str = "agent,latency_ms,extra_latency_ms,sap_0x,sap_1x,sap_2x";

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

impl CompareRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.agent,
            self.latency_ms,
            self.extra_latency_ms,
            fmt_opt(self.sap_0x),
            fmt_opt(self.sap_1x),
            fmt_opt(self.sap_2x)
        )
    }

    pub fn sap(&self, speed: SpeedFactor) -> Option<f64> {
        match speed {
            SpeedFactor::Static => self.sap_0x,
            SpeedFactor::Normal => self.sap_1x,
            SpeedFactor::Double => self.sap_2x,
        }
    }
}

/// Runs every (agent, latency, speed) cell. Cells run in parallel; rows come
/// back in agent-major, then latency order regardless of scheduling.
pub fn run_compare(spec: &CompareSpec) -> Result<Vec<CompareRow>, ExperimentError> {
    if spec.scenes.is_empty() || spec.agents.is_empty() || spec.latencies_ms.is_empty() || spec.speeds.is_empty() {
        return Err(ExperimentError::Invalid("scenes, agents, latencies and speeds must be non-empty".into()));
    }
    spec.ap.validate()?;
    let base: Vec<VideoStream> = spec.scenes.iter().map(generate_stream).collect::<Result<_, _>>()?;
    let streams: Vec<(SpeedFactor, Vec<VideoStream>)> =
        spec.speeds.iter().map(|&s| (s, base.iter().map(|b| resample_stream(b, s)).collect())).collect();

    let (n_lat, n_speed) = (spec.latencies_ms.len(), streams.len());
    let cells: Vec<(usize, usize, usize)> = (0..spec.agents.len())
        .flat_map(|a| (0..n_lat).flat_map(move |l| (0..n_speed).map(move |s| (a, l, s))))
        .collect();
    let results: Vec<Option<f64>> = cells
        .par_iter()
        .map(|&(a, l, s)| -> Result<Option<f64>, ExperimentError> {
            let agent = &spec.agents[a];
            let latency = LatencyModel::constant((spec.latencies_ms[l] + agent.extra_latency_ms) / 1000.0);
            let traces: Vec<ScheduleTrace> =
                streams[s].1.iter().map(|st| agent.agent.simulate(st, &latency)).collect::<Result<_, _>>()?;
            let runs: Vec<_> = traces.iter().zip(&streams[s].1).collect();
            Ok(evaluate_runs(&runs, PairingMode::Streaming, &spec.ap)?.ap)
        })
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    let mut it = results.into_iter();
    for agent in &spec.agents {
        for &latency_ms in &spec.latencies_ms {
            let mut row = CompareRow {
                agent: agent.kind.name().to_string(),
                latency_ms,
                extra_latency_ms: agent.extra_latency_ms,
                sap_0x: None,
                sap_1x: None,
                sap_2x: None,
            };
            for (speed, _) in &streams {
                let v = it.next().expect("one result per cell");
                match speed {
                    SpeedFactor::Static => row.sap_0x = v,
                    SpeedFactor::Normal => row.sap_1x = v,
                    SpeedFactor::Double => row.sap_2x = v,
                }
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut s = String::from(COMPARE_CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene_sim::RandomObjects;

    fn scenes() -> Vec<SceneConfig> {
        (0..3)
            .map(|i| SceneConfig {
                video_id: format!("s{i}"),
                random: Some(RandomObjects {
                    count: 5,
                    speed_range: (2.0, 8.0),
                    size_range: (40.0, 150.0),
                    categories: 2,
                    spawn_spread: 0,
                }),
                rng_seed: 100 + i,
                ..SceneConfig::new(40, (960, 600), vec![])
            })
            .collect()
    }

    fn agent(kind: AgentKind) -> CompareAgent {
        CompareAgent {
            kind,
            agent: Agent::build(kind, MockDetectorConfig::default(), KfConfig::default(), None).unwrap(),
            extra_latency_ms: 0.0,
        }
    }

    #[test]
    fn kalman_beats_delayed_oracle_with_widening_margin() {
        let spec = CompareSpec {
            scenes: scenes(),
            agents: vec![agent(AgentKind::DelayedOracle), agent(AgentKind::Kalman)],
            latencies_ms: vec![20.0],
            speeds: SpeedFactor::ALL.to_vec(),
            ap: ApParams::default(),
        };
        let rows = run_compare(&spec).unwrap();
        assert_eq!(rows.len(), 2);
        let (d, k) = (&rows[0], &rows[1]);
        for s in SpeedFactor::ALL {
            assert!(k.sap(s).unwrap() >= d.sap(s).unwrap(), "{s:?}");
        }
        let m1 = k.sap_1x.unwrap() - d.sap_1x.unwrap();
        let m2 = k.sap_2x.unwrap() - d.sap_2x.unwrap();
        assert!(m2 > m1, "margins {m1} {m2}");
        assert_eq!(run_compare(&spec).unwrap(), rows);
    }

    #[test]
    fn agent_names_round_trip() {
        for k in [AgentKind::Oracle, AgentKind::DelayedOracle, AgentKind::Kalman, AgentKind::LinearForecaster] {
            assert_eq!(k.name().parse::<AgentKind>().unwrap(), k);
        }
        assert!("nope".parse::<AgentKind>().is_err());
        assert!(matches!(
            Agent::build(AgentKind::LinearForecaster, MockDetectorConfig::default(), KfConfig::default(), None),
            Err(ExperimentError::MissingModel)
        ));
    }
}
