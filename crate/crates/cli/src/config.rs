//! Run configuration: one TOML file, then command-line overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use streamperc::data::{load_stream_dataset, SpeedFactor, VideoStream};
use streamperc::dfp::DfpConfig;
use streamperc::experiment::AgentKind;
use streamperc::forecast::{KfConfig, LinearForecaster, ModelFile, TrainConfig};
use streamperc::metrics::ApParams;
use streamperc::rng::derive_seed;
use streamperc::scene_sim::{generate_stream, MockDetectorConfig, RandomObjects, SceneConfig};
use streamperc::stream_sim::LatencyModel;

/// Printed by `--help` on every subcommand.
pub const CONFIG_HELP: &str = "\
CONFIG FILE (TOML, unknown keys are rejected; flags override file values):
  seed = 0                    global seed; every component seed is derived from it
  out = \"out\"                 output directory
  agent = \"oracle\"            oracle | delayed-oracle | kalman | linear-forecaster
  model = \"model.json\"        linear-forecaster weights (written by train-forecaster)
  speed = 1                   speed factor 0, 1 or 2
  scenes = 4                  number of generated scenes
  dataset = \"data.json\"       COCO-style stream dataset; replaces generated scenes
  predictions = \"p.json\"      eval-offline: score this prediction dump instead of simulating
  [scene]                     frame_count, image_size = [w, h], fps, video_id, objects = [..],
                              random = { count, speed_range, size_range, categories, spawn_spread }
                              objects: { center0, velocity, size, category, spawn, despawn }
  [latency]                   kind = \"constant\", seconds | kind = \"per_frame\", seconds = [..]
                              | kind = \"jitter\", mean, jitter, seed
  [detector]                  coordinate_noise_sigma, drop_probability,
                              score_model = { kind = \"constant\", score } | { kind = \"noise_derived\" }
  [kalman]                    process_noise, measurement_noise, initial_velocity_variance,
                              iou_threshold, max_age, two_point_velocity_init
  [ap]                        iou_thresholds, recall_points, max_dets,
                              area_ranges = { small_max, large_min }
  [train]                     learning_rate, epochs, tal_enabled, trend = { tau, nu },
                              normalization = \"per_image\" | \"per_batch\", init_scale, max_backoff
  [gradcheck]                 seeds, samples, channels, height, width, tolerance
  [dfp]                       fusion = \"concat\" | \"add\", residual
  [compare]                   agents = [..], latencies_ms = [..], speeds = [..],
                              extra_latency_ms = { <agent> = ms }

Seeds: scene i uses derive(seed, \"scene\", i), the detector derive(seed, \"detector\", 0),
training derive(seed, \"train\", 0), gradcheck instance k derive(seed, \"gradcheck\", k).
rng_seed / seed keys inside [scene], [detector] and [train] are replaced by these.
Relative paths resolve against the working directory.

EXIT CODES: 0 success, 1 usage error, 2 input or validation error, 3 numerical failure.";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    pub seeds: u64,
    /// Samples per forecaster batch.
    pub samples: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub tolerance: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self { seeds: 20, samples: 16, channels: 4, height: 3, width: 3, tolerance: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    pub agents: Vec<AgentKind>,
    pub latencies_ms: Vec<f64>,
    pub speeds: Vec<SpeedFactor>,
    /// Per agent name, added to every latency of that agent.
    pub extra_latency_ms: BTreeMap<String, f64>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            agents: vec![AgentKind::DelayedOracle, AgentKind::Kalman],
            latencies_ms: vec![20.0],
            speeds: SpeedFactor::ALL.to_vec(),
            extra_latency_ms: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub agent: AgentKind,
    pub model: Option<PathBuf>,
    pub speed: SpeedFactor,
    pub scenes: usize,
    pub dataset: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub scene: SceneConfig,
    pub latency: LatencyModel,
    pub detector: MockDetectorConfig,
    pub kalman: KfConfig,
    pub ap: ApParams,
    pub train: TrainConfig,
    pub gradcheck: GradcheckConfig,
    pub dfp: DfpConfig,
    pub compare: CompareConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            agent: AgentKind::Oracle,
            model: None,
            speed: SpeedFactor::Normal,
            scenes: 4,
            dataset: None,
            predictions: None,
            scene: SceneConfig {
                video_id: "scene".into(),
                random: Some(RandomObjects {
                    count: 6,
                    speed_range: (2.0, 8.0),
                    size_range: (40.0, 150.0),
                    categories: 2,
                    spawn_spread: 0,
                }),
                ..SceneConfig::new(60, (960, 600), vec![])
            },
            latency: LatencyModel::constant(0.020),
            detector: MockDetectorConfig::default(),
            kalman: KfConfig::default(),
            ap: ApParams::default(),
            train: TrainConfig::default(),
            gradcheck: GradcheckConfig::default(),
            dfp: DfpConfig::default(),
            compare: CompareConfig::default(),
        }
    }
}

/// Flag values; `None` keeps the file value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub latency_ms: Option<f64>,
    pub speed: Option<SpeedFactor>,
    pub agent: Option<AgentKind>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, o: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = &o.out {
            cfg.out = v.clone();
        }
        if let Some(v) = o.seed {
            cfg.seed = v;
        }
        if let Some(ms) = o.latency_ms {
            if !(ms.is_finite() && ms > 0.0) {
                bail!("--latency-ms must be positive, got {ms}");
            }
            cfg.latency = LatencyModel::constant(ms / 1000.0);
            cfg.compare.latencies_ms = vec![ms];
        }
        if let Some(v) = o.speed {
            cfg.speed = v;
        }
        if let Some(v) = o.agent {
            cfg.agent = v;
        }
        cfg.derive_seeds();
        cfg.validate()?;
        Ok(cfg)
    }

    fn derive_seeds(&mut self) {
        self.detector.rng_seed = derive_seed(self.seed, "detector", 0);
        self.train.seed = derive_seed(self.seed, "train", 0);
    }

    fn validate(&self) -> Result<()> {
        if self.dataset.is_none() && self.scenes == 0 {
            bail!("scenes must be at least 1");
        }
        self.detector.validate()?;
        self.kalman.validate()?;
        self.ap.validate()?;
        if self.gradcheck.seeds == 0 || self.gradcheck.samples == 0 {
            bail!("gradcheck.seeds and gradcheck.samples must be positive");
        }
        if !(self.gradcheck.tolerance.is_finite() && self.gradcheck.tolerance > 0.0) {
            bail!("gradcheck.tolerance must be positive");
        }
        for (name, ms) in &self.compare.extra_latency_ms {
            name.parse::<AgentKind>()?;
            if !(ms.is_finite() && *ms >= 0.0) {
                bail!("compare.extra_latency_ms.{name} must be >= 0, got {ms}");
            }
        }
        Ok(())
    }

    /// Streams at speed 1x: the dataset if one is named, else generated
    /// scenes.
    pub fn base_streams(&self) -> Result<Vec<VideoStream>> {
        if let Some(p) = &self.dataset {
            return Ok(load_stream_dataset(p)?);
        }
        self.scene_configs().iter().map(|c| Ok(generate_stream(c)?)).collect()
    }

    /// One config per generated scene, seeded from the global seed.
    pub fn scene_configs(&self) -> Vec<SceneConfig> {
        (0..self.scenes)
            .map(|i| SceneConfig {
                video_id: format!("{}-{i:03}", self.scene.video_id),
                rng_seed: derive_seed(self.seed, "scene", i as u64),
                ..self.scene.clone()
            })
            .collect()
    }

    pub fn load_model(&self) -> Result<Option<LinearForecaster>> {
        let Some(p) = &self.model else { return Ok(None) };
        let text = fs::read_to_string(p).with_context(|| format!("reading model {}", p.display()))?;
        let file: ModelFile =
            serde_json::from_str(&text).with_context(|| format!("parsing model {}", p.display()))?;
        Ok(Some(file.model()?))
    }

    /// Nominal latency in ms for result rows.
    pub fn latency_ms(&self) -> f64 {
        match &self.latency {
            LatencyModel::Constant { seconds } => seconds * 1000.0,
            LatencyModel::PerFrame { seconds } => 1000.0 * seconds.iter().sum::<f64>() / seconds.len().max(1) as f64,
            LatencyModel::Jitter { mean, .. } => mean * 1000.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        fs::write(&p, "seed = 3\nagent = \"kalman\"\n[latency]\nkind = \"constant\"\nseconds = 0.05\n").unwrap();
        let o = Overrides { seed: Some(9), latency_ms: Some(10.0), ..Overrides::default() };
        let cfg = RunConfig::load(Some(&p), &o).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.agent, AgentKind::Kalman);
        assert_eq!(cfg.latency, LatencyModel::constant(0.01));
        assert_eq!(cfg.detector.rng_seed, derive_seed(9, "detector", 0));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        fs::write(&p, "seeed = 3\n").unwrap();
        assert!(RunConfig::load(Some(&p), &Overrides::default()).is_err());
        fs::write(&p, "[train]\nepochz = 3\n").unwrap();
        assert!(RunConfig::load(Some(&p), &Overrides::default()).is_err());
    }

    #[test]
    fn scenes_get_distinct_derived_seeds() {
        let cfg = RunConfig { scenes: 2, ..RunConfig::default() };
        let s = cfg.base_streams().unwrap();
        assert_eq!(s.len(), 2);
        assert_ne!(s[0].frames[0].gt, s[1].frames[0].gt);
        assert_eq!(s[1].video_id, "scene-001");
    }
}
