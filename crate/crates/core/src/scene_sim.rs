//! Deterministic synthetic scenes of constant-velocity boxes and a noisy
//! mock detector.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{frame_time, Frame, VideoStream};
use crate::geometry::{BBox, Detection, GroundTruthBox};
use crate::rng::{rng_from_seed, Rng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("fps must be positive and finite, got {0}")]
    Fps(f64),
    #[error("frame_count must be at least 1")]
    FrameCount,
    #[error("image size must be positive, got {0}x{1}")]
    ImageSize(u32, u32),
    #[error("object {index}: {message}")]
    Object { index: usize, message: String },
    #[error("random objects: {0}")]
    Random(String),
    #[error("detector config: {0}")]
    Detector(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovingObject {
    /// Center at frame 0, px.
    pub center0: (f64, f64),
    /// px per frame.
    pub velocity: (f64, f64),
    /// `(w, h)` px.
    pub size: (f64, f64),
    #[serde(default)]
    pub category: u32,
    /// First frame the object is visible.
    #[serde(default)]
    pub spawn: usize,
    /// First frame the object is gone; `None` keeps it until the end.
    #[serde(default)]
    pub despawn: Option<usize>,
}

impl MovingObject {
    pub fn alive_at(&self, t: usize) -> bool {
        t >= self.spawn && self.despawn.is_none_or(|d| t < d)
    }

    /// Unclipped box at frame `t`.
    pub fn box_at(&self, t: usize) -> BBox {
        let tf = t as f64;
        let cx = self.center0.0 + tf * self.velocity.0;
        let cy = self.center0.1 + tf * self.velocity.1;
        BBox::from_center_size(cx, cy, self.size.0, self.size.1).expect("validated object yields a valid box")
    }
}

/// Parameters for objects drawn from the scene seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomObjects {
    pub count: usize,
    /// Speed in px/frame, sampled uniformly; direction uniform on the circle.
    pub speed_range: (f64, f64),
    /// Side lengths in px, sampled independently for w and h.
    pub size_range: (f64, f64),
    #[serde(default = "one")]
    pub categories: u32,
    /// Spawn frames are uniform in `0..=spawn_spread`.
    #[serde(default)]
    pub spawn_spread: usize,
}

fn one() -> u32 {
    1
}

fn default_fps() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default = "default_video_id")]
    pub video_id: String,
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub frame_count: usize,
    /// `(width, height)` px.
    pub image_size: (u32, u32),
    #[serde(default)]
    pub objects: Vec<MovingObject>,
    #[serde(default)]
    pub random: Option<RandomObjects>,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_video_id() -> String {
    "scene".to_string()
}

impl SceneConfig {
    pub fn new(frame_count: usize, image_size: (u32, u32), objects: Vec<MovingObject>) -> Self {
        Self {
            video_id: default_video_id(),
            fps: default_fps(),
            frame_count,
            image_size,
            objects,
            random: None,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(SceneError::Fps(self.fps));
        }
        if self.frame_count == 0 {
            return Err(SceneError::FrameCount);
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return Err(SceneError::ImageSize(self.image_size.0, self.image_size.1));
        }
        for (index, o) in self.objects.iter().enumerate() {
            let finite = [o.center0.0, o.center0.1, o.velocity.0, o.velocity.1, o.size.0, o.size.1]
                .iter()
                .all(|v| v.is_finite());
            if !finite {
                return Err(SceneError::Object { index, message: "non-finite parameter".into() });
            }
            if o.size.0 <= 0.0 || o.size.1 <= 0.0 {
                return Err(SceneError::Object { index, message: format!("size must be positive, got {:?}", o.size) });
            }
        }
        if let Some(r) = &self.random {
            if !(r.speed_range.0 >= 0.0 && r.speed_range.0 <= r.speed_range.1 && r.speed_range.1.is_finite()) {
                return Err(SceneError::Random(format!("bad speed_range {:?}", r.speed_range)));
            }
            if !(r.size_range.0 > 0.0 && r.size_range.0 <= r.size_range.1 && r.size_range.1.is_finite()) {
                return Err(SceneError::Random(format!("bad size_range {:?}", r.size_range)));
            }
            if r.categories == 0 {
                return Err(SceneError::Random("categories must be at least 1".into()));
            }
        }
        Ok(())
    }

    /// Explicit objects followed by the seeded random ones.
    pub fn resolved_objects(&self) -> Vec<MovingObject> {
        let mut objects = self.objects.clone();
        if let Some(r) = &self.random {
            let mut rng = rng_from_seed(self.rng_seed);
            let (w, h) = (self.image_size.0 as f64, self.image_size.1 as f64);
            for _ in 0..r.count {
                let sw = uniform(&mut rng, r.size_range);
                let sh = uniform(&mut rng, r.size_range);
                let cx = uniform(&mut rng, (0.0, w));
                let cy = uniform(&mut rng, (0.0, h));
                let speed = uniform(&mut rng, r.speed_range);
                let angle = uniform(&mut rng, (0.0, std::f64::consts::TAU));
                let category = rng.random_range(0..r.categories);
                let spawn = rng.random_range(0..=r.spawn_spread);
                // center0 is the (possibly virtual) frame-0 position so that
                // the object sits at (cx, cy) when it spawns.
                let (vx, vy) = (speed * angle.cos(), speed * angle.sin());
                objects.push(MovingObject {
                    center0: (cx - spawn as f64 * vx, cy - spawn as f64 * vy),
                    velocity: (vx, vy),
                    size: (sw, sh),
                    category,
                    spawn,
                    despawn: None,
                });
            }
        }
        objects
    }
}

fn uniform(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Renders the scene. Object `k` (in [`SceneConfig::resolved_objects`]
/// order) carries track id `k`. Boxes are clipped to the image and omitted
/// when nothing with positive area remains.
pub fn generate_stream(cfg: &SceneConfig) -> Result<VideoStream, SceneError> {
    cfg.validate()?;
    let objects = cfg.resolved_objects();
    let (w, h) = (cfg.image_size.0 as f64, cfg.image_size.1 as f64);
    let frames = (0..cfg.frame_count)
        .map(|t| Frame {
            frame_index: t,
            timestamp: frame_time(t, cfg.fps),
            image_size: cfg.image_size,
            gt: objects
                .iter()
                .enumerate()
                .filter(|(_, o)| o.alive_at(t))
                .filter_map(|(k, o)| {
                    o.box_at(t).clip_to(w, h).map(|b| GroundTruthBox::new(b, o.category, Some(k as u64)))
                })
                .collect(),
        })
        .collect();
    Ok(VideoStream { video_id: cfg.video_id.clone(), fps: cfg.fps, frames })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScoreModel {
    Constant { score: f64 },
    /// `exp(-mean |offset| / sigma)`: 1 for an exact box, lower as the
    /// perturbation grows relative to the configured noise.
    NoiseDerived,
}

impl Default for ScoreModel {
    fn default() -> Self {
        ScoreModel::Constant { score: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockDetectorConfig {
    #[serde(default)]
    pub coordinate_noise_sigma: f64,
    #[serde(default)]
    pub drop_probability: f64,
    #[serde(default)]
    pub score_model: ScoreModel,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Default for MockDetectorConfig {
    fn default() -> Self {
        Self { coordinate_noise_sigma: 0.0, drop_probability: 0.0, score_model: ScoreModel::default(), rng_seed: 0 }
    }
}

impl MockDetectorConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.coordinate_noise_sigma.is_finite() && self.coordinate_noise_sigma >= 0.0) {
            return Err(SceneError::Detector(format!("sigma must be >= 0, got {}", self.coordinate_noise_sigma)));
        }
        if !(0.0..1.0).contains(&self.drop_probability) {
            return Err(SceneError::Detector(format!(
                "drop_probability must lie in [0, 1), got {}",
                self.drop_probability
            )));
        }
        if let ScoreModel::Constant { score } = self.score_model {
            if !(0.0..=1.0).contains(&score) {
                return Err(SceneError::Detector(format!("constant score must lie in [0, 1], got {score}")));
            }
        }
        Ok(())
    }
}

/// Noisy copy of the frame's ground truth.
///
/// For each box, in order: one uniform draw decides the drop, then four
/// standard normals (scaled by sigma) perturb x1, y1, x2, y2. Corners that
/// cross are swapped back into order.
pub fn mock_detect(frame: &Frame, cfg: &MockDetectorConfig, rng: &mut Rng) -> Vec<Detection> {
    let sigma = cfg.coordinate_noise_sigma;
    let mut out = Vec::with_capacity(frame.gt.len());
    for g in &frame.gt {
        if rng.random::<f64>() < cfg.drop_probability {
            continue;
        }
        let mut noise = [0.0f64; 4];
        for n in &mut noise {
            let z: f64 = rng.sample(StandardNormal);
            *n = sigma * z;
        }
        let b = g.bbox;
        let (xa, ya, xb, yb) = (b.x1() + noise[0], b.y1() + noise[1], b.x2() + noise[2], b.y2() + noise[3]);
        let bbox = BBox::new(xa.min(xb), ya.min(yb), xa.max(xb), ya.max(yb)).expect("finite perturbed box");
        let score = match cfg.score_model {
            ScoreModel::Constant { score } => score,
            ScoreModel::NoiseDerived => {
                let mean_abs = noise.iter().map(|v| v.abs()).sum::<f64>() / 4.0;
                if mean_abs == 0.0 {
                    1.0
                } else {
                    (-mean_abs / sigma).exp()
                }
            }
        };
        out.push(Detection { bbox, category: g.category, score });
    }
    out
}
