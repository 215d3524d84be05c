//! Stream datasets: COCO-style ingestion and export, training triplets,
//! speed re-sampling and prediction dumps.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BBox, Detection, GeometryError, GroundTruthBox};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("video {video}: expected frame_index {expected}, found {found}")]
    NonContiguous { video: String, expected: usize, found: usize },
    #[error("video {video}: timestamps must strictly increase (frame {frame})")]
    NonIncreasingTime { video: String, frame: usize },
    #[error("video {video} has no frames")]
    EmptyStream { video: String },
    #[error("video {video}: fps must be positive and finite, got {fps}")]
    BadFps { video: String, fps: f64 },
    #[error("annotation {index}: {source}")]
    BadBox {
        index: usize,
        #[source]
        source: GeometryError,
    },
    #[error("annotation {index} references unknown image {image_id}")]
    UnknownImage { index: usize, image_id: u64 },
    #[error("image id {0} appears twice")]
    DuplicateImage(u64),
    #[error("video {video} frame {frame}: track id {track} appears twice")]
    DuplicateTrack { video: String, frame: usize, track: u64 },
    #[error("unsupported speed factor {0}; expected 0, 1 or 2")]
    InvalidFactor(u32),
    #[error("prediction for video {video} frame {frame} has no matching frame in the dataset")]
    UnknownFrame { video: String, frame: usize },
    #[error("prediction record {index}: {message}")]
    Schema { index: usize, message: String },
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub frame_index: usize,
    /// Seconds since stream start.
    pub timestamp: f64,
    /// `(width, height)` in pixels.
    pub image_size: (u32, u32),
    pub gt: Vec<GroundTruthBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoStream {
    pub video_id: String,
    pub fps: f64,
    pub frames: Vec<Frame>,
}

impl VideoStream {
    /// Checks stream invariants: positive fps, at least one frame, frame
    /// indices consecutive from 0, strictly increasing timestamps and unique
    /// track ids per frame.
    pub fn validate(&self) -> Result<()> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(DataError::BadFps { video: self.video_id.clone(), fps: self.fps });
        }
        if self.frames.is_empty() {
            return Err(DataError::EmptyStream { video: self.video_id.clone() });
        }
        for (i, f) in self.frames.iter().enumerate() {
            if f.frame_index != i {
                return Err(DataError::NonContiguous {
                    video: self.video_id.clone(),
                    expected: i,
                    found: f.frame_index,
                });
            }
            if i > 0 && f.timestamp <= self.frames[i - 1].timestamp {
                return Err(DataError::NonIncreasingTime { video: self.video_id.clone(), frame: i });
            }
            let mut seen = HashSet::new();
            for g in &f.gt {
                if let Some(t) = g.track_id {
                    if !seen.insert(t) {
                        return Err(DataError::DuplicateTrack {
                            video: self.video_id.clone(),
                            frame: i,
                            track: t,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Seconds between consecutive frames.
    pub fn frame_interval(&self) -> f64 {
        1.0 / self.fps
    }
}

pub(crate) fn frame_time(index: usize, fps: f64) -> f64 {
    index as f64 / fps
}

/// Training unit: two input frames and the supervision boxes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triplet<'a> {
    pub prev: &'a Frame,
    pub cur: &'a Frame,
    /// Index of the frame supplying `target_gt`.
    pub target_index: usize,
    pub target_gt: &'a [GroundTruthBox],
}

/// Stream re-sampling rate relative to the recorded motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum SpeedFactor {
    Static,
    Normal,
    Double,
}

impl SpeedFactor {
    pub const ALL: [SpeedFactor; 3] = [SpeedFactor::Static, SpeedFactor::Normal, SpeedFactor::Double];

    pub fn as_u32(self) -> u32 {
        match self {
            SpeedFactor::Static => 0,
            SpeedFactor::Normal => 1,
            SpeedFactor::Double => 2,
        }
    }
}

impl TryFrom<u32> for SpeedFactor {
    type Error = DataError;

    fn try_from(v: u32) -> Result<Self> {
        match v {
            0 => Ok(SpeedFactor::Static),
            1 => Ok(SpeedFactor::Normal),
            2 => Ok(SpeedFactor::Double),
            other => Err(DataError::InvalidFactor(other)),
        }
    }
}

impl From<SpeedFactor> for u32 {
    fn from(s: SpeedFactor) -> u32 {
        s.as_u32()
    }
}

/// `(F[t-1], F[t], G[t+1])` for `t = 1 ..= n-2`. The first and last frames
/// never supply supervision.
pub fn build_triplets(stream: &VideoStream) -> Vec<Triplet<'_>> {
    strided_triplets(stream, 1)
}

fn strided_triplets(stream: &VideoStream, step: usize) -> Vec<Triplet<'_>> {
    let n = stream.frames.len();
    if n < 2 * step + 1 {
        return Vec::new();
    }
    (step..n - step)
        .map(|t| Triplet {
            prev: &stream.frames[t - step],
            cur: &stream.frames[t],
            target_index: t + step,
            target_gt: &stream.frames[t + step].gt,
        })
        .collect()
}

/// Triplets simulating a static world (0: `(F[t], F[t], G[t])`), the
/// recorded speed (1: same as [`build_triplets`]) or doubled speed
/// (2: `(F[t-2], F[t], G[t+2])`).
pub fn resample_speed(stream: &VideoStream, factor: u32) -> Result<Vec<Triplet<'_>>> {
    Ok(match SpeedFactor::try_from(factor)? {
        SpeedFactor::Static => stream
            .frames
            .iter()
            .map(|f| Triplet { prev: f, cur: f, target_index: f.frame_index, target_gt: &f.gt })
            .collect(),
        SpeedFactor::Normal => build_triplets(stream),
        SpeedFactor::Double => strided_triplets(stream, 2),
    })
}

/// Stream-level counterpart of [`resample_speed`] used for streaming
/// evaluation: 1 is the identity, 2 keeps every other frame re-timed at the
/// original fps, and 0 freezes the world at its first frame for the whole
/// duration.
pub fn resample_stream(stream: &VideoStream, factor: SpeedFactor) -> VideoStream {
    let frames: Vec<Frame> = match factor {
        SpeedFactor::Normal => return stream.clone(),
        SpeedFactor::Double => stream.frames.iter().step_by(2).cloned().collect(),
        SpeedFactor::Static => {
            let first = &stream.frames[0];
            vec![first.clone(); stream.frames.len()]
        }
    };
    let frames = frames
        .into_iter()
        .enumerate()
        .map(|(i, f)| Frame { frame_index: i, timestamp: frame_time(i, stream.fps), ..f })
        .collect();
    VideoStream { video_id: stream.video_id.clone(), fps: stream.fps, frames }
}

// ---------------------------------------------------------------------------
// COCO-style dataset files

#[derive(Debug, Clone, PartialEq, Eq, Hash, Deserialize, Serialize)]
#[serde(untagged)]
enum VideoKey {
    Int(u64),
    Str(String),
}

impl VideoKey {
    fn into_string(self) -> String {
        match self {
            VideoKey::Int(i) => i.to_string(),
            VideoKey::Str(s) => s,
        }
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct CocoFile {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    videos: Vec<CocoVideo>,
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    #[serde(default)]
    categories: Vec<CocoCategory>,
}

#[derive(Debug, Deserialize, Serialize)]
struct CocoVideo {
    id: VideoKey,
    #[serde(default)]
    fps: Option<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
struct CocoImage {
    id: u64,
    #[serde(default)]
    file_name: String,
    width: u32,
    height: u32,
    video_id: VideoKey,
    frame_index: usize,
}

#[derive(Debug, Deserialize, Serialize)]
struct CocoAnnotation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<u64>,
    image_id: u64,
    bbox: [f64; 4],
    category_id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    track_id: Option<u64>,
}

#[derive(Debug, Deserialize, Serialize)]
struct CocoCategory {
    id: u32,
    #[serde(default)]
    name: String,
}

/// Frame rate assumed for videos that do not declare one.
pub const DEFAULT_FPS: f64 = 30.0;

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|source| DataError::Json { path: path.to_path_buf(), source })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| DataError::Io { path: path.to_path_buf(), source })
}

/// Loads a COCO-style JSON file and groups its images into streams.
///
/// Images carry `video_id` and `frame_index`; an optional top-level `videos`
/// array may declare per-video `fps` (default 30). Boxes are converted from
/// `[x, y, w, h]` to corner form. Streams come back in order of first
/// appearance in the `images` array.
pub fn load_stream_dataset(path: impl AsRef<Path>) -> Result<Vec<VideoStream>> {
    let path = path.as_ref();
    let file: CocoFile = read_json(path)?;

    let fps_of: HashMap<String, f64> = file
        .videos
        .into_iter()
        .filter_map(|v| v.fps.map(|f| (v.id.into_string(), f)))
        .collect();

    let mut video_order: Vec<String> = Vec::new();
    let mut by_video: HashMap<String, Vec<(usize, u64, (u32, u32))>> = HashMap::new();
    let mut image_loc: HashMap<u64, (String, usize)> = HashMap::new();
    for img in file.images {
        let vid = img.video_id.into_string();
        if image_loc.insert(img.id, (vid.clone(), img.frame_index)).is_some() {
            return Err(DataError::DuplicateImage(img.id));
        }
        by_video
            .entry(vid.clone())
            .or_insert_with(|| {
                video_order.push(vid.clone());
                Vec::new()
            })
            .push((img.frame_index, img.id, (img.width, img.height)));
    }

    let mut gt_of: HashMap<u64, Vec<GroundTruthBox>> = HashMap::new();
    for (index, ann) in file.annotations.into_iter().enumerate() {
        if !image_loc.contains_key(&ann.image_id) {
            return Err(DataError::UnknownImage { index, image_id: ann.image_id });
        }
        let [x, y, w, h] = ann.bbox;
        let bbox = BBox::from_xywh(x, y, w, h).map_err(|source| DataError::BadBox { index, source })?;
        gt_of
            .entry(ann.image_id)
            .or_default()
            .push(GroundTruthBox::new(bbox, ann.category_id, ann.track_id));
    }

    let mut streams = Vec::with_capacity(video_order.len());
    for vid in video_order {
        let mut images = by_video.remove(&vid).unwrap_or_default();
        images.sort_by_key(|&(idx, _, _)| idx);
        let fps = fps_of.get(&vid).copied().unwrap_or(DEFAULT_FPS);
        let mut frames = Vec::with_capacity(images.len());
        for (expected, (idx, image_id, size)) in images.into_iter().enumerate() {
            if idx != expected {
                return Err(DataError::NonContiguous { video: vid, expected, found: idx });
            }
            frames.push(Frame {
                frame_index: idx,
                timestamp: frame_time(idx, fps),
                image_size: size,
                gt: gt_of.remove(&image_id).unwrap_or_default(),
            });
        }
        let stream = VideoStream { video_id: vid, fps, frames };
        stream.validate()?;
        streams.push(stream);
    }
    Ok(streams)
}

/// Writes streams in the format read by [`load_stream_dataset`].
pub fn write_stream_dataset(streams: &[VideoStream], path: impl AsRef<Path>) -> Result<()> {
    let mut file = CocoFile { videos: Vec::new(), images: Vec::new(), annotations: Vec::new(), categories: Vec::new() };
    let mut cats = BTreeSet::new();
    let mut image_id = 0u64;
    let mut ann_id = 0u64;
    for s in streams {
        file.videos.push(CocoVideo { id: VideoKey::Str(s.video_id.clone()), fps: Some(s.fps) });
        for f in &s.frames {
            file.images.push(CocoImage {
                id: image_id,
                file_name: format!("{}/{:06}.jpg", s.video_id, f.frame_index),
                width: f.image_size.0,
                height: f.image_size.1,
                video_id: VideoKey::Str(s.video_id.clone()),
                frame_index: f.frame_index,
            });
            for g in &f.gt {
                cats.insert(g.category);
                file.annotations.push(CocoAnnotation {
                    id: Some(ann_id),
                    image_id,
                    bbox: g.bbox.to_xywh(),
                    category_id: g.category,
                    track_id: g.track_id,
                });
                ann_id += 1;
            }
            image_id += 1;
        }
    }
    file.categories = cats.into_iter().map(|id| CocoCategory { id, name: format!("class_{id}") }).collect();
    let json = serde_json::to_vec_pretty(&file).expect("dataset serialization is infallible");
    write_file(path.as_ref(), &json)
}

// ---------------------------------------------------------------------------
// Prediction dumps

/// Detections keyed by `(video_id, frame_index)`. Empty lists are not
/// stored, so a dump has exactly one representation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionDump {
    entries: BTreeMap<(String, usize), Vec<Detection>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionRecord {
    video_id: String,
    frame_index: usize,
    bbox: [f64; 4],
    category_id: u32,
    score: f64,
}

impl PredictionDump {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, video_id: &str, frame_index: usize, dets: Vec<Detection>) {
        if dets.is_empty() {
            self.entries.remove(&(video_id.to_string(), frame_index));
        } else {
            self.entries.insert((video_id.to_string(), frame_index), dets);
        }
    }

    pub fn push(&mut self, video_id: &str, frame_index: usize, det: Detection) {
        self.entries.entry((video_id.to_string(), frame_index)).or_default().push(det);
    }

    pub fn get(&self, video_id: &str, frame_index: usize) -> &[Detection] {
        self.entries
            .get(&(video_id.to_string(), frame_index))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(String, usize), &Vec<Detection>)> {
        self.entries.iter()
    }

    /// Writes a JSON array of `{video_id, frame_index, bbox: [x, y, w, h],
    /// category_id, score}` records. Floats are printed in shortest
    /// round-trip form.
    pub fn persist(&self, path: impl AsRef<Path>) -> Result<()> {
        let records: Vec<PredictionRecord> = self
            .entries
            .iter()
            .flat_map(|((vid, frame), dets)| {
                dets.iter().map(move |d| PredictionRecord {
                    video_id: vid.clone(),
                    frame_index: *frame,
                    bbox: d.bbox.to_xywh(),
                    category_id: d.category,
                    score: d.score,
                })
            })
            .collect();
        let json = serde_json::to_vec_pretty(&records).expect("prediction serialization is infallible");
        write_file(path.as_ref(), &json)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let records: Vec<PredictionRecord> = read_json(path.as_ref())?;
        let mut dump = Self::new();
        for (index, r) in records.into_iter().enumerate() {
            let [x, y, w, h] = r.bbox;
            let bbox = BBox::from_xywh(x, y, w, h).map_err(|e| DataError::Schema { index, message: e.to_string() })?;
            let det = Detection::new(bbox, r.category_id, r.score)
                .map_err(|e| DataError::Schema { index, message: e.to_string() })?;
            dump.push(&r.video_id, r.frame_index, det);
        }
        Ok(dump)
    }

    /// Fails on the first key that names a frame absent from `streams`.
    pub fn validate_against(&self, streams: &[VideoStream]) -> Result<()> {
        let lens: HashMap<&str, usize> = streams.iter().map(|s| (s.video_id.as_str(), s.frames.len())).collect();
        for (video, frame) in self.entries.keys() {
            match lens.get(video.as_str()) {
                Some(&n) if *frame < n => {}
                _ => return Err(DataError::UnknownFrame { video: video.clone(), frame: *frame }),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn frame(i: usize, n_boxes: usize) -> Frame {
        Frame {
            frame_index: i,
            timestamp: frame_time(i, 30.0),
            image_size: (100, 100),
            gt: (0..n_boxes)
                .map(|k| {
                    let x = (i * 3 + k * 20) as f64;
                    GroundTruthBox::new(BBox::new(x, 0.0, x + 10.0, 10.0).unwrap(), 0, Some(k as u64))
                })
                .collect(),
        }
    }

    fn stream(n: usize) -> VideoStream {
        VideoStream { video_id: "v".into(), fps: 30.0, frames: (0..n).map(|i| frame(i, 1)).collect() }
    }

    fn write_tmp(value: &serde_json::Value) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        fs::write(f.path(), serde_json::to_vec(value).unwrap()).unwrap();
        f
    }

    #[test]
    fn triplet_counts_and_contents() {
        let s = stream(5);
        let t = build_triplets(&s);
        assert_eq!(t.len(), 3);
        assert_eq!(t[0].prev.frame_index, 0);
        assert_eq!(t[0].cur.frame_index, 1);
        assert_eq!(t[0].target_index, 2);
        assert_eq!(t[0].target_gt, &s.frames[2].gt[..]);
        assert!(t.iter().all(|x| (2..=4).contains(&x.target_index)));

        assert!(build_triplets(&stream(2)).is_empty());
        let three = stream(3);
        let t = build_triplets(&three);
        assert_eq!(t.len(), 1);
        assert_eq!((t[0].prev.frame_index, t[0].cur.frame_index, t[0].target_index), (0, 1, 2));
    }

    #[test]
    fn resample_examples() {
        let s = stream(3);
        let z = resample_speed(&s, 0).unwrap();
        assert_eq!(z.len(), 3);
        for (t, trip) in z.iter().enumerate() {
            assert_eq!(trip.prev, trip.cur);
            assert_eq!(trip.cur.frame_index, t);
            assert_eq!(trip.target_gt, &trip.cur.gt[..]);
        }

        let s5 = stream(5);
        let d = resample_speed(&s5, 2).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!((d[0].prev.frame_index, d[0].cur.frame_index, d[0].target_index), (0, 2, 4));

        for n in 0..9 {
            let s = stream(n.max(1));
            assert_eq!(resample_speed(&s, 1).unwrap(), build_triplets(&s));
            let n = s.len();
            assert_eq!(resample_speed(&s, 0).unwrap().len(), n);
            assert_eq!(resample_speed(&s, 1).unwrap().len(), n.saturating_sub(2));
            assert_eq!(resample_speed(&s, 2).unwrap().len(), n.saturating_sub(4));
        }
        assert!(matches!(resample_speed(&s5, 3), Err(DataError::InvalidFactor(3))));
    }

    #[test]
    fn resample_stream_semantics() {
        let s = stream(5);
        let d = resample_stream(&s, SpeedFactor::Double);
        assert_eq!(d.len(), 3);
        assert_eq!(d.frames[1].gt, s.frames[2].gt);
        assert_eq!(d.frames[1].timestamp, frame_time(1, 30.0));
        d.validate().unwrap();
        let z = resample_stream(&s, SpeedFactor::Static);
        assert_eq!(z.len(), 5);
        assert!(z.frames.iter().all(|f| f.gt == s.frames[0].gt));
        z.validate().unwrap();
        assert_eq!(resample_stream(&s, SpeedFactor::Normal), s);
    }

    #[test]
    fn load_minimal_file() {
        let f = write_tmp(&json!({
            "images": [
                {"id": 10, "file_name": "a", "width": 64, "height": 48, "video_id": 7, "frame_index": 0},
                {"id": 11, "file_name": "b", "width": 64, "height": 48, "video_id": 7, "frame_index": 1},
                {"id": 12, "file_name": "c", "width": 64, "height": 48, "video_id": 7, "frame_index": 2}
            ],
            "annotations": [
                {"image_id": 10, "bbox": [1, 2, 3, 4], "category_id": 1, "track_id": 5},
                {"image_id": 11, "bbox": [2, 2, 3, 4], "category_id": 1, "track_id": 5},
                {"image_id": 12, "bbox": [3, 2, 3, 4], "category_id": 1}
            ],
            "categories": [{"id": 1, "name": "car"}]
        }));
        let streams = load_stream_dataset(f.path()).unwrap();
        assert_eq!(streams.len(), 1);
        let s = &streams[0];
        assert_eq!(s.video_id, "7");
        assert_eq!(s.fps, DEFAULT_FPS);
        assert_eq!(s.frames.len(), 3);
        assert_eq!(s.frames[0].image_size, (64, 48));
        let b = s.frames[0].gt[0].bbox;
        assert_eq!((b.x1(), b.y1(), b.x2(), b.y2()), (1.0, 2.0, 4.0, 6.0));
        assert_eq!(s.frames[0].gt[0].track_id, Some(5));
        assert_eq!(s.frames[2].gt[0].track_id, None);
        assert_eq!(s.frames[2].timestamp, 2.0 / 30.0);
    }

    #[test]
    fn load_groups_interleaved_videos() {
        let f = write_tmp(&json!({
            "videos": [{"id": "b", "fps": 10.0}],
            "images": [
                {"id": 1, "width": 8, "height": 8, "video_id": "a", "frame_index": 1},
                {"id": 2, "width": 8, "height": 8, "video_id": "b", "frame_index": 1},
                {"id": 3, "width": 8, "height": 8, "video_id": "a", "frame_index": 0},
                {"id": 4, "width": 8, "height": 8, "video_id": "b", "frame_index": 0}
            ],
            "annotations": [
                {"image_id": 3, "bbox": [0, 0, 1, 1], "category_id": 0},
                {"image_id": 2, "bbox": [0, 0, 2, 2], "category_id": 0}
            ]
        }));
        let streams = load_stream_dataset(f.path()).unwrap();
        assert_eq!(streams.len(), 2);
        assert_eq!(streams[0].video_id, "a");
        assert_eq!(streams[1].video_id, "b");
        assert_eq!(streams[1].fps, 10.0);
        assert_eq!(streams[0].frames[0].gt.len(), 1);
        assert!(streams[0].frames[1].gt.is_empty());
        assert!(streams[1].frames[0].gt.is_empty());
        assert_eq!(streams[1].frames[1].gt[0].bbox.x2(), 2.0);
        assert_eq!(streams[1].frames[1].timestamp, 0.1);
    }

    #[test]
    fn load_errors() {
        let neg = write_tmp(&json!({
            "images": [{"id": 1, "width": 8, "height": 8, "video_id": 0, "frame_index": 0}],
            "annotations": [{"image_id": 1, "bbox": [0, 0, -1, 1], "category_id": 0}]
        }));
        assert!(matches!(load_stream_dataset(neg.path()), Err(DataError::BadBox { .. })));

        let gap = write_tmp(&json!({
            "images": [
                {"id": 1, "width": 8, "height": 8, "video_id": 0, "frame_index": 0},
                {"id": 2, "width": 8, "height": 8, "video_id": 0, "frame_index": 2}
            ],
            "annotations": []
        }));
        assert!(matches!(load_stream_dataset(gap.path()), Err(DataError::NonContiguous { expected: 1, found: 2, .. })));

        let orphan = write_tmp(&json!({
            "images": [{"id": 1, "width": 8, "height": 8, "video_id": 0, "frame_index": 0}],
            "annotations": [{"image_id": 9, "bbox": [0, 0, 1, 1], "category_id": 0}]
        }));
        assert!(matches!(load_stream_dataset(orphan.path()), Err(DataError::UnknownImage { .. })));

        let bad = tempfile::NamedTempFile::new().unwrap();
        fs::write(bad.path(), b"{ not json").unwrap();
        assert!(matches!(load_stream_dataset(bad.path()), Err(DataError::Json { .. })));
        assert!(matches!(load_stream_dataset("/nonexistent/x.json"), Err(DataError::Io { .. })));
    }

    #[test]
    fn dataset_write_load_round_trip() {
        let mut s = stream(4);
        s.frames[2].gt.clear();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.json");
        write_stream_dataset(std::slice::from_ref(&s), &p).unwrap();
        let back = load_stream_dataset(&p).unwrap();
        assert_eq!(back, vec![s]);
    }

    fn det(x: f64, score: f64) -> Detection {
        Detection::new(BBox::new(x, 1.5, x + 4.25, 9.0).unwrap(), 2, score).unwrap()
    }

    #[test]
    fn prediction_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pred.json");

        let empty = PredictionDump::new();
        empty.persist(&p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap().trim(), "[]");
        assert_eq!(PredictionDump::load(&p).unwrap(), empty);

        let mut d = PredictionDump::new();
        d.push("v", 3, det(1.0, 0.123456789));
        d.push("v", 3, det(2.0, 0.5));
        d.push("w", 0, det(0.25, 1.0));
        d.persist(&p).unwrap();
        let back = PredictionDump::load(&p).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.get("v", 3)[0].score, 0.123456789);
        assert!(fs::read_to_string(&p).unwrap().contains("0.123456789"));
    }

    #[test]
    fn prediction_validation() {
        let s = stream(3);
        let mut d = PredictionDump::new();
        d.push("v", 2, det(1.0, 0.5));
        d.validate_against(std::slice::from_ref(&s)).unwrap();
        d.push("ghost", 0, det(1.0, 0.5));
        assert!(matches!(d.validate_against(&[s.clone()]), Err(DataError::UnknownFrame { .. })));
        let mut late = PredictionDump::new();
        late.push("v", 3, det(1.0, 0.5));
        assert!(late.validate_against(&[s]).is_err());
    }

    #[test]
    fn prediction_schema_mismatch() {
        let f = write_tmp(&json!([{"video_id": "v", "frame_index": 0, "bbox": [0, 0, 1, 1], "category_id": 0}]));
        assert!(matches!(PredictionDump::load(f.path()), Err(DataError::Json { .. })));
        let f = write_tmp(&json!([{"video_id": "v", "frame_index": 0, "bbox": [0, 0, 1, 1], "category_id": 0, "score": 2.0}]));
        assert!(matches!(PredictionDump::load(f.path()), Err(DataError::Schema { .. })));
    }

    #[test]
    fn stream_validation() {
        let mut s = stream(3);
        s.validate().unwrap();
        s.frames[1].frame_index = 5;
        assert!(s.validate().is_err());
        let mut s = stream(2);
        let dup = s.frames[0].gt[0];
        s.frames[0].gt.push(dup);
        assert!(matches!(s.validate(), Err(DataError::DuplicateTrack { .. })));
        let empty = VideoStream { video_id: "e".into(), fps: 30.0, frames: vec![] };
        assert!(empty.validate().is_err());
    }
}
