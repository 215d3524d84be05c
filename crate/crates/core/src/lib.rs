//! Streaming perception on synthetic moving-object streams.
//!
//! A detector that takes time to run is judged against the world as it is
//! when its output appears, not as it was when its input arrived. This crate
//! simulates that setting end to end: scene generation, latency-aware
//! scheduling and pairing, COCO-style streaming AP, next-frame forecasters
//! (Kalman and a trend-aware linear model) and a toy dual-flow feature
//! fusion block.

pub mod data;
pub mod dfp;
pub mod experiment;
pub mod forecast;
pub mod geometry;
pub mod metrics;
pub mod rng;
pub mod scene_sim;
pub mod stream_sim;
pub mod trend_loss;
