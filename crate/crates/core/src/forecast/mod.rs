//! Next-frame forecasting: a Kalman baseline, a trainable linear forecaster
//! and the detector agents that drive them in the simulator.

pub mod agents;
pub mod kalman;
pub mod linear;

pub use agents::{
    exact_detections, kalman_agent, DelayedOracleAgent, FrameBuffer, FrameDetector, KalmanAgent, KalmanState,
    LinearForecasterAgent, MockDetector, OracleAgent,
};
pub use kalman::{kf_step, KalmanError, KalmanTrack, KfConfig};
pub use linear::{
    evaluate_forecaster, grad_check, grad_check_with, train_linear_forecaster, EpochLog, ForecastErrors, GradBatch,
    LinearForecaster, ModelFile, ModelMetadata, TrainConfig, TrainError, TrainLog,
};
