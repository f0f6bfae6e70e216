//! Episodic environment: config, seed trajectories, single and batched
//! episodes, and the batch binding for external learners.

use thiserror::Error;

use crate::dynamics::DynamicsError;
use crate::geometry::GeometryError;
use crate::sensing::SensingError;

pub mod batch;
pub mod config;
pub mod dataset;
pub mod episode;
pub mod policy;
pub mod protocol;
pub mod seed_gen;

pub use batch::BatchEnv;
pub use config::{ActionLimits, EpisodeConfig, ObservationMode, RandomizationSource, ResolvedConfig, TrackSource};
pub use dataset::{SeedTrajectory, SeedTrajectoryDataset, TrajectorySample};
pub use episode::{traversal_label, Env, EpisodeOutcome, ResetSource, StepInfo, StepRecord, StepResult};
pub use policy::{AxisTracker, HoverPolicy, Policy};
pub use protocol::{BatchBinding, FlatArray, LineClient, PROTOCOL_VERSION};
pub use seed_gen::{generate_dataset, generate_dataset_counted, generate_seed_trajectory, SeedGenConfig};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("config: {0}")]
    Config(String),
    #[error("dataset line {line}, {field}: {message}")]
    Dataset { line: usize, field: String, message: String },
    #[error("seed generation: {0}")]
    SeedGeneration(String),
    #[error("reset: {0}")]
    Reset(String),
    #[error("step called on a finished episode; reset first")]
    EpisodeDone,
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("shape: {0}")]
    Shape(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("remote: {0}")]
    Remote(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}
