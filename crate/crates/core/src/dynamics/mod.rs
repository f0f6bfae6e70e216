//! Rigid-body quadrotor dynamics driven through a collective-thrust and
//! bodyrate interface.

mod actuator;
mod integrator;
mod plant;
mod state;
mod thrust_map;

pub use actuator::{actuator_response, CommandHistory, ResponseParams};
pub use integrator::{integrate_step, DragParams, DynamicsParams};
pub use plant::Plant;
pub use state::{
    gravity_vector, quat_wxyz, ActuatorOutput, CommandSetpoint, QuadrotorState, GRAVITY,
};
pub use thrust_map::{
    fit_thrust_map, load_calibration_csv, throttle_from_thrust, thrust_from_throttle,
    CalibrationSample, ThrustMapFit, ThrustMapParams,
};

/// Control period of the environment (60 Hz).
pub const CONTROL_DT: f64 = 1.0 / 60.0;
/// RK4 substeps per control period.
pub const SUBSTEPS: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum DynamicsError {
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("time step must be positive and finite, got {0}")]
    InvalidTimeStep(f64),
    #[error("command history holds {available} entries but {needed} are required")]
    InsufficientHistory { needed: usize, available: usize },
    #[error("{0}")]
    InvalidParams(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("unidentifiable thrust map: {0}")]
    Unidentifiable(String),
    #[error("calibration csv: {0}")]
    Csv(#[from] csv::Error),
}
