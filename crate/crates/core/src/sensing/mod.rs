//! Observation channels: oracle gap points, rendered masks, proprioception
//! and observation latency.

mod camera;
mod mask;

use std::collections::VecDeque;

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use camera::CameraModel;
pub use mask::{randomize_mask, render_mask, render_mask_with, sample_mask_block, MaskImage, RenderConfig};

use crate::dynamics::{CommandSetpoint, QuadrotorState};
use crate::geometry::{sample_edge_points, GapSpec, GeometryError};

#[derive(Debug, thiserror::Error)]
pub enum SensingError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("block size {block} does not divide {width}x{height}")]
    BlockSize { block: u32, width: u32, height: u32 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Gap edge samples expressed in the body frame.
pub fn observe_gap_points(state: &QuadrotorState, gap: &GapSpec, n: usize) -> Result<Vec<Vector3<f64>>, SensingError> {
    Ok(sample_edge_points(gap, n)?
        .into_iter()
        .map(|p| state.attitude.inverse_transform_vector(&(p - state.position)))
        .collect())
}

/// ZYX Euler angles `(roll, pitch, yaw)`. At the pitch singularity the pitch
/// is exactly ±π/2 and the roll is reported as zero.
pub fn euler_zyx(q: &UnitQuaternion<f64>) -> (f64, f64, f64) {
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    let sinp = (2.0 * (w * y - z * x)).clamp(-1.0, 1.0);
    if sinp.abs() >= 1.0 - 1e-12 {
        let pitch = std::f64::consts::FRAC_PI_2.copysign(sinp);
        // all rotation about z: roll and yaw are coupled, fold into yaw
        let yaw = -2.0 * sinp.signum() * x.atan2(w);
        return (0.0, pitch, wrap_angle(yaw));
    }
    let roll = (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y));
    let yaw = (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z));
    (roll, sinp.asin(), yaw)
}

pub fn roll_pitch(q: &UnitQuaternion<f64>) -> (f64, f64) {
    let (r, p, _) = euler_zyx(q);
    (r, p)
}

/// Wrap to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Image-generation and inference delay, in control steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub image_delay: usize,
    pub inference_delay: usize,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            image_delay: 1,
            inference_delay: 0,
        }
    }
}

impl LatencyModel {
    pub fn none() -> Self {
        Self {
            image_delay: 0,
            inference_delay: 0,
        }
    }

    pub fn total(&self) -> usize {
        self.image_delay + self.inference_delay
    }
}

/// Fixed-delay FIFO. Before `delay` pushes have happened it returns the
/// observation the queue was created with.
#[derive(Debug, Clone)]
pub struct LatencyQueue<T> {
    buf: VecDeque<T>,
    delay: usize,
}

impl<T: Clone> LatencyQueue<T> {
    pub fn new(delay: usize, initial: T) -> Self {
        Self {
            buf: std::iter::repeat_n(initial, delay).collect(),
            delay,
        }
    }

    /// Insert the current observation and get the one from `delay` steps ago.
    pub fn push(&mut self, current: T) -> T {
        self.buf.push_back(current);
        self.buf.pop_front().expect("queue holds delay + 1 entries")
    }

    pub fn delay(&self) -> usize {
        self.delay
    }
}

pub fn delayed_observation<T: Clone>(queue: &mut LatencyQueue<T>, current: T) -> T {
    queue.push(current)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GapObservation {
    /// Body-frame edge points, `n × 3`.
    Points { points: Vec<[f64; 3]> },
    Mask { image: MaskImage },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationBundle {
    pub gap: GapObservation,
    pub roll: f64,
    pub pitch: f64,
    /// Body-frame velocity; consumed only by the privileged (points) policy.
    pub body_velocity: [f64; 3],
    pub previous_action: CommandSetpoint,
    /// Step at which the returned gap observation was captured.
    pub captured_step: u64,
    pub step: u64,
}

impl ObservationBundle {
    /// Flat float features: points (if any), roll, pitch, previous action,
    /// and body velocity in points mode.
    pub fn features(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let points = matches!(self.gap, GapObservation::Points { .. });
        if let GapObservation::Points { points } = &self.gap {
            out.extend(points.iter().flatten());
        }
        out.push(self.roll);
        out.push(self.pitch);
        out.extend(self.previous_action.to_array());
        if points {
            out.extend(self.body_velocity);
        }
        out
    }

    pub fn mask(&self) -> Option<&MaskImage> {
        match &self.gap {
            GapObservation::Mask { image } => Some(image),
            GapObservation::Points { .. } => None,
        }
    }
}

/// Per-episode focal-length scale drawn from `U(1 − r, 1 + r)`.
pub fn sample_focal_scale<R: Rng + ?Sized>(rng: &mut R, range: f64) -> f64 {
    if range <= 0.0 {
        1.0
    } else {
        rng.random_range(1.0 - range..=1.0 + range)
    }
}
