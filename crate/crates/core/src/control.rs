//! Position/attitude tracking controller producing collective thrust and
//! bodyrate setpoints from a flat-output reference.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{CommandSetpoint, DragParams, QuadrotorState, GRAVITY};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackingGains {
    pub kp: [f64; 3],
    pub kd: [f64; 3],
    /// Attitude error to bodyrate gain per body axis (1/s).
    pub k_att: [f64; 3],
    pub thrust_min: f64,
    pub thrust_max: f64,
    pub rate_max: f64,
    /// Drag model the controller cancels; zero disables compensation.
    pub drag: DragParams,
}

impl Default for TrackingGains {
    fn default() -> Self {
        Self {
            kp: [6.0, 6.0, 8.0],
            kd: [4.0, 4.0, 5.0],
            k_att: [10.0, 10.0, 4.0],
            thrust_min: 6.0,
            thrust_max: 20.0,
            rate_max: 6.0,
            drag: DragParams::zero(),
        }
    }
}

/// Flat-output reference at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Reference {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub jerk: Vector3<f64>,
    pub yaw: f64,
}

impl Reference {
    pub fn hold(position: Vector3<f64>, yaw: f64) -> Self {
        Self {
            position,
            yaw,
            ..Self::default()
        }
    }
}

/// Attitude with body z along `thrust_dir` and body x as close as possible
/// to the heading `yaw`.
pub fn attitude_from_thrust(thrust_dir: &Vector3<f64>, yaw: f64) -> UnitQuaternion<f64> {
    let z = thrust_dir.normalize();
    let heading = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
    let mut y = z.cross(&heading);
    if y.norm() < 1e-9 {
        // thrust horizontal along the heading; pick any orthogonal side
        y = z.cross(&Vector3::z());
    }
    let y = y.normalize();
    let x = y.cross(&z);
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z])))
}

/// Body-frame bodyrate of the flat reference (roll/pitch components).
fn feedforward_rate(attitude: &UnitQuaternion<f64>, jerk: &Vector3<f64>, thrust: f64) -> Vector3<f64> {
    if thrust <= 1e-6 {
        return Vector3::zeros();
    }
    let r = attitude.to_rotation_matrix();
    let (x, y, z) = (r.matrix().column(0), r.matrix().column(1), r.matrix().column(2));
    let h = (jerk - z * z.dot(jerk)) / thrust;
    Vector3::new(-h.dot(&y), h.dot(&x), 0.0)
}

pub fn tracking_command(state: &QuadrotorState, reference: &Reference, gains: &TrackingGains) -> CommandSetpoint {
    let kp = Vector3::from(gains.kp);
    let kd = Vector3::from(gains.kd);
    let a_des = reference.acceleration
        + kp.component_mul(&(reference.position - state.position))
        + kd.component_mul(&(reference.velocity - state.velocity))
        + Vector3::new(0.0, 0.0, GRAVITY)
        + state.attitude * gains.drag.body_drag(&state.body_velocity());
    let dir = if a_des.norm() > 1e-6 { a_des.normalize() } else { Vector3::z() };
    let desired = attitude_from_thrust(&dir, reference.yaw);
    let body_z = state.attitude * Vector3::z();
    let thrust = a_des.dot(&body_z).clamp(gains.thrust_min, gains.thrust_max);

    let err = (state.attitude.inverse() * desired).scaled_axis();
    let ff = feedforward_rate(&desired, &reference.jerk, a_des.norm());
    let rate = Vector3::from(gains.k_att).component_mul(&err) + ff;
    CommandSetpoint::new(thrust, rate).clamped(gains.thrust_min, gains.thrust_max, gains.rate_max)
}
