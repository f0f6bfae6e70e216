use nalgebra::{Quaternion, SVector, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::state::{gravity_vector, ActuatorOutput, QuadrotorState};
use super::DynamicsError;

/// Linear (1/s) and quadratic (1/m) drag coefficients per body axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DragParams {
    pub linear: Vector3<f64>,
    pub quadratic: Vector3<f64>,
}

impl Default for DragParams {
    fn default() -> Self {
        Self {
            linear: Vector3::new(0.3, 0.3, 0.15),
            quadratic: Vector3::new(0.05, 0.05, 0.025),
        }
    }
}

impl DragParams {
    pub fn zero() -> Self {
        Self {
            linear: Vector3::zeros(),
            quadratic: Vector3::zeros(),
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let all = self.linear.iter().chain(self.quadratic.iter());
        for v in all {
            if !v.is_finite() || *v < 0.0 {
                return Err(DynamicsError::InvalidParams(format!(
                    "drag coefficients must be finite and non-negative, got {self:?}"
                )));
            }
        }
        Ok(())
    }

    /// Mass-normalized drag acceleration in the body frame.
    pub fn body_drag(&self, v_body: &Vector3<f64>) -> Vector3<f64> {
        self.linear.component_mul(v_body)
            + self.quadratic.component_mul(&v_body.abs()).component_mul(v_body)
    }
}

/// Parameters of the translational model and the attitude-loop lag.
///
/// The body torque and inertia are not simulated: the bodyrate follows the
/// executed bodyrate through a first-order lag with `bodyrate_time_constant`.
/// A time constant of zero makes the bodyrate track the executed value
/// instantly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsParams {
    pub drag: DragParams,
    pub bodyrate_time_constant: f64,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self {
            drag: DragParams::default(),
            bodyrate_time_constant: 0.03,
        }
    }
}

impl DynamicsParams {
    pub fn without_drag() -> Self {
        Self {
            drag: DragParams::zero(),
            ..Self::default()
        }
    }
}

type Flat = SVector<f64, 13>;

fn pack(s: &QuadrotorState) -> Flat {
    let q = s.attitude.quaternion();
    let mut x = Flat::zeros();
    x.fixed_rows_mut::<3>(0).copy_from(&s.position);
    x.fixed_rows_mut::<3>(3).copy_from(&s.velocity);
    x[6] = q.w;
    x[7] = q.i;
    x[8] = q.j;
    x[9] = q.k;
    x.fixed_rows_mut::<3>(10).copy_from(&s.bodyrate);
    x
}

fn unpack(x: &Flat) -> QuadrotorState {
    QuadrotorState {
        position: x.fixed_rows::<3>(0).into(),
        velocity: x.fixed_rows::<3>(3).into(),
        attitude: UnitQuaternion::new_normalize(Quaternion::new(x[6], x[7], x[8], x[9])),
        bodyrate: x.fixed_rows::<3>(10).into(),
    }
}

struct Inputs<'a> {
    actuator: &'a ActuatorOutput,
    params: &'a DynamicsParams,
    external_accel: &'a Vector3<f64>,
}

fn derivative(x: &Flat, u: &Inputs<'_>) -> Flat {
    let v: Vector3<f64> = x.fixed_rows::<3>(3).into();
    let q = Quaternion::new(x[6], x[7], x[8], x[9]);
    let w: Vector3<f64> = x.fixed_rows::<3>(10).into();
    let rot = UnitQuaternion::new_normalize(q);

    let v_body = rot.inverse_transform_vector(&v);
    let specific_force = Vector3::new(0.0, 0.0, u.actuator.thrust) - u.params.drag.body_drag(&v_body);
    let accel = rot * specific_force + gravity_vector() + u.external_accel;

    // q_dot = 1/2 q ⊗ (0, ω) with ω in the body frame
    let q_dot = q * Quaternion::from_imag(w) * 0.5;

    let tau = u.params.bodyrate_time_constant;
    let w_dot = if tau > 0.0 {
        (u.actuator.bodyrate - w) / tau
    } else {
        Vector3::zeros()
    };

    let mut d = Flat::zeros();
    d.fixed_rows_mut::<3>(0).copy_from(&v);
    d.fixed_rows_mut::<3>(3).copy_from(&accel);
    d[6] = q_dot.w;
    d[7] = q_dot.i;
    d[8] = q_dot.j;
    d[9] = q_dot.k;
    d.fixed_rows_mut::<3>(10).copy_from(&w_dot);
    d
}

/// Advance the state by one fixed RK4 step of length `dt`.
///
/// Thrust acts along the body z-axis, drag is subtracted in the body frame
/// and `external_accel` is added in the world frame. The attitude quaternion
/// is renormalized after the step.
pub fn integrate_step(
    state: &QuadrotorState,
    actuator: &ActuatorOutput,
    params: &DynamicsParams,
    external_accel: &Vector3<f64>,
    dt: f64,
) -> Result<QuadrotorState, DynamicsError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(DynamicsError::InvalidTimeStep(dt));
    }
    if !state.is_finite() {
        return Err(DynamicsError::NonFinite("state"));
    }
    if !actuator.to_array().iter().all(|v| v.is_finite()) {
        return Err(DynamicsError::NonFinite("actuator output"));
    }
    if !external_accel.iter().all(|v| v.is_finite()) {
        return Err(DynamicsError::NonFinite("external acceleration"));
    }
    let tau = params.bodyrate_time_constant;
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(DynamicsError::InvalidParams(format!(
            "bodyrate time constant must be finite and >= 0, got {tau}"
        )));
    }

    let mut start = *state;
    if tau == 0.0 {
        start.bodyrate = actuator.bodyrate;
    }
    let inputs = Inputs {
        actuator,
        params,
        external_accel,
    };
    let x = pack(&start);
    let k1 = derivative(&x, &inputs);
    let k2 = derivative(&(x + k1 * (0.5 * dt)), &inputs);
    let k3 = derivative(&(x + k2 * (0.5 * dt)), &inputs);
    let k4 = derivative(&(x + k3 * dt), &inputs);
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);

    let out = unpack(&next);
    if !out.is_finite() {
        return Err(DynamicsError::NonFinite("integrated state"));
    }
    Ok(out)
}
