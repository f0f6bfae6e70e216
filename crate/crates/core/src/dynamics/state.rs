use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Gravitational acceleration, world frame, z-up.
pub const GRAVITY: f64 = 9.81;

pub fn gravity_vector() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -GRAVITY)
}

/// Rigid-body state of the vehicle.
///
/// Position and velocity are expressed in the world frame (z-up), the attitude
/// rotates body vectors into the world frame and the bodyrate is expressed in
/// the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadrotorState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    #[serde(with = "quat_wxyz")]
    pub attitude: UnitQuaternion<f64>,
    pub bodyrate: Vector3<f64>,
}

impl Default for QuadrotorState {
    fn default() -> Self {
        Self::at_rest(Vector3::zeros())
    }
}

impl QuadrotorState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            attitude: UnitQuaternion::identity(),
            bodyrate: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.attitude.coords.iter().all(|v| v.is_finite())
            && self.bodyrate.iter().all(|v| v.is_finite())
    }

    /// Linear velocity expressed in the body frame.
    pub fn body_velocity(&self) -> Vector3<f64> {
        self.attitude.inverse_transform_vector(&self.velocity)
    }

    /// Unit vector of the body x-axis (camera boresight) in the world frame.
    pub fn body_x(&self) -> Vector3<f64> {
        self.attitude * Vector3::x()
    }
}

/// Mass-normalized collective thrust (m/s²) and bodyrate setpoint (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandSetpoint {
    pub thrust: f64,
    pub bodyrate: Vector3<f64>,
}

impl CommandSetpoint {
    pub fn new(thrust: f64, bodyrate: Vector3<f64>) -> Self {
        Self { thrust, bodyrate }
    }

    pub fn hover() -> Self {
        Self::new(GRAVITY, Vector3::zeros())
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], Vector3::new(a[1], a[2], a[3]))
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.thrust, self.bodyrate.x, self.bodyrate.y, self.bodyrate.z]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Clamp thrust to `[thrust_min, thrust_max]` and each bodyrate axis to `±rate_max`.
    pub fn clamped(&self, thrust_min: f64, thrust_max: f64, rate_max: f64) -> Self {
        Self {
            thrust: self.thrust.clamp(thrust_min, thrust_max),
            bodyrate: self.bodyrate.map(|w| w.clamp(-rate_max, rate_max)),
        }
    }
}

impl Default for CommandSetpoint {
    fn default() -> Self {
        Self::hover()
    }
}

/// Thrust and bodyrate as actually executed by the flight controller model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorOutput {
    pub thrust: f64,
    pub bodyrate: Vector3<f64>,
}

impl ActuatorOutput {
    pub fn new(thrust: f64, bodyrate: Vector3<f64>) -> Self {
        Self { thrust, bodyrate }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], Vector3::new(a[1], a[2], a[3]))
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.thrust, self.bodyrate.x, self.bodyrate.y, self.bodyrate.z]
    }
}

impl From<CommandSetpoint> for ActuatorOutput {
    fn from(c: CommandSetpoint) -> Self {
        Self::new(c.thrust, c.bodyrate)
    }
}

/// Serde adapter writing unit quaternions scalar-first as `[w, x, y, z]`.
///
/// Deserialization rejects quaternions whose norm deviates from one by more
/// than `1e-6` and renormalizes the rest.
pub mod quat_wxyz {
    use super::*;
    use serde::de::Error;
    use serde::{Deserializer, Serializer};

    pub const NORM_TOLERANCE: f64 = 1e-6;

    pub fn to_array(q: &UnitQuaternion<f64>) -> [f64; 4] {
        [q.w, q.i, q.j, q.k]
    }

    pub fn from_array(a: [f64; 4]) -> Result<UnitQuaternion<f64>, String> {
        if a.iter().any(|v| !v.is_finite()) {
            return Err(format!("non-finite quaternion {a:?}"));
        }
        let q = Quaternion::new(a[0], a[1], a[2], a[3]);
        let norm = q.norm();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(format!("quaternion {a:?} has norm {norm}, expected 1"));
        }
        Ok(UnitQuaternion::new_normalize(q))
    }

    pub fn serialize<S: Serializer>(q: &UnitQuaternion<f64>, s: S) -> Result<S::Ok, S::Error> {
        to_array(q).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<UnitQuaternion<f64>, D::Error> {
        let a = <[f64; 4]>::deserialize(d)?;
        from_array(a).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_limits_each_channel() {
        let c = CommandSetpoint::new(25.0, Vector3::new(7.0, -9.0, 1.0)).clamped(6.0, 20.0, 6.0);
        assert_eq!(c.to_array(), [20.0, 6.0, -6.0, 1.0]);
    }

    #[test]
    fn quaternion_serializes_scalar_first() {
        let s = QuadrotorState::default();
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"attitude\":[1.0,0.0,0.0,0.0]"), "{json}");
        let back: QuadrotorState = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn non_unit_quaternion_rejected() {
        let json = r#"{"position":[0,0,0],"velocity":[0,0,0],"attitude":[2,0,0,0],"bodyrate":[0,0,0]}"#;
        assert!(serde_json::from_str::<QuadrotorState>(json).is_err());
    }
}
