use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::region::{GapShape, Point2, Region};
use super::GeometryError;

/// A gap: a passable region on a plane, posed in the world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSpec {
    /// Origin of the gap frame (world, meters).
    pub center: Vector3<f64>,
    /// Unit plane normal; crossing means moving along `+normal`.
    pub normal: Vector3<f64>,
    /// In-plane rotation about the normal (radians); 0 keeps the long edge
    /// horizontal.
    #[serde(default)]
    pub roll: f64,
    pub shape: GapShape,
}

impl GapSpec {
    /// Gap facing world +x.
    pub fn new(center: Vector3<f64>, roll: f64, shape: GapShape) -> Self {
        Self {
            center,
            normal: Vector3::x(),
            roll,
            shape,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !self.center.iter().all(|v| v.is_finite()) || !self.roll.is_finite() {
            return Err(GeometryError::InvalidGap("non-finite center or roll".into()));
        }
        let n = self.normal.norm();
        if !n.is_finite() || (n - 1.0).abs() > 1e-9 {
            return Err(GeometryError::InvalidGap(format!("normal must be unit, has norm {n}")));
        }
        self.shape.validate()
    }

    pub fn frame(&self) -> GapFrame {
        GapFrame::new(self.center, self.normal, self.roll)
    }

    pub fn region(&self) -> Region {
        self.shape.region()
    }

    /// Geometric center of the passable region (world).
    pub fn passable_center(&self) -> Vector3<f64> {
        let c = self.region().centroid();
        self.frame().plane_to_world(&c)
    }
}

/// Orthonormal gap frame: `x` is the normal, `(y, z)` span the plane with
/// `y` along the rolled long edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapFrame {
    pub origin: Vector3<f64>,
    /// Columns are the frame axes expressed in world coordinates.
    pub rotation: Rotation3<f64>,
}

impl GapFrame {
    pub fn new(origin: Vector3<f64>, normal: Vector3<f64>, roll: f64) -> Self {
        let n = normal.normalize();
        let up = Vector3::z();
        let side = up.cross(&n);
        // level in-plane axis; a horizontal plane falls back to world x
        let u0 = if side.norm() > 1e-9 {
            side.normalize()
        } else {
            n.cross(&Vector3::x()).normalize()
        };
        let v0 = n.cross(&u0);
        let (s, c) = roll.sin_cos();
        let u = u0 * c + v0 * s;
        let v = n.cross(&u);
        let m = Matrix3::from_columns(&[n, u, v]);
        Self {
            origin,
            rotation: Rotation3::from_matrix_unchecked(m),
        }
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.rotation.matrix().column(0).into()
    }

    pub fn axis_y(&self) -> Vector3<f64> {
        self.rotation.matrix().column(1).into()
    }

    pub fn axis_z(&self) -> Vector3<f64> {
        self.rotation.matrix().column(2).into()
    }

    pub fn to_local(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse_transform_vector(&(p - self.origin))
    }

    pub fn to_world(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.origin + self.rotation * local
    }

    pub fn plane_to_world(&self, p: &Point2) -> Vector3<f64> {
        self.to_world(&Vector3::new(0.0, p.x, p.y))
    }

    /// Attitude whose body axes coincide with the gap axes.
    pub fn aligned_attitude(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&self.rotation)
    }
}

/// Pitch and yaw that point body +x along the gap normal (`(θ^g, ψ^g)`).
pub fn facing_angles(normal: &Vector3<f64>) -> (f64, f64) {
    let n = normal.normalize();
    (-n.z.clamp(-1.0, 1.0).asin(), n.y.atan2(n.x))
}
