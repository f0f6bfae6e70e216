//! Closed-form minimum-jerk quintics (per axis) and sampled feasibility.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::PlannerError;
use crate::dynamics::GRAVITY;

/// `p(t) = α/120 t⁵ + β/24 t⁴ + γ/6 t³ + a0/2 t² + v0 t + p0` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisTrajectory {
    pub p0: f64,
    pub v0: f64,
    pub a0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub duration: f64,
}

impl AxisTrajectory {
    pub fn new(init: [f64; 3], fin: [f64; 3], duration: f64) -> Result<Self, PlannerError> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(PlannerError::InvalidDuration(duration));
        }
        let t = duration;
        let [p0, v0, a0] = init;
        let [pf, vf, af] = fin;
        let dp = pf - p0 - v0 * t - 0.5 * a0 * t * t;
        let dv = vf - v0 - a0 * t;
        let da = af - a0;
        let (t2, t3, t4, t5) = (t * t, t * t * t, t.powi(4), t.powi(5));
        Ok(Self {
            p0,
            v0,
            a0,
            alpha: (720.0 * dp - 360.0 * t * dv + 60.0 * t2 * da) / t5,
            beta: (-360.0 * t * dp + 168.0 * t2 * dv - 24.0 * t3 * da) / t5,
            gamma: (60.0 * t2 * dp - 24.0 * t3 * dv + 3.0 * t4 * da) / t5,
            duration,
        })
    }

    pub fn position(&self, t: f64) -> f64 {
        self.alpha / 120.0 * t.powi(5) + self.beta / 24.0 * t.powi(4) + self.gamma / 6.0 * t.powi(3)
            + 0.5 * self.a0 * t * t
            + self.v0 * t
            + self.p0
    }

    pub fn velocity(&self, t: f64) -> f64 {
        self.alpha / 24.0 * t.powi(4) + self.beta / 6.0 * t.powi(3) + 0.5 * self.gamma * t * t + self.a0 * t + self.v0
    }

    pub fn acceleration(&self, t: f64) -> f64 {
        self.alpha / 6.0 * t.powi(3) + 0.5 * self.beta * t * t + self.gamma * t + self.a0
    }

    pub fn jerk(&self, t: f64) -> f64 {
        0.5 * self.alpha * t * t + self.beta * t + self.gamma
    }

    /// Integrated squared jerk over the whole segment.
    pub fn cost(&self) -> f64 {
        let t = self.duration;
        self.gamma * self.gamma * t
            + self.beta * self.gamma * t * t
            + self.beta * self.beta / 3.0 * t.powi(3)
            + self.alpha * self.gamma / 3.0 * t.powi(3)
            + self.alpha * self.beta / 4.0 * t.powi(4)
            + self.alpha * self.alpha / 20.0 * t.powi(5)
    }
}

/// Kinematic state used as a boundary condition.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FlatState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
}

impl FlatState {
    pub fn rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub axes: [AxisTrajectory; 3],
    pub duration: f64,
}

impl Trajectory {
    fn eval(&self, t: f64, f: impl Fn(&AxisTrajectory, f64) -> f64) -> Vector3<f64> {
        Vector3::new(f(&self.axes[0], t), f(&self.axes[1], t), f(&self.axes[2], t))
    }

    pub fn position(&self, t: f64) -> Vector3<f64> {
        self.eval(t, AxisTrajectory::position)
    }

    pub fn velocity(&self, t: f64) -> Vector3<f64> {
        self.eval(t, AxisTrajectory::velocity)
    }

    pub fn acceleration(&self, t: f64) -> Vector3<f64> {
        self.eval(t, AxisTrajectory::acceleration)
    }

    pub fn jerk(&self, t: f64) -> Vector3<f64> {
        self.eval(t, AxisTrajectory::jerk)
    }

    pub fn state(&self, t: f64) -> FlatState {
        FlatState {
            position: self.position(t),
            velocity: self.velocity(t),
            acceleration: self.acceleration(t),
        }
    }
}

pub fn min_jerk_trajectory(init: &FlatState, fin: &FlatState, duration: f64) -> Result<Trajectory, PlannerError> {
    let axis = |i: usize| {
        AxisTrajectory::new(
            [init.position[i], init.velocity[i], init.acceleration[i]],
            [fin.position[i], fin.velocity[i], fin.acceleration[i]],
            duration,
        )
    };
    Ok(Trajectory {
        axes: [axis(0)?, axis(1)?, axis(2)?],
        duration,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeasibilityLimits {
    pub thrust_min: f64,
    pub thrust_max: f64,
    pub rate_max: f64,
    pub sample_dt: f64,
}

impl Default for FeasibilityLimits {
    fn default() -> Self {
        Self {
            thrust_min: 4.0,
            thrust_max: 20.0,
            rate_max: 8.0,
            sample_dt: 0.01,
        }
    }
}

/// Mass-normalized thrust and roll/pitch-rate magnitude demanded at `t`.
pub fn demanded_inputs(traj: &Trajectory, t: f64) -> (f64, f64) {
    let f_vec = traj.acceleration(t) + Vector3::new(0.0, 0.0, GRAVITY);
    let f = f_vec.norm();
    if f < 1e-9 {
        return (0.0, f64::INFINITY);
    }
    let z = f_vec / f;
    let j = traj.jerk(t);
    (f, (j - z * z.dot(&j)).norm() / f)
}

/// Every sample (including both ends) within the thrust and bodyrate bounds.
pub fn feasibility_check(traj: &Trajectory, limits: &FeasibilityLimits) -> bool {
    let n = (traj.duration / limits.sample_dt).ceil().max(1.0) as usize;
    (0..=n).all(|k| {
        let t = (k as f64 * limits.sample_dt).min(traj.duration);
        let (f, w) = demanded_inputs(traj, t);
        f >= limits.thrust_min && f <= limits.thrust_max && w <= limits.rate_max
    })
}

/// Candidate execution-time scales `α_min, α_min + r, …, ≤ α_max`.
pub fn time_scale_grid(alpha_min: f64, alpha_max: f64, resolution: f64) -> Vec<f64> {
    let n = ((alpha_max - alpha_min) / resolution + 1e-9).floor() as usize + 1;
    (0..n).map(|i| alpha_min + resolution * i as f64).collect()
}

/// First feasible trajectory over the scaled execution times, in increasing order.
pub fn sample_execution_time<F>(t_guess: f64, grid: &[f64], mut plan: F) -> Option<Trajectory>
where
    F: FnMut(f64) -> Option<Trajectory>,
{
    if !(t_guess.is_finite() && t_guess > 0.0) {
        return None;
    }
    grid.iter().find_map(|a| plan(a * t_guess))
}
