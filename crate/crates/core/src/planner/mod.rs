//! Minimum-jerk approach planner with execution-time sampling, replanning
//! under distance-dependent state-estimation noise, and Monte Carlo tables.

mod min_jerk;

pub use min_jerk::{
    demanded_inputs, feasibility_check, min_jerk_trajectory, sample_execution_time, time_scale_grid,
    AxisTrajectory, FeasibilityLimits, FlatState, Trajectory,
};

use std::io::Write;

use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{tracking_command, Reference, TrackingGains};
use crate::dynamics::{CommandSetpoint, DynamicsParams, Plant, QuadrotorState, ResponseParams, CONTROL_DT, GRAVITY};
use crate::geometry::{clearance_check, fully_traversed, gap_coordinate, ColliderSpec, GapShape, GapSpec};
use crate::seeding::{derive_seed, rng_from};

#[derive(Debug, thiserror::Error)]
pub enum PlannerError {
    #[error("execution time must be positive and finite, got {0}")]
    InvalidDuration(f64),
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("empty grid: {0}")]
    EmptyGrid(&'static str),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Estimation noise growing with the squared distance to the gap.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Yaw coefficient (degrees per m²).
    pub epsilon: f64,
    /// Position coefficient (m per m²).
    pub delta: f64,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), PlannerError> {
        if !(self.epsilon >= 0.0 && self.delta >= 0.0 && self.epsilon.is_finite() && self.delta.is_finite()) {
            return Err(PlannerError::InvalidNoise(format!("{self:?}")));
        }
        Ok(())
    }
}

/// One draw of estimation error.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EstimateError {
    /// Yaw error (radians), applied as a world-z rotation about the vehicle.
    pub yaw: f64,
    pub position: Vector3<f64>,
}

impl EstimateError {
    pub fn draw<R: Rng + ?Sized>(d: f64, model: &NoiseModel, rng: &mut R) -> Self {
        let d2 = d * d;
        let uni = |rng: &mut R, half: f64| if half > 0.0 { rng.random_range(-half..=half) } else { 0.0 };
        let yaw = uni(rng, model.epsilon * d2).to_radians();
        let h = model.delta * d2;
        let position = Vector3::new(uni(rng, h), uni(rng, h), uni(rng, h));
        Self { yaw, position }
    }
}

/// Rigid map from the true world to the world as the estimator sees it.
#[derive(Debug, Clone, Copy, PartialEq)]
struct EstimateFrame {
    rot: Rotation3<f64>,
    pivot: Vector3<f64>,
    offset: Vector3<f64>,
}

impl EstimateFrame {
    fn new(err: &EstimateError, pivot: Vector3<f64>) -> Self {
        Self {
            rot: Rotation3::from_axis_angle(&Vector3::z_axis(), err.yaw),
            pivot,
            offset: err.position,
        }
    }

    fn point_to_est(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rot * (x - self.pivot) + self.pivot + self.offset
    }

    fn point_from_est(&self, y: &Vector3<f64>) -> Vector3<f64> {
        self.rot.inverse() * (y - self.pivot - self.offset) + self.pivot
    }

    fn vec_to_est(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rot * v
    }

    fn vec_from_est(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rot.inverse() * v
    }

    fn yaw(&self) -> f64 {
        self.rot.angle() * self.rot.axis().map_or(1.0, |a| a.z.signum())
    }
}

/// Corrupt yaw and position by `U(±ε d²)` degrees and `U(±δ d²)` metres per
/// axis. Roll, pitch, velocity and bodyrate are untouched.
pub fn noisy_state<R: Rng + ?Sized>(state: &QuadrotorState, d: f64, model: &NoiseModel, rng: &mut R) -> QuadrotorState {
    let err = EstimateError::draw(d.max(0.0), model, rng);
    apply_error(state, &err)
}

fn apply_error(state: &QuadrotorState, err: &EstimateError) -> QuadrotorState {
    let mut s = *state;
    s.position += err.position;
    s.attitude = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), err.yaw) * s.attitude;
    s
}

/// Single-gap scenario: start at rest `x0` metres in front of the gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineScenario {
    pub x0: f64,
    /// Gap roll (degrees).
    pub phi_gap: f64,
    pub height: f64,
    pub shape: GapShape,
}

impl Default for BaselineScenario {
    fn default() -> Self {
        Self {
            x0: 2.5,
            phi_gap: 0.0,
            height: 1.5,
            shape: GapShape::default_rectangle(),
        }
    }
}

impl BaselineScenario {
    pub fn gap(&self) -> GapSpec {
        GapSpec::new(Vector3::new(0.0, 0.0, self.height), self.phi_gap.to_radians(), self.shape.clone())
    }

    pub fn start(&self) -> QuadrotorState {
        QuadrotorState::at_rest(Vector3::new(-self.x0, 0.0, self.height))
    }

    pub fn validate(&self) -> Result<(), PlannerError> {
        if !(self.x0.is_finite() && self.x0 > 0.0 && self.phi_gap.is_finite() && self.height.is_finite()) {
            return Err(PlannerError::InvalidScenario(format!("x0 {} phi {} height {}", self.x0, self.phi_gap, self.height)));
        }
        self.gap().validate().map_err(|e| PlannerError::InvalidScenario(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub limits: FeasibilityLimits,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_resolution: f64,
    /// Distance of the pre-traverse state from the gap center (m).
    pub d_min: f64,
    /// Crossing speed along the normal (m/s), at most `v_max`.
    pub crossing_speed: f64,
    pub v_max: f64,
    /// Execution-time guess for the first plan (s).
    pub initial_time_guess: f64,
    /// Control steps between visual updates (replans).
    pub replan_every: usize,
    /// No replanning once less than this much approach time remains (s).
    pub min_replan_time: f64,
    /// Success requires the collider center this far past the plane (m).
    pub exit_distance: f64,
    pub max_time: f64,
    /// Acceleration and jerk feedforward are read this far ahead (s) to
    /// offset the flight-controller response lag.
    pub feedforward_lead: f64,
    pub gains: TrackingGains,
    pub dynamics: DynamicsParams,
    pub response: ResponseParams,
    pub collider: ColliderSpec,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            limits: FeasibilityLimits::default(),
            alpha_min: 0.5,
            alpha_max: 2.0,
            alpha_resolution: 0.05,
            d_min: 0.3,
            crossing_speed: 2.0,
            v_max: 4.0,
            initial_time_guess: 2.0,
            replan_every: 2,
            min_replan_time: 0.15,
            exit_distance: 0.3,
            max_time: 8.0,
            // ~ one-step delay + command averaging + bodyrate time constant
            feedforward_lead: 0.05,
            gains: TrackingGains {
                thrust_min: 4.0,
                thrust_max: 20.0,
                rate_max: 8.0,
                drag: DynamicsParams::default().drag,
                ..TrackingGains::default()
            },
            dynamics: DynamicsParams::default(),
            response: ResponseParams::default(),
            collider: ColliderSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Collision,
    NoPlan,
    Timeout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeReport {
    pub outcome: Outcome,
    pub plans: usize,
    pub steps: usize,
    pub path: Vec<Vector3<f64>>,
    /// Vehicle state when the episode ended.
    pub final_state: QuadrotorState,
}

/// Constant acceleration through the gap whose thrust direction is the gap's
/// in-plane vertical axis, with no component along the normal.
fn traverse_acceleration(gap: &GapSpec) -> Vector3<f64> {
    let up = gap.frame().axis_z();
    // thrust magnitude that cancels gravity vertically; the gap frame keeps
    // `up` orthogonal to the normal, so nothing acts along it
    let f = if up.z > 1e-9 { GRAVITY / up.z } else { f64::INFINITY };
    f * up - Vector3::new(0.0, 0.0, GRAVITY)
}

/// Pre-traverse boundary state `τ = d_min / v_c` before the crossing point.
fn pre_traverse_state(gap: &GapSpec, cfg: &BaselineConfig) -> FlatState {
    let speed = cfg.crossing_speed.min(cfg.v_max);
    let vc = gap.frame().normal() * speed;
    let a = traverse_acceleration(gap);
    let tau = cfg.d_min / speed;
    let c = gap.passable_center();
    FlatState {
        position: c - vc * tau + 0.5 * a * tau * tau,
        velocity: vc - a * tau,
        acceleration: a,
    }
}

struct ActivePlan {
    traj: Trajectory,
    frame: EstimateFrame,
    start_time: f64,
}

impl ActivePlan {
    fn reference(&self, t: f64) -> Reference {
        let s = t - self.start_time;
        let (p, v, a, j) = if s <= self.traj.duration {
            (self.traj.position(s), self.traj.velocity(s), self.traj.acceleration(s), self.traj.jerk(s))
        } else {
            let end = self.traj.state(self.traj.duration);
            let u = s - self.traj.duration;
            let acc = end.acceleration;
            (end.position + end.velocity * u + 0.5 * acc * u * u, end.velocity + acc * u, acc, Vector3::zeros())
        };
        Reference {
            position: self.frame.point_from_est(&p),
            velocity: self.frame.vec_from_est(&v),
            acceleration: self.frame.vec_from_est(&a),
            jerk: self.frame.vec_from_est(&j),
            yaw: -self.frame.yaw(),
        }
    }

    fn remaining(&self, t: f64) -> f64 {
        self.traj.duration - (t - self.start_time)
    }
}

/// Closed-loop replanning episode. Deterministic given `seed`.
pub fn replan_episode(
    scenario: &BaselineScenario,
    noise: &NoiseModel,
    cfg: &BaselineConfig,
    seed: u64,
) -> Result<EpisodeReport, PlannerError> {
    scenario.validate()?;
    noise.validate()?;
    let mut rng = rng_from(seed);
    let gap = scenario.gap();
    let center = gap.passable_center();
    let goal = pre_traverse_state(&gap, cfg);
    let grid = time_scale_grid(cfg.alpha_min, cfg.alpha_max, cfg.alpha_resolution);
    let mut plant = Plant::new(scenario.start(), cfg.dynamics, cfg.response, 0);
    let mut plan: Option<ActivePlan> = None;
    let mut plans = 0usize;
    let mut failed_first = 0usize;
    let max_steps = (cfg.max_time / CONTROL_DT).ceil() as usize;
    let mut path = Vec::with_capacity(max_steps + 1);
    path.push(plant.state.position);

    for k in 0..max_steps {
        let t = k as f64 * CONTROL_DT;
        let d = (plant.state.position - center).norm();
        let may_replan = match &plan {
            None => true,
            Some(p) => p.remaining(t) > cfg.min_replan_time && d > cfg.d_min,
        };
        if may_replan && k % cfg.replan_every.max(1) == 0 {
            let err = EstimateError::draw(d, noise, &mut rng);
            let frame = EstimateFrame::new(&err, plant.state.position);
            let init = match &plan {
                Some(p) => {
                    let r = p.reference(t);
                    FlatState {
                        position: frame.point_to_est(&plant.state.position),
                        velocity: frame.vec_to_est(&plant.state.velocity),
                        acceleration: frame.vec_to_est(&r.acceleration),
                    }
                }
                None => FlatState {
                    position: frame.point_to_est(&plant.state.position),
                    velocity: frame.vec_to_est(&plant.state.velocity),
                    acceleration: Vector3::zeros(),
                },
            };
            let guess = plan.as_ref().map_or(cfg.initial_time_guess, |p| p.remaining(t));
            let found = sample_execution_time(guess, &grid, |dur| {
                min_jerk_trajectory(&init, &goal, dur)
                    .ok()
                    .filter(|tr| feasibility_check(tr, &cfg.limits))
            });
            match found {
                Some(traj) => {
                    plans += 1;
                    plan = Some(ActivePlan { traj, frame, start_time: t });
                }
                None if plan.is_none() => {
                    failed_first += 1;
                    if failed_first >= 10 {
                        return Ok(EpisodeReport { outcome: Outcome::NoPlan, plans, steps: k, path, final_state: plant.state });
                    }
                }
                None => {}
            }
        }
        // the next `h` actuator outputs depend only on commands already sent
        let h = cfg.response.delay.iter().copied().min().unwrap_or(0);
        let mut predicted = plant.clone();
        for _ in 0..h {
            predicted
                .step(CommandSetpoint::hover(), &Vector3::zeros())
                .map_err(|e| PlannerError::InvalidScenario(e.to_string()))?;
        }
        let t_ctl = t + h as f64 * CONTROL_DT;
        let reference = match &plan {
            Some(p) => {
                let mut r = p.reference(t_ctl);
                let ahead = p.reference(t_ctl + cfg.feedforward_lead);
                r.acceleration = ahead.acceleration;
                r.jerk = ahead.jerk;
                r
            }
            None => Reference::hold(scenario.start().position, 0.0),
        };
        let cmd = tracking_command(&predicted.state, &reference, &cfg.gains);
        plant
            .step(cmd, &Vector3::zeros())
            .map_err(|e| PlannerError::InvalidScenario(e.to_string()))?;
        path.push(plant.state.position);

        if plant.state.position.z < 0.0 || clearance_check(&plant.state, &gap, &cfg.collider).is_collision() {
            return Ok(EpisodeReport { outcome: Outcome::Collision, plans, steps: k + 1, path, final_state: plant.state });
        }
        let x_local = gap_coordinate(&plant.state, &gap, &cfg.collider).center;
        if fully_traversed(&plant.state, &gap, &cfg.collider) && x_local > cfg.exit_distance {
            return Ok(EpisodeReport { outcome: Outcome::Success, plans, steps: k + 1, path, final_state: plant.state });
        }
    }
    let outcome = if plans == 0 { Outcome::NoPlan } else { Outcome::Timeout };
    Ok(EpisodeReport { outcome, plans, steps: max_steps, path, final_state: plant.state })
}

/// Monte Carlo grid; cells are the cartesian product in the order
/// ε, δ, X₀, φ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonteCarloGrid {
    pub epsilon: Vec<f64>,
    pub delta: Vec<f64>,
    pub x0: Vec<f64>,
    pub phi_gap: Vec<f64>,
    pub seeds: usize,
    pub base_seed: u64,
    pub shape: GapShape,
    pub height: f64,
}

impl Default for MonteCarloGrid {
    fn default() -> Self {
        Self {
            epsilon: vec![0.0, 1.0, 2.0, 4.0],
            delta: vec![0.0, 0.01],
            x0: vec![2.5],
            phi_gap: vec![0.0, 30.0],
            seeds: 200,
            base_seed: 0,
            shape: GapShape::default_rectangle(),
            height: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessCell {
    pub epsilon: f64,
    pub delta: f64,
    pub x0: f64,
    pub phi_gap: f64,
    pub success_rate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n: usize,
}

/// Wilson score interval at 95%.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let nf = n as f64;
    let p = successes as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let mid = (p + z * z / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    // exact at the ends, where mid ∓ half cancels
    let lo = if successes == 0 { 0.0 } else { (mid - half).max(0.0) };
    let hi = if successes == n { 1.0 } else { (mid + half).min(1.0) };
    (lo, hi)
}

pub fn monte_carlo_success(grid: &MonteCarloGrid, cfg: &BaselineConfig) -> Result<Vec<SuccessCell>, PlannerError> {
    if grid.seeds == 0 {
        return Err(PlannerError::EmptyGrid("seeds must be >= 1"));
    }
    for (name, v) in [("epsilon", &grid.epsilon), ("delta", &grid.delta), ("x0", &grid.x0), ("phi_gap", &grid.phi_gap)] {
        if v.is_empty() {
            return Err(PlannerError::EmptyGrid(name));
        }
    }
    let mut cells = Vec::new();
    for &e in &grid.epsilon {
        for &d in &grid.delta {
            for &x0 in &grid.x0 {
                for &phi in &grid.phi_gap {
                    cells.push((NoiseModel { epsilon: e, delta: d }, x0, phi));
                }
            }
        }
    }
    cells
        .par_iter()
        .enumerate()
        .map(|(ci, (noise, x0, phi))| {
            let scenario = BaselineScenario {
                x0: *x0,
                phi_gap: *phi,
                height: grid.height,
                shape: grid.shape.clone(),
            };
            let wins = (0..grid.seeds)
                .into_par_iter()
                .map(|i| {
                    let seed = derive_seed(grid.base_seed, &[ci as u64, i as u64]);
                    replan_episode(&scenario, noise, cfg, seed).map(|r| (r.outcome == Outcome::Success) as usize)
                })
                .collect::<Result<Vec<_>, _>>()?
                .into_iter()
                .sum::<usize>();
            let (lo, hi) = wilson_interval(wins, grid.seeds);
            Ok(SuccessCell {
                epsilon: noise.epsilon,
                delta: noise.delta,
                x0: *x0,
                phi_gap: *phi,
                success_rate: wins as f64 / grid.seeds as f64,
                ci_lo: lo,
                ci_hi: hi,
                n: grid.seeds,
            })
        })
        .collect()
}

pub fn write_success_csv<W: Write>(cells: &[SuccessCell], out: W) -> Result<(), PlannerError> {
    let mut w = csv::Writer::from_writer(out);
    for c in cells {
        w.serialize(c).map_err(|e| PlannerError::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}
