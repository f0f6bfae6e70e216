use std::sync::Arc;

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ObservationMode, ResolvedConfig};
use super::dataset::SeedTrajectoryDataset;
use super::seed_gen::sample_start;
use super::EnvError;
use crate::dynamics::{CommandSetpoint, DynamicsParams, Plant, QuadrotorState};
use crate::geometry::{
    clearance_all, clearance_check, facing_angles, fully_traversed, gap_coordinate, randomize_track, Clearance,
    ColliderSpec, GapSpec,
};
use crate::randomization::{
    maybe_spawn_perturbation, randomize_drag, sample_response_randomization, PerturbationState, ResponseRandomization,
};
use crate::reward::{compute_reward, RewardBreakdown, Transition};
use crate::seeding::rng_from;
use crate::sensing::{
    observe_gap_points, randomize_mask, render_mask_with, roll_pitch, sample_focal_scale, sample_mask_block,
    CameraModel, GapObservation, LatencyQueue, MaskImage, ObservationBundle,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeOutcome {
    Success,
    Collision,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetSource {
    Dataset,
    TaskSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Worst clearance over all gaps after the step.
    pub clearance: Clearance,
    /// Signed distance of the vehicle center past the current gap plane.
    pub x_g: f64,
    pub fully_traversed: bool,
    /// +1 once the current gap is fully traversed, −1 before.
    pub traversal_label: i8,
    /// Gap the reward and termination refer to.
    pub gap_index: usize,
    /// Gap the observation is taken from.
    pub observed_gap: usize,
    pub outcome: Option<EpisodeOutcome>,
    pub reset_source: ResetSource,
    pub perturbation_active: bool,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: ObservationBundle,
    pub reward: RewardBreakdown,
    pub done: bool,
    pub info: StepInfo,
}

/// One line of the per-step trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub seed: u64,
    pub step: u64,
    pub state: QuadrotorState,
    /// Action as received.
    pub action: [f64; 4],
    /// After clamping to the action limits.
    pub command: [f64; 4],
    /// What the actuator model delivered this step.
    pub executed: [f64; 4],
    pub reward: RewardBreakdown,
    pub clearance: Clearance,
    pub x_g: f64,
    pub gap_index: usize,
    pub done: bool,
    pub outcome: Option<EpisodeOutcome>,
}

/// +1 iff every collider corner is past the plane.
pub fn traversal_label(state: &QuadrotorState, gap: &GapSpec, collider: &ColliderSpec) -> i8 {
    if fully_traversed(state, gap, collider) {
        1
    } else {
        -1
    }
}

const MAX_RESET_TRIES: usize = 1000;

/// A single episode runner. All randomness comes from the rng seeded at
/// [`Env::reset`].
#[derive(Debug, Clone)]
pub struct Env {
    cfg: Arc<ResolvedConfig>,
    dataset: Arc<SeedTrajectoryDataset>,
    rng: ChaCha8Rng,
    seed: u64,
    gaps: Vec<GapSpec>,
    current_gap: usize,
    observed_gap: usize,
    plant: Plant,
    response: Option<ResponseRandomization>,
    perturbation: PerturbationState,
    camera: CameraModel,
    mask_block: u32,
    prev_action: CommandSetpoint,
    latency: LatencyQueue<(GapObservation, u64)>,
    step: u64,
    done: bool,
    outcome: Option<EpisodeOutcome>,
    reset_source: ResetSource,
}

impl Env {
    /// The environment is not usable until [`Env::reset`] is called.
    pub fn new(cfg: Arc<ResolvedConfig>, dataset: Arc<SeedTrajectoryDataset>) -> Self {
        let plant = Plant::new(
            QuadrotorState::at_rest(Vector3::zeros()),
            cfg.episode.dynamics,
            cfg.episode.response,
            0,
        );
        Self {
            camera: cfg.episode.camera,
            cfg,
            dataset,
            rng: rng_from(0),
            seed: 0,
            gaps: Vec::new(),
            current_gap: 0,
            observed_gap: 0,
            plant,
            response: None,
            perturbation: PerturbationState::default(),
            mask_block: 2,
            prev_action: CommandSetpoint::hover(),
            latency: LatencyQueue::new(0, (GapObservation::Points { points: Vec::new() }, 0)),
            step: 0,
            done: true,
            outcome: None,
            reset_source: ResetSource::TaskSpace,
        }
    }

    pub fn config(&self) -> &ResolvedConfig {
        &self.cfg
    }

    pub fn state(&self) -> &QuadrotorState {
        &self.plant.state
    }

    pub fn gaps(&self) -> &[GapSpec] {
        &self.gaps
    }

    pub fn current_gap(&self) -> usize {
        self.current_gap
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn perturbation(&self) -> &PerturbationState {
        &self.perturbation
    }

    pub fn response_randomization(&self) -> Option<&ResponseRandomization> {
        self.response.as_ref()
    }

    pub fn dynamics(&self) -> &DynamicsParams {
        &self.plant.dynamics
    }

    fn first_untraversed(&self, state: &QuadrotorState, gaps: &[GapSpec]) -> usize {
        let c = &self.cfg.episode.collider;
        gaps.iter().take_while(|g| fully_traversed(state, g, c)).count()
    }

    fn draw_dataset_start(&mut self) -> Option<(QuadrotorState, Vec<GapSpec>)> {
        let collider = self.cfg.episode.collider;
        for _ in 0..MAX_RESET_TRIES {
            let traj = &self.dataset.trajectories[self.rng.random_range(0..self.dataset.len())];
            let sample = &traj.samples[self.rng.random_range(0..traj.samples.len())];
            let state = sample.state();
            let free = clearance_all(&state, &traj.gaps, &collider).class == Clearance::Free;
            if free && self.first_untraversed(&state, &traj.gaps) < traj.gaps.len() {
                return Some((state, traj.gaps.clone()));
            }
        }
        None
    }

    fn draw_task_space_start(&mut self) -> Result<(QuadrotorState, Vec<GapSpec>), EnvError> {
        let collider = self.cfg.episode.collider;
        for _ in 0..MAX_RESET_TRIES {
            let gaps = randomize_track(&self.cfg.track, &mut self.rng);
            let p = sample_start(&self.cfg.track, &gaps[0], &mut self.rng);
            let to_gap = gaps[0].passable_center() - p;
            let (_, yaw) = facing_angles(&Vector3::new(to_gap.x, to_gap.y, 0.0));
            let state = QuadrotorState {
                attitude: UnitQuaternion::from_euler_angles(0.0, 0.0, yaw),
                ..QuadrotorState::at_rest(p)
            };
            if clearance_all(&state, &gaps, &collider).class == Clearance::Free {
                return Ok((state, gaps));
            }
        }
        Err(EnvError::Reset("no free task-space start found".into()))
    }

    /// Start a new episode; identical seeds give identical episodes.
    pub fn reset(&mut self, seed: u64) -> Result<StepResult, EnvError> {
        self.rng = rng_from(seed);
        self.seed = seed;
        let ep = &self.cfg.episode;
        let informed = !self.dataset.is_empty() && self.rng.random_bool(ep.informed_reset_probability);
        let dataset_start = if informed { self.draw_dataset_start() } else { None };
        let ((state, gaps), source) = match dataset_start {
            Some(s) => (s, ResetSource::Dataset),
            None => (self.draw_task_space_start()?, ResetSource::TaskSpace),
        };
        let rand = self.cfg.randomization.clone();
        let ep = self.cfg.episode.clone();

        let nominal = ep.response;
        let response = rand
            .response
            .map(|r| sample_response_randomization(&mut self.rng, &r, &nominal));
        let max_delay = rand.response.map_or(nominal.required_history(), |r| r.max_delay(&nominal) + nominal.window);
        let mut dynamics = ep.dynamics;
        if let Some(r) = rand.drag_range {
            dynamics.drag = randomize_drag(&mut self.rng, &ep.dynamics.drag, r);
        }
        let mut plant = Plant::new(state, dynamics, nominal, max_delay);
        if let Some(r) = &response {
            plant.response = r.params(&nominal);
            plant.factors = r.factors;
        }
        self.camera = CameraModel {
            focal_scale: rand.focal_range.map_or(1.0, |r| sample_focal_scale(&mut self.rng, r)),
            ..ep.camera
        };
        self.mask_block = sample_mask_block(&mut self.rng);

        self.current_gap = self.first_untraversed(&state, &gaps);
        self.observed_gap = self.current_gap;
        self.gaps = gaps;
        self.plant = plant;
        self.response = response;
        self.perturbation = PerturbationState::default();
        self.prev_action = CommandSetpoint::hover();
        self.step = 0;
        self.done = false;
        self.outcome = None;
        self.reset_source = source;

        let gap_obs = self.gap_observation()?;
        self.latency = LatencyQueue::new(ep.latency.total(), (gap_obs.clone(), 0));
        let observation = self.bundle((gap_obs, 0));
        let (clearance, x_g, traversed) = self.geometry_info();
        Ok(StepResult {
            observation,
            reward: RewardBreakdown::default(),
            done: false,
            info: self.info(clearance, x_g, traversed),
        })
    }

    fn geometry_info(&self) -> (Clearance, f64, bool) {
        let c = &self.cfg.episode.collider;
        let s = &self.plant.state;
        let gap = &self.gaps[self.current_gap.min(self.gaps.len() - 1)];
        (
            clearance_all(s, &self.gaps, c).class,
            gap_coordinate(s, gap, c).center,
            fully_traversed(s, gap, c),
        )
    }

    fn info(&self, clearance: Clearance, x_g: f64, traversed: bool) -> StepInfo {
        StepInfo {
            clearance,
            x_g,
            fully_traversed: traversed,
            traversal_label: if traversed { 1 } else { -1 },
            gap_index: self.current_gap.min(self.gaps.len() - 1),
            observed_gap: self.observed_gap,
            outcome: self.outcome,
            reset_source: self.reset_source,
            perturbation_active: self.perturbation.active,
            step: self.step,
        }
    }

    fn render(&self, gap: &GapSpec) -> MaskImage {
        render_mask_with(&self.plant.state, gap, &self.camera, &self.cfg.episode.render)
    }

    fn gap_observation(&mut self) -> Result<GapObservation, EnvError> {
        let gap = &self.gaps[self.observed_gap];
        let ep = &self.cfg.episode;
        Ok(match ep.observation {
            ObservationMode::Points => GapObservation::Points {
                points: observe_gap_points(&self.plant.state, gap, ep.edge_points)?
                    .into_iter()
                    .map(|p| p.into())
                    .collect(),
            },
            ObservationMode::Mask => {
                let mut image = self.render(gap);
                if self.cfg.randomization.mask_noise {
                    image = randomize_mask(&image, self.mask_block, &mut self.rng)?;
                }
                GapObservation::Mask { image }
            }
        })
    }

    fn bundle(&self, (gap, captured): (GapObservation, u64)) -> ObservationBundle {
        let (roll, pitch) = roll_pitch(&self.plant.state.attitude);
        ObservationBundle {
            gap,
            roll,
            pitch,
            body_velocity: self.plant.state.body_velocity().into(),
            previous_action: self.prev_action,
            captured_step: captured,
            step: self.step,
        }
    }

    /// Switch the observed gap once it is behind the vehicle: after it is
    /// fully traversed (points) or once its mask is empty with the vehicle
    /// center past its plane (mask).
    fn update_observed_gap(&mut self) {
        let c = self.cfg.episode.collider;
        while self.observed_gap + 1 < self.gaps.len() {
            let gap = &self.gaps[self.observed_gap];
            let s = &self.plant.state;
            let switch = match self.cfg.episode.observation {
                ObservationMode::Points => fully_traversed(s, gap, &c),
                ObservationMode::Mask => gap_coordinate(s, gap, &c).center > 0.0 && self.render(gap).is_empty(),
            };
            if !switch {
                break;
            }
            self.observed_gap += 1;
        }
    }

    pub fn step(&mut self, action: [f64; 4]) -> Result<StepResult, EnvError> {
        self.step_with_record(action).map(|(r, _)| r)
    }

    pub fn step_with_record(&mut self, action: [f64; 4]) -> Result<(StepResult, StepRecord), EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let raw = CommandSetpoint::from_array(action);
        if !raw.is_finite() {
            return Err(EnvError::InvalidAction(format!("{action:?}")));
        }
        let lim = self.cfg.episode.action;
        let cmd = raw.clamped(lim.thrust_min, lim.thrust_max, lim.rate_max);
        let collider = self.cfg.episode.collider;
        let gap_idx = self.current_gap;
        let gap = self.gaps[gap_idx].clone();
        let prev_state = self.plant.state;

        if let Some(p) = &self.cfg.randomization.perturbation {
            let x_g = gap_coordinate(&prev_state, &gap, &collider).center;
            self.perturbation = maybe_spawn_perturbation(&mut self.rng, &prev_state, x_g, &self.perturbation, p);
        }
        let executed = self.plant.step(cmd, &self.perturbation.applied())?;
        if let (Some(r), Some(rc)) = (self.response.as_mut(), self.cfg.randomization.response.as_ref()) {
            if r.tick(&mut self.rng, rc, &self.cfg.episode.response) {
                self.plant.response = r.params(&self.cfg.episode.response);
                self.plant.factors = r.factors;
            }
        }
        self.step += 1;
        let state = self.plant.state;

        let mut clearance = clearance_all(&state, &self.gaps, &collider).class;
        if state.position.z < 0.0 {
            clearance = Clearance::Collision;
        }
        let collision = clearance == Clearance::Collision;
        let reward = compute_reward(
            &Transition {
                prev_state: &prev_state,
                state: &state,
                action: &cmd,
                prev_action: &self.prev_action,
                gap: &gap,
                collision,
            },
            &self.cfg.episode.reward,
        );
        self.prev_action = cmd;

        let traversed = fully_traversed(&state, &gap, &collider);
        let x_g = gap_coordinate(&state, &gap, &collider).center;
        let last = gap_idx + 1 == self.gaps.len();
        if traversed && !last {
            self.current_gap += 1;
        }
        self.outcome = if collision {
            Some(EpisodeOutcome::Collision)
        } else if traversed && last && x_g > self.cfg.track.exit_margin {
            Some(EpisodeOutcome::Success)
        } else if self.step >= self.cfg.episode.horizon {
            Some(EpisodeOutcome::Timeout)
        } else {
            None
        };
        self.done = self.outcome.is_some();

        self.update_observed_gap();
        let current = self.gap_observation()?;
        let delayed = self.latency.push((current, self.step));
        let observation = self.bundle(delayed);
        let mut info = self.info(clearance, x_g, traversed);
        info.gap_index = gap_idx;
        let record = StepRecord {
            seed: self.seed,
            step: self.step,
            state,
            action,
            command: cmd.to_array(),
            executed: executed.to_array(),
            reward,
            clearance,
            x_g,
            gap_index: gap_idx,
            done: self.done,
            outcome: self.outcome,
        };
        Ok((
            StepResult {
                observation,
                reward,
                done: self.done,
                info,
            },
            record,
        ))
    }

    /// Exact clearance of the current state against gap `i`.
    pub fn clearance_of(&self, i: usize) -> Clearance {
        clearance_check(&self.plant.state, &self.gaps[i], &self.cfg.episode.collider).class
    }
}
