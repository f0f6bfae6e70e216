//! Domain randomization: perturbation forces, response factors and delays,
//! drag scaling, and the named presets.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{DragParams, QuadrotorState, ResponseParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationConfig {
    /// Spawn probability per eligible control step.
    pub probability: f64,
    /// Per-axis bound of the world-frame acceleration (m/s²).
    pub max_accel: [f64; 3],
    pub duration: u32,
    /// No spawn (and no active force) within this distance of the plane.
    pub min_distance: f64,
    /// No spawn at or above this bodyrate norm (rad/s).
    pub max_bodyrate: f64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            probability: 0.1,
            max_accel: [2.0, 1.0, 1.0],
            duration: 20,
            min_distance: 1.5,
            max_bodyrate: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct PerturbationState {
    pub active: bool,
    pub remaining: u32,
    pub acceleration: Vector3<f64>,
}

impl PerturbationState {
    pub fn applied(&self) -> Vector3<f64> {
        if self.active {
            self.acceleration
        } else {
            Vector3::zeros()
        }
    }
}

pub fn perturbation_eligible(state: &QuadrotorState, x_g: f64, current: &PerturbationState, cfg: &PerturbationConfig) -> bool {
    !current.active && x_g.abs() > cfg.min_distance && state.bodyrate.norm() < cfg.max_bodyrate
}

/// Advance the perturbation by one control step. An active force counts
/// down and is dropped early once the vehicle is within `min_distance` of
/// the plane; otherwise a new one may spawn if the step is eligible.
pub fn maybe_spawn_perturbation<R: Rng + ?Sized>(
    rng: &mut R,
    state: &QuadrotorState,
    x_g: f64,
    current: &PerturbationState,
    cfg: &PerturbationConfig,
) -> PerturbationState {
    if current.active {
        let remaining = current.remaining.saturating_sub(1);
        if remaining == 0 || x_g.abs() <= cfg.min_distance {
            return PerturbationState::default();
        }
        return PerturbationState { remaining, ..*current };
    }
    if !perturbation_eligible(state, x_g, current, cfg) || !rng.random_bool(cfg.probability) {
        return PerturbationState::default();
    }
    let mut a = Vector3::zeros();
    for (i, amax) in cfg.max_accel.iter().enumerate() {
        // 1 - U maps [0, 1) onto (0, 1]
        let mag = amax * (1.0 - rng.random::<f64>());
        a[i] = if rng.random_bool(0.5) { mag } else { -mag };
    }
    PerturbationState {
        active: cfg.duration > 0,
        remaining: cfg.duration,
        acceleration: a,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResponseRandomizationConfig {
    /// Half-width of the factor interval per channel `[T, ωx, ωy, ωz]`.
    pub factor_range: [f64; 4],
    /// Inclusive hold range in control steps.
    pub hold: [u32; 2],
    /// Relative jitter of the delays per channel.
    pub delay_jitter: [f64; 4],
}

impl Default for ResponseRandomizationConfig {
    fn default() -> Self {
        Self {
            factor_range: [0.1; 4],
            hold: [30, 90],
            delay_jitter: [0.4, 0.3, 0.3, 0.3],
        }
    }
}

impl ResponseRandomizationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.factor_range.iter().any(|c| !(c.is_finite() && (0.0..1.0).contains(c))) {
            return Err(format!("factor ranges must lie in [0, 1), got {:?}", self.factor_range));
        }
        if self.delay_jitter.iter().any(|j| !(j.is_finite() && *j >= 0.0)) {
            return Err(format!("delay jitter must be non-negative, got {:?}", self.delay_jitter));
        }
        if self.hold[0] == 0 || self.hold[0] > self.hold[1] {
            return Err(format!("hold range {:?} must be non-empty and positive", self.hold));
        }
        Ok(())
    }

    /// Largest delay any draw can produce for the given nominal delays.
    pub fn max_delay(&self, nominal: &ResponseParams) -> usize {
        (0..4)
            .map(|i| ((nominal.delay[i] as f64 * (1.0 + self.delay_jitter[i])).round() as usize).max(1))
            .max()
            .unwrap_or(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseRandomization {
    pub factors: [f64; 4],
    pub remaining: u32,
    pub delays: [usize; 4],
}

impl ResponseRandomization {
    pub fn nominal(params: &ResponseParams) -> Self {
        Self {
            factors: [1.0; 4],
            remaining: u32::MAX,
            delays: params.delay,
        }
    }

    pub fn params(&self, nominal: &ResponseParams) -> ResponseParams {
        ResponseParams {
            delay: self.delays,
            window: nominal.window,
        }
    }

    /// Count down the hold; redraw everything when it expires.
    pub fn tick<R: Rng + ?Sized>(&mut self, rng: &mut R, cfg: &ResponseRandomizationConfig, nominal: &ResponseParams) -> bool {
        self.remaining = self.remaining.saturating_sub(1);
        if self.remaining == 0 {
            *self = sample_response_randomization(rng, cfg, nominal);
            true
        } else {
            false
        }
    }
}

fn symmetric<R: Rng + ?Sized>(rng: &mut R, half: f64) -> f64 {
    if half == 0.0 {
        1.0
    } else {
        rng.random_range(1.0 - half..=1.0 + half)
    }
}

pub fn sample_response_randomization<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &ResponseRandomizationConfig,
    nominal: &ResponseParams,
) -> ResponseRandomization {
    let factors = std::array::from_fn(|i| symmetric(rng, cfg.factor_range[i]));
    let remaining = rng.random_range(cfg.hold[0]..=cfg.hold[1]);
    let delays = std::array::from_fn(|i| {
        let scaled = nominal.delay[i] as f64 * symmetric(rng, cfg.delay_jitter[i]);
        (scaled.round() as usize).max(1)
    });
    ResponseRandomization { factors, remaining, delays }
}

/// Scale every drag coefficient independently by `U(1 − r, 1 + r)`.
pub fn randomize_drag<R: Rng + ?Sized>(rng: &mut R, nominal: &DragParams, range: f64) -> DragParams {
    let mut out = *nominal;
    for v in out.linear.iter_mut().chain(out.quadratic.iter_mut()) {
        *v *= symmetric(rng, range);
    }
    out
}

/// Which randomization channels run during an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomizationConfig {
    pub perturbation: Option<PerturbationConfig>,
    pub response: Option<ResponseRandomizationConfig>,
    /// Relative drag randomization; `None` keeps nominal drag.
    pub drag_range: Option<f64>,
    /// Block-wise max/min noise on rendered masks.
    pub mask_noise: bool,
    /// Relative focal-length randomization; `None` keeps nominal intrinsics.
    pub focal_range: Option<f64>,
}

impl Default for RandomizationConfig {
    fn default() -> Self {
        Self::none()
    }
}

pub const RANDOMIZATION_PRESETS: [&str; 4] = ["none", "single_rl", "single_distill", "consecutive_distill"];

impl RandomizationConfig {
    pub fn none() -> Self {
        Self {
            perturbation: None,
            response: None,
            drag_range: None,
            mask_noise: false,
            focal_range: None,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        let full = |perturbation: PerturbationConfig, distill: bool| Self {
            perturbation: Some(perturbation),
            response: Some(ResponseRandomizationConfig::default()),
            drag_range: Some(0.5),
            mask_noise: distill,
            focal_range: distill.then_some(0.05),
        };
        match name {
            "none" => Some(Self::none()),
            "single_rl" => Some(full(PerturbationConfig::default(), false)),
            "single_distill" => Some(full(
                PerturbationConfig {
                    max_accel: [1.5, 1.0, 1.0],
                    ..PerturbationConfig::default()
                },
                true,
            )),
            "consecutive_distill" => Some(full(
                PerturbationConfig {
                    probability: 0.05,
                    max_accel: [1.0, 0.5, 0.5],
                    ..PerturbationConfig::default()
                },
                true,
            )),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if let Some(p) = &self.perturbation {
            if !(0.0..=1.0).contains(&p.probability) || p.max_accel.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
                return Err(format!("invalid perturbation config {p:?}"));
            }
        }
        if let Some(r) = &self.response {
            r.validate()?;
        }
        for r in [self.drag_range, self.focal_range].into_iter().flatten() {
            if !(r.is_finite() && (0.0..1.0).contains(&r)) {
                return Err(format!("relative randomization range {r} must lie in [0, 1)"));
            }
        }
        Ok(())
    }
}
