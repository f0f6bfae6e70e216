//! Per-step reward: traversing, shaping, smoothness, speed, and the two
//! alignment regularizers.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{CommandSetpoint, QuadrotorState};
use crate::geometry::{facing_angles, GapSpec};
use crate::sensing::{euler_zyx, wrap_angle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    #[default]
    Rolled,
    Pitched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub mode: RewardMode,
    pub traverse_weight: f64,
    /// Half-width of the band around the plane in which crossing progress pays.
    pub traverse_band: f64,
    /// Attitude tolerance of the pitched-mode traversing scale (degrees).
    pub pitch_tolerance_deg: f64,
    pub shaping_weight: f64,
    /// Penalties on `[T, ωx, ωy, ωz]` magnitudes.
    pub magnitude: [f64; 4],
    /// Penalties on step-to-step action changes.
    pub variation: [f64; 4],
    pub speed_weight: f64,
    pub speed_limit: f64,
    pub distill_weight_rolled: f64,
    pub distill_weight_pitched: f64,
    pub approach_distance: f64,
    pub approach_velocity: f64,
    pub approach_pitch: f64,
    pub approach_yaw: f64,
    pub pitched_approach_scale: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            mode: RewardMode::Rolled,
            traverse_weight: 10.0,
            traverse_band: 0.2,
            pitch_tolerance_deg: 20.0,
            shaping_weight: 0.3,
            magnitude: [0.04, 0.05, 0.04, 0.02],
            variation: [0.06, 0.015, 0.01, 0.0],
            speed_weight: 0.05,
            speed_limit: 4.0,
            distill_weight_rolled: 0.15,
            distill_weight_pitched: 0.10,
            approach_distance: 0.6,
            approach_velocity: 0.375,
            approach_pitch: 0.25,
            approach_yaw: 0.5,
            pitched_approach_scale: 0.8,
        }
    }
}

impl RewardConfig {
    pub fn pitched() -> Self {
        Self {
            mode: RewardMode::Pitched,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let weights = [
            self.traverse_weight,
            self.shaping_weight,
            self.speed_weight,
            self.distill_weight_rolled,
            self.distill_weight_pitched,
            self.approach_velocity,
            self.approach_pitch,
            self.approach_yaw,
            self.pitched_approach_scale,
        ];
        let all = weights.iter().chain(&self.magnitude).chain(&self.variation);
        for w in all {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(format!("reward weights must be finite and non-negative, got {w}"));
            }
        }
        for (name, v) in [
            ("traverse_band", self.traverse_band),
            ("approach_distance", self.approach_distance),
            ("speed_limit", self.speed_limit),
            ("pitch_tolerance_deg", self.pitch_tolerance_deg),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }

    pub fn distill_weight(&self) -> f64 {
        match self.mode {
            RewardMode::Rolled => self.distill_weight_rolled,
            RewardMode::Pitched => self.distill_weight_pitched,
        }
    }

    /// `(λ_v, λ_θ, λ_ψ)` for the active mode.
    pub fn approach_weights(&self) -> (f64, f64, f64) {
        let s = match self.mode {
            RewardMode::Rolled => 1.0,
            RewardMode::Pitched => self.pitched_approach_scale,
        };
        (s * self.approach_velocity, s * self.approach_pitch, s * self.approach_yaw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct RewardBreakdown {
    pub traversing: f64,
    pub shaping: f64,
    pub smoothness: f64,
    pub speed: f64,
    pub distillation_reg: f64,
    pub approach_reg: f64,
    pub total: f64,
}

impl RewardBreakdown {
    fn summed(mut self) -> Self {
        self.total = self.traversing
            + self.shaping
            + self.smoothness
            + self.speed
            + self.distillation_reg
            + self.approach_reg;
        self
    }
}

/// Band-clipped progress across the plane. The step pays when either end
/// lies in the band, so summing over a collision-free crossing telescopes to
/// `λ · 2l` regardless of where the steps land.
pub fn traversing_reward(prev_x: f64, x: f64, collision: bool, theta: f64, theta_g: f64, cfg: &RewardConfig) -> f64 {
    let l = cfg.traverse_band;
    if collision || !(x.abs() <= l || prev_x.abs() <= l) {
        return 0.0;
    }
    let weight = match cfg.mode {
        RewardMode::Rolled => cfg.traverse_weight,
        RewardMode::Pitched => {
            cfg.traverse_weight * (-(theta - theta_g).abs() / cfg.pitch_tolerance_deg.to_radians()).exp()
        }
    };
    weight * (l.min(x) - (-l).max(prev_x))
}

pub fn shaping_reward(prev_p: &Vector3<f64>, p: &Vector3<f64>, p_g: &Vector3<f64>, x: f64, cfg: &RewardConfig) -> f64 {
    if x >= 0.0 {
        return 0.0;
    }
    cfg.shaping_weight * ((prev_p - p_g).norm() - (p - p_g).norm())
}

pub fn smoothness_reward(action: &CommandSetpoint, prev_action: &CommandSetpoint, cfg: &RewardConfig) -> f64 {
    let (a, b) = (action.to_array(), prev_action.to_array());
    -(0..4)
        .map(|i| cfg.magnitude[i] * a[i].abs() + cfg.variation[i] * (a[i] - b[i]).abs())
        .sum::<f64>()
}

pub fn speed_reward(speed: f64, cfg: &RewardConfig) -> f64 {
    if speed > cfg.speed_limit {
        return 0.0;
    }
    cfg.speed_weight * (1.0 - (speed - cfg.speed_limit).exp())
}

pub fn smoothness_and_speed(
    action: &CommandSetpoint,
    prev_action: &CommandSetpoint,
    velocity: &Vector3<f64>,
    cfg: &RewardConfig,
) -> (f64, f64) {
    (smoothness_reward(action, prev_action, cfg), speed_reward(velocity.norm(), cfg))
}

/// Inputs of the alignment regularizers at one step.
#[derive(Debug, Clone, Copy)]
pub struct AlignmentInputs {
    pub body_x: Vector3<f64>,
    pub prev_body_x: Vector3<f64>,
    /// Unit direction from the vehicle to the gap center, now and one step ago.
    pub gap_dir: Vector3<f64>,
    pub prev_gap_dir: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub prev_velocity: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub pitch: f64,
    pub pitch_g: f64,
    pub yaw: f64,
    pub yaw_g: f64,
    pub x: f64,
}

pub fn alignment_rewards(a: &AlignmentInputs, cfg: &RewardConfig) -> (f64, f64) {
    let l = cfg.approach_distance;
    let distill = if a.x < -l {
        cfg.distill_weight() * (a.body_x.dot(&a.gap_dir) - a.prev_body_x.dot(&a.prev_gap_dir))
    } else {
        0.0
    };
    let approach = if a.x >= -l {
        let (lv, lt, lp) = cfg.approach_weights();
        lv * (a.velocity.dot(&a.normal) - a.prev_velocity.dot(&a.normal))
            - lt * (a.pitch - a.pitch_g).abs()
            - lp * wrap_angle(a.yaw - a.yaw_g).abs()
    } else {
        0.0
    };
    (distill, approach)
}

/// Everything the reward needs about one transition.
#[derive(Debug, Clone, Copy)]
pub struct Transition<'a> {
    pub prev_state: &'a QuadrotorState,
    pub state: &'a QuadrotorState,
    pub action: &'a CommandSetpoint,
    pub prev_action: &'a CommandSetpoint,
    pub gap: &'a GapSpec,
    pub collision: bool,
}

fn unit_or_zero(v: Vector3<f64>) -> Vector3<f64> {
    let n = v.norm();
    if n > 1e-12 {
        v / n
    } else {
        Vector3::zeros()
    }
}

pub fn compute_reward(t: &Transition<'_>, cfg: &RewardConfig) -> RewardBreakdown {
    let frame = t.gap.frame();
    let n = frame.normal();
    let x_prev = (t.prev_state.position - frame.origin).dot(&n);
    let x = (t.state.position - frame.origin).dot(&n);
    let p_g = t.gap.passable_center();
    let (_, pitch, yaw) = euler_zyx(&t.state.attitude);
    let (pitch_g, yaw_g) = facing_angles(&n);

    let (smoothness, speed) = smoothness_and_speed(t.action, t.prev_action, &t.state.velocity, cfg);
    let inputs = AlignmentInputs {
        body_x: t.state.body_x(),
        prev_body_x: t.prev_state.body_x(),
        gap_dir: unit_or_zero(p_g - t.state.position),
        prev_gap_dir: unit_or_zero(p_g - t.prev_state.position),
        velocity: t.state.velocity,
        prev_velocity: t.prev_state.velocity,
        normal: n,
        pitch,
        pitch_g,
        yaw,
        yaw_g,
        x,
    };
    let (distillation_reg, approach_reg) = alignment_rewards(&inputs, cfg);
    RewardBreakdown {
        traversing: traversing_reward(x_prev, x, t.collision, pitch, pitch_g, cfg),
        shaping: shaping_reward(&t.prev_state.position, &t.state.position, &p_g, x, cfg),
        smoothness,
        speed,
        distillation_reg,
        approach_reg,
        total: 0.0,
    }
    .summed()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_examples() {
        let cfg = RewardConfig::default();
        assert_eq!(traversing_reward(-0.3, 0.3, false, 0.0, 0.0, &cfg), 0.0);
        assert!((traversing_reward(-0.2, 0.2, false, 0.0, 0.0, &cfg) - 4.0).abs() < 1e-12);
        assert_eq!(traversing_reward(-0.1, 0.1, true, 0.0, 0.0, &cfg), 0.0);
        // entering and leaving steps are clipped at the band edges
        assert!((traversing_reward(-0.25, -0.15, false, 0.0, 0.0, &cfg) - 0.5).abs() < 1e-12);
        assert!((traversing_reward(0.15, 0.25, false, 0.0, 0.0, &cfg) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pitched_scale() {
        let cfg = RewardConfig::pitched();
        let r = traversing_reward(-0.05, 0.05, false, 20f64.to_radians(), 0.0, &cfg);
        assert!((r - 10.0 * (-1f64).exp() * 0.1).abs() < 1e-12);
    }

    #[test]
    fn shaping_examples() {
        let cfg = RewardConfig::default();
        let g = Vector3::zeros();
        let r = shaping_reward(&Vector3::new(-1.0, 0.0, 0.0), &Vector3::new(-0.9, 0.0, 0.0), &g, -0.9, &cfg);
        assert!((r - 0.03).abs() < 1e-12);
        assert_eq!(shaping_reward(&Vector3::new(0.1, 0.0, 0.0), &Vector3::new(0.2, 0.0, 0.0), &g, 0.2, &cfg), 0.0);
    }

    #[test]
    fn speed_term_values() {
        let cfg = RewardConfig::default();
        assert!((speed_reward(0.0, &cfg) - 0.049084).abs() < 1e-6);
        assert_eq!(speed_reward(4.0, &cfg), 0.0);
        assert_eq!(speed_reward(5.0, &cfg), 0.0);
    }

    #[test]
    fn smoothness_zero_and_sign() {
        let cfg = RewardConfig::default();
        let zero = CommandSetpoint::new(0.0, Vector3::zeros());
        assert_eq!(smoothness_reward(&zero, &zero, &cfg), 0.0);
        let a = CommandSetpoint::new(12.0, Vector3::new(1.0, -2.0, 0.5));
        assert!(smoothness_reward(&a, &zero, &cfg) < 0.0);
    }

    #[test]
    fn yaw_error_in_approach_band() {
        let cfg = RewardConfig::default();
        let a = AlignmentInputs {
            body_x: Vector3::x(),
            prev_body_x: Vector3::x(),
            gap_dir: Vector3::x(),
            prev_gap_dir: Vector3::x(),
            velocity: Vector3::zeros(),
            prev_velocity: Vector3::zeros(),
            normal: Vector3::x(),
            pitch: 0.0,
            pitch_g: 0.0,
            yaw: 0.1,
            yaw_g: 0.0,
            x: -0.5,
        };
        let (d, ap) = alignment_rewards(&a, &cfg);
        assert_eq!(d, 0.0);
        assert!((ap + 0.05).abs() < 1e-12);
        let (_, ap_pitched) = alignment_rewards(&a, &RewardConfig::pitched());
        assert!((ap_pitched + 0.04).abs() < 1e-12);
    }

    #[test]
    fn mode_switches_distill_weight() {
        assert_eq!(RewardConfig::default().distill_weight(), 0.15);
        assert_eq!(RewardConfig::pitched().distill_weight(), 0.10);
    }
}
