//! Scripted policies used for smoke runs and evaluation without a learner.

use nalgebra::Vector3;

use super::episode::Env;
use crate::control::{tracking_command, Reference, TrackingGains};
use crate::dynamics::CommandSetpoint;
use crate::geometry::facing_angles;

pub trait Policy {
    /// Action `[T, ωx, ωy, ωz]` for the env's current step.
    fn act(&mut self, env: &Env) -> [f64; 4];
}

/// Constant hover thrust, zero rates.
#[derive(Debug, Clone, Copy, Default)]
pub struct HoverPolicy;

impl Policy for HoverPolicy {
    fn act(&mut self, _: &Env) -> [f64; 4] {
        CommandSetpoint::hover().to_array()
    }
}

/// Privileged state-feedback tracker that flies along the current gap's
/// axis through its passable center at a fixed speed, keeping the gap
/// attitude only implicitly (it does not roll to fit). Meant for smoke
/// tests on wide gaps, not as a baseline.
#[derive(Debug, Clone, Copy)]
pub struct AxisTracker {
    pub speed: f64,
    pub lookahead: f64,
    pub gains: TrackingGains,
}

impl AxisTracker {
    pub fn new(gains: TrackingGains) -> Self {
        Self {
            speed: 1.5,
            lookahead: 0.6,
            gains,
        }
    }
}

impl Policy for AxisTracker {
    fn act(&mut self, env: &Env) -> [f64; 4] {
        let s = env.state();
        let gap = &env.gaps()[env.current_gap()];
        let n = gap.normal;
        let c = gap.passable_center();
        let along = (s.position - c).dot(&n);
        let target = c + n * (along + self.lookahead);
        let (_, yaw) = facing_angles(&Vector3::new(n.x, n.y, 0.0));
        let reference = Reference {
            position: target,
            velocity: n * self.speed,
            yaw,
            ..Reference::default()
        };
        tracking_command(s, &reference, &self.gains).to_array()
    }
}
