//! Flight-controller response model: a per-channel delayed moving average of
//! the commanded setpoints, scaled by a multiplicative randomization factor.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::state::{ActuatorOutput, CommandSetpoint};
use super::DynamicsError;

/// Delay per channel `[thrust, ωx, ωy, ωz]` and averaging window, both in
/// control steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseParams {
    pub delay: [usize; 4],
    pub window: usize,
}

impl Default for ResponseParams {
    fn default() -> Self {
        Self {
            delay: [1, 1, 1, 1],
            window: 2,
        }
    }
}

impl ResponseParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if self.window == 0 || self.delay.iter().any(|&h| h == 0) {
            return Err(DynamicsError::InvalidParams(format!(
                "response delays and window must be >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Number of history entries needed to evaluate the response.
    pub fn required_history(&self) -> usize {
        self.delay.iter().max().copied().unwrap_or(0) + self.window
    }
}

/// Ring of past setpoints, newest first: `get(0)` is `a_k`, `get(i)` is `a_{k-i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandHistory {
    entries: VecDeque<CommandSetpoint>,
    capacity: usize,
}

impl CommandHistory {
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    /// History holding `capacity` copies of `fill`.
    pub fn prefilled(capacity: usize, fill: CommandSetpoint) -> Self {
        let mut h = Self::new(capacity);
        for _ in 0..capacity {
            h.entries.push_back(fill);
        }
        h
    }

    pub fn push(&mut self, cmd: CommandSetpoint) {
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_back();
        }
        self.entries.push_front(cmd);
    }

    pub fn get(&self, lag: usize) -> Option<&CommandSetpoint> {
        self.entries.get(lag)
    }

    pub fn latest(&self) -> Option<&CommandSetpoint> {
        self.entries.front()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}

/// Executed actuation for the current step:
/// `out[n] = c[n] / w * Σ_{i=h[n]}^{h[n]+w-1} a_{k-i}[n]`.
pub fn actuator_response(
    history: &CommandHistory,
    params: &ResponseParams,
    factor: &[f64; 4],
) -> Result<ActuatorOutput, DynamicsError> {
    params.validate()?;
    let needed = params.required_history();
    if history.len() < needed {
        return Err(DynamicsError::InsufficientHistory {
            needed,
            available: history.len(),
        });
    }
    let w = params.window;
    let mut out = [0.0; 4];
    for (n, o) in out.iter_mut().enumerate() {
        let h = params.delay[n];
        let sum: f64 = (h..h + w)
            .map(|i| history.get(i).expect("length checked").to_array()[n])
            .sum();
        *o = factor[n] * sum / w as f64;
    }
    Ok(ActuatorOutput::from_array(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn scalar(v: f64) -> CommandSetpoint {
        CommandSetpoint::new(v, Vector3::new(v, v, v))
    }

    #[test]
    fn constant_history_passes_through() {
        let a = CommandSetpoint::new(12.0, Vector3::new(0.5, -1.0, 2.0));
        let h = CommandHistory::prefilled(4, a);
        let p = ResponseParams { delay: [1; 4], window: 1 };
        let out = actuator_response(&h, &p, &[1.0; 4]).unwrap();
        assert_eq!(out.to_array(), a.to_array());
    }

    #[test]
    fn moving_average_of_ramp() {
        let k = 10usize;
        let mut h = CommandHistory::new(k + 1);
        for j in 0..=k {
            h.push(scalar(j as f64));
        }
        let p = ResponseParams { delay: [1; 4], window: 2 };
        let out = actuator_response(&h, &p, &[1.0; 4]).unwrap();
        assert_eq!(out.thrust, k as f64 - 1.5);
    }

    #[test]
    fn pure_delay_step() {
        let p = ResponseParams { delay: [3; 4], window: 1 };
        let mut h = CommandHistory::prefilled(p.required_history(), scalar(0.0));
        let k0 = 5;
        let mut first_one = None;
        for k in 0..20 {
            h.push(scalar(if k >= k0 { 1.0 } else { 0.0 }));
            let out = actuator_response(&h, &p, &[1.0; 4]).unwrap();
            if out.thrust == 1.0 && first_one.is_none() {
                first_one = Some(k);
            }
        }
        assert_eq!(first_one, Some(k0 + 3));
    }

    #[test]
    fn factor_scales_output() {
        let h = CommandHistory::prefilled(3, scalar(2.0));
        let out = actuator_response(&h, &ResponseParams::default(), &[1.1, 0.9, 1.0, 0.5]).unwrap();
        assert!((out.thrust - 2.2).abs() < 1e-15);
        assert!((out.bodyrate.x - 1.8).abs() < 1e-15);
        assert_eq!(out.bodyrate.z, 1.0);
    }

    #[test]
    fn short_history_rejected() {
        let h = CommandHistory::prefilled(2, scalar(0.0));
        let p = ResponseParams { delay: [2, 1, 1, 1], window: 1 };
        assert!(matches!(
            actuator_response(&h, &p, &[1.0; 4]),
            Err(DynamicsError::InsufficientHistory { needed: 3, available: 2 })
        ));
    }

    #[test]
    fn zero_delay_rejected() {
        let h = CommandHistory::prefilled(4, scalar(0.0));
        let p = ResponseParams { delay: [0, 1, 1, 1], window: 1 };
        assert!(actuator_response(&h, &p, &[1.0; 4]).is_err());
    }
}
