use nalgebra::Vector3;

use super::actuator::{actuator_response, CommandHistory, ResponseParams};
use super::integrator::{integrate_step, DynamicsParams};
use super::state::{ActuatorOutput, CommandSetpoint, QuadrotorState};
use super::{DynamicsError, CONTROL_DT, SUBSTEPS};

/// Vehicle plus flight-controller response, advanced one control period at a time.
#[derive(Debug, Clone)]
pub struct Plant {
    pub state: QuadrotorState,
    pub history: CommandHistory,
    pub dynamics: DynamicsParams,
    pub response: ResponseParams,
    pub factors: [f64; 4],
}

impl Plant {
    /// `history_len` must cover the largest delay the response may take
    /// during the episode plus the window.
    pub fn new(state: QuadrotorState, dynamics: DynamicsParams, response: ResponseParams, history_len: usize) -> Self {
        let len = history_len.max(response.required_history());
        Self {
            state,
            history: CommandHistory::prefilled(len, CommandSetpoint::hover()),
            dynamics,
            response,
            factors: [1.0; 4],
        }
    }

    /// Push `cmd`, evaluate the response and integrate `SUBSTEPS` RK4 steps.
    pub fn step(&mut self, cmd: CommandSetpoint, external_accel: &Vector3<f64>) -> Result<ActuatorOutput, DynamicsError> {
        self.history.push(cmd);
        let out = actuator_response(&self.history, &self.response, &self.factors)?;
        let dt = CONTROL_DT / SUBSTEPS as f64;
        let mut s = self.state;
        for _ in 0..SUBSTEPS {
            s = integrate_step(&s, &out, &self.dynamics, external_accel, dt)?;
        }
        self.state = s;
        Ok(out)
    }
}
