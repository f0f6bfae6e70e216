use std::sync::Arc;

use rayon::prelude::*;

use super::config::ResolvedConfig;
use super::dataset::SeedTrajectoryDataset;
use super::episode::{Env, StepResult};
use super::EnvError;
use crate::seeding::derive_seed;

/// K environments stepped together. Envs that finish are reset right away
/// with a seed derived from their base seed and episode count; the returned
/// result keeps the terminal reward, `done` and info but carries the fresh
/// episode's observation.
#[derive(Debug, Clone)]
pub struct BatchEnv {
    envs: Vec<Env>,
    base_seeds: Vec<u64>,
    episodes: Vec<u64>,
}

impl BatchEnv {
    pub fn new(cfg: Arc<ResolvedConfig>, dataset: Arc<SeedTrajectoryDataset>, num_envs: usize) -> Self {
        Self {
            envs: (0..num_envs).map(|_| Env::new(cfg.clone(), dataset.clone())).collect(),
            base_seeds: vec![0; num_envs],
            episodes: vec![0; num_envs],
        }
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn envs(&self) -> &[Env] {
        &self.envs
    }

    /// Seed of episode `episode` of env slot with base seed `base`.
    pub fn episode_seed(base: u64, episode: u64) -> u64 {
        if episode == 0 {
            base
        } else {
            derive_seed(base, &[episode])
        }
    }

    pub fn reset(&mut self, seeds: &[u64]) -> Result<Vec<StepResult>, EnvError> {
        if seeds.len() != self.envs.len() {
            return Err(EnvError::Shape(format!("{} seeds for {} envs", seeds.len(), self.envs.len())));
        }
        self.base_seeds = seeds.to_vec();
        self.episodes = vec![0; seeds.len()];
        self.envs
            .par_iter_mut()
            .zip(seeds.par_iter())
            .map(|(env, &s)| env.reset(s))
            .collect()
    }

    pub fn step(&mut self, actions: &[[f64; 4]]) -> Result<Vec<StepResult>, EnvError> {
        if actions.len() != self.envs.len() {
            return Err(EnvError::Shape(format!("{} actions for {} envs", actions.len(), self.envs.len())));
        }
        self.envs
            .par_iter_mut()
            .zip(self.episodes.par_iter_mut())
            .zip(self.base_seeds.par_iter())
            .zip(actions.par_iter())
            .map(|(((env, episode), &base), action)| {
                let mut r = env.step(*action)?;
                if r.done {
                    *episode += 1;
                    let fresh = env.reset(Self::episode_seed(base, *episode))?;
                    r.observation = fresh.observation;
                }
                Ok(r)
            })
            .collect()
    }
}
