use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::control::TrackingGains;
use crate::dynamics::{DynamicsParams, ResponseParams};
use crate::geometry::{self, ColliderSpec, TrackConfig, DEFAULT_EDGE_POINTS};
use crate::randomization::RandomizationConfig;
use crate::reward::RewardConfig;
use crate::sensing::{CameraModel, LatencyModel, RenderConfig};

/// A bundled preset by name, or an inline definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrackSource {
    Preset(String),
    Inline(TrackConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RandomizationSource {
    Preset(String),
    Inline(RandomizationConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    /// Privileged body-frame edge points plus body velocity.
    #[default]
    Points,
    /// Rendered binary mask.
    Mask,
}

/// Bounds applied to every incoming action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActionLimits {
    pub thrust_min: f64,
    pub thrust_max: f64,
    pub rate_max: f64,
}

impl Default for ActionLimits {
    fn default() -> Self {
        Self {
            thrust_min: 6.0,
            thrust_max: 20.0,
            rate_max: 6.0,
        }
    }
}

impl ActionLimits {
    pub fn low(&self) -> [f64; 4] {
        [self.thrust_min, -self.rate_max, -self.rate_max, -self.rate_max]
    }

    pub fn high(&self) -> [f64; 4] {
        [self.thrust_max, self.rate_max, self.rate_max, self.rate_max]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub track: TrackSource,
    /// Episode length in control steps.
    pub horizon: u64,
    pub observation: ObservationMode,
    pub edge_points: usize,
    pub camera: CameraModel,
    pub render: RenderConfig,
    pub latency: LatencyModel,
    pub randomization: RandomizationSource,
    pub reward: RewardConfig,
    pub dynamics: DynamicsParams,
    pub response: ResponseParams,
    pub collider: ColliderSpec,
    /// Probability of starting from a stored trajectory state.
    pub informed_reset_probability: f64,
    pub action: ActionLimits,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            track: TrackSource::Preset("single_rect".into()),
            horizon: 600,
            observation: ObservationMode::Points,
            edge_points: DEFAULT_EDGE_POINTS,
            camera: CameraModel::default(),
            render: RenderConfig::default(),
            latency: LatencyModel::default(),
            randomization: RandomizationSource::Preset("none".into()),
            reward: RewardConfig::default(),
            dynamics: DynamicsParams::default(),
            response: ResponseParams::default(),
            collider: ColliderSpec::default(),
            informed_reset_probability: 0.5,
            action: ActionLimits::default(),
        }
    }
}

/// Config with presets expanded and everything validated.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub episode: EpisodeConfig,
    pub track: TrackConfig,
    pub randomization: RandomizationConfig,
}

impl ResolvedConfig {
    /// Gains for scripted controllers, bounded like the agent's actions.
    pub fn tracking_gains(&self) -> TrackingGains {
        TrackingGains {
            thrust_min: self.episode.action.thrust_min,
            thrust_max: self.episode.action.thrust_max,
            rate_max: self.episode.action.rate_max,
            drag: self.episode.dynamics.drag,
            ..TrackingGains::default()
        }
    }
}

impl EpisodeConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, EnvError> {
        toml::from_str(text).map_err(|e| EnvError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path).map_err(|e| EnvError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| EnvError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String, EnvError> {
        toml::to_string(self).map_err(|e| EnvError::Config(e.to_string()))
    }

    pub fn resolve(&self) -> Result<ResolvedConfig, EnvError> {
        let bad = |m: String| Err(EnvError::Config(m));
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        if self.edge_points < 3 {
            return bad(format!("edge_points must be >= 3, got {}", self.edge_points));
        }
        if !(0.0..=1.0).contains(&self.informed_reset_probability) {
            return bad(format!("informed_reset_probability {} outside [0, 1]", self.informed_reset_probability));
        }
        let a = &self.action;
        if !(a.thrust_min.is_finite() && a.thrust_max.is_finite() && a.rate_max.is_finite())
            || a.thrust_min > a.thrust_max
            || a.rate_max < 0.0
        {
            return bad(format!("invalid action limits {a:?}"));
        }
        let track = match &self.track {
            TrackSource::Preset(name) => geometry::preset(name)?,
            TrackSource::Inline(t) => t.clone().normalized()?,
        };
        let randomization = match &self.randomization {
            RandomizationSource::Preset(name) => {
                RandomizationConfig::preset(name).ok_or_else(|| EnvError::Config(format!("unknown randomization preset {name:?}")))?
            }
            RandomizationSource::Inline(r) => r.clone(),
        };
        randomization.validate().map_err(EnvError::Config)?;
        self.reward.validate().map_err(EnvError::Config)?;
        self.camera.validate()?;
        self.collider.validate()?;
        self.response.validate()?;
        self.dynamics.drag.validate()?;
        if !(self.render.max_range > 0.0 && self.render.border >= 0.0) {
            return bad(format!("invalid render config {:?}", self.render));
        }
        if self.observation == ObservationMode::Mask && randomization.mask_noise {
            for b in [2, 4] {
                if self.camera.width % b != 0 || self.camera.height % b != 0 {
                    return bad(format!("mask noise needs image sides divisible by {b}"));
                }
            }
        }
        Ok(ResolvedConfig {
            episode: self.clone(),
            track,
            randomization,
        })
    }
}
