//! Experiment configuration. Every tunable constant lives in one JSON document; the
//! built-in defaults are the bundled `assets/default_config.json`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::map::FootprintModel;
use crate::sim::SimParams;

const DEFAULT_CONFIG: &str = include_str!("../assets/default_config.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub sim: SimParams,
    pub footprint: FootprintModel,
    pub planner: PlannerParams,
    pub policy: PolicyParams,
    pub training: TrainParams,
    pub executor: ExecutorParams,
    pub expert: ExpertParams,
    pub variants: Variants,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerParams {
    pub xy_step: f64,
    pub theta_step_deg: f64,
    /// Meters of path cost charged per radian of rotation.
    pub rotation_weight: f64,
    pub downsample_factor: usize,
    pub rrt: RrtParams,
}

impl PlannerParams {
    pub fn theta_step(&self) -> f64 {
        self.theta_step_deg.to_radians()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RrtParams {
    pub max_iters: usize,
    pub step_length: f64,
    pub step_rotation_deg: f64,
    pub goal_bias: f64,
    pub angular_weight: f64,
    pub goal_tolerance: f64,
    pub goal_heading_tolerance_deg: f64,
    /// Half-width of the sampling box around the start/goal pair.
    pub sample_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyParams {
    pub obs_horizon: usize,
    pub action_horizon: usize,
    /// Snippet threshold on the robot pose distance.
    pub snippet_distance: f64,
    pub angular_weight: f64,
    /// Position normalizer of the local policy's pose encoding.
    pub position_scale: f64,
    /// Position normalizer of the goal-conditioned global policy.
    pub global_position_scale: f64,
    /// Normalizer of action offsets from the latest observed robot pose.
    pub action_scale: f64,
    pub diffusion_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub hidden_layers: Vec<usize>,
    pub time_embedding_dim: usize,
    /// Conventional ε-prediction instead of the β-scaled output parameterization.
    pub ddpm_standard: bool,
    /// Clip the reconstructed clean sample to this magnitude during sampling (0 disables).
    pub clip_sample: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainParams {
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub final_learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub log_every: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutorParams {
    pub exec_horizon: usize,
    pub waypoint_tolerance: f64,
    pub waypoint_heading_tolerance_deg: f64,
    pub success_tolerance: f64,
    pub stuck_window: f64,
    pub stuck_epsilon: f64,
    pub max_steps: usize,
    pub max_stuck_skips: usize,
    /// Search radius when pushing sampled global-policy waypoints out of obstacles.
    pub projection_radius: f64,
    /// Position tolerance at which a planner-issued command counts as reached.
    pub command_tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertParams {
    pub lookahead: f64,
    pub cruise_speed: f64,
    pub min_speed: f64,
    /// Heading error (deg) at which the expert slows to `min_speed`.
    pub slowdown_heading_deg: f64,
    pub turn_rate_limit: f64,
    pub heading_gain: f64,
    pub noise_sigma: f64,
    pub noise_correlation_time: f64,
    pub goal_tolerance: f64,
    pub settle_steps: usize,
    pub max_attempts: usize,
    pub max_steps: usize,
    /// Footprint inflation of the roadmap the expert plans on.
    pub clearance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variants {
    pub carpet_friction: f64,
    pub unseen_grasp_offset: Pose2,
    pub unseen_chair: ChairVariant,
}

/// Caster parameters of the second chair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChairVariant {
    pub n_casters: usize,
    pub caster_relax_rate: f64,
    pub caster_ring_radius: f64,
    pub misalignment_gain: f64,
}

impl Default for Config {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_CONFIG).expect("bundled default config is valid")
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hash_json(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.footprint.validate()?;
        let p = &self.policy;
        if p.obs_horizon == 0 || p.action_horizon == 0 {
            return Err(Error::Config("policy horizons must be at least 1".into()));
        }
        if self.executor.exec_horizon == 0 || self.executor.exec_horizon > p.action_horizon {
            return Err(Error::Config("executor.exec_horizon must lie in 1..=action_horizon".into()));
        }
        if !(p.beta_min > 0.0 && p.beta_min <= p.beta_max && p.beta_max < 1.0) {
            return Err(Error::Config("need 0 < beta_min <= beta_max < 1".into()));
        }
        if p.diffusion_steps == 0 {
            return Err(Error::Config("policy.diffusion_steps must be at least 1".into()));
        }
        if self.planner.downsample_factor == 0 {
            return Err(Error::Config("planner.downsample_factor must be at least 1".into()));
        }
        let e = &self.executor;
        if !(e.success_tolerance > 0.0 && e.waypoint_tolerance > 0.0 && e.stuck_window > 0.0) {
            return Err(Error::Config("executor tolerances must be positive".into()));
        }
        Ok(())
    }

    /// Applies a `dotted.path=value` override; the value is parsed as JSON when possible.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (path, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut doc = serde_json::to_value(&*self).expect("config serializes");
        let mut slot = &mut doc;
        for key in path.split('.') {
            slot = match slot {
                Value::Object(map) => {
                    map.get_mut(key).ok_or_else(|| Error::Config(format!("unknown config key {path:?}")))?
                }
                Value::Array(items) => {
                    let idx: usize =
                        key.parse().map_err(|_| Error::Config(format!("bad index {key:?} in {path:?}")))?;
                    items.get_mut(idx).ok_or_else(|| Error::Config(format!("index out of range in {path:?}")))?
                }
                _ => return Err(Error::Config(format!("{path:?} descends into a scalar"))),
            };
        }
        *slot = value;
        let updated: Config = serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    /// Sim parameters for a given floor / grasp / chair condition.
    pub fn sim_variant(&self, carpet: bool, unseen_grasp: bool, unseen_chair: bool) -> SimParams {
        let mut sim = self.sim.clone();
        if carpet {
            sim.friction_coeff = self.variants.carpet_friction;
        }
        if unseen_grasp {
            sim.grasp_offset = self.variants.unseen_grasp_offset;
        }
        if unseen_chair {
            let c = &self.variants.unseen_chair;
            sim.n_casters = c.n_casters;
            sim.caster_relax_rate = c.caster_relax_rate;
            sim.caster_ring_radius = c.caster_ring_radius;
            sim.misalignment_gain = c.misalignment_gain;
        }
        sim
    }
}

/// First 16 hex digits of the SHA-256 of a value's compact JSON form.
pub fn hash_json<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_string(value).expect("value serializes");
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}
