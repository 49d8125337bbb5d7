//! RL trainers (DQN for discrete control, DDPG for continuous control),
//! rollouts, and the failing-variant sweep.

mod ddpg;
mod dqn;
mod replay;
mod rollout;

pub use ddpg::{ddpg_train, ddpg_train_ensemble};
pub use dqn::{dqn_train, dqn_train_ensemble};
pub use replay::{ReplayBuffer, Transition};
pub use rollout::{greedy_mean_return, rollout, EpisodeRecord, PolicyNets, StepRecord};

use serde::{Deserialize, Serialize};

use crate::corruptions::area_downscale;
use crate::envs::Observation;
use crate::nncore::{Checkpoint, Network};
use crate::rng::derive_seed;
use crate::{Error, Result};

/// Pixel frames are area-downsampled by this factor before flattening, so the
/// default 84x84 stack becomes 21x21 per frame. Corruption happens at full
/// resolution inside the env, before this reduction.
pub const FRAME_DOWNSAMPLE: usize = 4;

/// Flatten an observation into the vector the agent's network consumes.
pub fn obs_to_vec(obs: &Observation) -> Vec<f64> {
    match obs {
        Observation::Vector(v) => v.clone(),
        Observation::Frames(frames) => {
            let mut out = Vec::new();
            for f in frames {
                let small = area_downscale(f, f.w / FRAME_DOWNSAMPLE, f.h / FRAME_DOWNSAMPLE);
                out.extend_from_slice(&small.data);
            }
            out
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Dqn,
    Ddpg,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetUpdate {
    /// Copy the online network every N gradient steps.
    Hard { every: usize },
    /// Polyak averaging after every gradient step.
    Soft { tau: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exploration {
    EpsilonGreedy { start: f64, end: f64, decay_steps: usize },
    /// Additive gaussian action noise; `sigma` is relative to the action
    /// bound, so the std is `sigma * max_torque`.
    GaussianNoise { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    pub hidden_dims: Vec<usize>,
    /// DQN / critic learning rate.
    pub lr: f64,
    /// DDPG actor learning rate.
    pub lr_actor: f64,
    pub gamma: f64,
    pub batch: usize,
    pub buffer: usize,
    pub target_update: TargetUpdate,
    pub exploration: Exploration,
    pub train_steps: usize,
    /// Gradient update every N environment steps.
    pub train_every: usize,
    /// Environment steps before the first gradient update.
    pub learning_starts: usize,
    /// Gradients are clipped to this global norm.
    pub grad_clip: f64,
    /// Every N environment steps, run a greedy evaluation and keep the best
    /// snapshot seen; the returned network is that snapshot. 0 disables
    /// snapshotting and the final network is returned.
    #[serde(default)]
    pub eval_every: usize,
    /// Greedy episodes per evaluation.
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    /// Stop training once an evaluation reaches this mean return.
    #[serde(default)]
    pub early_stop_return: Option<f64>,
}

fn default_eval_episodes() -> usize {
    5
}

impl AgentConfig {
    pub fn dqn_default() -> Self {
        Self {
            algorithm: Algorithm::Dqn,
            hidden_dims: vec![64, 64],
            lr: 1e-3,
            lr_actor: 1e-4,
            gamma: 0.99,
            batch: 64,
            buffer: 50_000,
            target_update: TargetUpdate::Hard { every: 500 },
            exploration: Exploration::EpsilonGreedy { start: 1.0, end: 0.05, decay_steps: 10_000 },
            train_steps: 50_000,
            train_every: 1,
            learning_starts: 1_000,
            grad_clip: 10.0,
            eval_every: 2_500,
            eval_episodes: 5,
            early_stop_return: Some(475.0),
        }
    }

    pub fn ddpg_default() -> Self {
        Self {
            algorithm: Algorithm::Ddpg,
            hidden_dims: vec![64, 64],
            lr: 1e-3,
            lr_actor: 1e-4,
            gamma: 0.99,
            batch: 64,
            buffer: 50_000,
            target_update: TargetUpdate::Soft { tau: 0.005 },
            exploration: Exploration::GaussianNoise { sigma: 0.1 },
            train_steps: 40_000,
            train_every: 1,
            learning_starts: 1_000,
            grad_clip: 10.0,
            eval_every: 4_000,
            eval_episodes: 3,
            early_stop_return: None,
        }
    }

    /// DQN sized for downsampled MiniPong frame stacks.
    pub fn dqn_minipong_default() -> Self {
        Self {
            hidden_dims: vec![256, 256],
            train_every: 4,
            train_steps: 60_000,
            eval_every: 0,
            early_stop_return: None,
            ..Self::dqn_default()
        }
    }

    pub fn default_for_env(env_id: &str) -> Result<Self> {
        match env_id {
            "cartpole" => Ok(Self::dqn_default()),
            "pendulum" => Ok(Self::ddpg_default()),
            "minipong" => Ok(Self::dqn_minipong_default()),
            other => Err(Error::Config(format!("no default agent config for env '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma {} must be in (0,1]", self.gamma)));
        }
        if let Exploration::EpsilonGreedy { start, end, .. } = self.exploration {
            if !(0.0..=1.0).contains(&start) || !(0.0..=1.0).contains(&end) {
                return Err(Error::Config("epsilon must be in [0,1]".into()));
            }
        }
        if self.batch == 0 || self.buffer == 0 || self.train_steps == 0 || self.train_every == 0 {
            return Err(Error::Config("batch/buffer/train_steps/train_every must be > 0".into()));
        }
        Ok(())
    }
}

/// One point of the learning curve CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub ret: f64,
    pub epsilon: f64,
    pub loss_mean: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub checkpoint: Checkpoint,
    pub curve: Vec<CurvePoint>,
}

/// Polyak update: target <- tau * online + (1 - tau) * target.
pub fn soft_update(target: &mut Network, online: &Network, tau: f64) {
    for (tw, ow) in target.weights.iter_mut().zip(&online.weights) {
        for (t, o) in tw.data_mut().iter_mut().zip(ow.data()) {
            *t = tau * o + (1.0 - tau) * *t;
        }
    }
    for (tb, ob) in target.biases.iter_mut().zip(&online.biases) {
        for (t, o) in tb.iter_mut().zip(ob) {
            *t = tau * o + (1.0 - tau) * *t;
        }
    }
}

/// Rule deciding whether a variant counts as "failing" for a trained agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureRule {
    /// Failing when mean return < factor * baseline mean return.
    FractionOfBaseline { factor: f64 },
    /// Failing when mean return < threshold.
    Absolute { threshold: f64 },
}

impl FailureRule {
    pub fn default_for_env(env_id: &str) -> Result<Self> {
        match env_id {
            "cartpole" => Ok(Self::FractionOfBaseline { factor: 0.5 }),
            // pendulum returns are negative; twice the baseline is worse
            "pendulum" => Ok(Self::FractionOfBaseline { factor: 2.0 }),
            "minipong" => Ok(Self::Absolute { threshold: 0.0 }),
            other => Err(Error::Config(format!("no failure rule for env '{other}'"))),
        }
    }

    pub fn threshold(&self, baseline_mean: f64) -> f64 {
        match self {
            Self::FractionOfBaseline { factor } => factor * baseline_mean,
            Self::Absolute { threshold } => *threshold,
        }
    }
}

/// Per-variant mean greedy return plus the failing verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantReturn {
    pub variant: String,
    pub mean_return: f64,
    pub failing: bool,
}

/// Sweep a trained policy over variant presets and flag the ones where it
/// fails. The default environment is always evaluated first as the baseline.
pub fn find_failing_variants(
    checkpoint: &Checkpoint,
    env_id: &str,
    variants: &[String],
    episodes: usize,
    rule: FailureRule,
    seed: u64,
) -> Result<Vec<VariantReturn>> {
    if variants.is_empty() {
        return Err(Error::Config("empty variant list".into()));
    }
    let policy = PolicyNets::from_checkpoint(checkpoint)?;
    let mut base_env = crate::envs::make_env(env_id)?;
    let baseline =
        greedy_mean_return(&policy, base_env.as_mut(), episodes, derive_seed(seed, "baseline", 0))?;
    let threshold = rule.threshold(baseline);
    let mut out = vec![VariantReturn {
        variant: "default".into(),
        mean_return: baseline,
        failing: baseline < threshold,
    }];
    for (i, preset) in variants.iter().enumerate() {
        let mut env = crate::envs::parse_preset(preset)?;
        let mean = greedy_mean_return(
            &policy,
            env.as_mut(),
            episodes,
            derive_seed(seed, "variant", i as u64),
        )?;
        out.push(VariantReturn {
            variant: preset.clone(),
            mean_return: mean,
            failing: mean < threshold,
        });
    }
    Ok(out)
}
