use super::obs_to_vec;
use crate::envs::{Action, ActionSpace, Environment};
use crate::nncore::{forward_eval, Checkpoint, Network, StochasticMode};
use crate::rng::{rng_from, Rng};
use crate::uncertainty::argmax;
use crate::{Error, Result};

/// Networks acting as a greedy policy. Ensembles act on the member mean:
/// greedy in the mean Q-value, or the mean actor output.
#[derive(Debug, Clone)]
pub enum PolicyNets {
    Dqn(Vec<Network>),
    Ddpg(Vec<Network>),
}

impl PolicyNets {
    /// Pull the policy nets out of a checkpoint: `actor` or `actor0`,
    /// `actor1`, ... for DDPG; `q` or `q0`, `q1`, ... for DQN.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if let Ok(actor) = ckpt.network("actor") {
            return Ok(Self::Ddpg(vec![actor.clone()]));
        }
        if let Ok(q) = ckpt.network("q") {
            return Ok(Self::Dqn(vec![q.clone()]));
        }
        for (prefix, discrete) in [("q", true), ("actor", false)] {
            let mut members = Vec::new();
            while let Ok(net) = ckpt.network(&format!("{prefix}{}", members.len())) {
                members.push(net.clone());
            }
            if !members.is_empty() {
                return Ok(if discrete { Self::Dqn(members) } else { Self::Ddpg(members) });
            }
        }
        Err(Error::Checkpoint("no policy networks (actor/q/q0../actor0..) found".into()))
    }

    fn mean_output(nets: &[Network], obs_vec: &[f64]) -> Result<Vec<f64>> {
        let mut mean = vec![0.0; nets[0].spec.output_dim()];
        for net in nets {
            let out = forward_eval(net, obs_vec, StochasticMode::Deterministic)?;
            for (m, o) in mean.iter_mut().zip(&out) {
                *m += o / nets.len() as f64;
            }
        }
        Ok(mean)
    }

    /// Greedy action plus the (mean) network output that produced it.
    pub fn act(&self, obs_vec: &[f64]) -> Result<(Action, Vec<f64>)> {
        match self {
            Self::Dqn(nets) => {
                let mean = Self::mean_output(nets, obs_vec)?;
                Ok((Action::Discrete(argmax(&mean)), mean))
            }
            Self::Ddpg(nets) => {
                let mean = Self::mean_output(nets, obs_vec)?;
                Ok((Action::Continuous(mean[0]), mean))
            }
        }
    }

    pub fn matches_env(&self, space: ActionSpace) -> bool {
        matches!(
            (self, space),
            (Self::Dqn(_), ActionSpace::Discrete(_))
                | (Self::Ddpg(_), ActionSpace::Continuous { .. })
        )
    }
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub obs_vec: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    /// Deterministic policy-network output at this state.
    pub outputs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub steps: Vec<StepRecord>,
    pub ret: f64,
}

/// Greedy episodes: deterministic forward passes, no exploration, no masks.
pub fn rollout(
    policy: &PolicyNets,
    env: &mut dyn Environment,
    episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeRecord>> {
    if !policy.matches_env(env.action_space()) {
        return Err(Error::Usage(format!(
            "policy does not match action space of env '{}'",
            env.env_id()
        )));
    }
    let mut env_rng: Rng = rng_from(seed);
    let mut out = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut obs_vec = obs_to_vec(&env.reset(&mut env_rng));
        let mut steps = Vec::new();
        let mut ret = 0.0;
        loop {
            let (action, outputs) = policy.act(&obs_vec)?;
            let res = env.step(&action)?;
            ret += res.reward;
            steps.push(StepRecord { obs_vec, action, reward: res.reward, outputs });
            obs_vec = obs_to_vec(&res.obs);
            if res.done() {
                break;
            }
        }
        out.push(EpisodeRecord { steps, ret });
    }
    Ok(out)
}

/// Mean greedy return over `episodes` episodes.
pub fn greedy_mean_return(
    policy: &PolicyNets,
    env: &mut dyn Environment,
    episodes: usize,
    seed: u64,
) -> Result<f64> {
    let eps = rollout(policy, env, episodes, seed)?;
    Ok(eps.iter().map(|e| e.ret).sum::<f64>() / eps.len() as f64)
}
