use rand::Rng as _;

use super::replay::{ReplayBuffer, Transition};
use super::{obs_to_vec, AgentConfig, Algorithm, CurvePoint, Exploration, TargetUpdate, TrainOutput};
use crate::envs::{Action, ActionSpace, Environment};
use crate::nncore::{
    backward, forward_eval, forward_with_draw, init_network, sgd_adam_step, AdamState, Checkpoint,
    Gradients, Network, NetworkSpec, StochasticMode, StochasticSpec,
};
use crate::rng::{derive_seed, rng_from};
use crate::uncertainty::argmax;
use crate::{Error, Result};

/// Abort training after this many skipped (non-finite gradient) updates.
const MAX_SKIPPED_UPDATES: usize = 50;

/// Train a Q-network with experience replay and a target network.
///
/// When `stochastic` requests dropout or DropConnect, masks are sampled in the
/// TD-loss forward pass (one DropConnect draw shared per minibatch); action
/// selection and target-network evaluation stay deterministic.
pub fn dqn_train(
    env: &mut dyn Environment,
    stochastic: StochasticSpec,
    cfg: &AgentConfig,
    seed: u64,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if cfg.algorithm != Algorithm::Dqn {
        return Err(Error::Config("dqn_train requires algorithm = dqn".into()));
    }
    let n_actions = match env.action_space() {
        ActionSpace::Discrete(n) => n,
        other => return Err(Error::Config(format!("dqn needs a discrete env, got {other:?}"))),
    };
    let (eps_start, eps_end, eps_decay) = match cfg.exploration {
        Exploration::EpsilonGreedy { start, end, decay_steps } => (start, end, decay_steps),
        _ => return Err(Error::Config("dqn requires epsilon_greedy exploration".into())),
    };
    let every = match cfg.target_update {
        TargetUpdate::Hard { every } => every,
        _ => return Err(Error::Config("dqn uses hard target updates".into())),
    };

    let mut env_rng = rng_from(derive_seed(seed, "env", 0));
    let mut explore_rng = rng_from(derive_seed(seed, "explore", 0));
    let mut mask_rng = rng_from(derive_seed(seed, "mask", 0));
    let mut sample_rng = rng_from(derive_seed(seed, "sample", 0));

    let mut obs = obs_to_vec(&env.reset(&mut env_rng));
    let mut dims = vec![obs.len()];
    dims.extend_from_slice(&cfg.hidden_dims);
    dims.push(n_actions);
    let spec = NetworkSpec { stochastic, ..NetworkSpec::new(dims) };
    let mut q = init_network(&spec, derive_seed(seed, "init", 0))?;
    let mut target = q.clone();
    let mut adam = AdamState::new(&q);
    let mut buffer = ReplayBuffer::new(cfg.buffer);

    let mut curve = Vec::new();
    let mut episode = 0usize;
    let mut ep_ret = 0.0;
    let mut losses = Vec::new();
    let mut grad_updates = 0usize;
    let mut skipped = 0usize;
    let mut best: Option<(f64, Network)> = None;

    for t in 0..cfg.train_steps {
        // periodic greedy evaluation; keep the best snapshot seen
        if cfg.eval_every > 0 && t > cfg.learning_starts && t % cfg.eval_every == 0 {
            let policy = super::PolicyNets::Dqn(vec![q.clone()]);
            let mean = super::greedy_mean_return(
                &policy,
                env,
                cfg.eval_episodes,
                derive_seed(seed, "snapshot-eval", t as u64),
            )?;
            if best.as_ref().is_none_or(|(b, _)| mean > *b) {
                best = Some((mean, q.clone()));
            }
            // the evaluation consumed the env; start a fresh episode
            obs = obs_to_vec(&env.reset(&mut env_rng));
            ep_ret = 0.0;
            if cfg.early_stop_return.is_some_and(|th| mean >= th) {
                break;
            }
        }
        let frac = (t as f64 / eps_decay as f64).min(1.0);
        let epsilon = eps_start + (eps_end - eps_start) * frac;
        let action = if explore_rng.random::<f64>() < epsilon {
            explore_rng.random_range(0..n_actions)
        } else {
            argmax(&forward_eval(&q, &obs, StochasticMode::Deterministic)?)
        };
        let res = env.step(&Action::Discrete(action))?;
        ep_ret += res.reward;
        let next_obs = obs_to_vec(&res.obs);
        buffer.push(Transition {
            obs: std::mem::take(&mut obs),
            action: Action::Discrete(action),
            reward: res.reward,
            next_obs: next_obs.clone(),
            terminated: res.terminated,
        });
        obs = next_obs;
        if res.done() {
            let loss_mean = if losses.is_empty() {
                0.0
            } else {
                losses.iter().sum::<f64>() / losses.len() as f64
            };
            curve.push(CurvePoint { episode, ret: ep_ret, epsilon, loss_mean });
            losses.clear();
            episode += 1;
            ep_ret = 0.0;
            obs = obs_to_vec(&env.reset(&mut env_rng));
        }

        if t >= cfg.learning_starts && buffer.len() >= cfg.batch && t % cfg.train_every == 0 {
            let idx = buffer.sample_indices(&mut sample_rng, cfg.batch);
            let dc = q.sample_dropconnect(&mut mask_rng);
            let mut total = Gradients::zeros_like(&q);
            let mut loss = 0.0;
            for &i in &idx {
                let tr = buffer.get(i);
                let target_q =
                    forward_eval(&target, &tr.next_obs, StochasticMode::Deterministic)?;
                let max_next = target_q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let r = tr.reward;
                let y = r + cfg.gamma * max_next * if tr.terminated { 0.0 } else { 1.0 };
                let dropout_rng = match spec.stochastic {
                    StochasticSpec::Dropout { .. } => Some(&mut mask_rng),
                    _ => None,
                };
                let (out, tape) = forward_with_draw(&q, &tr.obs, dc.clone(), dropout_rng)?;
                let a = match tr.action {
                    Action::Discrete(a) => a,
                    _ => unreachable!("dqn buffer holds discrete actions"),
                };
                let err = out[a] - y;
                loss += err * err / cfg.batch as f64;
                let mut out_grad = vec![0.0; out.len()];
                out_grad[a] = 2.0 * err / cfg.batch as f64;
                total.add_assign(&backward(&q, &tape, &out_grad)?);
            }
            total.clip_global_norm(cfg.grad_clip);
            match sgd_adam_step(&mut q, &total, &mut adam, cfg.lr) {
                Ok(()) => {
                    losses.push(loss);
                    grad_updates += 1;
                    if grad_updates % every == 0 {
                        target = q.clone();
                    }
                }
                Err(Error::Training(_)) => {
                    skipped += 1;
                    if skipped > MAX_SKIPPED_UPDATES {
                        return Err(Error::Training(format!(
                            "training diverged: {skipped} updates skipped"
                        )));
                    }
                }
                Err(e) => return Err(e),
            }
        }
    }

    let q = match best {
        Some((best_mean, best_net)) => {
            // prefer the best snapshot unless the final network beats it
            let final_policy = super::PolicyNets::Dqn(vec![q.clone()]);
            let final_mean = super::greedy_mean_return(
                &final_policy,
                env,
                cfg.eval_episodes,
                derive_seed(seed, "snapshot-eval", cfg.train_steps as u64),
            )?;
            if final_mean > best_mean {
                q
            } else {
                best_net
            }
        }
        None => q,
    };
    let mut checkpoint = Checkpoint::single("q", q, seed);
    checkpoint.meta.insert("env".into(), env.env_id().into());
    checkpoint.meta.insert("variant".into(), env.variant_id());
    checkpoint.meta.insert("algorithm".into(), "dqn".into());
    checkpoint.meta.insert("train_steps".into(), cfg.train_steps.to_string());
    Ok(TrainOutput { checkpoint, curve })
}

/// Train an ensemble of `m` independently seeded, mask-free Q-networks.
/// Member `i` uses seed stream `derive_seed(seed, "member", i)`.
pub fn dqn_train_ensemble(
    make_env: &mut dyn FnMut() -> Result<Box<dyn Environment>>,
    m: usize,
    cfg: &AgentConfig,
    seed: u64,
) -> Result<TrainOutput> {
    if m < 2 {
        return Err(Error::Config(format!("ensemble size {m} must be >= 2")));
    }
    let mut nets: Vec<(String, Network)> = Vec::with_capacity(m);
    let mut curve = Vec::new();
    let mut meta = None;
    for i in 0..m {
        let mut env = make_env()?;
        let out =
            dqn_train(env.as_mut(), StochasticSpec::None, cfg, derive_seed(seed, "member", i as u64))?;
        if i == 0 {
            curve = out.curve;
            meta = Some(out.checkpoint.meta.clone());
        }
        let (_, net) = out.checkpoint.networks.into_iter().next().unwrap();
        nets.push((format!("q{i}"), net));
    }
    let mut checkpoint = Checkpoint { networks: nets, seed, meta: meta.unwrap_or_default() };
    checkpoint.meta.insert("ensemble".into(), m.to_string());
    Ok(TrainOutput { checkpoint, curve })
}
