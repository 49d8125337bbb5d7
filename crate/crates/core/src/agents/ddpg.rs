use rand_distr::{Distribution, Normal};

use super::replay::{ReplayBuffer, Transition};
use super::{
    obs_to_vec, soft_update, AgentConfig, Algorithm, CurvePoint, Exploration, TargetUpdate,
    TrainOutput,
};
use crate::envs::{Action, ActionSpace, Environment};
use crate::nncore::{
    backward, forward_eval, forward_with_draw, init_network, sgd_adam_step, AdamState, Checkpoint,
    Gradients, Network, NetworkSpec, OutputActivation, StochasticMode, StochasticSpec,
};
use crate::rng::{derive_seed, rng_from};
use crate::{Error, Result};

const MAX_SKIPPED_UPDATES: usize = 50;

/// Train a DDPG actor-critic pair for continuous control.
///
/// The actor is tanh-scaled to the action bound and carries the stochastic
/// spec (uncertainty is scored on the actor output); the critic takes
/// obs ++ action and stays mask-free. Targets use Polyak averaging.
pub fn ddpg_train(
    env: &mut dyn Environment,
    stochastic: StochasticSpec,
    cfg: &AgentConfig,
    seed: u64,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if cfg.algorithm != Algorithm::Ddpg {
        return Err(Error::Config("ddpg_train requires algorithm = ddpg".into()));
    }
    let bound = match env.action_space() {
        ActionSpace::Continuous { low, high } => {
            debug_assert!((low + high).abs() < 1e-12);
            high
        }
        other => return Err(Error::Config(format!("ddpg needs a continuous env, got {other:?}"))),
    };
    let sigma = match cfg.exploration {
        Exploration::GaussianNoise { sigma } => sigma * bound,
        _ => return Err(Error::Config("ddpg requires gaussian_noise exploration".into())),
    };
    let tau = match cfg.target_update {
        TargetUpdate::Soft { tau } => tau,
        _ => return Err(Error::Config("ddpg uses soft target updates".into())),
    };
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;

    let mut env_rng = rng_from(derive_seed(seed, "env", 0));
    let mut explore_rng = rng_from(derive_seed(seed, "explore", 0));
    let mut mask_rng = rng_from(derive_seed(seed, "mask", 0));
    let mut sample_rng = rng_from(derive_seed(seed, "sample", 0));

    let mut obs = obs_to_vec(&env.reset(&mut env_rng));
    let obs_dim = obs.len();
    let mut actor_dims = vec![obs_dim];
    actor_dims.extend_from_slice(&cfg.hidden_dims);
    actor_dims.push(1);
    let actor_spec = NetworkSpec {
        output_activation: OutputActivation::TanhScaled { bound },
        stochastic,
        ..NetworkSpec::new(actor_dims)
    };
    let mut critic_dims = vec![obs_dim + 1];
    critic_dims.extend_from_slice(&cfg.hidden_dims);
    critic_dims.push(1);
    let critic_spec = NetworkSpec::new(critic_dims);

    let mut actor = init_network(&actor_spec, derive_seed(seed, "init-actor", 0))?;
    let mut critic = init_network(&critic_spec, derive_seed(seed, "init-critic", 0))?;
    let mut actor_t = actor.clone();
    let mut critic_t = critic.clone();
    let mut adam_actor = AdamState::new(&actor);
    let mut adam_critic = AdamState::new(&critic);
    let mut buffer = ReplayBuffer::new(cfg.buffer);

    let mut curve = Vec::new();
    let mut episode = 0usize;
    let mut ep_ret = 0.0;
    let mut losses = Vec::new();
    let mut skipped = 0usize;
    let mut best: Option<(f64, Network, Network)> = None;

    for t in 0..cfg.train_steps {
        // periodic greedy evaluation; keep the best snapshot seen
        if cfg.eval_every > 0 && t > cfg.learning_starts && t % cfg.eval_every == 0 {
            let policy = super::PolicyNets::Ddpg(vec![actor.clone()]);
            let mean = super::greedy_mean_return(
                &policy,
                env,
                cfg.eval_episodes,
                derive_seed(seed, "snapshot-eval", t as u64),
            )?;
            if best.as_ref().is_none_or(|(b, _, _)| mean > *b) {
                best = Some((mean, actor.clone(), critic.clone()));
            }
            // the evaluation consumed the env; start a fresh episode
            obs = obs_to_vec(&env.reset(&mut env_rng));
            ep_ret = 0.0;
            if cfg.early_stop_return.is_some_and(|th| mean >= th) {
                break;
            }
        }
        let a_det = forward_eval(&actor, &obs, StochasticMode::Deterministic)?[0];
        let a = (a_det + noise.sample(&mut explore_rng)).clamp(-bound, bound);
        let res = env.step(&Action::Continuous(a))?;
        ep_ret += res.reward;
        let next_obs = obs_to_vec(&res.obs);
        buffer.push(Transition {
            obs: std::mem::take(&mut obs),
            action: Action::Continuous(a),
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
            curve.push(CurvePoint { episode, ret: ep_ret, epsilon: 0.0, loss_mean });
            losses.clear();
            episode += 1;
            ep_ret = 0.0;
            obs = obs_to_vec(&env.reset(&mut env_rng));
        }

        if t >= cfg.learning_starts && buffer.len() >= cfg.batch && t % cfg.train_every == 0 {
            let idx = buffer.sample_indices(&mut sample_rng, cfg.batch);

            // critic regression toward the bootstrapped target
            let mut critic_grads = Gradients::zeros_like(&critic);
            let mut loss = 0.0;
            for &i in &idx {
                let tr = buffer.get(i);
                let a_next = forward_eval(&actor_t, &tr.next_obs, StochasticMode::Deterministic)?[0];
                let mut x_next = tr.next_obs.clone();
                x_next.push(a_next);
                let q_next = forward_eval(&critic_t, &x_next, StochasticMode::Deterministic)?[0];
                let y =
                    tr.reward + cfg.gamma * q_next * if tr.terminated { 0.0 } else { 1.0 };
                let mut x = tr.obs.clone();
                x.push(match tr.action {
                    Action::Continuous(u) => u,
                    _ => unreachable!("ddpg buffer holds continuous actions"),
                });
                let (q, tape) = forward_with_draw(&critic, &x, None, None)?;
                let err = q[0] - y;
                loss += err * err / cfg.batch as f64;
                critic_grads
                    .add_assign(&backward(&critic, &tape, &[2.0 * err / cfg.batch as f64])?);
            }
            critic_grads.clip_global_norm(cfg.grad_clip);
            let critic_ok = apply_step(
                sgd_adam_step(&mut critic, &critic_grads, &mut adam_critic, cfg.lr),
                &mut skipped,
            )?;
            if critic_ok {
                losses.push(loss);
            }

            // actor ascent on the critic: dQ/da chains into the actor
            let dc = actor.sample_dropconnect(&mut mask_rng);
            let mut actor_grads = Gradients::zeros_like(&actor);
            for &i in &idx {
                let tr = buffer.get(i);
                let dropout_rng = match actor_spec.stochastic {
                    StochasticSpec::Dropout { .. } => Some(&mut mask_rng),
                    _ => None,
                };
                let (a_out, actor_tape) =
                    forward_with_draw(&actor, &tr.obs, dc.clone(), dropout_rng)?;
                let mut x = tr.obs.clone();
                x.push(a_out[0]);
                let (_, critic_tape) = forward_with_draw(&critic, &x, None, None)?;
                // maximize Q => minimize -Q, averaged over the batch
                let g = backward(&critic, &critic_tape, &[-1.0 / cfg.batch as f64])?;
                let da = g.dx[obs_dim];
                actor_grads.add_assign(&backward(&actor, &actor_tape, &[da])?);
            }
            actor_grads.clip_global_norm(cfg.grad_clip);
            apply_step(
                sgd_adam_step(&mut actor, &actor_grads, &mut adam_actor, cfg.lr_actor),
                &mut skipped,
            )?;

            soft_update(&mut actor_t, &actor, tau);
            soft_update(&mut critic_t, &critic, tau);
        }
    }

    let (actor, critic) = match best {
        Some((best_mean, best_actor, best_critic)) => {
            // prefer the best snapshot unless the final networks beat it
            let final_policy = super::PolicyNets::Ddpg(vec![actor.clone()]);
            let final_mean = super::greedy_mean_return(
                &final_policy,
                env,
                cfg.eval_episodes,
                derive_seed(seed, "snapshot-eval", cfg.train_steps as u64),
            )?;
            if final_mean > best_mean {
                (actor, critic)
            } else {
                (best_actor, best_critic)
            }
        }
        None => (actor, critic),
    };
    let mut checkpoint = Checkpoint {
        networks: vec![("actor".into(), actor), ("critic".into(), critic)],
        seed,
        meta: Default::default(),
    };
    checkpoint.meta.insert("env".into(), env.env_id().into());
    checkpoint.meta.insert("variant".into(), env.variant_id());
    checkpoint.meta.insert("algorithm".into(), "ddpg".into());
    checkpoint.meta.insert("train_steps".into(), cfg.train_steps.to_string());
    Ok(TrainOutput { checkpoint, curve })
}

/// Ok(true) if the step was applied, Ok(false) if skipped for non-finite
/// gradients; errors out after too many skips.
fn apply_step(res: Result<()>, skipped: &mut usize) -> Result<bool> {
    match res {
        Ok(()) => Ok(true),
        Err(Error::Training(_)) => {
            *skipped += 1;
            if *skipped > MAX_SKIPPED_UPDATES {
                Err(Error::Training(format!("training diverged: {skipped} updates skipped")))
            } else {
                Ok(false)
            }
        }
        Err(e) => Err(e),
    }
}

/// Train an ensemble of `m` independently seeded, mask-free actor-critic
/// pairs; actors are stored as `actor0`, `actor1`, ...
pub fn ddpg_train_ensemble(
    make_env: &mut dyn FnMut() -> Result<Box<dyn Environment>>,
    m: usize,
    cfg: &AgentConfig,
    seed: u64,
) -> Result<TrainOutput> {
    if m < 2 {
        return Err(Error::Config(format!("ensemble size {m} must be >= 2")));
    }
    let mut nets = Vec::with_capacity(2 * m);
    let mut curve = Vec::new();
    let mut meta = None;
    for i in 0..m {
        let mut env = make_env()?;
        let out = ddpg_train(
            env.as_mut(),
            StochasticSpec::None,
            cfg,
            derive_seed(seed, "member", i as u64),
        )?;
        if i == 0 {
            curve = out.curve;
            meta = Some(out.checkpoint.meta.clone());
        }
        for (name, net) in out.checkpoint.networks {
            nets.push((format!("{name}{i}"), net));
        }
    }
    let mut checkpoint = Checkpoint { networks: nets, seed, meta: meta.unwrap_or_default() };
    checkpoint.meta.insert("ensemble".into(), m.to_string());
    Ok(TrainOutput { checkpoint, curve })
}
