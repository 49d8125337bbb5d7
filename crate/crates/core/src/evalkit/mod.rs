//! ID/OOD score collection, ROC/AUC, threshold selection, and multi-trial
//! aggregation.

mod roc;

pub use roc::{auc, brute_force_auc, trapezoid_auc, RocPoint, RocResult};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::agents::{rollout, AgentConfig, PolicyNets};
use crate::envs::Environment;
use crate::nncore::{Checkpoint, Network, StochasticSpec};
use crate::rng::{derive_seed, rng_from};
use crate::uncertainty::{Label, MethodKind, ScoreSample, Scorer, UncertaintyMethod};
use crate::{Error, Result};

/// Sample mean and standard deviation with the n-1 divisor (std 0 for n = 1).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// The stochastic spec a method needs its model trained with.
pub fn stochastic_for(method: &UncertaintyMethod, rate: f64) -> StochasticSpec {
    match method.kind {
        MethodKind::McDropout { .. } => StochasticSpec::Dropout { rate },
        MethodKind::McDropconnect { .. } => StochasticSpec::DropConnect { rate },
        MethodKind::Ensemble { .. } => StochasticSpec::None,
    }
}

/// The networks a method scores: the single `q`/`actor` for MC methods, the
/// `q0..`/`actor0..` members for ensembles.
pub fn scored_models<'a>(
    ckpt: &'a Checkpoint,
    method: &UncertaintyMethod,
) -> Result<Vec<&'a Network>> {
    match method.kind {
        MethodKind::Ensemble { m } => {
            for prefix in ["q", "actor"] {
                let members: Vec<&Network> =
                    (0..m).filter_map(|i| ckpt.network(&format!("{prefix}{i}")).ok()).collect();
                if members.len() == m {
                    return Ok(members);
                }
            }
            Err(Error::Method(format!("checkpoint lacks {m} ensemble members")))
        }
        _ => ckpt
            .network("q")
            .or_else(|_| ckpt.network("actor"))
            .map(|n| vec![n])
            .map_err(|_| Error::Method("checkpoint lacks a q/actor network".into())),
    }
}

/// One detection experiment: a trained model scored on the default env (ID)
/// versus one variant preset (OOD).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Experiment {
    pub env_id: String,
    /// Variant preset id, e.g. `cartpole/length/2` or `minipong/gaussian/3`.
    pub variant: String,
    pub method: UncertaintyMethod,
    pub agent: AgentConfig,
    /// Dropout / DropConnect rate used when training MC models.
    pub rate: f64,
    pub episodes_per_side: usize,
    pub base_seed: u64,
    /// Extra env parameter overrides applied to both eval sides (e.g. a
    /// shorter MiniPong `max_score`), never to the OOD-defining preset value.
    #[serde(default)]
    pub eval_overrides: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub auc: f64,
    pub best_threshold: f64,
    pub youden_j: f64,
    pub n_id: usize,
    pub n_ood: usize,
    pub seed: u64,
    pub failed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateResult {
    pub mean_auc: f64,
    /// Std over successful trials, n-1 divisor; 0 with `single_trial` set
    /// when only one trial succeeded.
    pub std_auc: f64,
    pub single_trial: bool,
    pub failed_trials: usize,
    pub trials: Vec<TrialResult>,
}

/// Greedy episodes on both envs; every timestep yields one labeled sample.
/// Labels partition exactly by source env.
pub fn collect_scores<'e>(
    method: &UncertaintyMethod,
    ckpt: &Checkpoint,
    id_env: &'e mut dyn Environment,
    ood_env: &'e mut dyn Environment,
    episodes: usize,
    trial: usize,
    seed: u64,
) -> Result<Vec<ScoreSample>> {
    let models = scored_models(ckpt, method)?;
    let scorer = Scorer::new(*method, models)?;
    let policy = PolicyNets::from_checkpoint(ckpt)?;
    let mut out = Vec::new();
    for (env, label, tag) in
        [(id_env, Label::Id, "score-id"), (ood_env, Label::Ood, "score-ood")]
    {
        let mut mask_rng = rng_from(derive_seed(seed, tag, 1));
        let episodes_rec = rollout(&policy, env, episodes, derive_seed(seed, tag, 0))?;
        for (ep, rec) in episodes_rec.iter().enumerate() {
            for (step, s) in rec.steps.iter().enumerate() {
                let (score, _, _) = scorer.step_score(&s.obs_vec, &mut mask_rng)?;
                out.push(ScoreSample {
                    score,
                    label,
                    env: env.env_id().to_string(),
                    variant: env.variant_id(),
                    trial,
                    episode: ep,
                    step,
                });
            }
        }
    }
    Ok(out)
}

fn split_scores(samples: &[ScoreSample]) -> (Vec<f64>, Vec<f64>) {
    let mut id = Vec::new();
    let mut ood = Vec::new();
    for s in samples {
        match s.label {
            Label::Id => id.push(s.score),
            Label::Ood => ood.push(s.score),
        }
    }
    (id, ood)
}

/// Run `n_trials` trials with a caller-supplied model provider.
///
/// The provider maps `(trial, trial_seed)` to a trained checkpoint; trial
/// seeds are `base_seed + trial`. A provider returning a training error marks
/// that trial failed; failed trials are excluded from the aggregate.
pub fn run_trials_with(
    exp: &Experiment,
    n_trials: usize,
    provider: &mut dyn FnMut(usize, u64) -> Result<Checkpoint>,
) -> Result<AggregateResult> {
    if n_trials < 1 {
        return Err(Error::Config("n_trials must be >= 1".into()));
    }
    exp.method.validate()?;
    let mut trials = Vec::with_capacity(n_trials);
    for trial in 0..n_trials {
        let seed = exp.base_seed + trial as u64;
        let ckpt = match provider(trial, seed) {
            Ok(c) => c,
            Err(Error::Training(_)) => {
                trials.push(TrialResult {
                    trial,
                    auc: f64::NAN,
                    best_threshold: f64::NAN,
                    youden_j: f64::NAN,
                    n_id: 0,
                    n_ood: 0,
                    seed,
                    failed: true,
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut id_env = crate::envs::parse_preset_with(&exp.env_id, &exp.eval_overrides)?;
        let mut ood_env = crate::envs::parse_preset_with(&exp.variant, &exp.eval_overrides)?;
        let samples = collect_scores(
            &exp.method,
            &ckpt,
            id_env.as_mut(),
            ood_env.as_mut(),
            exp.episodes_per_side,
            trial,
            derive_seed(seed, "collect", 0),
        )?;
        let (id, ood) = split_scores(&samples);
        let roc = auc(&id, &ood)?;
        trials.push(TrialResult {
            trial,
            auc: roc.auc,
            best_threshold: roc.best_threshold,
            youden_j: roc.youden_j,
            n_id: id.len(),
            n_ood: ood.len(),
            seed,
            failed: false,
        });
    }
    aggregate(trials)
}

/// Aggregate trial AUCs into mean +- std, excluding failed trials.
pub fn aggregate(trials: Vec<TrialResult>) -> Result<AggregateResult> {
    let ok: Vec<f64> = trials.iter().filter(|t| !t.failed).map(|t| t.auc).collect();
    if ok.is_empty() {
        return Err(Error::Training("all trials failed".into()));
    }
    let failed = trials.len() - ok.len();
    let (mean, std) = mean_std(&ok);
    Ok(AggregateResult {
        mean_auc: mean,
        std_auc: std,
        single_trial: ok.len() == 1,
        failed_trials: failed,
        trials,
    })
}

/// Train models and run trials; each trial retrains with its own seed.
pub fn run_trials(exp: &Experiment, n_trials: usize) -> Result<AggregateResult> {
    let exp_clone = exp.clone();
    run_trials_with(exp, n_trials, &mut move |_trial, seed| train_models(&exp_clone, seed))
}

/// Train the model(s) an experiment's method needs, at the given seed, always
/// on the default (in-distribution) environment.
pub fn train_models(exp: &Experiment, seed: u64) -> Result<Checkpoint> {
    train_models_full(exp, seed).map(|o| o.checkpoint)
}

/// Like [`train_models`] but keeps the learning curve.
pub fn train_models_full(exp: &Experiment, seed: u64) -> Result<crate::agents::TrainOutput> {
    use crate::agents::{ddpg_train, ddpg_train_ensemble, dqn_train, dqn_train_ensemble, Algorithm};
    let stochastic = stochastic_for(&exp.method, exp.rate);
    let out = match (exp.agent.algorithm, exp.method.kind) {
        (Algorithm::Dqn, MethodKind::Ensemble { m }) => {
            let env_id = exp.env_id.clone();
            dqn_train_ensemble(&mut || crate::envs::make_env(&env_id), m, &exp.agent, seed)?
        }
        (Algorithm::Ddpg, MethodKind::Ensemble { m }) => {
            let env_id = exp.env_id.clone();
            ddpg_train_ensemble(&mut || crate::envs::make_env(&env_id), m, &exp.agent, seed)?
        }
        (Algorithm::Dqn, _) => {
            let mut env = crate::envs::make_env(&exp.env_id)?;
            dqn_train(env.as_mut(), stochastic, &exp.agent, seed)?
        }
        (Algorithm::Ddpg, _) => {
            let mut env = crate::envs::make_env(&exp.env_id)?;
            ddpg_train(env.as_mut(), stochastic, &exp.agent, seed)?
        }
    };
    Ok(out)
}

/// One row of the results CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRow {
    pub env: String,
    pub variant: String,
    pub method: String,
    pub aggregation: String,
    pub trial: usize,
    pub auc: f64,
    pub best_threshold: f64,
    pub youden_j: f64,
    pub n_id: usize,
    pub n_ood: usize,
    pub seed: u64,
}

/// Successful trials of one aggregate as CSV rows.
pub fn result_rows(exp: &Experiment, agg: &AggregateResult) -> Vec<ResultRow> {
    agg.trials
        .iter()
        .filter(|t| !t.failed)
        .map(|t| ResultRow {
            env: exp.env_id.clone(),
            variant: exp.variant.clone(),
            method: exp.method.name().to_string(),
            aggregation: exp.method.aggregation_name().to_string(),
            trial: t.trial,
            auc: t.auc,
            best_threshold: t.best_threshold,
            youden_j: t.youden_j,
            n_id: t.n_id,
            n_ood: t.n_ood,
            seed: t.seed,
        })
        .collect()
}

pub fn results_csv_bytes(rows: &[ResultRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| Error::Data(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Data(e.to_string()))
}

/// Aggregate JSON mirror of the results CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateRow {
    pub env: String,
    pub variant: String,
    pub method: String,
    pub aggregation: String,
    pub mean_auc: f64,
    pub std_auc: f64,
    pub n_trials: usize,
    pub failed_trials: usize,
    pub single_trial: bool,
}

pub fn aggregate_row(exp: &Experiment, agg: &AggregateResult) -> AggregateRow {
    AggregateRow {
        env: exp.env_id.clone(),
        variant: exp.variant.clone(),
        method: exp.method.name().to_string(),
        aggregation: exp.method.aggregation_name().to_string(),
        mean_auc: agg.mean_auc,
        std_auc: agg.std_auc,
        n_trials: agg.trials.len(),
        failed_trials: agg.failed_trials,
        single_trial: agg.single_trial,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub means: Vec<f64>,
    pub score: f64,
}

/// Per-step traces for one ID and one OOD episode against a fixed threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceReport {
    pub id: Vec<TraceStep>,
    pub ood: Vec<TraceStep>,
    pub threshold: f64,
}

pub fn trace_report(
    method: &UncertaintyMethod,
    ckpt: &Checkpoint,
    id_env: &mut dyn Environment,
    ood_env: &mut dyn Environment,
    threshold: f64,
    seed: u64,
) -> Result<TraceReport> {
    let models = scored_models(ckpt, method)?;
    let scorer = Scorer::new(*method, models)?;
    let policy = PolicyNets::from_checkpoint(ckpt)?;
    let trace_one = |env: &mut dyn Environment, tag: &str| -> Result<Vec<TraceStep>> {
        let mut mask_rng = rng_from(derive_seed(seed, tag, 1));
        let eps = rollout(&policy, env, 1, derive_seed(seed, tag, 0))?;
        eps[0]
            .steps
            .iter()
            .enumerate()
            .map(|(step, s)| {
                let (score, means, _) = scorer.step_score(&s.obs_vec, &mut mask_rng)?;
                Ok(TraceStep { step, means, score })
            })
            .collect()
    };
    Ok(TraceReport {
        id: trace_one(id_env, "trace-id")?,
        ood: trace_one(ood_env, "trace-ood")?,
        threshold,
    })
}

/// Trace CSV: side, step, score, threshold, then one column per output mean.
pub fn trace_csv_bytes(report: &TraceReport) -> Result<Vec<u8>> {
    let n_means = report.id.first().or(report.ood.first()).map_or(0, |s| s.means.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["side".to_string(), "step".into(), "score".into(), "threshold".into()];
    header.extend((0..n_means).map(|i| format!("mean_{i}")));
    w.write_record(&header).map_err(|e| Error::Data(e.to_string()))?;
    for (side, steps) in [("id", &report.id), ("ood", &report.ood)] {
        for s in steps {
            let mut rec = vec![
                side.to_string(),
                s.step.to_string(),
                s.score.to_string(),
                report.threshold.to_string(),
            ];
            rec.extend(s.means.iter().map(|m| m.to_string()));
            w.write_record(&rec).map_err(|e| Error::Data(e.to_string()))?;
        }
    }
    w.into_inner().map_err(|e| Error::Data(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::{init_network, NetworkSpec};
    use crate::uncertainty::Aggregation;

    fn dropout_q_checkpoint(seed: u64) -> Checkpoint {
        let spec = NetworkSpec {
            stochastic: StochasticSpec::Dropout { rate: 0.1 },
            ..NetworkSpec::new(vec![4, 16, 16, 2])
        };
        Checkpoint::single("q", init_network(&spec, seed).unwrap(), seed)
    }

    fn mc_dropout_method() -> UncertaintyMethod {
        UncertaintyMethod {
            kind: MethodKind::McDropout { k: 5 },
            aggregation: Aggregation::ChosenActionStd,
        }
    }

    #[test]
    fn aggregate_arithmetic_matches_reference_column() {
        let (mean, std) = mean_std(&[0.737, 0.688, 0.652, 0.780, 0.703]);
        assert!((mean - 0.712).abs() < 0.001);
        assert!((std - 0.049).abs() < 0.001);
        // permutation invariance (up to summation rounding)
        let (m2, s2) = mean_std(&[0.780, 0.652, 0.703, 0.737, 0.688]);
        assert!((mean - m2).abs() < 1e-12 && (std - s2).abs() < 1e-12);
    }

    #[test]
    fn single_value_std_is_zero() {
        assert_eq!(mean_std(&[0.9]), (0.9, 0.0));
    }

    #[test]
    fn collected_labels_partition_by_env() {
        let ckpt = dropout_q_checkpoint(3);
        let mut id_env = crate::envs::make_env("cartpole").unwrap();
        let mut ood_env = crate::envs::parse_preset("cartpole/length/2").unwrap();
        let samples = collect_scores(
            &mc_dropout_method(),
            &ckpt,
            id_env.as_mut(),
            ood_env.as_mut(),
            2,
            0,
            77,
        )
        .unwrap();
        assert!(!samples.is_empty());
        // cartpole horizon 500: at most 1000 steps per side for 2 episodes
        assert!(samples.len() <= 2000);
        for s in &samples {
            assert!(s.score.is_finite() && s.score >= 0.0);
            match s.label {
                Label::Id => assert_eq!(s.variant, "default"),
                Label::Ood => assert_eq!(s.variant, "length/2"),
            }
        }
        assert!(samples.iter().any(|s| s.label == Label::Id));
        assert!(samples.iter().any(|s| s.label == Label::Ood));
    }

    #[test]
    fn identical_envs_give_chance_level_auc() {
        let ckpt = dropout_q_checkpoint(5);
        let mut a = crate::envs::make_env("cartpole").unwrap();
        let mut b = crate::envs::make_env("cartpole").unwrap();
        let samples =
            collect_scores(&mc_dropout_method(), &ckpt, a.as_mut(), b.as_mut(), 80, 0, 19).unwrap();
        let (id, ood) = split_scores(&samples);
        assert!(id.len() + ood.len() >= 1000, "need enough samples, got {}", id.len() + ood.len());
        let r = auc(&id, &ood).unwrap();
        assert!((r.auc - 0.5).abs() < 0.1, "auc {}", r.auc);
    }

    fn tiny_experiment() -> Experiment {
        Experiment {
            env_id: "cartpole".into(),
            variant: "cartpole/length/2".into(),
            method: mc_dropout_method(),
            agent: AgentConfig::dqn_default(),
            rate: 0.1,
            episodes_per_side: 2,
            base_seed: 100,
            eval_overrides: BTreeMap::new(),
        }
    }

    #[test]
    fn run_trials_with_fixed_models_is_deterministic() {
        let exp = tiny_experiment();
        let mut provider = |_t: usize, seed: u64| Ok(dropout_q_checkpoint(seed));
        let a = run_trials_with(&exp, 3, &mut provider).unwrap();
        let b = run_trials_with(&exp, 3, &mut provider).unwrap();
        assert_eq!(a.trials.len(), 3);
        assert_eq!(a.failed_trials, 0);
        for (x, y) in a.trials.iter().zip(&b.trials) {
            assert_eq!(x.auc, y.auc);
            assert_eq!(x.seed, exp.base_seed + x.trial as u64);
            assert!(x.n_id > 0 && x.n_ood > 0);
        }
        let aucs: Vec<f64> = a.trials.iter().map(|t| t.auc).collect();
        let lo = aucs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = aucs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(a.mean_auc >= lo && a.mean_auc <= hi);
    }

    #[test]
    fn failed_trials_are_flagged_and_excluded() {
        let exp = tiny_experiment();
        let mut provider = |t: usize, seed: u64| {
            if t == 0 {
                Err(Error::Training("diverged".into()))
            } else {
                Ok(dropout_q_checkpoint(seed))
            }
        };
        let agg = run_trials_with(&exp, 3, &mut provider).unwrap();
        assert_eq!(agg.failed_trials, 1);
        assert!(agg.trials[0].failed);
        assert_eq!(result_rows(&exp, &agg).len(), 2);
        assert!(!agg.single_trial);
        // all trials failing is an error
        let mut all_fail = |_t: usize, _s: u64| -> Result<Checkpoint> {
            Err(Error::Training("diverged".into()))
        };
        assert!(run_trials_with(&exp, 2, &mut all_fail).is_err());
    }

    #[test]
    fn trace_matches_episode_length_and_threshold() {
        let ckpt = dropout_q_checkpoint(9);
        let mut id_env = crate::envs::make_env("cartpole").unwrap();
        let mut ood_env = crate::envs::parse_preset("cartpole/length/2").unwrap();
        let report = trace_report(
            &mc_dropout_method(),
            &ckpt,
            id_env.as_mut(),
            ood_env.as_mut(),
            0.25,
            31,
        )
        .unwrap();
        assert_eq!(report.threshold, 0.25);
        assert!(!report.id.is_empty() && !report.ood.is_empty());
        let csv = trace_csv_bytes(&report).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("side,step,score,threshold,mean_0,mean_1"));
        assert_eq!(text.lines().count(), 1 + report.id.len() + report.ood.len());
    }

    #[test]
    fn results_csv_schema() {
        let exp = tiny_experiment();
        let mut provider = |_t: usize, seed: u64| Ok(dropout_q_checkpoint(seed));
        let agg = run_trials_with(&exp, 1, &mut provider).unwrap();
        assert!(agg.single_trial);
        assert_eq!(agg.std_auc, 0.0);
        let rows = result_rows(&exp, &agg);
        let bytes = results_csv_bytes(&rows).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with(
            "env,variant,method,aggregation,trial,auc,best_threshold,youden_j,n_id,n_ood,seed"
        ));
    }
}
