//! Experiment orchestration: config resolution, the command implementations
//! behind the CLI, and atomic file output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::agents::{find_failing_variants, AgentConfig, FailureRule};
use crate::corruptions::{severity_grid, write_pgm, Frame};
use crate::envs::Observation;
use crate::evalkit::{
    aggregate_row, result_rows, results_csv_bytes, trace_csv_bytes, trace_report,
    train_models_full, AggregateRow, Experiment, ResultRow,
};
use crate::nncore::Checkpoint;
use crate::rng::{derive_seed, rng_from};
use crate::uncertainty::{Aggregation, MethodKind, UncertaintyMethod};
use crate::{Error, Result};

/// Write `bytes` to `path` via a temp file in the same directory plus rename,
/// so readers never observe a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    static COUNTER: AtomicUsize = AtomicUsize::new(0);
    let tmp = dir.join(format!(
        ".{}.tmp-{}-{}",
        path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed),
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

fn default_trials() -> usize {
    5
}
fn default_episodes() -> usize {
    10
}
fn default_rate() -> f64 {
    0.1
}
fn default_eval_episodes() -> usize {
    20
}
fn default_method() -> UncertaintyMethod {
    UncertaintyMethod {
        kind: MethodKind::McDropout { k: 5 },
        aggregation: Aggregation::ChosenActionStd,
    }
}

/// Top-level experiment configuration (JSON). CLI flags `--seed`, `--out`,
/// `--trials` override the corresponding fields; `OODRL_SEED` is a fallback
/// for `--seed`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: String,
    /// Variant preset ids (see `list-envs`); empty means "no variants".
    #[serde(default)]
    pub variants: Vec<String>,
    /// Agent hyperparameters; per-env defaults when omitted.
    #[serde(default)]
    pub agent: Option<AgentConfig>,
    #[serde(default = "default_method")]
    pub method: UncertaintyMethod,
    /// Dropout / DropConnect rate for MC-method models.
    #[serde(default = "default_rate")]
    pub rate: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_episodes")]
    pub episodes_per_side: usize,
    /// Greedy episodes per variant in `evaluate`.
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Env parameter overrides applied to both eval sides in `detect`.
    #[serde(default)]
    pub eval_overrides: BTreeMap<String, f64>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_slice(&fs::read(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !crate::envs::ENV_IDS.contains(&self.env.as_str()) {
            return Err(Error::Config(format!("unknown env '{}'", self.env)));
        }
        for v in &self.variants {
            crate::envs::parse_preset(v)?;
        }
        self.method.validate()?;
        if !(0.0..1.0).contains(&self.rate) {
            return Err(Error::Config(format!("rate {} must be in [0,1)", self.rate)));
        }
        if let Some(agent) = &self.agent {
            agent.validate()?;
        }
        if self.trials == 0 || self.episodes_per_side == 0 {
            return Err(Error::Config("trials and episodes_per_side must be > 0".into()));
        }
        Ok(())
    }

    pub fn agent_config(&self) -> Result<AgentConfig> {
        match &self.agent {
            Some(a) => Ok(a.clone()),
            None => AgentConfig::default_for_env(&self.env),
        }
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out.as_deref().ok_or_else(|| Error::Config("no output directory (--out)".into()))
    }

    fn experiment_for(&self, variant: &str) -> Result<Experiment> {
        Ok(Experiment {
            env_id: self.env.clone(),
            variant: variant.to_string(),
            method: self.method,
            agent: self.agent_config()?,
            rate: self.rate,
            episodes_per_side: self.episodes_per_side,
            base_seed: self.seed,
            eval_overrides: self.eval_overrides.clone(),
        })
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// The resolved config is written next to the results so a run can be
/// reproduced from its own output directory.
fn write_effective_config(cfg: &ExperimentConfig) -> Result<()> {
    write_json(&cfg.out_dir()?.join("effective_config.json"), cfg)
}

fn sanitize(id: &str) -> String {
    id.replace('/', "_")
}

/// Train the models for trial 0 and write checkpoints plus the learning
/// curve. Ensembles get one file per member.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let out_dir = cfg.out_dir()?.to_path_buf();
    let exp = cfg.experiment_for(&cfg.env)?;
    let output = train_models_full(&exp, cfg.seed)?;
    let mut paths = Vec::new();
    match cfg.method.kind {
        MethodKind::Ensemble { m } => {
            for i in 0..m {
                let mut member = Checkpoint {
                    networks: Vec::new(),
                    seed: output.checkpoint.seed,
                    meta: output.checkpoint.meta.clone(),
                };
                let wanted = [format!("q{i}"), format!("actor{i}"), format!("critic{i}")];
                for (name, net) in &output.checkpoint.networks {
                    if wanted.contains(name) {
                        member.networks.push((name.clone(), net.clone()));
                    }
                }
                let path = out_dir.join(format!("checkpoint_member_{i}.bin"));
                member.save(&path)?;
                paths.push(path);
            }
        }
        _ => {
            let path = out_dir.join("checkpoint.bin");
            output.checkpoint.save(&path)?;
            paths.push(path);
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in &output.curve {
        w.serialize(p).map_err(|e| Error::Data(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    write_atomic(&out_dir.join("curves.csv"), &bytes)?;
    write_effective_config(cfg)?;
    Ok(paths)
}

/// Load the checkpoint(s) written by [`cmd_train`] back into one checkpoint.
pub fn load_checkpoints(cfg: &ExperimentConfig) -> Result<Checkpoint> {
    let out_dir = cfg.out_dir()?;
    match cfg.method.kind {
        MethodKind::Ensemble { m } => {
            let mut merged: Option<Checkpoint> = None;
            for i in 0..m {
                let part = Checkpoint::load(&out_dir.join(format!("checkpoint_member_{i}.bin")))?;
                match &mut merged {
                    None => merged = Some(part),
                    Some(c) => c.networks.extend(part.networks),
                }
            }
            merged.ok_or_else(|| Error::Checkpoint("ensemble of size 0".into()))
        }
        _ => Checkpoint::load(&out_dir.join("checkpoint.bin")),
    }
}

#[derive(Debug, Serialize)]
struct ReturnRow<'a> {
    variant: &'a str,
    mean_return: f64,
    failing: bool,
}

/// Sweep the trained policy over the configured variants and report where it
/// fails. Writes `returns.csv` (baseline row first) and `failing.json`.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    let out_dir = cfg.out_dir()?.to_path_buf();
    let mut w = csv::Writer::from_writer(Vec::new());
    let failing: Vec<String> = if cfg.variants.is_empty() {
        w.write_record(["variant", "mean_return", "failing"])
            .map_err(|e| Error::Data(e.to_string()))?;
        Vec::new()
    } else {
        let ckpt = load_checkpoints(cfg)?;
        let rule = FailureRule::default_for_env(&cfg.env)?;
        let rows = find_failing_variants(
            &ckpt,
            &cfg.env,
            &cfg.variants,
            cfg.eval_episodes,
            rule,
            derive_seed(cfg.seed, "evaluate", 0),
        )?;
        for r in &rows {
            w.serialize(ReturnRow {
                variant: &r.variant,
                mean_return: r.mean_return,
                failing: r.failing,
            })
            .map_err(|e| Error::Data(e.to_string()))?;
        }
        // the baseline row is not a variant
        rows.iter().skip(1).filter(|r| r.failing).map(|r| r.variant.clone()).collect()
    };
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    write_atomic(&out_dir.join("returns.csv"), &bytes)?;
    write_json(&out_dir.join("failing.json"), &failing)?;
    write_effective_config(cfg)?;
    Ok(failing)
}

/// Per-trial models for `detect`, trained once and shared across variants.
///
/// Every checkpoint is round-tripped through its serialized form so that
/// scores never depend on whether a model was freshly trained (f64) or
/// reloaded from disk (f32-narrowed).
fn train_trial_models(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<Option<Checkpoint>>> {
    let exp = cfg.experiment_for(&cfg.env)?;
    let n = cfg.trials;
    let results: Mutex<Vec<Option<Result<Checkpoint>>>> = Mutex::new((0..n).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(n) {
            scope.spawn(|| loop {
                let t = next.fetch_add(1, Ordering::Relaxed);
                if t >= n {
                    break;
                }
                let res = train_models_full(&exp, exp.base_seed + t as u64)
                    .and_then(|o| o.checkpoint.to_bytes())
                    .and_then(|b| Checkpoint::from_bytes(&b));
                results.lock().unwrap()[t] = Some(res);
            });
        }
    });
    let mut out = Vec::with_capacity(n);
    for slot in results.into_inner().unwrap() {
        match slot.expect("every trial visited") {
            Ok(ckpt) => out.push(Some(ckpt)),
            Err(Error::Training(_)) => out.push(None),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Full detection run: per-trial training, ID-vs-variant scoring, ROC/AUC,
/// aggregation, and trace export. Deterministic for a fixed config + seed.
pub fn cmd_detect(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<AggregateRow>> {
    if cfg.variants.is_empty() {
        return Err(Error::Config("detect needs at least one variant".into()));
    }
    let out_dir = cfg.out_dir()?.to_path_buf();
    let models = train_trial_models(cfg, jobs)?;
    let mut all_rows: Vec<ResultRow> = Vec::new();
    let mut aggregates = Vec::new();
    for variant in &cfg.variants {
        let exp = cfg.experiment_for(variant)?;
        let mut provider = |trial: usize, _seed: u64| match &models[trial] {
            Some(ckpt) => Ok(ckpt.clone()),
            None => Err(Error::Training("training failed".into())),
        };
        let agg = crate::evalkit::run_trials_with(&exp, cfg.trials, &mut provider)?;
        all_rows.extend(result_rows(&exp, &agg));
        // trace from the first successful trial at that trial's threshold
        if let Some(t) = agg.trials.iter().find(|t| !t.failed) {
            let ckpt = models[t.trial].as_ref().expect("successful trial has a model");
            let mut id_env = crate::envs::parse_preset_with(&cfg.env, &cfg.eval_overrides)?;
            let mut ood_env = crate::envs::parse_preset_with(variant, &cfg.eval_overrides)?;
            let report = trace_report(
                &cfg.method,
                ckpt,
                id_env.as_mut(),
                ood_env.as_mut(),
                t.best_threshold,
                derive_seed(t.seed, "trace", 0),
            )?;
            write_atomic(
                &out_dir.join(format!("trace_{}.csv", sanitize(variant))),
                &trace_csv_bytes(&report)?,
            )?;
        }
        aggregates.push(aggregate_row(&exp, &agg));
    }
    write_atomic(&out_dir.join("results.csv"), &results_csv_bytes(&all_rows)?)?;
    write_json(&out_dir.join("aggregate.json"), &aggregates)?;
    write_effective_config(cfg)?;
    Ok(aggregates)
}

/// Summarize a finished `detect` run from its output directory.
pub fn cmd_report(out_dir: &Path) -> Result<String> {
    let path = out_dir.join("aggregate.json");
    let rows: Vec<AggregateRow> = serde_json::from_slice(&fs::read(&path)?)?;
    let mut text = String::from("env variant method aggregation mean_auc std_auc trials\n");
    for r in &rows {
        text.push_str(&format!(
            "{} {} {} {} {:.3} {:.3} {}{}\n",
            r.env,
            r.variant,
            r.method,
            r.aggregation,
            r.mean_auc,
            r.std_auc,
            r.n_trials - r.failed_trials,
            if r.failed_trials > 0 { format!(" ({} failed)", r.failed_trials) } else { String::new() },
        ));
    }
    Ok(text)
}

/// Write one PGM per severity of a corruption kind, applied to a freshly
/// reset MiniPong frame, plus the clean frame.
pub fn cmd_preview_corruption(kind: &str, out_dir: &Path, seed: u64) -> Result<Vec<PathBuf>> {
    let grid = severity_grid(kind)?;
    let mut env = crate::envs::make_env("minipong")?;
    let mut rng = rng_from(derive_seed(seed, "preview", 0));
    let obs = env.reset(&mut rng);
    let frame: Frame = match obs {
        Observation::Frames(frames) => frames.into_iter().last().expect("non-empty stack"),
        Observation::Vector(_) => unreachable!("minipong observes frames"),
    };
    let mut paths = vec![out_dir.join("clean.pgm")];
    write_pgm(&frame, &paths[0])?;
    for (i, spec) in grid.iter().enumerate() {
        let mut crng = rng_from(derive_seed(seed, "corrupt", i as u64));
        let corrupted = crate::corruptions::corrupt(&frame, spec, &mut crng)?;
        let path = out_dir.join(format!("{kind}_severity_{}.pgm", i + 1));
        write_pgm(&corrupted, &path)?;
        paths.push(path);
    }
    Ok(paths)
}

/// `list-envs` text: base environments and every variant preset.
pub fn list_envs_text() -> String {
    let mut text = String::from("environments:\n");
    for id in crate::envs::ENV_IDS {
        text.push_str(&format!("  {id}\n"));
    }
    text.push_str("variant presets:\n");
    for p in crate::envs::list_presets() {
        text.push_str(&format!("  {p}\n"));
    }
    text
}

/// Process exit code for an error: 3 for training failures, 2 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Training(_) => 3,
        _ => 2,
    }
}
