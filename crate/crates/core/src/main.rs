use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use oodrl::experiment::{
    cmd_detect, cmd_evaluate, cmd_preview_corruption, cmd_report, cmd_train, exit_code,
    list_envs_text, ExperimentConfig,
};
use oodrl::{Error, Result};

/// Out-of-distribution detection benchmark for deep RL agents.
#[derive(Parser)]
#[command(name = "oodrl", version, about)]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; overrides the config and the OODRL_SEED env var.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of trials; overrides the config.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Parallel workers across trials/variants (never within a training run).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the model(s) for the configured env and method.
    Train,
    /// Sweep a trained policy over the configured variants and flag failures.
    Evaluate,
    /// Run the full detection experiment: trials, scoring, ROC/AUC, traces.
    Detect,
    /// Summarize a finished detect run from its output directory.
    Report,
    /// Write example PGM frames for one corruption kind at every severity.
    PreviewCorruption {
        /// gaussian | impulse | motion_blur | pixelate
        #[arg(long)]
        kind: String,
    },
    /// List environment ids and all variant presets.
    ListEnvs,
}

impl Cli {
    fn resolved_config(&self) -> Result<ExperimentConfig> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs --config".into()))?;
        let mut cfg = ExperimentConfig::from_path(path)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        } else if let Ok(var) = std::env::var("OODRL_SEED") {
            cfg.seed = var
                .parse()
                .map_err(|_| Error::Config(format!("OODRL_SEED '{var}' is not a number")))?;
        }
        if let Some(out) = &self.out {
            cfg.out = Some(out.clone());
        }
        if let Some(trials) = self.trials {
            cfg.trials = trials;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn run(&self) -> Result<()> {
        match &self.cmd {
            Cmd::Train => {
                let paths = cmd_train(&self.resolved_config()?)?;
                for p in paths {
                    println!("wrote {}", p.display());
                }
            }
            Cmd::Evaluate => {
                let failing = cmd_evaluate(&self.resolved_config()?)?;
                println!("{} failing variant(s)", failing.len());
                for v in failing {
                    println!("  {v}");
                }
            }
            Cmd::Detect => {
                let rows = cmd_detect(&self.resolved_config()?, self.jobs)?;
                for r in rows {
                    println!(
                        "{} {} {}: auc {:.3} +- {:.3}",
                        r.env, r.variant, r.method, r.mean_auc, r.std_auc
                    );
                }
            }
            Cmd::Report => {
                let out = match (&self.out, &self.config) {
                    (Some(out), _) => out.clone(),
                    (None, Some(_)) => self
                        .resolved_config()?
                        .out
                        .ok_or_else(|| Error::Config("report needs --out".into()))?,
                    (None, None) => return Err(Error::Config("report needs --out".into())),
                };
                print!("{}", cmd_report(&out)?);
            }
            Cmd::PreviewCorruption { kind } => {
                let out = self.out.clone().ok_or_else(|| {
                    Error::Config("preview-corruption needs --out".into())
                })?;
                let seed = self.seed.unwrap_or(0);
                for p in cmd_preview_corruption(kind, &out, seed)? {
                    println!("wrote {}", p.display());
                }
            }
            Cmd::ListEnvs => print!("{}", list_envs_text()),
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
