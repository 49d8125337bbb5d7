//! Per-timestep epistemic uncertainty scores from a trained model (MC Dropout,
//! MC DropConnect) or an ensemble of models.

use serde::{Deserialize, Serialize};

use crate::nncore::{forward_eval, Network, StochasticMode, StochasticSpec};
use crate::rng::Rng;
use crate::{Error, Result};

/// Scalarization of the per-action std vector for discrete control.
/// Continuous control always scores the std of the single action output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Std of the action that argmaxes the mean output (default).
    ChosenActionStd,
    MaxActionStd,
    MeanActionStd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    McDropout { k: usize },
    McDropconnect { k: usize },
    Ensemble { m: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyMethod {
    pub kind: MethodKind,
    pub aggregation: Aggregation,
}

impl UncertaintyMethod {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            MethodKind::McDropout { k } | MethodKind::McDropconnect { k } if k < 2 => {
                Err(Error::Method(format!("need K >= 2 samples, got {k}")))
            }
            MethodKind::Ensemble { m } if m < 2 => {
                Err(Error::Method(format!("need M >= 2 members, got {m}")))
            }
            _ => Ok(()),
        }
    }

    /// Number of models this method scores with.
    pub fn n_models(&self) -> usize {
        match self.kind {
            MethodKind::Ensemble { m } => m,
            _ => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            MethodKind::McDropout { .. } => "mc_dropout",
            MethodKind::McDropconnect { .. } => "mc_dropconnect",
            MethodKind::Ensemble { .. } => "ensemble",
        }
    }

    pub fn aggregation_name(&self) -> &'static str {
        match self.aggregation {
            Aggregation::ChosenActionStd => "chosen_action_std",
            Aggregation::MaxActionStd => "max_action_std",
            Aggregation::MeanActionStd => "mean_action_std",
        }
    }

    /// Check the method against the model specs it will score.
    pub fn check_models(&self, models: &[&Network]) -> Result<()> {
        self.validate()?;
        match self.kind {
            MethodKind::McDropout { .. } => match models {
                [net] => match net.spec.stochastic {
                    StochasticSpec::Dropout { .. } => Ok(()),
                    _ => Err(Error::Method("mc_dropout requires a dropout network".into())),
                },
                _ => Err(Error::Method("mc_dropout scores exactly one model".into())),
            },
            MethodKind::McDropconnect { .. } => match models {
                [net] => match net.spec.stochastic {
                    StochasticSpec::DropConnect { .. } => Ok(()),
                    _ => Err(Error::Method("mc_dropconnect requires a dropconnect network".into())),
                },
                _ => Err(Error::Method("mc_dropconnect scores exactly one model".into())),
            },
            MethodKind::Ensemble { m } => {
                if models.len() != m {
                    return Err(Error::Method(format!(
                        "ensemble expects {m} members, got {}",
                        models.len()
                    )));
                }
                let dim = models[0].spec.output_dim();
                if models.iter().any(|n| n.spec.output_dim() != dim) {
                    return Err(Error::Spec("ensemble members disagree on output dim".into()));
                }
                Ok(())
            }
        }
    }
}

/// One labeled uncertainty score with provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreSample {
    pub score: f64,
    pub label: Label,
    pub env: String,
    pub variant: String,
    pub trial: usize,
    pub episode: usize,
    pub step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Id,
    Ood,
}

/// Sample mean and standard deviation (divisor n-1) per output.
fn mean_std(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len();
    let dim = samples[0].len();
    // mean as first-sample + mean offset: exact (and std exactly 0) when all
    // samples coincide, which the score contract relies on
    let mut mean = vec![0.0; dim];
    for s in samples {
        for ((m, v), base) in mean.iter_mut().zip(s).zip(&samples[0]) {
            *m += v - base;
        }
    }
    for (m, base) in mean.iter_mut().zip(&samples[0]) {
        *m = base + *m / n as f64;
    }
    let mut var = vec![0.0; dim];
    for s in samples {
        for ((v, x), m) in var.iter_mut().zip(s).zip(&mean) {
            let d = x - m;
            *v += d * d;
        }
    }
    let std = var.into_iter().map(|v| (v / (n - 1) as f64).sqrt()).collect();
    (mean, std)
}

/// K stochastic forward passes with fresh masks; per-output sample mean and
/// std.
pub fn mc_score(
    net: &Network,
    obs: &[f64],
    k: usize,
    rng: &mut Rng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if k < 2 {
        return Err(Error::Method(format!("need K >= 2 samples, got {k}")));
    }
    if matches!(net.spec.stochastic, StochasticSpec::None) {
        return Err(Error::Method("network spec has no stochastic layers".into()));
    }
    let samples: Vec<Vec<f64>> = (0..k)
        .map(|_| forward_eval(net, obs, StochasticMode::Sampled(rng)))
        .collect::<Result<_>>()?;
    Ok(mean_std(&samples))
}

/// Deterministic forward per member; mean and std across members.
pub fn ensemble_score(members: &[&Network], obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if members.len() < 2 {
        return Err(Error::Method(format!("need M >= 2 members, got {}", members.len())));
    }
    let dim = members[0].spec.output_dim();
    if members.iter().any(|n| n.spec.output_dim() != dim) {
        return Err(Error::Spec("ensemble members disagree on output dim".into()));
    }
    let samples: Vec<Vec<f64>> = members
        .iter()
        .map(|net| forward_eval(net, obs, StochasticMode::Deterministic))
        .collect::<Result<_>>()?;
    Ok(mean_std(&samples))
}

/// Reduce per-output stds to the scalar uncertainty score.
pub fn aggregate_score(mean: &[f64], std: &[f64], aggregation: Aggregation) -> f64 {
    if std.len() == 1 {
        return std[0];
    }
    match aggregation {
        Aggregation::ChosenActionStd => {
            let chosen = argmax(mean);
            std[chosen]
        }
        Aggregation::MaxActionStd => std.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        Aggregation::MeanActionStd => std.iter().sum::<f64>() / std.len() as f64,
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Bundles a method with the model(s) it scores.
pub struct Scorer<'a> {
    pub method: UncertaintyMethod,
    pub models: Vec<&'a Network>,
}

impl<'a> Scorer<'a> {
    pub fn new(method: UncertaintyMethod, models: Vec<&'a Network>) -> Result<Self> {
        method.check_models(&models)?;
        Ok(Self { method, models })
    }

    /// Scalar score plus the per-output means for one observation.
    pub fn step_score(&self, obs: &[f64], rng: &mut Rng) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let (mean, std) = match self.method.kind {
            MethodKind::McDropout { k } | MethodKind::McDropconnect { k } => {
                mc_score(self.models[0], obs, k, rng)?
            }
            MethodKind::Ensemble { .. } => ensemble_score(&self.models, obs)?,
        };
        let score = aggregate_score(&mean, &std, self.method.aggregation);
        Ok((score, mean, std))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::{forward, init_network, NetworkSpec, Tensor2};
    use crate::rng::rng_from;

    fn net_with(stochastic: StochasticSpec, seed: u64) -> Network {
        let mut spec = NetworkSpec::new(vec![3, 8, 2]);
        spec.stochastic = stochastic;
        init_network(&spec, seed).unwrap()
    }

    #[test]
    fn dropout_rate_zero_scores_exactly_zero() {
        let net = net_with(StochasticSpec::Dropout { rate: 0.0 }, 1);
        let mut rng = rng_from(2);
        let (_, std) = mc_score(&net, &[0.1, -0.2, 0.3], 50, &mut rng).unwrap();
        assert!(std.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn identical_masks_give_zero_std() {
        let net = net_with(StochasticSpec::DropConnect { rate: 0.5 }, 3);
        // force identical masks by replaying the same stream per pass
        let samples: Vec<Vec<f64>> = (0..5)
            .map(|_| {
                let mut rng = rng_from(99);
                forward(&net, &[0.4, 0.0, -0.9], crate::nncore::StochasticMode::Sampled(&mut rng))
                    .unwrap()
                    .0
            })
            .collect();
        let (_, std) = mean_std(&samples);
        assert!(std.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn mc_std_matches_bernoulli_closed_form() {
        // chain 1 -> 1 -> 1, identity activations, dropout on the single
        // hidden unit: output is w2*w1*x/q with prob q, else 0
        let mut spec = NetworkSpec::new(vec![1, 1, 1]);
        spec.activation = crate::nncore::Activation::Identity;
        spec.stochastic = StochasticSpec::Dropout { rate: 0.3 };
        let mut net = init_network(&spec, 0).unwrap();
        net.weights[0] = Tensor2::from_vec(1, 1, vec![0.8]).unwrap();
        net.weights[1] = Tensor2::from_vec(1, 1, vec![-1.5]).unwrap();
        let x = 2.0;
        let q: f64 = 0.7;
        let v = -1.5 * 0.8 * x; // deterministic output
        let analytic_std = (v * v * (1.0 - q) / q).sqrt();
        let k = 200_000;
        let mut rng = rng_from(7);
        let (mean, std) = mc_score(&net, &[x], k, &mut rng).unwrap();
        assert!((mean[0] - v).abs() < 0.05);
        assert!((std[0] - analytic_std).abs() / analytic_std < 0.02);
    }

    #[test]
    fn ensemble_two_point_formula() {
        let mut a = net_with(StochasticSpec::None, 1);
        let mut b = a.clone();
        // force constant outputs 0 and 2 via biases on a zero-weight output layer
        for w in a.weights.iter_mut().chain(b.weights.iter_mut()) {
            for v in w.data_mut() {
                *v = 0.0;
            }
        }
        a.biases[1] = vec![0.0, 0.0];
        b.biases[1] = vec![2.0, 2.0];
        let (mean, std) = ensemble_score(&[&a, &b], &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(mean, vec![1.0, 1.0]);
        assert!((std[0] - std::f64::consts::SQRT_2).abs() < 1e-12);
        // permutation invariance
        let (mean2, std2) = ensemble_score(&[&b, &a], &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(mean, mean2);
        assert_eq!(std, std2);
        // identical members → zero std
        let (_, std3) = ensemble_score(&[&a, &a, &a], &[0.0, 0.0, 0.0]).unwrap();
        assert!(std3.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn aggregation_definitions() {
        let mean = [1.0, 0.5];
        let std = [0.1, 0.7];
        assert_eq!(aggregate_score(&mean, &std, Aggregation::ChosenActionStd), 0.1);
        assert_eq!(aggregate_score(&mean, &std, Aggregation::MaxActionStd), 0.7);
        assert!((aggregate_score(&mean, &std, Aggregation::MeanActionStd) - 0.4).abs() < 1e-12);
        // continuous control: single output, aggregation irrelevant
        assert_eq!(aggregate_score(&[0.3], &[0.2], Aggregation::MaxActionStd), 0.2);
    }

    #[test]
    fn method_spec_mismatch_is_rejected() {
        let plain = net_with(StochasticSpec::None, 4);
        let mut rng = rng_from(0);
        assert!(mc_score(&plain, &[0.0, 0.0, 0.0], 5, &mut rng).is_err());
        let method = UncertaintyMethod {
            kind: MethodKind::McDropout { k: 5 },
            aggregation: Aggregation::ChosenActionStd,
        };
        assert!(method.check_models(&[&plain]).is_err());
        let dc = net_with(StochasticSpec::DropConnect { rate: 0.1 }, 4);
        assert!(method.check_models(&[&dc]).is_err());
        let bad_k = UncertaintyMethod {
            kind: MethodKind::McDropout { k: 1 },
            aggregation: Aggregation::ChosenActionStd,
        };
        assert!(bad_k.validate().is_err());
    }

    #[test]
    fn larger_k_shrinks_variability_of_the_mean() {
        let net = net_with(StochasticSpec::Dropout { rate: 0.5 }, 6);
        let obs = [0.5, -0.3, 0.8];
        let spread = |k: usize, seed: u64| {
            let mut rng = rng_from(seed);
            let means: Vec<f64> =
                (0..200).map(|_| mc_score(&net, &obs, k, &mut rng).unwrap().0[0]).collect();
            let (_, s) = mean_std(&means.iter().map(|&m| vec![m]).collect::<Vec<_>>());
            s[0]
        };
        // variance of the K-sample mean shrinks roughly like 1/K
        assert!(spread(100, 1) < spread(10, 1) * 0.6);
    }
}
