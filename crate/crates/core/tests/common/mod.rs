//! Shared helpers for integration tests.

use oodrl::nncore::{
    backward, forward_with_draw, init_network, Activation, Network, NetworkSpec, OutputActivation,
    StochasticSpec,
};
use oodrl::rng::{rng_from, Rng};
use rand::Rng as _;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;
const MASK_SEED: u64 = 0xF00D;

/// Scalar loss `g . f(x)` with masks replayed from a fixed stream, so the same
/// mask realization is used for every (possibly perturbed) evaluation.
fn loss(net: &Network, x: &[f64], g: &[f64]) -> f64 {
    let mut mask_rng = rng_from(MASK_SEED);
    let dc = net.sample_dropconnect(&mut mask_rng);
    let dropout_rng: Option<&mut Rng> = match net.spec.stochastic {
        StochasticSpec::Dropout { .. } => Some(&mut mask_rng),
        _ => None,
    };
    let (out, _) = forward_with_draw(net, x, dc, dropout_rng).unwrap();
    out.iter().zip(g).map(|(o, gi)| o * gi).sum()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

/// Compare an analytic gradient entry against a central difference. The entry
/// is skipped when forward and backward one-sided differences disagree, which
/// flags a ReLU kink inside the stencil (including pre-activations sitting
/// exactly at zero) where finite differences are invalid.
fn check_entry(an: f64, mut eval: impl FnMut(f64) -> f64, what: &str, skipped: &mut usize) {
    let f0 = eval(0.0);
    let fp = eval(EPS);
    let fm = eval(-EPS);
    let fwd = (fp - f0) / EPS;
    let bwd = (f0 - fm) / EPS;
    if rel_err(fwd, bwd) > 1e-3 {
        *skipped += 1;
        return;
    }
    let fd = (fp - fm) / (2.0 * EPS);
    assert!(rel_err(an, fd) < TOL, "{what}: analytic {an} vs fd {fd}");
}

fn random_spec(rng: &mut Rng, i: usize) -> NetworkSpec {
    let depth = rng.random_range(2..=4usize);
    let dims: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=8usize)).collect();
    let mut spec = NetworkSpec::new(dims);
    spec.activation = if i % 2 == 0 { Activation::Relu } else { Activation::Tanh };
    spec.output_activation = if i % 3 == 0 {
        OutputActivation::TanhScaled { bound: 2.0 }
    } else {
        OutputActivation::Identity
    };
    spec.stochastic = match i % 4 {
        0 | 1 => StochasticSpec::None,
        2 => StochasticSpec::Dropout { rate: 0.3 },
        _ => StochasticSpec::DropConnect { rate: 0.3 },
    };
    spec
}

/// Check backprop against central finite differences over 50 random
/// architectures (relative error < 1e-4, frozen masks). Panics on mismatch;
/// returns (entries checked, kink skips).
pub fn gradient_suite() -> (usize, usize) {
    let mut rng = rng_from(20240817);
    let mut checked = 0usize;
    let mut skipped = 0usize;
    for i in 0..50u64 {
        let spec = random_spec(&mut rng, i as usize);
        let net = init_network(&spec, 1000 + i).unwrap();
        let x: Vec<f64> = (0..spec.input_dim()).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let g: Vec<f64> =
            (0..spec.output_dim()).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();

        // analytic gradients under the same frozen masks
        let mut mask_rng = rng_from(MASK_SEED);
        let dc = net.sample_dropconnect(&mut mask_rng);
        let dropout_rng: Option<&mut Rng> = match net.spec.stochastic {
            StochasticSpec::Dropout { .. } => Some(&mut mask_rng),
            _ => None,
        };
        let (_, tape) = forward_with_draw(&net, &x, dc, dropout_rng).unwrap();
        let grads = backward(&net, &tape, &g).unwrap();

        for l in 0..net.weights.len() {
            for idx in 0..net.weights[l].data().len() {
                check_entry(
                    grads.dw[l].data()[idx],
                    |h| {
                        let mut n = net.clone();
                        n.weights[l].data_mut()[idx] += h;
                        loss(&n, &x, &g)
                    },
                    &format!("spec {i} layer {l} weight {idx}"),
                    &mut skipped,
                );
                checked += 1;
            }
            for bi in 0..net.biases[l].len() {
                check_entry(
                    grads.db[l][bi],
                    |h| {
                        let mut n = net.clone();
                        n.biases[l][bi] += h;
                        loss(&n, &x, &g)
                    },
                    &format!("spec {i} layer {l} bias {bi}"),
                    &mut skipped,
                );
                checked += 1;
            }
        }
        for d in 0..x.len() {
            check_entry(
                grads.dx[d],
                |h| {
                    let mut xs = x.clone();
                    xs[d] += h;
                    loss(&net, &xs, &g)
                },
                &format!("spec {i} input {d}"),
                &mut skipped,
            );
            checked += 1;
        }
    }
    assert!(checked > 1000, "too few gradient entries checked: {checked}");
    assert!(skipped * 100 < checked, "too many kink skips: {skipped} of {checked}");
    (checked, skipped)
}
