use super::network::{Gradients, Network};
use super::tensor::Tensor2;
use crate::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Adam first/second moment accumulators, mirroring the network shapes.
#[derive(Debug, Clone)]
pub struct AdamState {
    m_w: Vec<Tensor2>,
    v_w: Vec<Tensor2>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        let zw = || net.weights.iter().map(|w| Tensor2::zeros(w.rows(), w.cols())).collect();
        let zb = || net.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        Self { m_w: zw(), v_w: zw(), m_b: zb(), v_b: zb(), t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

#[inline]
fn adam_update(p: &mut f64, g: f64, m: &mut f64, v: &mut f64, lr: f64, bc1: f64, bc2: f64) {
    *m = BETA1 * *m + (1.0 - BETA1) * g;
    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
    let m_hat = *m / bc1;
    let v_hat = *v / bc2;
    *p -= lr * m_hat / (v_hat.sqrt() + EPS);
}

/// One bias-corrected Adam step, updating the network in place.
///
/// Non-finite gradients are reported as a training error and the step is
/// skipped (parameters and optimizer state untouched).
pub fn sgd_adam_step(
    net: &mut Network,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if !grads.all_finite() {
        return Err(Error::Training("non-finite gradients; step skipped".into()));
    }
    state.t += 1;
    let bc1 = 1.0 - BETA1.powi(state.t as i32);
    let bc2 = 1.0 - BETA2.powi(state.t as i32);
    for l in 0..net.weights.len() {
        let w = net.weights[l].data_mut();
        let m = state.m_w[l].data_mut();
        let v = state.v_w[l].data_mut();
        let g = grads.dw[l].data();
        for i in 0..w.len() {
            adam_update(&mut w[i], g[i], &mut m[i], &mut v[i], lr, bc1, bc2);
        }
        let b = &mut net.biases[l];
        let mb = &mut state.m_b[l];
        let vb = &mut state.v_b[l];
        let gb = &grads.db[l];
        for i in 0..b.len() {
            adam_update(&mut b[i], gb[i], &mut mb[i], &mut vb[i], lr, bc1, bc2);
        }
    }
    Ok(())
}
