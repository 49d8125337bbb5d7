use std::rc::Rc;

use rand::{Rng as _, RngCore};
use serde::{Deserialize, Serialize};

use super::tensor::Tensor2;
use crate::rng::Rng;
use crate::{Error, Result};

/// Hidden-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    #[inline]
    fn grad(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Output-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    /// `bound * tanh(z)` — bounded continuous actions.
    TanhScaled { bound: f64 },
}

/// Stochastic regularization applied to hidden layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StochasticSpec {
    None,
    /// Bernoulli mask on hidden activations, kept units scaled by 1/(1-rate).
    Dropout { rate: f64 },
    /// Bernoulli mask on hidden-layer weight entries, same inverted scaling.
    /// Biases are never masked.
    DropConnect { rate: f64 },
}

impl StochasticSpec {
    pub fn rate(&self) -> f64 {
        match self {
            StochasticSpec::None => 0.0,
            StochasticSpec::Dropout { rate } | StochasticSpec::DropConnect { rate } => *rate,
        }
    }
}

/// Architecture description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Layer widths, input first, output last. At least two entries.
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
    pub output_activation: OutputActivation,
    pub stochastic: StochasticSpec,
}

impl NetworkSpec {
    pub fn new(layer_dims: Vec<usize>) -> Self {
        Self {
            layer_dims,
            activation: Activation::Relu,
            output_activation: OutputActivation::Identity,
            stochastic: StochasticSpec::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::Spec("need at least input and output dims".into()));
        }
        if self.layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::Spec("zero-width layer".into()));
        }
        let rate = self.stochastic.rate();
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Spec(format!("stochastic rate {rate} must be in [0,1)")));
        }
        if let OutputActivation::TanhScaled { bound } = self.output_activation {
            if !(bound > 0.0) {
                return Err(Error::Spec(format!("tanh_scaled bound {bound} must be > 0")));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    /// Number of weight layers.
    pub fn n_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }
}

/// Feed-forward network. Value-semantic: `clone()` yields a deep copy that is
/// fully independent of the original (target networks, ensemble members).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub spec: NetworkSpec,
    /// One `out_dim x in_dim` matrix per layer.
    pub weights: Vec<Tensor2>,
    pub biases: Vec<Vec<f64>>,
}

/// Glorot-uniform initialization; biases start at zero.
/// The same `(spec, seed)` always produces a bit-identical network.
pub fn init_network(spec: &NetworkSpec, seed: u64) -> Result<Network> {
    spec.validate()?;
    let mut rng = crate::rng::rng_from(seed);
    let mut weights = Vec::with_capacity(spec.n_layers());
    let mut biases = Vec::with_capacity(spec.n_layers());
    for l in 0..spec.n_layers() {
        let fan_in = spec.layer_dims[l];
        let fan_out = spec.layer_dims[l + 1];
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound)
            .collect();
        weights.push(Tensor2::from_vec(fan_out, fan_in, data)?);
        biases.push(vec![0.0; fan_out]);
    }
    Ok(Network { spec: spec.clone(), weights, biases })
}

impl Network {
    /// Index of the first non-stochastic layer: masks apply to hidden layers
    /// only, never the output layer.
    fn n_hidden(&self) -> usize {
        self.spec.n_layers() - 1
    }

    /// Draw one DropConnect mask over all hidden-layer weights. Returns `None`
    /// when the spec does not use DropConnect. Training loops share one draw
    /// across a minibatch.
    pub fn sample_dropconnect(&self, rng: &mut Rng) -> Option<Rc<DropConnectDraw>> {
        let rate = match self.spec.stochastic {
            StochasticSpec::DropConnect { rate } => rate,
            _ => return None,
        };
        let sampler = MaskSampler::new(1.0 - rate);
        let scale = 1.0 / (1.0 - rate);
        let mut layers = Vec::with_capacity(self.spec.n_layers());
        for (l, w) in self.weights.iter().enumerate() {
            if l >= self.n_hidden() {
                layers.push(None);
                continue;
            }
            let mut eff = w.clone();
            let mut mask = vec![false; w.rows() * w.cols()];
            for (i, v) in eff.data_mut().iter_mut().enumerate() {
                if sampler.keep(rng) {
                    mask[i] = true;
                    *v *= scale;
                } else {
                    *v = 0.0;
                }
            }
            layers.push(Some(MaskedLayer { eff, mask }));
        }
        Some(Rc::new(DropConnectDraw { layers, scale }))
    }
}

/// One sampled DropConnect realization: masked + rescaled weight matrices for
/// the hidden layers.
#[derive(Debug)]
pub struct DropConnectDraw {
    layers: Vec<Option<MaskedLayer>>,
    scale: f64,
}

#[derive(Debug)]
struct MaskedLayer {
    eff: Tensor2,
    mask: Vec<bool>,
}

/// Whether a forward pass samples stochastic masks.
/// Deterministic mode never consumes randomness.
pub enum StochasticMode<'a> {
    Deterministic,
    Sampled(&'a mut Rng),
}

/// Fast Bernoulli(keep) sampler via a u32 threshold comparison.
struct MaskSampler {
    thresh: u64,
}

impl MaskSampler {
    fn new(keep: f64) -> Self {
        Self { thresh: (keep * 4_294_967_296.0) as u64 }
    }

    #[inline]
    fn keep(&self, rng: &mut Rng) -> bool {
        (rng.next_u32() as u64) < self.thresh
    }
}

/// Per-layer records sufficient for an exact backward pass under the sampled
/// masks.
pub struct Tape {
    layer_inputs: Vec<Vec<f64>>,
    pre_acts: Vec<Vec<f64>>,
    dropout_masks: Vec<Option<Vec<bool>>>,
    dc: Option<Rc<DropConnectDraw>>,
    dims: Vec<usize>,
}

/// Forward pass returning the output and a tape for [`backward`].
///
/// Sampled mode draws fresh masks from the provided stream; deterministic mode
/// applies no masks and no rescaling.
pub fn forward(net: &Network, input: &[f64], mode: StochasticMode) -> Result<(Vec<f64>, Tape)> {
    match mode {
        StochasticMode::Deterministic => forward_with_draw(net, input, None, None),
        StochasticMode::Sampled(rng) => {
            let dc = net.sample_dropconnect(rng);
            forward_with_draw(net, input, dc, Some(rng))
        }
    }
}

/// Forward pass with an externally sampled DropConnect draw (shared across a
/// minibatch) and/or a stream for dropout masks.
pub fn forward_with_draw(
    net: &Network,
    input: &[f64],
    dc: Option<Rc<DropConnectDraw>>,
    mut dropout_rng: Option<&mut Rng>,
) -> Result<(Vec<f64>, Tape)> {
    if input.len() != net.spec.input_dim() {
        return Err(Error::Shape(format!(
            "input length {} != {}",
            input.len(),
            net.spec.input_dim()
        )));
    }
    let n_layers = net.spec.n_layers();
    let dropout = match (net.spec.stochastic, dropout_rng.as_ref()) {
        (StochasticSpec::Dropout { rate }, Some(_)) if rate > 0.0 => {
            Some((MaskSampler::new(1.0 - rate), 1.0 / (1.0 - rate)))
        }
        (StochasticSpec::Dropout { .. }, Some(_)) => {
            // rate 0: consume the stream identically but masks are all-keep
            Some((MaskSampler::new(1.0), 1.0))
        }
        _ => None,
    };

    let mut layer_inputs = Vec::with_capacity(n_layers);
    let mut pre_acts = Vec::with_capacity(n_layers);
    let mut dropout_masks = Vec::with_capacity(n_layers);
    let mut x = input.to_vec();
    let mut z = Vec::new();
    for l in 0..n_layers {
        let w = match dc.as_deref().and_then(|d| d.layers[l].as_ref()) {
            Some(m) => &m.eff,
            None => &net.weights[l],
        };
        w.matvec_add(&x, &net.biases[l], &mut z);
        pre_acts.push(z.clone());
        layer_inputs.push(std::mem::take(&mut x));
        if l + 1 < n_layers {
            let mut a: Vec<f64> = z.iter().map(|&v| net.spec.activation.apply(v)).collect();
            let mask = if let Some((sampler, scale)) = &dropout {
                let rng = dropout_rng.as_deref_mut().unwrap();
                let mask: Vec<bool> = (0..a.len()).map(|_| sampler.keep(rng)).collect();
                for (v, &keep) in a.iter_mut().zip(&mask) {
                    *v = if keep { *v * scale } else { 0.0 };
                }
                Some(mask)
            } else {
                None
            };
            dropout_masks.push(mask);
            x = a;
        } else {
            dropout_masks.push(None);
            x = match net.spec.output_activation {
                OutputActivation::Identity => z.clone(),
                OutputActivation::TanhScaled { bound } => {
                    z.iter().map(|&v| bound * v.tanh()).collect()
                }
            };
        }
    }
    let tape = Tape {
        layer_inputs,
        pre_acts,
        dropout_masks,
        dc,
        dims: net.spec.layer_dims.clone(),
    };
    Ok((x, tape))
}

/// Forward pass without a tape, drawing masks on the fly. Produces bit-equal
/// outputs to [`forward`] under the same stream.
pub fn forward_eval(net: &Network, input: &[f64], mode: StochasticMode) -> Result<Vec<f64>> {
    if input.len() != net.spec.input_dim() {
        return Err(Error::Shape(format!(
            "input length {} != {}",
            input.len(),
            net.spec.input_dim()
        )));
    }
    let mut rng = match mode {
        StochasticMode::Deterministic => None,
        StochasticMode::Sampled(r) => Some(r),
    };
    let n_layers = net.spec.n_layers();
    let n_hidden = net.n_hidden();
    let mut x = input.to_vec();
    let mut z = Vec::new();
    for l in 0..n_layers {
        let w = &net.weights[l];
        match (net.spec.stochastic, rng.as_deref_mut()) {
            (StochasticSpec::DropConnect { rate }, Some(rng)) if l < n_hidden => {
                let sampler = MaskSampler::new(1.0 - rate);
                let scale = 1.0 / (1.0 - rate);
                z.clear();
                z.reserve(w.rows());
                for r in 0..w.rows() {
                    let row = w.row(r);
                    let mut acc = net.biases[l][r];
                    for (wv, xv) in row.iter().zip(&x) {
                        if sampler.keep(rng) {
                            acc += wv * scale * xv;
                        }
                    }
                    z.push(acc);
                }
            }
            _ => w.matvec_add(&x, &net.biases[l], &mut z),
        }
        if l + 1 < n_layers {
            let mut a: Vec<f64> = z.iter().map(|&v| net.spec.activation.apply(v)).collect();
            if let (StochasticSpec::Dropout { rate }, Some(rng)) =
                (net.spec.stochastic, rng.as_deref_mut())
            {
                let sampler = MaskSampler::new(1.0 - rate);
                let scale = if rate > 0.0 { 1.0 / (1.0 - rate) } else { 1.0 };
                for v in a.iter_mut() {
                    *v = if sampler.keep(rng) { *v * scale } else { 0.0 };
                }
            }
            x = a;
        } else {
            x = match net.spec.output_activation {
                OutputActivation::Identity => z.clone(),
                OutputActivation::TanhScaled { bound } => {
                    z.iter().map(|&v| bound * v.tanh()).collect()
                }
            };
        }
    }
    Ok(x)
}

/// Gradients with respect to every weight, bias and the network input.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub dw: Vec<Tensor2>,
    pub db: Vec<Vec<f64>>,
    /// Gradient with respect to the input vector (used to chain the critic
    /// into the actor in DDPG).
    pub dx: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            dw: net.weights.iter().map(|w| Tensor2::zeros(w.rows(), w.cols())).collect(),
            db: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            dx: vec![0.0; net.spec.input_dim()],
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.dw.iter_mut().zip(&other.dw) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
        for (a, b) in self.db.iter_mut().zip(&other.db) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (x, y) in self.dx.iter_mut().zip(&other.dx) {
            *x += y;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for w in self.dw.iter_mut() {
            for x in w.data_mut() {
                *x *= c;
            }
        }
        for b in self.db.iter_mut() {
            for x in b.iter_mut() {
                *x *= c;
            }
        }
        for x in self.dx.iter_mut() {
            *x *= c;
        }
    }

    pub fn global_norm(&self) -> f64 {
        let mut acc = 0.0;
        for w in &self.dw {
            for x in w.data() {
                acc += x * x;
            }
        }
        for b in &self.db {
            for x in b {
                acc += x * x;
            }
        }
        acc.sqrt()
    }

    pub fn clip_global_norm(&mut self, max_norm: f64) {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            let c = max_norm / norm;
            for w in self.dw.iter_mut() {
                for x in w.data_mut() {
                    *x *= c;
                }
            }
            for b in self.db.iter_mut() {
                for x in b.iter_mut() {
                    *x *= c;
                }
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.dw.iter().all(|w| w.all_finite())
            && self.db.iter().flatten().all(|v| v.is_finite())
            && self.dx.iter().all(|v| v.is_finite())
    }
}

/// Exact reverse-mode gradients under the masks recorded on the tape.
pub fn backward(net: &Network, tape: &Tape, output_grad: &[f64]) -> Result<Gradients> {
    if tape.dims != net.spec.layer_dims {
        return Err(Error::Usage("tape does not match network architecture".into()));
    }
    if output_grad.len() != net.spec.output_dim() {
        return Err(Error::Shape(format!(
            "output grad length {} != {}",
            output_grad.len(),
            net.spec.output_dim()
        )));
    }
    let n_layers = net.spec.n_layers();
    let mut grads = Gradients::zeros_like(net);

    // delta through the output activation
    let z_out = &tape.pre_acts[n_layers - 1];
    let mut delta: Vec<f64> = match net.spec.output_activation {
        OutputActivation::Identity => output_grad.to_vec(),
        OutputActivation::TanhScaled { bound } => z_out
            .iter()
            .zip(output_grad)
            .map(|(&z, &g)| {
                let t = z.tanh();
                g * bound * (1.0 - t * t)
            })
            .collect(),
    };

    let mut grad_x = Vec::new();
    for l in (0..n_layers).rev() {
        let x = &tape.layer_inputs[l];
        let masked = tape.dc.as_deref().and_then(|d| d.layers[l].as_ref());
        // dW and db
        {
            let dw = &mut grads.dw[l];
            let cols = dw.cols();
            match masked {
                Some(m) => {
                    let scale = tape.dc.as_deref().unwrap().scale;
                    for (i, &d) in delta.iter().enumerate() {
                        let row = &mut dw.data_mut()[i * cols..(i + 1) * cols];
                        let mrow = &m.mask[i * cols..(i + 1) * cols];
                        for ((gv, &xv), &keep) in row.iter_mut().zip(x).zip(mrow) {
                            if keep {
                                *gv = d * xv * scale;
                            }
                        }
                    }
                }
                None => {
                    for (i, &d) in delta.iter().enumerate() {
                        let row = &mut dw.data_mut()[i * cols..(i + 1) * cols];
                        for (gv, &xv) in row.iter_mut().zip(x) {
                            *gv = d * xv;
                        }
                    }
                }
            }
            grads.db[l].copy_from_slice(&delta);
        }
        // grad wrt layer input, through the effective weights
        let w = match masked {
            Some(m) => &m.eff,
            None => &net.weights[l],
        };
        w.matvec_transpose(&delta, &mut grad_x);
        if l == 0 {
            grads.dx.copy_from_slice(&grad_x);
        } else {
            // back through dropout then the activation of layer l-1
            if let Some(mask) = &tape.dropout_masks[l - 1] {
                let rate = net.spec.stochastic.rate();
                let scale = if rate > 0.0 { 1.0 / (1.0 - rate) } else { 1.0 };
                for (g, &keep) in grad_x.iter_mut().zip(mask) {
                    *g = if keep { *g * scale } else { 0.0 };
                }
            }
            let z = &tape.pre_acts[l - 1];
            delta = grad_x
                .iter()
                .zip(z)
                .map(|(&g, &zv)| g * net.spec.activation.grad(zv))
                .collect();
        }
    }
    Ok(grads)
}
