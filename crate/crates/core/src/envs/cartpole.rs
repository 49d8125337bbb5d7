use rand::Rng as _;

use super::{Action, ActionSpace, Environment, Observation, StepResult};
use crate::rng::Rng;
use crate::{Error, Result};

/// Physical parameters. `pole_half_length` is half the pole's length, so the
/// default full pole is one meter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartpoleParams {
    pub gravity: f64,
    pub mass_cart: f64,
    pub pole_half_length: f64,
    pub mass_pole: f64,
    pub force_magnitude: f64,
    pub dt: f64,
}

impl Default for CartpoleParams {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            mass_cart: 1.0,
            pole_half_length: 0.5,
            mass_pole: 0.1,
            force_magnitude: 10.0,
            dt: 0.02,
        }
    }
}

impl CartpoleParams {
    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.gravity,
            self.mass_cart,
            self.pole_half_length,
            self.mass_pole,
            self.force_magnitude,
            self.dt,
        ];
        if vals.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("cartpole parameters must be strictly positive".into()));
        }
        Ok(())
    }
}

const X_THRESHOLD: f64 = 2.4;
const THETA_THRESHOLD: f64 = 12.0 * std::f64::consts::PI / 180.0;
const MAX_STEPS: usize = 500;

#[derive(Debug, Clone)]
pub struct Cartpole {
    pub params: CartpoleParams,
    pub(crate) variant: String,
    /// (x, x_dot, theta, theta_dot)
    state: [f64; 4],
    steps: usize,
    done: bool,
}

impl Cartpole {
    pub fn new(params: CartpoleParams) -> Self {
        Self { params, variant: "default".into(), state: [0.0; 4], steps: 0, done: true }
    }

    pub fn state(&self) -> [f64; 4] {
        self.state
    }

    /// Set the physical state directly (diagnostics and dynamics checks).
    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
        self.done = false;
        self.steps = 0;
    }
}

impl Environment for Cartpole {
    fn reset(&mut self, rng: &mut Rng) -> Observation {
        for v in self.state.iter_mut() {
            *v = rng.random::<f64>() * 0.1 - 0.05;
        }
        self.steps = 0;
        self.done = false;
        Observation::Vector(self.state.to_vec())
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        if self.done {
            return Err(Error::Usage("step on terminal cartpole state".into()));
        }
        let force = match action {
            Action::Discrete(0) => -self.params.force_magnitude,
            Action::Discrete(1) => self.params.force_magnitude,
            other => return Err(Error::Usage(format!("invalid cartpole action {other:?}"))),
        };
        let p = &self.params;
        let [x, x_dot, theta, theta_dot] = self.state;
        let total_mass = p.mass_cart + p.mass_pole;
        let (sin_t, cos_t) = theta.sin_cos();
        let temp =
            (force + p.mass_pole * p.pole_half_length * theta_dot * theta_dot * sin_t) / total_mass;
        let theta_acc = (p.gravity * sin_t - cos_t * temp)
            / (p.pole_half_length * (4.0 / 3.0 - p.mass_pole * cos_t * cos_t / total_mass));
        let x_acc = temp - p.mass_pole * p.pole_half_length * theta_acc * cos_t / total_mass;
        // explicit Euler, position updated with the old velocity
        self.state = [
            x + p.dt * x_dot,
            x_dot + p.dt * x_acc,
            theta + p.dt * theta_dot,
            theta_dot + p.dt * theta_acc,
        ];
        self.steps += 1;
        let terminated =
            self.state[0].abs() > X_THRESHOLD || self.state[2].abs() > THETA_THRESHOLD;
        let truncated = !terminated && self.steps >= MAX_STEPS;
        self.done = terminated || truncated;
        Ok(StepResult {
            obs: Observation::Vector(self.state.to_vec()),
            reward: 1.0,
            terminated,
            truncated,
        })
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(2)
    }

    fn env_id(&self) -> &'static str {
        "cartpole"
    }

    fn variant_id(&self) -> String {
        self.variant.clone()
    }
}
