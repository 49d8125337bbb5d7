//! From-scratch control environments: Cartpole, Pendulum, and MiniPong, with
//! every physical parameter settable to produce out-of-distribution variants.

mod cartpole;
mod minipong;
mod pendulum;
mod registry;

pub use cartpole::{Cartpole, CartpoleParams};
pub use minipong::{MiniPong, MiniPongParams};
pub use pendulum::{Pendulum, PendulumParams};
pub use registry::{
    list_presets, make_env, make_variant, parse_preset, parse_preset_with, preset_grid, ENV_IDS,
};

use crate::corruptions::Frame;
use crate::rng::Rng;
use crate::Result;

/// What an agent observes after one step.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Vector(Vec<f64>),
    /// Stack of grayscale frames, oldest first, values in [0,1].
    Frames(Vec<Frame>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous { low: f64, high: f64 },
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Single-threaded environment state machine. Instances are transferable
/// between threads; distinct instances never share state.
pub trait Environment: Send {
    fn reset(&mut self, rng: &mut Rng) -> Observation;
    fn step(&mut self, action: &Action) -> Result<StepResult>;
    fn action_space(&self) -> ActionSpace;
    fn env_id(&self) -> &'static str;
    /// "default" or "param/value" / "kind/severity" for variants.
    fn variant_id(&self) -> String;
}
