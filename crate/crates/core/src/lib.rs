//! Benchmark harness for out-of-distribution detection in deep reinforcement
//! learning.
//!
//! The crate trains small agents (DQN, DDPG) on from-scratch control
//! environments, generates out-of-distribution variants by changing physical
//! parameters or corrupting pixel observations, scores per-step epistemic
//! uncertainty (MC Dropout, MC DropConnect, ensembles) and evaluates detection
//! quality with ROC/AUC over repeated trials.

pub mod agents;
pub mod corruptions;
pub mod envs;
pub mod evalkit;
pub mod experiment;
pub mod nncore;
pub mod rng;
pub mod uncertainty;

mod error;
pub use error::{Error, Result};
