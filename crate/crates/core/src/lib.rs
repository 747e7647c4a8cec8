//! Decentralized quantized Q-learning for stochastic games on continuous
//! state spaces, plus exact Markov-chain analysis of the induced
//! policy-update dynamics.
//!
//! The crate has three layers:
//!
//! * game definitions and policy machinery ([`game`], [`quantize`]): games
//!   on a compact interval with finite action sets, replayable sampling, and
//!   Monte Carlo policy evaluation;
//! * learning ([`env_model`], [`learning`]): each agent's finite environment
//!   model with a value-iteration oracle, and the multi-phase decentralized
//!   Q-learning driver;
//! * analysis ([`dynamics`], [`experiments`]): the best-reply graph over the
//!   joint policy space, the induced absorbing chain with closed-form
//!   absorption probabilities and expected hitting times, and the batch
//!   experiment runner.
//!
//! Everything numeric is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the `*64` aliases below fix `f64`, the precision the CLI uses.

pub mod dynamics;
pub mod env_model;
pub mod error;
pub mod experiments;
pub mod game;
pub mod grid;
pub mod learning;
pub mod linalg;
pub mod quantize;
pub mod rng;
pub mod scalar;

pub use error::{CoreError, Result};
pub use rng::{child_rng, child_seed, SimRng};
pub use scalar::Scalar;

/// `f64` instantiations of the main types.
pub type GameSpec64 = game::GameSpec<f64>;
pub type FiniteGame64 = game::FiniteGame<f64>;
pub type TeamGameParams64 = game::TeamGameParams<f64>;
pub type Quantizer64 = quantize::Quantizer<f64>;
pub type FiniteEnvModel64 = env_model::FiniteEnvModel<f64>;
pub type QTable64 = learning::QTable<f64>;
pub type LearnerConfig64 = learning::LearnerConfig<f64>;
pub type BestReplyGraph64 = dynamics::BestReplyGraph<f64>;
pub type PolicyChain64 = dynamics::PolicyChain<f64>;
pub type ExperimentConfig64 = experiments::ExperimentConfig<f64>;
