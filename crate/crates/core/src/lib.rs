//! Core of the co-learning diet game: the plant world, the fitness
//! classifier, the feedback-driven counterfactual explainer, the event-sourced
//! session engine, evaluation metrics and synthetic learners.

pub mod error;
pub mod explainer;
pub mod game;
pub mod metrics;
pub mod predictor;
pub mod rng;
pub mod simulator;
pub mod world;

pub use error::{Error, Result};
