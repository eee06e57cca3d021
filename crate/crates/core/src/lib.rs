//! Simulation of the feedback loop between a matrix-factorization
//! recommender and agents whose choices follow a hidden ground-truth model.
//!
//! A [`TeacherModel`] holds each agent's probability of choosing each item.
//! A [`StudentModel`] is refit every timestep on the choices observed so far
//! and drives a [`StrategyKind`] that recommends one unseen item per agent.
//! [`run_experiment`] repeats this over seeded realizations and the
//! [`metrics`] module measures accuracy, inequality and instability.

pub mod error;
pub mod log;
pub mod metrics;
pub mod rng;
pub mod sim;
pub mod strategy;
pub mod student;
pub mod teacher;

pub use error::{Error, Result};
pub use log::{InteractionLog, Outcome};
pub use rng::RealizationSeeds;
pub use sim::{
    build_teacher, run_experiment, run_realization, run_realization_observed, seed_initial_data,
    ExperimentConfig, ExperimentError, RealizationResult, StepView,
};
pub use strategy::{recommend, RecommendationSlate, StrategyKind};
pub use student::{
    brier, HoldoutMode, Observation, StudentModel, TrainReport, TrainingDataset,
    TrainingHyperparams,
};
pub use teacher::{BetaCondition, TeacherModel};
