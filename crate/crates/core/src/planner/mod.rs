//! Model-based control: probabilistic ensemble dynamics, sampling-based
//! trajectory optimization and the interleaved data-collection loop.

mod buffer;
mod ensemble;
mod mpc;
mod optim;
mod pets;
mod rollout;

pub use buffer::TransitionBuffer;
pub use ensemble::{
    evaluate_nll, train_ensemble, Ensemble, EnsembleConfig, MemberCurve, Normalizer, StateEncoding, TrainReport, TrainSettings, STD_FLOOR,
};
pub use mpc::{Mpc, MpcConfig, Optimizer};
pub use optim::{cem_plan, mppi_average, mppi_plan, ActionBox, CemConfig, MppiConfig, Objective, Plan};
pub use pets::{pets_train, EpisodeSummary, PetsConfig, PetsIteration, PetsLog, PetsOutcome};
pub use rollout::{push_reward, rollout_ts1, rollout_ts1_with, EnsembleObjective, Rollout, StepReward};

use crate::env::EnvError;
use crate::nn::NnError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlannerError {
    #[error("invalid planner config: {0}")]
    Config(&'static str),
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("ensemble member {0} out of range (ensemble has {1})")]
    MemberIndex(usize, usize),
    #[error("transition buffer is empty")]
    EmptyBuffer,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Env(#[from] EnvError),
}
