//! Exact, relaxed and unconstrained Q-networks regressed onto tabular Q*.
//!
//! This is a supervised stand-in for critic training: targets come from
//! value iteration, so the only thing that varies between kinds is the
//! architecture's symmetry constraint.

pub mod eval;
pub mod experiment;
pub mod qnet;
pub mod train;

pub use eval::{greedy_policy_return, truncated_policy_return, QFunction, QTable, ReturnEstimate};
pub use experiment::{
    mean_ci95, run_fit_experiment, Check, EvalConfig, FitExperimentConfig, FitSummary, MeanCi, RunResult,
};
pub use qnet::{build_qnet, matched_dense_widths, NetKind, Nonlinearity, Param, QNet, QNetSpec};
pub use train::{
    config_hash, gradient_step, loss, loss_and_grad, train_q_regression, QDataset, SpreadSnapshot, TrainConfig,
    TrainLog, DIVERGENCE_LOSS,
};
