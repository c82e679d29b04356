//! Approximately equivariant reinforcement learning at desk scale.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which is what the tolerances in the test
//! suites assume.

pub mod autograd;
pub mod envs;
pub mod error;
pub mod fit;
pub mod groups;
pub mod mdp;
pub mod metrics;
pub mod rng;
pub mod scalar;
pub mod signalconv;

pub use error::{Error, Result};
pub use groups::{FiniteGroup, GridAction, GroupKind};
pub use mdp::MdpSymmetry;
pub use scalar::Scalar;

pub type Representation = groups::Representation<f64>;
pub type GroupSignal = signalconv::GroupSignal<f64>;
pub type GridSignal = signalconv::GridSignal<f64>;
pub type GridKernel = signalconv::GridKernel<f64>;
pub type ExactKernel = signalconv::ExactKernel<f64>;
pub type RelaxedKernel = signalconv::RelaxedKernel<f64>;
pub type Tape = autograd::Tape<f64>;
pub type FiniteMdp = mdp::FiniteMdp<f64>;
pub type IpmSpec = mdp::IpmSpec<f64>;
pub type GapReport = mdp::GapReport<f64>;
pub type BoundReport = mdp::BoundReport<f64>;

pub type Representation32 = groups::Representation<f32>;
pub type GroupSignal32 = signalconv::GroupSignal<f32>;
pub type FiniteMdp32 = mdp::FiniteMdp<f32>;
