//! Two opposing groups of agents with stochastic Bernoulli communication.
//!
//! Agents in the same group align their opinions through randomly sampled
//! couplings ψ⁺, while agents in opposite groups anti-align through ψ⁻. The
//! crate provides:
//!
//! - [`model`]: state and coupling data, the linear right-hand side, and the
//!   mean/deviation decomposition.
//! - [`sampling`]: counter-based Bernoulli coupling generation for the static
//!   and the piecewise-resampled scenario.
//! - [`spectral`]: Fiedler numbers, row/column mean statistics, the coupling
//!   condition bundle and the binomial tail bound.
//! - [`integrator`]: exact matrix-exponential propagation with an RK4
//!   cross-check.
//! - [`diagnostics`]: separation indicators, hyperplane separation, and the
//!   bi-stable Riccati comparison bounds.
//! - [`experiments`]: single trajectories, the λ(T)-vs-N sweep, concentration
//!   trials.
//! - [`io`] and [`cli`]: configuration loading, CSV/JSON writers, and the
//!   command-line surface.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod integrator;
pub mod io;
pub mod model;
pub mod sampling;
pub mod spectral;

pub use error::{Error, Result};
pub use model::{AgentConfiguration, CouplingSet, GroupStatistics};
pub use sampling::{CommunicationSchedule, Scenario, ScenarioConfig};
