//! Simulation and statistical-verification laboratory for supercritical
//! branching processes in varying and random environments.
//!
//! The process is `Z_0 = 1`, `Z_{n+1} = sum_{i<=Z_n} X_{n,i}` where the
//! offspring law of generation `n` is chosen by an environment sequence.
//! The normalized population `W_n = Z_n / P_n` (with `P_n` the product of
//! conditional means) is a nonnegative martingale under the quenched law;
//! this crate simulates trajectories of `(Z_n, W_n)`, computes the limit
//! objects attached to `W = lim W_n` (variance series, mixed-normal
//! fluctuation law, quenched moment generating functions, extinction
//! probabilities), and runs falsifiable desk-scale verification campaigns
//! for the known convergence-rate results.
//!
//! Module map:
//!
//! * [`offspring`] — reproduction laws: exact moments, probability
//!   generating functions, and convolution-closed total-offspring sampling
//!   for very large populations.
//! * [`env`] — environment models (deterministic/varying, i.i.d.,
//!   finite-state Markov), realized sequences and the shift `T^n`.
//! * [`engine`] — trajectory simulation, deep-horizon estimates of `W`,
//!   replicated fluctuation sampling.
//! * [`limits`] — `log P_n`, the variance series `delta^2`, the normalized
//!   statistic `U_n`, mixed-normal limit samples, quenched MGF recursion,
//!   extinction probabilities.
//! * [`verify`] — rate regression, two-sample Kolmogorov-Smirnov campaigns,
//!   supergeometric tail checks, exponential-moment probing.
//! * [`config`] / [`runner`] — experiment configuration and campaign
//!   execution behind the CLI and the Python bindings.

pub mod config;
pub mod engine;
pub mod env;
pub mod error;
pub mod limits;
pub mod numerics;
pub mod offspring;
pub mod presets;
pub mod report;
pub mod rng;
pub mod runner;
pub mod stats;
pub mod verify;

pub use engine::{simulate, Trajectory, WEstimate};
pub use env::{EnvironmentModel, EnvironmentSequence, ExtendRule};
pub use error::{Error, Result};
pub use offspring::OffspringLaw;
