//! Capacity-achieving input covariance for frequency-selective
//! Kronecker-correlated Rayleigh MIMO channels.
//!
//! The ergodic mutual information `I(Q) = E log|I + H Q H^H / sigma2|` is
//! approximated in closed form through the positive solution of a system of
//! `2L` canonical equations ([`canonical`]); the approximation ([`emi`]) is
//! strictly concave in `Q` and is maximized by iterative waterfilling
//! ([`optimizer`]). [`monte_carlo`] estimates the true `I(Q)` for validation.

pub mod canonical;
pub mod channel;
pub mod config;
pub mod covariance;
pub mod emi;
pub mod error;
pub mod harness;
pub mod matrix;
pub mod monte_carlo;
pub mod optimizer;

pub use canonical::{lemma1_diagnostic, solve_canonical, CanonicalSolution, SolverOptions};
pub use channel::{build_stats, sample_channel, ChannelRealization, ChannelStats, PathCluster, PathCorrelation};
pub use covariance::CovarianceMatrix;
pub use emi::{directional_derivative, emi_approx, v_function, EmiValue};
pub use error::{Error, Result};
pub use matrix::{ComplexMatrix, HermitianMatrix};
pub use monte_carlo::{emi_gap, emi_mc, EmiEstimate, EmiGap};
pub use optimizer::{
    optimize_covariance, reference_maximizer, restart_policy, waterfill, OptimizeReport,
    OptimizerSettings, WaterfillResult,
};
