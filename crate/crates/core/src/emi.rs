//! Large-system approximation of the ergodic mutual information.
//!
//! For `Q` in `C_1`,
//!
//! ```text
//! Ibar(Q) = log|I + C(delta~)| + log|I + Q C~(delta)| - sigma2 t sum_l delta_l delta~_l
//! ```
//!
//! with `(delta, delta~)` the canonical solution at `Q`, `C(k~) = sum k~_l C_r(l)`
//! and `C~(k) = sum k_l C_t(l)`. The same expression with free `(kappa, kappa~)`
//! is [`v_function`]; its partial derivatives in `kappa`, `kappa~` vanish at the
//! canonical solution, so the gradient of `Ibar` is the gradient of `V` with
//! `delta` frozen.

use crate::canonical::{solve_canonical, CanonicalSolution, SolverOptions};
use crate::channel::ChannelStats;
use crate::covariance::CovarianceMatrix;
use crate::error::{Error, Result};
use crate::matrix::{general_inverse, log_det_i_plus, trace_product, ComplexMatrix, HermitianMatrix};

#[derive(Clone, Debug)]
pub struct EmiValue {
    /// Nats.
    pub value: f64,
    pub solution: CanonicalSolution,
}

pub fn emi_approx(stats: &ChannelStats, q: &CovarianceMatrix, opts: &SolverOptions) -> Result<EmiValue> {
    let solution = solve_canonical(stats, q, opts)?;
    let value = v_function(stats, q, &solution.delta, &solution.delta_tilde)?;
    Ok(EmiValue { value, solution })
}

/// `V(Q, kappa, kappa~)` in nats. The second log-det is evaluated on
/// `Q^1/2 C~(kappa) Q^1/2`.
pub fn v_function(stats: &ChannelStats, q: &CovarianceMatrix, kappa: &[f64], kappa_tilde: &[f64]) -> Result<f64> {
    let l = stats.num_paths();
    if kappa.len() != l || kappa_tilde.len() != l {
        return Err(Error::Dimension("kappa vectors need one entry per path".into()));
    }
    if kappa.iter().chain(kappa_tilde).any(|&k| !(k >= 0.0)) {
        return Err(Error::InvalidInput("kappa entries must be nonnegative".into()));
    }
    let receive = log_det_i_plus(&stats.receive_combination(kappa_tilde))?;
    let transmit = log_det_i_plus(&stats.transmit_combination(kappa).congruence(q.sqrt().as_matrix()))?;
    let coupling: f64 = kappa.iter().zip(kappa_tilde).map(|(a, b)| a * b).sum();
    Ok(receive + transmit - stats.sigma2() * stats.t() as f64 * coupling)
}

/// `G = C~(delta) (I + Q C~(delta))^-1`, Hermitian, so that the derivative of
/// `Q -> log|I + Q C~(delta)|` in direction `D` is `Tr(G D)`.
pub fn frozen_gradient(stats: &ChannelStats, q: &CovarianceMatrix, delta: &[f64]) -> HermitianMatrix {
    let c_tilde = stats.transmit_combination(delta);
    let t = stats.t();
    let m = ComplexMatrix::identity(t, t) + q.matrix().as_matrix() * c_tilde.as_matrix();
    let inv = general_inverse(&m).expect("I + Q C~ has eigenvalues >= 1");
    HermitianMatrix::symmetrize(c_tilde.as_matrix() * inv)
}

/// Gateaux derivative of `Ibar` at `Q` in direction `P - Q`, using a canonical
/// solution already computed at `Q`.
pub fn directional_derivative_at(
    stats: &ChannelStats,
    q: &CovarianceMatrix,
    delta: &[f64],
    p: &CovarianceMatrix,
) -> f64 {
    let g = frozen_gradient(stats, q, delta);
    let d = p.matrix().sub(q.matrix());
    trace_product(g.as_matrix(), d.as_matrix()).re
}

/// Gateaux derivative of `Ibar` at `Q` in direction `P - Q`.
pub fn directional_derivative(
    stats: &ChannelStats,
    q: &CovarianceMatrix,
    p: &CovarianceMatrix,
    opts: &SolverOptions,
) -> Result<f64> {
    if p.t() != q.t() {
        return Err(Error::Dimension("P and Q must have the same size".into()));
    }
    let sol = solve_canonical(stats, q, opts)?;
    Ok(directional_derivative_at(stats, q, &sol.delta, p))
}

/// Partial derivatives of `V` in `kappa` and `kappa~`:
/// `dV/dkappa_l = sigma2 t (f~_l(kappa, Q) - kappa~_l)` and
/// `dV/dkappa~_l = sigma2 t (f_l(kappa~) - kappa_l)`.
pub fn v_partials(
    stats: &ChannelStats,
    q: &CovarianceMatrix,
    kappa: &[f64],
    kappa_tilde: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let scale = stats.sigma2() * stats.t() as f64;
    let f = crate::canonical::eval_f(kappa_tilde, stats);
    let f_tilde = crate::canonical::eval_f_tilde(kappa, q, stats);
    let dk = f_tilde.iter().zip(kappa_tilde).map(|(a, b)| scale * (a - b)).collect();
    let dkt = f.iter().zip(kappa).map(|(a, b)| scale * (a - b)).collect();
    (dk, dkt)
}
