//! The canonical system of `2L` equations
//!
//! ```text
//! delta_l       = f_l(delta_tilde)      = (1/t) Tr[C_r(l) T(delta_tilde)]
//! delta_tilde_l = f~_l(delta, Q)        = (1/t) Tr[Q^1/2 C_t(l) Q^1/2 T~(delta, Q)]
//! T(k~)  = [sigma2 (I + sum_j k~_j C_r(j))]^-1
//! T~(k)  = [sigma2 (I + sum_j k_j Q^1/2 C_t(j) Q^1/2)]^-1
//! ```
//!
//! solved by the simultaneous fixed-point iteration
//! `delta <- f(delta_tilde)`, `delta_tilde <- f~(delta, Q)` from any positive
//! start. The positive solution is unique.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::ChannelStats;
use crate::covariance::CovarianceMatrix;
use crate::error::{Error, Result};
use crate::matrix::{
    general_inverse, hpd_inverse, spectral_radius_nonneg, trace_product, ComplexMatrix,
    HermitianMatrix,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Bound on the relative equation mismatch of the returned iterate.
    pub tol: f64,
    pub max_iter: usize,
    /// Shared starting value for every `delta_l` and `delta_tilde_l`.
    pub init_delta: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: 10_000,
            init_delta: 1.0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 || !(self.init_delta > 0.0) {
            return Err(Error::InvalidInput(format!("invalid solver options {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CanonicalSolution {
    pub delta: Vec<f64>,
    pub delta_tilde: Vec<f64>,
    /// `T(delta_tilde)`, r x r.
    pub t_matrix: HermitianMatrix,
    /// `T~(delta, Q)`, t x t.
    pub t_tilde: HermitianMatrix,
    pub iterations: usize,
    pub residual: f64,
}

/// `T(k~)`.
pub fn receive_resolvent(stats: &ChannelStats, delta_tilde: &[f64]) -> HermitianMatrix {
    let m = stats
        .receive_combination(delta_tilde)
        .plus_identity()
        .scale(stats.sigma2());
    hpd_inverse(&m).expect("I + nonnegative combination of PSD matrices is positive definite")
}

/// `T~(k, Q)`.
pub fn transmit_resolvent(stats: &ChannelStats, delta: &[f64], q: &CovarianceMatrix) -> HermitianMatrix {
    let m = stats
        .transmit_combination(delta)
        .congruence(q.sqrt().as_matrix())
        .plus_identity()
        .scale(stats.sigma2());
    hpd_inverse(&m).expect("I + nonnegative combination of PSD matrices is positive definite")
}

fn check_weights(w: &[f64], stats: &ChannelStats) {
    assert_eq!(w.len(), stats.num_paths(), "one weight per path");
    assert!(w.iter().all(|&x| x >= 0.0 && x.is_finite()), "weights must be nonnegative");
}

/// `f(delta_tilde)`.
pub fn eval_f(delta_tilde: &[f64], stats: &ChannelStats) -> Vec<f64> {
    check_weights(delta_tilde, stats);
    let t_mat = receive_resolvent(stats, delta_tilde);
    f_from_resolvent(stats, &t_mat)
}

fn f_from_resolvent(stats: &ChannelStats, t_mat: &HermitianMatrix) -> Vec<f64> {
    let t = stats.t() as f64;
    (0..stats.num_paths())
        .map(|l| trace_product(stats.receive(l).as_matrix(), t_mat.as_matrix()).re / t)
        .collect()
}

/// `f~(delta, Q)`. Singular `Q` goes through
/// `(1/(sigma2 t)) Tr[C_t(l) Q (I + C~(delta) Q)^-1]`.
pub fn eval_f_tilde(delta: &[f64], q: &CovarianceMatrix, stats: &ChannelStats) -> Vec<f64> {
    check_weights(delta, stats);
    TransmitSide::new(stats, q).f_tilde(stats, delta)
}

/// Conjugated form; requires `Q^1/2`.
pub fn eval_f_tilde_conjugated(delta: &[f64], q: &CovarianceMatrix, stats: &ChannelStats) -> Vec<f64> {
    TransmitSide::conjugated(stats, q).f_tilde(stats, delta)
}

/// Push-through form; never touches `Q^1/2`.
pub fn eval_f_tilde_push_through(delta: &[f64], q: &CovarianceMatrix, stats: &ChannelStats) -> Vec<f64> {
    TransmitSide::push_through(stats, q).f_tilde(stats, delta)
}

/// Transmit-side terms precomputed once per `Q`.
enum TransmitSide {
    /// `Q^1/2 C_t(l) Q^1/2` per path.
    Conjugated(Vec<HermitianMatrix>),
    /// `C_t(l) Q` per path, plus `Q`.
    PushThrough {
        ct_q: Vec<ComplexMatrix>,
        q: ComplexMatrix,
    },
}

impl TransmitSide {
    fn new(stats: &ChannelStats, q: &CovarianceMatrix) -> Self {
        if q.is_singular() {
            Self::push_through(stats, q)
        } else {
            Self::conjugated(stats, q)
        }
    }

    fn conjugated(stats: &ChannelStats, q: &CovarianceMatrix) -> Self {
        let s = q.sqrt().as_matrix();
        TransmitSide::Conjugated(
            (0..stats.num_paths())
                .map(|l| stats.transmit(l).congruence(s))
                .collect(),
        )
    }

    fn push_through(stats: &ChannelStats, q: &CovarianceMatrix) -> Self {
        let qm = q.matrix().as_matrix().clone();
        TransmitSide::PushThrough {
            ct_q: (0..stats.num_paths())
                .map(|l| stats.transmit(l).as_matrix() * &qm)
                .collect(),
            q: qm,
        }
    }

    fn f_tilde(&self, stats: &ChannelStats, delta: &[f64]) -> Vec<f64> {
        let t = stats.t() as f64;
        let sigma2 = stats.sigma2();
        match self {
            TransmitSide::Conjugated(b) => {
                let mut m = ComplexMatrix::identity(stats.t(), stats.t());
                for (bl, &d) in b.iter().zip(delta) {
                    m += bl.as_matrix() * Complex64::new(d, 0.0);
                }
                let t_tilde = hpd_inverse(&HermitianMatrix::symmetrize(m))
                    .expect("I + PSD is positive definite");
                b.iter()
                    .map(|bl| trace_product(bl.as_matrix(), t_tilde.as_matrix()).re / (sigma2 * t))
                    .collect()
            }
            TransmitSide::PushThrough { ct_q, q } => {
                let c_tilde = stats.transmit_combination(delta);
                let m = ComplexMatrix::identity(stats.t(), stats.t()) + c_tilde.as_matrix() * q;
                let inv = general_inverse(&m).expect("I + C~ Q has eigenvalues >= 1");
                ct_q.iter()
                    .map(|cq| trace_product(cq, &inv).re / (sigma2 * t))
                    .collect()
            }
        }
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Relative equation mismatch of `(delta, delta_tilde)` given `f(delta_tilde)`
/// and `f~(delta)`.
fn mismatch(delta: &[f64], delta_tilde: &[f64], f: &[f64], f_tilde: &[f64]) -> f64 {
    let scale = 1.0f64.max(sup_norm(delta)).max(sup_norm(delta_tilde));
    max_abs_diff(delta, f).max(max_abs_diff(delta_tilde, f_tilde)) / scale
}

/// Solves the canonical system for `Q`.
pub fn solve_canonical(
    stats: &ChannelStats,
    q: &CovarianceMatrix,
    opts: &SolverOptions,
) -> Result<CanonicalSolution> {
    opts.validate()?;
    let l = stats.num_paths();
    let start = vec![opts.init_delta; l];
    solve_canonical_from(stats, q, opts, &start, &start)
}

/// Solves the canonical system starting the iteration at the given vectors.
pub fn solve_canonical_from(
    stats: &ChannelStats,
    q: &CovarianceMatrix,
    opts: &SolverOptions,
    init_delta: &[f64],
    init_delta_tilde: &[f64],
) -> Result<CanonicalSolution> {
    opts.validate()?;
    if q.t() != stats.t() {
        return Err(Error::Dimension(format!(
            "covariance is {}x{}, channel has t = {}",
            q.t(),
            q.t(),
            stats.t()
        )));
    }
    let l = stats.num_paths();
    if init_delta.len() != l || init_delta_tilde.len() != l {
        return Err(Error::Dimension("initial vectors need one entry per path".into()));
    }
    if init_delta.iter().chain(init_delta_tilde).any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::InvalidInput("initial values must be positive".into()));
    }

    let transmit = TransmitSide::new(stats, q);
    let mut delta = init_delta.to_vec();
    let mut delta_tilde = init_delta_tilde.to_vec();
    let mut residual = f64::INFINITY;
    for iteration in 0..=opts.max_iter {
        let t_mat = receive_resolvent(stats, &delta_tilde);
        let f = f_from_resolvent(stats, &t_mat);
        let f_tilde = transmit.f_tilde(stats, &delta);
        residual = mismatch(&delta, &delta_tilde, &f, &f_tilde);
        if residual <= opts.tol {
            let t_tilde = transmit_resolvent(stats, &delta, q);
            return Ok(CanonicalSolution {
                delta,
                delta_tilde,
                t_matrix: t_mat,
                t_tilde,
                iterations: iteration,
                residual,
            });
        }
        if iteration == opts.max_iter {
            break;
        }
        delta = f;
        delta_tilde = f_tilde;
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual,
        delta,
        delta_tilde,
    })
}

/// `A_kl(T) = (1/t) Tr(C_r(k) T C_r(l) T)`.
pub fn receive_coupling(stats: &ChannelStats, t_mat: &HermitianMatrix) -> DMatrix<f64> {
    let mats: Vec<ComplexMatrix> = (0..stats.num_paths())
        .map(|l| stats.receive(l).as_matrix() * t_mat.as_matrix())
        .collect();
    coupling(&mats, stats.t() as f64)
}

/// `A~_kl(T~) = (1/t) Tr(B_k T~ B_l T~)` with `B_l = Q^1/2 C_t(l) Q^1/2`.
pub fn transmit_coupling(
    stats: &ChannelStats,
    q: &CovarianceMatrix,
    t_tilde: &HermitianMatrix,
) -> DMatrix<f64> {
    let s = q.sqrt().as_matrix();
    let mats: Vec<ComplexMatrix> = (0..stats.num_paths())
        .map(|l| stats.transmit(l).congruence(s).as_matrix() * t_tilde.as_matrix())
        .collect();
    coupling(&mats, stats.t() as f64)
}

fn coupling(mats: &[ComplexMatrix], t: f64) -> DMatrix<f64> {
    let l = mats.len();
    DMatrix::from_fn(l, l, |k, j| (trace_product(&mats[k], &mats[j]).re / t).max(0.0))
}

/// Spectral radius of `sigma2^2 A~(T~) A(T)` at a canonical solution. Below
/// one at any true fixed point.
pub fn lemma1_diagnostic(sol: &CanonicalSolution, stats: &ChannelStats, q: &CovarianceMatrix) -> f64 {
    let a = receive_coupling(stats, &sol.t_matrix);
    let a_tilde = transmit_coupling(stats, q, &sol.t_tilde);
    let s2 = stats.sigma2();
    let m = (a_tilde * a) * (s2 * s2);
    spectral_radius_nonneg(&m)
}
