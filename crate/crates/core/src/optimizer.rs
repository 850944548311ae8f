//! Maximization of the large-system EMI approximation over `C_1`.
//!
//! [`optimize_covariance`] runs the iterative waterfilling scheme: starting
//! from `Q_0 = I`, solve the canonical system at `Q_{k-1}` to get
//! `delta^(k)`, then set `Q_k` to the waterfilling solution for
//! `C~(delta^(k))`. It stops once successive `delta` / `delta~` vectors agree
//! within the outer tolerance. A limit of the scheme is the maximizer, but the
//! scheme is not proven to converge, hence [`restart_policy`].
//!
//! [`reference_maximizer`] is an unrelated projected-gradient ascent on the
//! same objective, used to cross-check the first.

use std::fmt;

use crate::canonical::{solve_canonical_from, CanonicalSolution, SolverOptions};
use crate::channel::ChannelStats;
use crate::covariance::CovarianceMatrix;
use crate::emi::{directional_derivative_at, frozen_gradient, v_function};
use crate::error::{Error, Result};
use crate::matrix::{hermitian_eig, trace_product, HermitianMatrix};

/// Eigenvalues of `C~` at or below this get no power.
pub const NULL_EIGENVALUE: f64 = 1e-14;

#[derive(Clone, Debug)]
pub struct WaterfillResult {
    pub q: CovarianceMatrix,
    pub water_level: f64,
    pub active_count: usize,
    /// Eigenvalues of `C~`, ascending.
    pub gains: Vec<f64>,
    /// Power on each eigenvector, same order as `gains`.
    pub powers: Vec<f64>,
}

/// Maximizes `log|I + Q C~|` over `C_1` (total power `t`).
pub fn waterfill(c_tilde: &HermitianMatrix, t: usize) -> Result<WaterfillResult> {
    if c_tilde.dim() != t {
        return Err(Error::Dimension(format!(
            "waterfilling a {}x{} matrix with t = {t}",
            c_tilde.dim(),
            c_tilde.dim()
        )));
    }
    let eig = hermitian_eig(c_tilde)?;
    if eig.min() < -crate::matrix::PSD_TOLERANCE * eig.spectral_norm() {
        return Err(Error::NotPsd {
            min_eigenvalue: eig.min(),
            tolerance: crate::matrix::PSD_TOLERANCE * eig.spectral_norm(),
        });
    }
    let gains = eig.eigenvalues.clone();
    let (powers, water_level, active_count) = waterfill_powers(&gains, t as f64)?;
    let q = CovarianceMatrix::from_eigen(&eig.eigenvectors, &powers)?;
    Ok(WaterfillResult {
        q,
        water_level,
        active_count,
        gains,
        powers,
    })
}

/// Power allocation for ascending `gains` under total power `total`:
/// `p_i = max(mu - 1/g_i, 0)`, `mu` from the sorted active-set closed form.
pub fn waterfill_powers(gains: &[f64], total: f64) -> Result<(Vec<f64>, f64, usize)> {
    let positive: Vec<usize> = (0..gains.len())
        .rev()
        .filter(|&i| gains[i] > NULL_EIGENVALUE)
        .collect();
    if positive.is_empty() {
        return Err(Error::DegenerateDirection {
            threshold: NULL_EIGENVALUE,
        });
    }
    // strongest first; the active set is a prefix
    let mut inv_sum = 0.0;
    let mut level = 0.0;
    let mut active = 0;
    for (k, &i) in positive.iter().enumerate() {
        let inv = 1.0 / gains[i];
        let candidate = (total + inv_sum + inv) / (k + 1) as f64;
        if candidate - inv <= 0.0 {
            break;
        }
        inv_sum += inv;
        level = candidate;
        active = k + 1;
    }
    let mut powers = vec![0.0; gains.len()];
    for &i in &positive[..active] {
        powers[i] = level - 1.0 / gains[i];
    }
    Ok((powers, level, active))
}

/// Euclidean projection of `v` onto `{x >= 0, sum x = total}`.
pub fn project_to_simplex(v: &[f64], total: f64) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - total) / (k + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Frobenius-nearest point of `C_1` to a Hermitian matrix.
pub fn project_to_c1(m: &HermitianMatrix) -> Result<CovarianceMatrix> {
    let eig = hermitian_eig(m)?;
    let powers = project_to_simplex(&eig.eigenvalues, m.dim() as f64);
    CovarianceMatrix::from_eigen(&eig.eigenvectors, &powers)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerSettings {
    /// Bound on `max(|delta^(k) - delta^(k-1)|_inf, |delta~^(k) - delta~^(k-1)|_inf)`.
    pub outer_tol: f64,
    pub max_outer: usize,
    pub solver: SolverOptions,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            outer_tol: 1e-8,
            max_outer: 100,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimizeReport {
    pub q_star: CovarianceMatrix,
    /// `Ibar(q_star)` in nats.
    pub emi_approx_value: f64,
    pub outer_iterations: usize,
    pub delta_history_residuals: Vec<f64>,
    pub converged: bool,
    pub restarts: usize,
    /// False when `Ibar(Q_k)` decreased by more than 1e-9 at some step.
    pub monotone: bool,
    /// Canonical solution at `q_star`.
    pub solution: CanonicalSolution,
}

/// State of an optimization run that hit its iteration cap.
#[derive(Clone, Debug)]
pub struct OptimizeFailure {
    pub last_q: CovarianceMatrix,
    pub last_delta: Vec<f64>,
    pub last_delta_tilde: Vec<f64>,
    pub residuals: Vec<f64>,
    pub outer_iterations: usize,
}

impl fmt::Display for OptimizeFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} outer iterations, last delta change {:e}",
            self.outer_iterations,
            self.residuals.last().copied().unwrap_or(f64::NAN)
        )
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Iterative waterfilling from `Q_0 = I`.
pub fn optimize_covariance(
    stats: &ChannelStats,
    outer_tol: f64,
    max_outer: usize,
    solver_opts: &SolverOptions,
) -> Result<OptimizeReport> {
    let settings = OptimizerSettings {
        outer_tol,
        max_outer,
        solver: *solver_opts,
    };
    optimize_from(stats, &CovarianceMatrix::identity(stats.t()), &settings)
}

/// Iterative waterfilling from an arbitrary starting point.
pub fn optimize_from(
    stats: &ChannelStats,
    q0: &CovarianceMatrix,
    settings: &OptimizerSettings,
) -> Result<OptimizeReport> {
    if !(settings.outer_tol > 0.0) || settings.max_outer == 0 {
        return Err(Error::InvalidInput("outer tolerance and iteration cap must be positive".into()));
    }
    let l = stats.num_paths();
    let t = stats.t();
    let init = vec![settings.solver.init_delta; l];

    let mut q = q0.clone();
    let mut prev: Option<CanonicalSolution> = None;
    let mut residuals = Vec::new();
    let mut last_value = f64::NEG_INFINITY;
    let mut monotone = true;

    // k-th pass: delta^(k) from Q_{k-1}, then Q_k by waterfilling
    for k in 1..=settings.max_outer + 1 {
        let (d0, dt0) = match &prev {
            Some(p) => (p.delta.clone(), p.delta_tilde.clone()),
            None => (init.clone(), init.clone()),
        };
        let sol = solve_canonical_from(stats, &q, &settings.solver, &d0, &dt0)?;
        let value = v_function(stats, &q, &sol.delta, &sol.delta_tilde)?;
        if value < last_value - 1e-9 {
            monotone = false;
        }
        last_value = value;

        let next = waterfill(&stats.transmit_combination(&sol.delta), t)?.q;
        if let Some(p) = &prev {
            let change = max_abs_diff(&sol.delta, &p.delta).max(max_abs_diff(&sol.delta_tilde, &p.delta_tilde));
            residuals.push(change);
            // Also require Q to have settled, so Q_star reproduces itself
            // under waterfilling to within the same tolerance.
            let step = next.matrix().sub(q.matrix()).max_abs();
            if change <= settings.outer_tol && step <= settings.outer_tol {
                return Ok(OptimizeReport {
                    q_star: q,
                    emi_approx_value: value,
                    outer_iterations: k - 1,
                    delta_history_residuals: residuals,
                    converged: true,
                    restarts: 0,
                    monotone,
                    solution: sol,
                });
            }
        }
        if k == settings.max_outer + 1 {
            return Err(Error::OuterNonConvergence(Box::new(OptimizeFailure {
                last_q: q,
                last_delta: sol.delta,
                last_delta_tilde: sol.delta_tilde,
                residuals,
                outer_iterations: settings.max_outer,
            })));
        }
        q = next;
        prev = Some(sol);
    }
    unreachable!("loop returns on its last pass")
}

/// Starting point for restart number `attempt` (1-based). The first restart
/// averages the last iterate with `I`; later ones use seeded random points.
pub fn restart_policy(failure: &OptimizeFailure, attempt: usize) -> CovarianceMatrix {
    assert!(attempt >= 1, "restart attempts are numbered from 1");
    let t = failure.last_q.t();
    if attempt == 1 {
        CovarianceMatrix::mix(&failure.last_q, &CovarianceMatrix::identity(t), 0.5)
            .expect("midpoint of two C_1 points is in C_1")
    } else {
        CovarianceMatrix::random(t, attempt as u64)
    }
}

/// Iterative waterfilling with up to `max_restarts` restarts.
pub fn optimize_with_restarts(
    stats: &ChannelStats,
    settings: &OptimizerSettings,
    max_restarts: usize,
) -> Result<OptimizeReport> {
    let mut q0 = CovarianceMatrix::identity(stats.t());
    let mut attempt = 0;
    loop {
        match optimize_from(stats, &q0, settings) {
            Ok(mut report) => {
                report.restarts = attempt;
                return Ok(report);
            }
            Err(Error::OuterNonConvergence(failure)) if attempt < max_restarts => {
                attempt += 1;
                q0 = restart_policy(&failure, attempt);
            }
            Err(e) => return Err(e),
        }
    }
}

/// Largest value of the Gateaux derivative at `q` over the given directions.
pub fn max_directional_derivative(
    stats: &ChannelStats,
    q: &CovarianceMatrix,
    delta: &[f64],
    directions: &[CovarianceMatrix],
) -> f64 {
    directions
        .iter()
        .map(|p| directional_derivative_at(stats, q, delta, p))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Entrywise distance between `report.q_star` and the waterfilling solution
/// for its own `delta`.
pub fn self_consistency_error(stats: &ChannelStats, report: &OptimizeReport) -> Result<f64> {
    let wf = waterfill(&stats.transmit_combination(&report.solution.delta), stats.t())?;
    let diff = wf.q.matrix().sub(report.q_star.matrix());
    Ok(diff.max_abs())
}

const ARMIJO: f64 = 1e-4;
const REFERENCE_MAX_ITER: usize = 20_000;

/// Projected-gradient ascent on `Ibar` over `C_1` with Armijo backtracking,
/// stopped when `|P(Q + G) - Q|_F <= tol` where `G` is the gradient.
pub fn reference_maximizer(stats: &ChannelStats, tol: f64) -> Result<OptimizeReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let opts = SolverOptions {
        tol: 1e-13,
        ..SolverOptions::default()
    };
    let t = stats.t();
    let init = vec![opts.init_delta; stats.num_paths()];

    let evaluate = |q: &CovarianceMatrix, warm: &CanonicalSolution| -> Result<(f64, CanonicalSolution)> {
        let sol = solve_canonical_from(stats, q, &opts, &warm.delta, &warm.delta_tilde)?;
        let v = v_function(stats, q, &sol.delta, &sol.delta_tilde)?;
        Ok((v, sol))
    };

    let mut q = CovarianceMatrix::identity(t);
    let mut sol = solve_canonical_from(stats, &q, &opts, &init, &init)?;
    let mut value = v_function(stats, &q, &sol.delta, &sol.delta_tilde)?;
    let mut step: f64 = 1.0;
    let mut history = Vec::new();

    for iter in 0..REFERENCE_MAX_ITER {
        let grad = frozen_gradient(stats, &q, &sol.delta);
        let unit = project_to_c1(&q.matrix().add(&grad))?;
        let pg_norm = frobenius(&unit.matrix().sub(q.matrix()));
        history.push(pg_norm);
        if pg_norm <= tol {
            return Ok(OptimizeReport {
                q_star: q,
                emi_approx_value: value,
                outer_iterations: iter,
                delta_history_residuals: history,
                converged: true,
                restarts: 0,
                monotone: true,
                solution: sol,
            });
        }

        let mut s = (step * 2.0).min(1e8);
        loop {
            let candidate = project_to_c1(&q.matrix().add(&grad.scale(s)))?;
            let ascent = trace_product(grad.as_matrix(), candidate.matrix().sub(q.matrix()).as_matrix()).re;
            let (v, new_sol) = evaluate(&candidate, &sol)?;
            // Near the optimum the gain drops below the rounding level of
            // `value`; allow for it so the step is not rejected forever.
            let rounding = 8.0 * f64::EPSILON * value.abs().max(1.0);
            if v >= value + ARMIJO * ascent - rounding {
                q = candidate;
                sol = new_sol;
                value = v;
                step = s;
                break;
            }
            s *= 0.5;
            if s < 1e-20 {
                return Err(Error::OuterNonConvergence(Box::new(OptimizeFailure {
                    last_q: q,
                    last_delta: sol.delta,
                    last_delta_tilde: sol.delta_tilde,
                    residuals: history,
                    outer_iterations: iter,
                })));
            }
        }
    }
    Err(Error::OuterNonConvergence(Box::new(OptimizeFailure {
        last_q: q,
        last_delta: sol.delta,
        last_delta_tilde: sol.delta_tilde,
        residuals: history,
        outer_iterations: REFERENCE_MAX_ITER,
    })))
}

fn frobenius(m: &HermitianMatrix) -> f64 {
    m.as_matrix().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
