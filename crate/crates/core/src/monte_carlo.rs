//! Monte-Carlo estimate of the ergodic mutual information
//! `I(Q) = E_H log|I + H Q H^H / sigma2|`.
//!
//! Trial `n` draws its channel from generators keyed by `(seed, n, path)`, and
//! per-trial values are summed in trial order, so the estimate is bit-identical
//! for any worker count.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::canonical::SolverOptions;
use crate::channel::{sample_trial, ChannelStats};
use crate::covariance::CovarianceMatrix;
use crate::emi::emi_approx;
use crate::error::{Error, Result};
use crate::matrix::{log_det_i_plus, HermitianMatrix};

/// Environment variable capping worker threads; `0` or unset means automatic.
pub const THREADS_ENV: &str = "MIMO_CAPACITY_THREADS";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmiEstimate {
    /// Nats.
    pub mean: f64,
    pub std_err: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug)]
pub struct EmiGap {
    pub approx: f64,
    pub mc: EmiEstimate,
    pub gap: f64,
}

/// Neumaier-compensated sum.
#[derive(Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Worker count from [`THREADS_ENV`]; `0` means rayon's default.
pub fn threads_from_env() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0)
}

/// `log|I + H Q H^H / sigma2|` for trial `trial`.
pub fn trial_log_det(stats: &ChannelStats, q: &CovarianceMatrix, seed: u64, trial: u64) -> Result<f64> {
    let h = sample_trial(stats, seed, trial).h;
    let g = h * q.sqrt().as_matrix() * Complex64::new(stats.sigma2().sqrt().recip(), 0.0);
    let m = HermitianMatrix::symmetrize(&g * g.adjoint());
    log_det_i_plus(&m)
}

/// Mean and standard error over `trials` realizations, using the worker cap
/// from [`THREADS_ENV`].
pub fn emi_mc(stats: &ChannelStats, q: &CovarianceMatrix, trials: usize, seed: u64) -> Result<EmiEstimate> {
    emi_mc_with_threads(stats, q, trials, seed, threads_from_env())
}

pub fn emi_mc_with_threads(
    stats: &ChannelStats,
    q: &CovarianceMatrix,
    trials: usize,
    seed: u64,
    threads: usize,
) -> Result<EmiEstimate> {
    if trials < 2 {
        return Err(Error::InvalidInput("Monte-Carlo needs at least two trials".into()));
    }
    if q.t() != stats.t() {
        return Err(Error::Dimension("covariance size does not match t".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let values: Vec<f64> = pool.install(|| {
        (0..trials as u64)
            .into_par_iter()
            .map(|n| trial_log_det(stats, q, seed, n))
            .collect::<Result<Vec<f64>>>()
    })?;
    Ok(summarize(&values, seed))
}

fn summarize(values: &[f64], seed: u64) -> EmiEstimate {
    let n = values.len() as f64;
    let mut sum = CompensatedSum::default();
    values.iter().for_each(|&v| sum.add(v));
    let mean = sum.value() / n;
    let mut sq = CompensatedSum::default();
    values.iter().for_each(|&v| sq.add((v - mean) * (v - mean)));
    let var = sq.value() / (n - 1.0);
    EmiEstimate {
        mean,
        std_err: (var / n).sqrt(),
        trials: values.len(),
        seed,
    }
}

/// Distance between the Monte-Carlo estimate and the large-system
/// approximation at `Q`.
pub fn emi_gap(
    stats: &ChannelStats,
    q: &CovarianceMatrix,
    trials: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<EmiGap> {
    let approx = emi_approx(stats, q, opts)?.value;
    let mc = emi_mc(stats, q, trials, seed)?;
    Ok(EmiGap {
        approx,
        mc,
        gap: (mc.mean - approx).abs(),
    })
}
