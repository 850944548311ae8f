//! Command runners behind the `mimo-capacity` binary: single-point solves,
//! covariance optimization, SNR sweeps and timing benchmarks.

use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::canonical::{lemma1_diagnostic, solve_canonical};
use crate::config::{MatrixJson, ScenarioConfig};
use crate::covariance::CovarianceMatrix;
use crate::emi::emi_approx;
use crate::error::Result;
use crate::monte_carlo::emi_mc_with_threads;
use crate::optimizer::{optimize_covariance, optimize_with_restarts};

pub const CSV_HEADER: &str =
    "snr_db,emi_uniform_mc,emi_uniform_se,emi_opt_mc,emi_opt_se,emi_opt_approx,outer_iters,wall_time_s";

/// Restarts attempted by `optimize` before reporting non-convergence.
pub const MAX_RESTARTS: usize = 3;

/// Published timings at `r = t = 4`, keyed by path count.
pub const REFERENCE_TIMINGS: [(usize, f64); 3] = [(3, 7.0e-3), (4, 7.4e-3), (5, 8.3e-3)];

#[derive(Clone, Debug, Serialize)]
pub struct SolveOutput {
    pub snr_db: f64,
    pub sigma2: f64,
    pub delta: Vec<f64>,
    pub delta_tilde: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub lemma1_rho: f64,
    pub emi_approx: f64,
    pub units: &'static str,
}

pub fn run_solve(cfg: &ScenarioConfig, q: &CovarianceMatrix) -> Result<SolveOutput> {
    let sigma2 = cfg.default_sigma2();
    let stats = cfg.stats(sigma2)?;
    let opts = cfg.solver_options();
    let sol = solve_canonical(&stats, q, &opts)?;
    let rho = lemma1_diagnostic(&sol, &stats, q);
    let value = emi_approx(&stats, q, &opts)?.value;
    Ok(SolveOutput {
        snr_db: crate::config::sigma2_to_snr(sigma2),
        sigma2,
        delta: sol.delta,
        delta_tilde: sol.delta_tilde,
        iterations: sol.iterations,
        residual: sol.residual,
        lemma1_rho: rho,
        emi_approx: cfg.units.from_nats(value),
        units: cfg.units.label(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimizeOutput {
    pub snr_db: f64,
    pub sigma2: f64,
    pub emi_approx_opt: f64,
    pub emi_approx_uniform: f64,
    pub units: &'static str,
    pub outer_iterations: usize,
    pub restarts: usize,
    pub monotone: bool,
    pub delta_history_residuals: Vec<f64>,
    pub delta: Vec<f64>,
    pub delta_tilde: Vec<f64>,
    pub q_star_eigenvalues: Vec<f64>,
    #[serde(skip)]
    pub q_star: CovarianceMatrix,
}

pub fn run_optimize(cfg: &ScenarioConfig) -> Result<OptimizeOutput> {
    let sigma2 = cfg.default_sigma2();
    let stats = cfg.stats(sigma2)?;
    let report = optimize_with_restarts(&stats, &cfg.optimizer_settings(), MAX_RESTARTS)?;
    let uniform = emi_approx(&stats, &CovarianceMatrix::identity(cfg.t), &cfg.solver_options())?.value;
    Ok(OptimizeOutput {
        snr_db: crate::config::sigma2_to_snr(sigma2),
        sigma2,
        emi_approx_opt: cfg.units.from_nats(report.emi_approx_value),
        emi_approx_uniform: cfg.units.from_nats(uniform),
        units: cfg.units.label(),
        outer_iterations: report.outer_iterations,
        restarts: report.restarts,
        monotone: report.monotone,
        delta_history_residuals: report.delta_history_residuals,
        delta: report.solution.delta,
        delta_tilde: report.solution.delta_tilde,
        q_star_eigenvalues: report.q_star.eigenvalues().to_vec(),
        q_star: report.q_star,
    })
}

impl OptimizeOutput {
    pub fn q_star_json(&self) -> MatrixJson {
        MatrixJson::from_matrix(self.q_star.matrix().as_matrix())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub snr_db: f64,
    pub emi_uniform_mc: f64,
    pub emi_uniform_se: f64,
    pub emi_opt_mc: f64,
    pub emi_opt_se: f64,
    pub emi_opt_approx: f64,
    pub outer_iters: usize,
    pub wall_time_s: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct SweepOptions {
    /// Worker threads for Monte-Carlo; `0` means automatic.
    pub threads: usize,
    /// When false, `wall_time_s` is written as 0 so output depends only on
    /// the configuration.
    pub timing: bool,
}

/// One row per SNR point, in configuration order. Uniform and optimized
/// inputs are evaluated on the same channel draws. `wall_time_s` covers the
/// optimizer only.
pub fn run_sweep(cfg: &ScenarioConfig, opts: SweepOptions) -> Result<Vec<SweepRow>> {
    let settings = cfg.optimizer_settings();
    cfg.operating_points()
        .into_iter()
        .map(|(snr_db, sigma2)| {
            let stats = cfg.stats(sigma2)?;
            let start = Instant::now();
            let report = optimize_with_restarts(&stats, &settings, MAX_RESTARTS)?;
            let elapsed = start.elapsed().as_secs_f64();
            let uniform = emi_mc_with_threads(
                &stats,
                &CovarianceMatrix::identity(cfg.t),
                cfg.trials,
                cfg.seed,
                opts.threads,
            )?;
            let opt = emi_mc_with_threads(&stats, &report.q_star, cfg.trials, cfg.seed, opts.threads)?;
            let u = cfg.units;
            Ok(SweepRow {
                snr_db,
                emi_uniform_mc: u.from_nats(uniform.mean),
                emi_uniform_se: u.from_nats(uniform.std_err),
                emi_opt_mc: u.from_nats(opt.mean),
                emi_opt_se: u.from_nats(opt.std_err),
                emi_opt_approx: u.from_nats(report.emi_approx_value),
                outer_iters: report.outer_iterations,
                wall_time_s: if opts.timing { elapsed } else { 0.0 },
            })
        })
        .collect()
}

/// `%.12g`-style formatting: 12 significant digits, trailing zeros removed.
pub fn format_sig(x: f64) -> String {
    const DIGITS: i32 = 12;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..DIGITS).contains(&exp) {
        let fixed = format!("{:.*}", (DIGITS - 1 - exp).max(0) as usize, x);
        trim_zeros(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_zeros(mantissa), sign, exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_csv<W: Write>(mut out: W, rows: &[SweepRow]) -> std::io::Result<()> {
    out.write_all(CSV_HEADER.as_bytes())?;
    out.write_all(b"\n")?;
    for row in rows {
        let line = [
            format_sig(row.snr_db),
            format_sig(row.emi_uniform_mc),
            format_sig(row.emi_uniform_se),
            format_sig(row.emi_opt_mc),
            format_sig(row.emi_opt_se),
            format_sig(row.emi_opt_approx),
            row.outer_iters.to_string(),
            format_sig(row.wall_time_s),
        ]
        .join(",");
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub paths: usize,
    pub r: usize,
    pub t: usize,
    pub samples: Vec<f64>,
    pub median_s: f64,
    pub reference_s: Option<f64>,
}

pub fn median(samples: &[f64]) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times `optimize_covariance` from `Q = I` for path counts `min(3, L)..=L`
/// using the first clusters of the scenario.
pub fn run_bench(cfg: &ScenarioConfig, repeats: usize) -> Result<Vec<BenchRow>> {
    if repeats < 3 {
        return Err(crate::error::Error::Config("bench needs at least 3 repeats".into()));
    }
    let sigma2 = cfg.default_sigma2();
    let max_paths = cfg.num_paths();
    let opts = cfg.solver_options();
    (max_paths.min(3)..=max_paths)
        .map(|paths| {
            let stats = cfg.truncated(paths).stats(sigma2)?;
            let samples = (0..repeats)
                .map(|_| {
                    let start = Instant::now();
                    optimize_covariance(&stats, cfg.tol.outer, cfg.tol.max_outer, &opts)?;
                    Ok(start.elapsed().as_secs_f64())
                })
                .collect::<Result<Vec<f64>>>()?;
            let reference_s = if cfg.r == 4 && cfg.t == 4 {
                REFERENCE_TIMINGS.iter().find(|(l, _)| *l == paths).map(|&(_, s)| s)
            } else {
                None
            };
            Ok(BenchRow {
                paths,
                r: cfg.r,
                t: cfg.t,
                median_s: median(&samples),
                samples,
                reference_s,
            })
        })
        .collect()
}

pub fn write_bench_table<W: Write>(mut out: W, rows: &[BenchRow]) -> std::io::Result<()> {
    writeln!(out, "{:>5} {:>4} {:>4} {:>8} {:>14} {:>14}", "L", "r", "t", "repeats", "median_s", "reference_s")?;
    for row in rows {
        let reference = row.reference_s.map_or("-".to_string(), |s| format!("{s:.1e}"));
        writeln!(
            out,
            "{:>5} {:>4} {:>4} {:>8} {:>14.3e} {:>14}",
            row.paths,
            row.r,
            row.t,
            row.samples.len(),
            row.median_s,
            reference
        )?;
    }
    Ok(())
}
