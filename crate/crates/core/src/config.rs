//! Scenario configuration and matrix files (JSON).
//!
//! SNR is `-10 log10 sigma2`; see [`snr_to_sigma2`].

use std::f64::consts::LN_2;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::canonical::SolverOptions;
use crate::channel::{build_stats, reference_clusters, ChannelStats, PathCluster};
use crate::covariance::CovarianceMatrix;
use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, HermitianMatrix};
use crate::optimizer::OptimizerSettings;

pub const DEFAULT_TRIALS: usize = 100_000;

/// Relative tolerance on the Hermitian defect of a matrix read from disk.
const HERMITIAN_FILE_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[default]
    Nats,
    Bits,
}

impl Units {
    pub fn from_nats(self, value: f64) -> f64 {
        match self {
            Units::Nats => value,
            Units::Bits => value / LN_2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Units::Nats => "nats",
            Units::Bits => "bits",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_fixed_point_tol")]
    pub fixed_point: f64,
    #[serde(default = "default_outer_tol")]
    pub outer: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
}

fn default_fixed_point_tol() -> f64 {
    1e-10
}
fn default_outer_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    10_000
}
fn default_max_outer() -> usize {
    100
}
fn default_trials() -> usize {
    DEFAULT_TRIALS
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            fixed_point: default_fixed_point_tol(),
            outer: default_outer_tol(),
            max_iter: default_max_iter(),
            max_outer: default_max_outer(),
        }
    }
}

/// A scenario: array sizes, path clusters and the operating points.
///
/// Either `clusters` or `isotropic_paths` describes the channel; the latter
/// gives `L` paths with identity correlations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub r: usize,
    pub t: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snr_db_list: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clusters: Vec<PathCluster>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isotropic_paths: Option<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub units: Units,
    #[serde(default)]
    pub tol: Tolerances,
}

pub fn snr_to_sigma2(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

pub fn sigma2_to_snr(sigma2: f64) -> f64 {
    // `+ 0.0` maps -0 to 0.
    -10.0 * sigma2.log10() + 0.0
}

const PRESET_TABLE1_R4: &str = include_str!("../presets/table1_r4.json");
const PRESET_TABLE1_R8: &str = include_str!("../presets/table1_r8.json");
const PRESET_ISOTROPIC: &str = include_str!("../presets/isotropic.json");

pub const PRESET_NAMES: [&str; 3] = ["table1-r4", "table1-r8", "isotropic"];

/// Bundled scenario by name (see [`PRESET_NAMES`]).
pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let text = match name {
        "table1-r4" => PRESET_TABLE1_R4,
        "table1-r8" => PRESET_TABLE1_R8,
        "isotropic" => PRESET_ISOTROPIC,
        other => {
            return Err(Error::Config(format!(
                "unknown preset '{other}' (available: {})",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    ScenarioConfig::from_json(text)
}

impl ScenarioConfig {
    /// The five reference clusters at `r x t`, 10 dB.
    pub fn reference(r: usize, t: usize) -> Self {
        ScenarioConfig {
            r,
            t,
            sigma2: None,
            snr_db_list: vec![10.0],
            clusters: reference_clusters(),
            isotropic_paths: None,
            trials: DEFAULT_TRIALS,
            seed: 0,
            units: Units::Nats,
            tol: Tolerances::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 || self.t == 0 {
            return Err(Error::Config("r and t must be positive".into()));
        }
        match (self.clusters.is_empty(), self.isotropic_paths) {
            (true, None) => return Err(Error::Config("either clusters or isotropic_paths is required".into())),
            (false, Some(_)) => {
                return Err(Error::Config("clusters and isotropic_paths are mutually exclusive".into()))
            }
            (_, Some(0)) => return Err(Error::Config("isotropic_paths must be at least 1".into())),
            _ => {}
        }
        for c in &self.clusters {
            c.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if !self.clusters.is_empty() && !(self.clusters.iter().map(|c| c.power).sum::<f64>() > 0.0) {
            return Err(Error::Config("total cluster power must be positive".into()));
        }
        if let Some(s) = self.sigma2 {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config("sigma2 must be positive and finite".into()));
            }
        }
        if self.sigma2.is_none() && self.snr_db_list.is_empty() {
            return Err(Error::Config("either sigma2 or snr_db_list is required".into()));
        }
        if self.snr_db_list.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("snr_db_list entries must be finite".into()));
        }
        if self.trials < 2 {
            return Err(Error::Config("trials must be at least 2".into()));
        }
        self.solver_options()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if !(self.tol.outer > 0.0) || self.tol.max_outer == 0 {
            return Err(Error::Config("outer tolerance and max_outer must be positive".into()));
        }
        Ok(())
    }

    pub fn num_paths(&self) -> usize {
        self.isotropic_paths.unwrap_or(self.clusters.len())
    }

    /// Sweep points as `(snr_db, sigma2)`. An explicit `sigma2` without a
    /// list yields a single point.
    pub fn operating_points(&self) -> Vec<(f64, f64)> {
        if self.snr_db_list.is_empty() {
            let s = self.sigma2.expect("validated config has sigma2 or snr_db_list");
            vec![(sigma2_to_snr(s), s)]
        } else {
            self.snr_db_list.iter().map(|&snr| (snr, snr_to_sigma2(snr))).collect()
        }
    }

    /// Noise power for single-point commands: `sigma2` if given, otherwise
    /// the first SNR of the list.
    pub fn default_sigma2(&self) -> f64 {
        self.sigma2.unwrap_or_else(|| snr_to_sigma2(self.snr_db_list[0]))
    }

    pub fn stats(&self, sigma2: f64) -> Result<ChannelStats> {
        match self.isotropic_paths {
            Some(l) => ChannelStats::isotropic(self.r, self.t, l, sigma2),
            None => build_stats(&self.clusters, self.r, self.t, sigma2),
        }
    }

    /// Same scenario keeping only the first `paths` clusters.
    pub fn truncated(&self, paths: usize) -> Self {
        let mut cfg = self.clone();
        if let Some(l) = cfg.isotropic_paths.as_mut() {
            *l = paths.min(*l);
        } else {
            cfg.clusters.truncate(paths);
        }
        cfg
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol.fixed_point,
            max_iter: self.tol.max_iter,
            ..SolverOptions::default()
        }
    }

    pub fn optimizer_settings(&self) -> OptimizerSettings {
        OptimizerSettings {
            outer_tol: self.tol.outer,
            max_outer: self.tol.max_outer,
            solver: self.solver_options(),
        }
    }
}

/// Row-major complex matrix with `[re, im]` entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub dim: usize,
    pub entries: Vec<[f64; 2]>,
}

impl MatrixJson {
    pub fn from_matrix(m: &ComplexMatrix) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "matrix files hold square matrices");
        let n = m.nrows();
        let entries = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| [m[(i, j)].re, m[(i, j)].im])
            .collect();
        MatrixJson { dim: n, entries }
    }

    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        if self.dim == 0 || self.entries.len() != self.dim * self.dim {
            return Err(Error::Config(format!(
                "matrix file declares dim {} but holds {} entries",
                self.dim,
                self.entries.len()
            )));
        }
        Ok(ComplexMatrix::from_row_iterator(
            self.dim,
            self.dim,
            self.entries.iter().map(|&[re, im]| Complex64::new(re, im)),
        ))
    }
}

pub fn matrix_to_json(m: &ComplexMatrix) -> String {
    serde_json::to_string_pretty(&MatrixJson::from_matrix(m)).expect("matrix serializes")
}

pub fn matrix_from_json(text: &str) -> Result<ComplexMatrix> {
    let mj: MatrixJson =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed matrix file: {e}")))?;
    mj.to_matrix()
}

pub fn write_matrix(path: &Path, m: &ComplexMatrix) -> Result<()> {
    let mut text = matrix_to_json(m);
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<ComplexMatrix> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    matrix_from_json(&text)
}

/// Reads a covariance file and validates membership in `C_1`. Matrices
/// that are not Hermitian beyond rounding are rejected rather than
/// symmetrized.
pub fn read_covariance(path: &Path) -> Result<CovarianceMatrix> {
    let m = read_matrix(path)?;
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let defect = (0..m.nrows())
        .flat_map(|i| (0..m.nrows()).map(move |j| (i, j)))
        .map(|(i, j)| (m[(i, j)] - m[(j, i)].conj()).norm())
        .fold(0.0, f64::max);
    if defect > HERMITIAN_FILE_TOLERANCE * scale {
        return Err(Error::Config(format!("matrix in {} is not Hermitian (defect {defect:e})", path.display())));
    }
    CovarianceMatrix::new(HermitianMatrix::new(m)?)
}
