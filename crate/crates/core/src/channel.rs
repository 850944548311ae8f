//! Kronecker-correlated multipath channel statistics and realizations.
//!
//! Each path `l` carries a receive correlation `C_r(l)` (r x r) and a transmit
//! correlation `C_t(l)` (t x t). A realization of path `l` is
//! `H_l = t^{-1/2} C_r(l)^{1/2} W_l C_t(l)^{1/2}` with `W_l` i.i.d. unit-variance
//! circular complex Gaussian, and the frequency-flat channel is `H = sum_l H_l`.
//!
//! Correlations are synthesized from scatterer-cluster angles for a
//! half-wavelength uniform linear array with a Gaussian power azimuth
//! spectrum (small-spread closed form).

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{psd_eig, psd_sqrt, ComplexMatrix, HermitianMatrix};
use num_complex::Complex64;

/// Angular description of one scatterer cluster, in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathCluster {
    pub mean_aod: f64,
    pub aod_spread: f64,
    pub mean_aoa: f64,
    pub aoa_spread: f64,
    #[serde(default = "unit_power")]
    pub power: f64,
}

fn unit_power() -> f64 {
    1.0
}

impl PathCluster {
    pub fn validate(&self) -> Result<()> {
        let angles = [self.mean_aod, self.aod_spread, self.mean_aoa, self.aoa_spread];
        if angles.iter().any(|a| !a.is_finite()) || !self.power.is_finite() {
            return Err(Error::InvalidInput("cluster parameters must be finite".into()));
        }
        if self.aod_spread <= 0.0 || self.aoa_spread <= 0.0 {
            return Err(Error::InvalidInput("angle spreads must be positive".into()));
        }
        if self.power < 0.0 {
            return Err(Error::InvalidInput("cluster power must be nonnegative".into()));
        }
        Ok(())
    }
}

/// The five equal-power clusters used for the correlated reference scenario.
pub fn reference_clusters() -> Vec<PathCluster> {
    const AOD: [f64; 5] = [6.15, 3.52, 4.04, 2.58, 2.66];
    const AOD_SPREAD: [f64; 5] = [0.06, 0.09, 0.05, 0.05, 0.03];
    const AOA: [f64; 5] = [4.85, 3.48, 1.71, 5.31, 0.06];
    const AOA_SPREAD: [f64; 5] = [0.06, 0.08, 0.05, 0.02, 0.11];
    (0..5)
        .map(|l| PathCluster {
            mean_aod: AOD[l],
            aod_spread: AOD_SPREAD[l],
            mean_aoa: AOA[l],
            aoa_spread: AOA_SPREAD[l],
            power: 1.0,
        })
        .collect()
}

/// Correlation entry between antennas `p` and `q` of a half-wavelength ULA.
pub fn correlation_entry(offset: f64, mean_angle: f64, spread: f64) -> Complex64 {
    let phase = PI * offset * mean_angle.sin();
    let taper = PI * offset * mean_angle.cos() * spread;
    Complex64::from_polar((-0.5 * taper * taper).exp(), phase)
}

/// `n x n` array correlation for a cluster seen at `mean_angle` with angular
/// spread `spread`. Unit diagonal, Hermitian Toeplitz.
pub fn correlation_from_cluster(n: usize, mean_angle: f64, spread: f64) -> Result<HermitianMatrix> {
    if n == 0 {
        return Err(Error::InvalidInput("antenna count must be positive".into()));
    }
    if !(spread > 0.0) || !mean_angle.is_finite() || !spread.is_finite() {
        return Err(Error::InvalidInput("angle spread must be positive and finite".into()));
    }
    let m = ComplexMatrix::from_fn(n, n, |p, q| correlation_entry(p as f64 - q as f64, mean_angle, spread));
    let h = HermitianMatrix::new(m)?;
    psd_eig(&h)?;
    Ok(h)
}

/// Receive/transmit correlation pair of one path.
#[derive(Clone, Debug)]
pub struct PathCorrelation {
    pub receive: HermitianMatrix,
    pub transmit: HermitianMatrix,
}

/// Second-order statistics of the multipath channel plus the noise power.
#[derive(Clone, Debug)]
pub struct ChannelStats {
    r: usize,
    t: usize,
    paths: Vec<PathCorrelation>,
    sigma2: f64,
    receive_sqrt: Vec<HermitianMatrix>,
    transmit_sqrt: Vec<HermitianMatrix>,
}

impl ChannelStats {
    pub fn new(r: usize, t: usize, paths: Vec<PathCorrelation>, sigma2: f64) -> Result<Self> {
        if r == 0 || t == 0 {
            return Err(Error::InvalidInput("antenna counts must be positive".into()));
        }
        if paths.is_empty() {
            return Err(Error::InvalidInput("at least one path is required".into()));
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidInput(format!("noise power must be positive, got {sigma2}")));
        }
        let mut receive_sqrt = Vec::with_capacity(paths.len());
        let mut transmit_sqrt = Vec::with_capacity(paths.len());
        for (l, p) in paths.iter().enumerate() {
            if p.receive.dim() != r || p.transmit.dim() != t {
                return Err(Error::Dimension(format!(
                    "path {l}: expected {r}x{r} receive and {t}x{t} transmit correlation, got {} and {}",
                    p.receive.dim(),
                    p.transmit.dim()
                )));
            }
            receive_sqrt.push(psd_sqrt(&p.receive)?);
            transmit_sqrt.push(psd_sqrt(&p.transmit)?);
        }
        Ok(ChannelStats {
            r,
            t,
            paths,
            sigma2,
            receive_sqrt,
            transmit_sqrt,
        })
    }

    /// `L` paths with every correlation equal to the identity.
    pub fn isotropic(r: usize, t: usize, paths: usize, sigma2: f64) -> Result<Self> {
        let pair = PathCorrelation {
            receive: HermitianMatrix::identity(r),
            transmit: HermitianMatrix::identity(t),
        };
        Self::new(r, t, vec![pair; paths], sigma2)
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn paths(&self) -> &[PathCorrelation] {
        &self.paths
    }

    pub fn receive(&self, l: usize) -> &HermitianMatrix {
        &self.paths[l].receive
    }

    pub fn transmit(&self, l: usize) -> &HermitianMatrix {
        &self.paths[l].transmit
    }

    /// Same correlations at a different noise power.
    pub fn with_sigma2(&self, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidInput(format!("noise power must be positive, got {sigma2}")));
        }
        Ok(ChannelStats {
            sigma2,
            ..self.clone()
        })
    }

    /// `(1/t^2) sum_l Tr C_r(l) Tr C_t(l)`, the mean of `(1/t) Tr H H^H`.
    pub fn second_moment(&self) -> f64 {
        let t = self.t as f64;
        self.paths
            .iter()
            .map(|p| p.receive.trace() * p.transmit.trace())
            .sum::<f64>()
            / (t * t)
    }

    /// `C(kappa_tilde) = sum_l kappa_tilde_l C_r(l)`.
    pub fn receive_combination(&self, weights: &[f64]) -> HermitianMatrix {
        combine(self.paths.iter().map(|p| &p.receive), weights, self.r)
    }

    /// `C~(kappa) = sum_l kappa_l C_t(l)`.
    pub fn transmit_combination(&self, weights: &[f64]) -> HermitianMatrix {
        combine(self.paths.iter().map(|p| &p.transmit), weights, self.t)
    }
}

fn combine<'a>(
    mats: impl Iterator<Item = &'a HermitianMatrix>,
    weights: &[f64],
    n: usize,
) -> HermitianMatrix {
    let mut acc = ComplexMatrix::zeros(n, n);
    for (m, &w) in mats.zip(weights) {
        acc += m.as_matrix() * Complex64::new(w, 0.0);
    }
    HermitianMatrix::symmetrize(acc)
}

/// Builds per-path correlations from clusters. Powers are normalized to sum
/// to one and applied on the transmit side as `power_l * L`, so equal powers
/// leave unit-diagonal matrices.
pub fn build_stats(clusters: &[PathCluster], r: usize, t: usize, sigma2: f64) -> Result<ChannelStats> {
    if clusters.is_empty() {
        return Err(Error::InvalidInput("at least one cluster is required".into()));
    }
    for c in clusters {
        c.validate()?;
    }
    let total: f64 = clusters.iter().map(|c| c.power).sum();
    if !(total > 0.0) {
        return Err(Error::InvalidInput("total cluster power must be positive".into()));
    }
    let count = clusters.len() as f64;
    let paths = clusters
        .iter()
        .map(|c| {
            let receive = correlation_from_cluster(r, c.mean_aoa, c.aoa_spread)?;
            let transmit = correlation_from_cluster(t, c.mean_aod, c.aod_spread)?
                .scale(c.power / total * count);
            Ok(PathCorrelation { receive, transmit })
        })
        .collect::<Result<Vec<_>>>()?;
    ChannelStats::new(r, t, paths, sigma2)
}

/// One draw of the frequency-flat channel `H = sum_l H_l`.
#[derive(Clone, Debug)]
pub struct ChannelRealization {
    pub h: ComplexMatrix,
}

/// Generator for path `path` of trial `trial`. The key layout is fixed so a
/// trial draws the same matrices regardless of which thread evaluates it.
fn path_rng(seed: u64, trial: u64, path: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(path as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(trial);
    rng
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
    })
}

/// Draws the per-path matrices `H_l` of trial `trial`.
pub fn sample_paths(stats: &ChannelStats, seed: u64, trial: u64) -> Vec<ComplexMatrix> {
    let scale = Complex64::new(1.0 / (stats.t as f64).sqrt(), 0.0);
    (0..stats.num_paths())
        .map(|l| {
            let mut rng = path_rng(seed, trial, l);
            let w = gaussian_matrix(&mut rng, stats.r, stats.t);
            stats.receive_sqrt[l].as_matrix() * w * stats.transmit_sqrt[l].as_matrix() * scale
        })
        .collect()
}

pub(crate) fn sample_trial(stats: &ChannelStats, seed: u64, trial: u64) -> ChannelRealization {
    let mut h = ComplexMatrix::zeros(stats.r, stats.t);
    for hl in sample_paths(stats, seed, trial) {
        h += hl;
    }
    ChannelRealization { h }
}

/// A single channel realization, deterministic in `seed`.
pub fn sample_channel(stats: &ChannelStats, seed: u64) -> ChannelRealization {
    sample_trial(stats, seed, 0)
}
