//! Dense complex Hermitian linear algebra.
//!
//! Everything downstream (canonical equations, the EMI approximation,
//! waterfilling, Monte-Carlo) works on small dense Hermitian matrices, so the
//! primitives here are thin, checked wrappers over `nalgebra` with the
//! conventions the rest of the crate relies on:
//!
//! * a [`HermitianMatrix`] is exactly Hermitian after construction
//!   (`m[(i, j)] == conj(m[(j, i)])` bit for bit);
//! * eigenvalues come back in ascending order with a fixed eigenvector phase;
//! * PSD checks use a relative tolerance of [`PSD_TOLERANCE`].

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;

/// Relative tolerance below zero accepted for PSD inputs (scaled by the
/// spectral norm of the matrix).
pub const PSD_TOLERANCE: f64 = 1e-10;

const EIG_EPS: f64 = 1e-15;
const EIG_MAX_SWEEPS: usize = 10_000;

/// A square complex matrix equal to its conjugate transpose.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix(ComplexMatrix);

impl HermitianMatrix {
    /// Symmetrizes `m` into `(m + m^H) / 2`. Fails on non-square or
    /// non-finite input.
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "hermitian matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        Ok(Self::symmetrize(m))
    }

    /// Symmetrizes without validation. Callers guarantee squareness.
    pub(crate) fn symmetrize(mut m: ComplexMatrix) -> Self {
        let n = m.nrows();
        for i in 0..n {
            m[(i, i)] = Complex64::new(m[(i, i)].re, 0.0);
            for j in (i + 1)..n {
                let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
                m[(i, j)] = avg;
                m[(j, i)] = avg.conj();
            }
        }
        HermitianMatrix(m)
    }

    pub fn identity(n: usize) -> Self {
        HermitianMatrix(ComplexMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        HermitianMatrix(ComplexMatrix::zeros(n, n))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = ComplexMatrix::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d, 0.0);
        }
        HermitianMatrix(m)
    }

    /// Builds `U diag(values) U^H`.
    pub fn from_eigen(vectors: &ComplexMatrix, values: &[f64]) -> Self {
        let mut scaled = vectors.clone();
        for (j, &v) in values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(v);
        }
        Self::symmetrize(&scaled * vectors.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }

    /// Real trace.
    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0[(i, i)].re).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, factor: f64) -> Self {
        HermitianMatrix(self.0.map(|z| z * factor))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::symmetrize(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::symmetrize(&self.0 - &other.0)
    }

    /// `I + self`.
    pub fn plus_identity(&self) -> Self {
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += Complex64::new(1.0, 0.0);
        }
        HermitianMatrix(m)
    }

    /// `A self A^H` for a square `A` of matching size.
    pub fn congruence(&self, a: &ComplexMatrix) -> Self {
        Self::symmetrize(a * &self.0 * a.adjoint())
    }

    /// Maximum entrywise deviation from Hermitian symmetry.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        worst
    }
}

/// Eigen-decomposition `M = U diag(eigenvalues) U^H`.
#[derive(Clone, Debug)]
pub struct EigDecomposition {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Unitary, eigenvectors as columns. The first component of magnitude
    /// above 1e-12 in each column is real and positive.
    pub eigenvectors: ComplexMatrix,
}

impl EigDecomposition {
    pub fn reconstruct(&self) -> HermitianMatrix {
        HermitianMatrix::from_eigen(&self.eigenvectors, &self.eigenvalues)
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        *self.eigenvalues.last().unwrap()
    }

    /// Spectral norm of the decomposed matrix.
    pub fn spectral_norm(&self) -> f64 {
        self.min().abs().max(self.max().abs())
    }
}

pub fn hermitian_eig(m: &HermitianMatrix) -> Result<EigDecomposition> {
    let n = m.dim();
    let eig = SymmetricEigen::try_new(m.as_matrix().clone(), EIG_EPS, EIG_MAX_SWEEPS).ok_or(
        Error::EigNonConvergence {
            dim: n,
            residual: f64::NAN,
        },
    )?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut vectors = ComplexMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        let mut col = eig.eigenvectors.column(src).into_owned();
        if let Some(pivot) = col.iter().find(|z| z.norm() > 1e-12).copied() {
            let phase = pivot.conj() / pivot.norm();
            col *= phase;
        }
        vectors.set_column(dst, &col);
    }

    let decomposition = EigDecomposition {
        eigenvalues: values,
        eigenvectors: vectors,
    };
    let residual = (decomposition.reconstruct().as_matrix() - m.as_matrix())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if !residual.is_finite() || residual > 1e-8 * (1.0 + m.max_abs()) {
        return Err(Error::EigNonConvergence { dim: n, residual });
    }
    Ok(decomposition)
}

fn check_psd(eig: &EigDecomposition) -> Result<()> {
    let tolerance = PSD_TOLERANCE * eig.spectral_norm();
    if eig.min() < -tolerance {
        return Err(Error::NotPsd {
            min_eigenvalue: eig.min(),
            tolerance,
        });
    }
    Ok(())
}

/// Checks `m` is PSD within [`PSD_TOLERANCE`] and returns its eigenvalues
/// with the tolerated negative part clamped to zero.
pub fn psd_eig(m: &HermitianMatrix) -> Result<EigDecomposition> {
    let mut eig = hermitian_eig(m)?;
    check_psd(&eig)?;
    for v in &mut eig.eigenvalues {
        *v = v.max(0.0);
    }
    Ok(eig)
}

/// Principal square root of a PSD matrix.
pub fn psd_sqrt(m: &HermitianMatrix) -> Result<HermitianMatrix> {
    let eig = psd_eig(m)?;
    let roots: Vec<f64> = eig.eigenvalues.iter().map(|v| v.sqrt()).collect();
    Ok(HermitianMatrix::from_eigen(&eig.eigenvectors, &roots))
}

/// `log det(I + m)` in nats, from the eigenvalues of `m`.
pub fn log_det_i_plus(m: &HermitianMatrix) -> Result<f64> {
    let eig = hermitian_eig(m)?;
    if let Some(&bad) = eig.eigenvalues.iter().find(|&&v| v <= -1.0) {
        return Err(Error::NotPosDef(format!(
            "I + m has eigenvalue {:e}",
            1.0 + bad
        )));
    }
    Ok(eig.eigenvalues.iter().map(|v| v.ln_1p()).sum())
}

/// Inverse of a Hermitian positive definite matrix via Cholesky.
pub fn hpd_inverse(m: &HermitianMatrix) -> Result<HermitianMatrix> {
    let chol = Cholesky::new(m.as_matrix().clone())
        .ok_or_else(|| Error::NotPosDef("cholesky factorization failed".into()))?;
    // complex Cholesky takes complex square roots of negative pivots
    let factor = chol.l_dirty();
    if (0..m.dim()).any(|i| !(factor[(i, i)].re > 0.0) || factor[(i, i)].im != 0.0) {
        return Err(Error::NotPosDef("cholesky pivot is not positive".into()));
    }
    Ok(HermitianMatrix::symmetrize(chol.inverse()))
}

/// Inverse of a general square complex matrix via partial-pivot LU.
pub fn general_inverse(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    m.clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("singular matrix".into()))
}

/// `Tr(a b)` without forming the product.
pub fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 100_000;
const POWER_STAGNATION_WINDOW: usize = 1_000;

/// Spectral radius of an entrywise nonnegative square matrix.
///
/// Power iteration from the all-ones vector, stopped on the Collatz-Wielandt
/// bracket `min_i (Mx)_i / x_i <= rho <= max_i (Mx)_i / x_i`. Falls back to the
/// dense eigenvalues when the iterate loses positivity or the bracket stops
/// shrinking.
pub fn spectral_radius_nonneg(m: &DMatrix<f64>) -> f64 {
    assert_eq!(m.nrows(), m.ncols(), "spectral radius needs a square matrix");
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut x = DVector::from_element(n, 1.0);
    let mut best_gap = f64::INFINITY;
    let mut last_improvement = 0;
    for iter in 0..POWER_MAX_ITER {
        let y = m * &x;
        let scale = y.amax();
        if scale == 0.0 {
            return 0.0;
        }
        if x.iter().any(|&v| v <= 0.0) {
            break;
        }
        let (lo, hi) = y
            .iter()
            .zip(x.iter())
            .map(|(a, b)| a / b)
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r), hi.max(r)));
        if hi - lo <= POWER_TOL * hi {
            return 0.5 * (lo + hi);
        }
        if hi - lo < best_gap * (1.0 - 1e-9) {
            best_gap = hi - lo;
            last_improvement = iter;
        } else if iter - last_improvement > POWER_STAGNATION_WINDOW {
            break;
        }
        x = y / scale;
    }
    dense_spectral_radius(m)
}

pub(crate) fn dense_spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}
