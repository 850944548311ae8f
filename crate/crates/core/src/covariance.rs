//! Input covariance matrices with normalized trace, `(1/t) Tr Q = 1`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::{psd_eig, ComplexMatrix, EigDecomposition, HermitianMatrix};
use num_complex::Complex64;

/// Tolerance on `(1/t) Tr Q - 1`.
pub const TRACE_TOLERANCE: f64 = 1e-12;

/// Eigenvalues of `Q` at or below this fraction of the largest one make `Q`
/// singular for the canonical equations.
const SINGULAR_RATIO: f64 = 1e-12;

/// A Hermitian PSD `t x t` matrix in the set `C_1`.
#[derive(Clone, Debug)]
pub struct CovarianceMatrix {
    q: HermitianMatrix,
    eig: EigDecomposition,
    sqrt: HermitianMatrix,
}

impl CovarianceMatrix {
    /// Validates PSD (within tolerance) and the trace constraint.
    pub fn new(q: HermitianMatrix) -> Result<Self> {
        let t = q.dim() as f64;
        let normalized_trace = q.trace() / t;
        if (normalized_trace - 1.0).abs() > TRACE_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "covariance must satisfy (1/t) Tr Q = 1, got {normalized_trace}"
            )));
        }
        let eig = psd_eig(&q)?;
        let roots: Vec<f64> = eig.eigenvalues.iter().map(|v| v.sqrt()).collect();
        let sqrt = HermitianMatrix::from_eigen(&eig.eigenvectors, &roots);
        Ok(CovarianceMatrix { q, eig, sqrt })
    }

    /// Rescales a nonzero PSD matrix onto `C_1`.
    pub fn normalized(m: HermitianMatrix) -> Result<Self> {
        let tr = m.trace();
        if !(tr > 0.0) {
            return Err(Error::InvalidInput("cannot normalize a matrix with nonpositive trace".into()));
        }
        Self::new(m.scale(m.dim() as f64 / tr))
    }

    pub fn identity(t: usize) -> Self {
        let q = HermitianMatrix::identity(t);
        CovarianceMatrix {
            eig: EigDecomposition {
                eigenvalues: vec![1.0; t],
                eigenvectors: ComplexMatrix::identity(t, t),
            },
            sqrt: q.clone(),
            q,
        }
    }

    /// `U diag(powers) U^H`; the powers must be nonnegative and sum to `t`.
    pub fn from_eigen(vectors: &ComplexMatrix, powers: &[f64]) -> Result<Self> {
        Self::new(HermitianMatrix::from_eigen(vectors, powers))
    }

    /// Deterministic pseudo-random point of `C_1`: a normalized complex
    /// Wishart draw.
    pub fn random(t: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = ComplexMatrix::from_fn(t, t, |_, _| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im)
        });
        Self::normalized(HermitianMatrix::symmetrize(&g * g.adjoint()))
            .expect("a wishart draw is PSD with positive trace")
    }

    /// `lambda a + (1 - lambda) b`.
    pub fn mix(a: &Self, b: &Self, lambda: f64) -> Result<Self> {
        Self::new(a.q.scale(lambda).add(&b.q.scale(1.0 - lambda)))
    }

    pub fn t(&self) -> usize {
        self.q.dim()
    }

    pub fn matrix(&self) -> &HermitianMatrix {
        &self.q
    }

    pub fn sqrt(&self) -> &HermitianMatrix {
        &self.sqrt
    }

    /// Eigenvalues clamped at zero, ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eig.eigenvalues
    }

    pub fn eigenvectors(&self) -> &ComplexMatrix {
        &self.eig.eigenvectors
    }

    pub fn is_singular(&self) -> bool {
        self.eig.min() <= SINGULAR_RATIO * self.eig.max()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_in_c1() {
        let q = CovarianceMatrix::identity(4);
        assert_eq!(q.matrix().trace(), 4.0);
        assert!(!q.is_singular());
    }

    #[test]
    fn rejects_wrong_trace_and_indefinite() {
        assert!(CovarianceMatrix::new(HermitianMatrix::identity(3).scale(1.1)).is_err());
        assert!(CovarianceMatrix::new(HermitianMatrix::from_real_diagonal(&[2.5, -0.5])).is_err());
    }

    #[test]
    fn random_points_are_feasible_and_deterministic() {
        for seed in 0..20 {
            let a = CovarianceMatrix::random(5, seed);
            let b = CovarianceMatrix::random(5, seed);
            assert_eq!(a.matrix(), b.matrix());
            assert!((a.matrix().trace() / 5.0 - 1.0).abs() <= TRACE_TOLERANCE);
            assert!(a.eigenvalues()[0] >= 0.0);
        }
    }

    #[test]
    fn singular_detection() {
        let q = CovarianceMatrix::new(HermitianMatrix::from_real_diagonal(&[2.0, 0.0])).unwrap();
        assert!(q.is_singular());
        assert_eq!(q.sqrt().get(1, 1).re, 0.0);
    }
}
