//! Randomized truncated SVD with subspace iteration over abstract linear
//! operators.
//!
//! The algorithm sketches the range of the operator with a Gaussian test
//! matrix, optionally sharpens it with power iterations, and recovers a rank
//! `r` factorization from a small dense SVD:
//!
//! ```text
//! Y = X Omega,  Q = qr(Y)
//! repeat q times: Q = qr(X qr(X^T Q))      // orthogonalize after every apply
//! B = (X^T Q)^T,  B = U_B S V^T
//! U = Q U_B[:, :r],  sigma = S[:r],  V = V[:, :r]
//! ```
//!
//! Everything is deterministic given the seed: the Gaussian sketch depends
//! only on `(seed, shape)`, so running the same configuration against a dense
//! matrix and against an implicit operator of the same shape uses identical
//! random projections.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::numeric::{self, gaussian_matrix, Matrix, RngStream, Vector};

/// Anything that can act as an `M x N` matrix through products with vectors
/// and with its transpose. Batched variants default to column loops;
/// implementations with shared setup (FFT spectra, cached factorizations)
/// should override them.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;

    fn apply(&self, x: &Vector) -> Result<Vector>;
    fn apply_transpose(&self, y: &Vector) -> Result<Vector>;

    fn apply_mat(&self, x: &Matrix) -> Result<Matrix> {
        if x.nrows() != self.ncols() {
            return Err(CoreError::Dimension(format!(
                "operator is {}x{}, right factor has {} rows",
                self.nrows(),
                self.ncols(),
                x.nrows()
            )));
        }
        let mut out = Matrix::zeros(self.nrows(), x.ncols());
        for c in 0..x.ncols() {
            let y = self.apply(&x.column(c).into_owned())?;
            out.set_column(c, &y);
        }
        Ok(out)
    }

    fn apply_transpose_mat(&self, y: &Matrix) -> Result<Matrix> {
        if y.nrows() != self.nrows() {
            return Err(CoreError::Dimension(format!(
                "operator is {}x{}, left factor has {} rows",
                self.nrows(),
                self.ncols(),
                y.nrows()
            )));
        }
        let mut out = Matrix::zeros(self.ncols(), y.ncols());
        for c in 0..y.ncols() {
            let x = self.apply_transpose(&y.column(c).into_owned())?;
            out.set_column(c, &x);
        }
        Ok(out)
    }
}

/// Dense matrices are operators.
impl LinearOperator for Matrix {
    fn nrows(&self) -> usize {
        Matrix::nrows(self)
    }

    fn ncols(&self) -> usize {
        Matrix::ncols(self)
    }

    fn apply(&self, x: &Vector) -> Result<Vector> {
        if x.len() != Matrix::ncols(self) {
            return Err(CoreError::Dimension("matvec length mismatch".into()));
        }
        Ok(self * x)
    }

    fn apply_transpose(&self, y: &Vector) -> Result<Vector> {
        if y.len() != Matrix::nrows(self) {
            return Err(CoreError::Dimension("rmatvec length mismatch".into()));
        }
        Ok(self.tr_mul(y))
    }

    fn apply_mat(&self, x: &Matrix) -> Result<Matrix> {
        if x.nrows() != Matrix::ncols(self) {
            return Err(CoreError::Dimension("matmat shape mismatch".into()));
        }
        Ok(self * x)
    }

    fn apply_transpose_mat(&self, y: &Matrix) -> Result<Matrix> {
        if y.nrows() != Matrix::nrows(self) {
            return Err(CoreError::Dimension("rmatmat shape mismatch".into()));
        }
        Ok(self.tr_mul(y))
    }
}

/// Parameters of the randomized factorization.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RsvdConfig {
    pub target_rank: usize,
    /// Extra sketch columns beyond the target rank.
    pub oversampling: usize,
    /// Power (subspace) iterations; each one applies `X X^T` with
    /// re-orthogonalization after every operator application.
    pub power_iters: usize,
    pub seed: u64,
}

impl RsvdConfig {
    pub fn new(target_rank: usize, seed: u64) -> Self {
        Self { target_rank, oversampling: 20, power_iters: 1, seed }
    }

    pub fn sketch_width(&self) -> usize {
        self.target_rank + self.oversampling
    }

    fn validate(&self, nrows: usize, ncols: usize) -> Result<()> {
        if self.target_rank == 0 {
            return Err(CoreError::Config("target rank must be at least 1".into()));
        }
        let min_dim = nrows.min(ncols);
        if self.sketch_width() > min_dim {
            return Err(CoreError::Config(format!(
                "rank + oversampling = {} exceeds min dimension {min_dim}",
                self.sketch_width()
            )));
        }
        Ok(())
    }
}

/// Rank-`r` factorization `U diag(sigma) V^T` with orthonormal factors.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: Matrix,
    pub sigma: Vector,
    pub v: Matrix,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Truncation of a full factorization to its leading `r` triplets.
    pub fn from_full(f: &numeric::SvdFactors, r: usize) -> Result<Self> {
        if r == 0 || r > f.sigma.len() {
            return Err(CoreError::Config(format!(
                "cannot truncate rank-{} factorization to rank {r}",
                f.sigma.len()
            )));
        }
        Ok(Self {
            u: f.u.columns(0, r).into_owned(),
            sigma: f.sigma.rows(0, r).into_owned(),
            v: f.v.columns(0, r).into_owned(),
        })
    }

    pub fn orthonormality_residuals(&self) -> (f64, f64) {
        (numeric::orthonormality_residual(&self.u), numeric::orthonormality_residual(&self.v))
    }
}

/// Randomized truncated SVD of `op` (Gaussian sketch, `q` subspace
/// iterations, small dense SVD, truncation to the target rank).
pub fn randsvd<O: LinearOperator + ?Sized>(op: &O, cfg: &RsvdConfig) -> Result<TruncatedSvd> {
    cfg.validate(op.nrows(), op.ncols())?;
    let r = cfg.target_rank;
    let q = range_finder_from_rng(op, cfg.sketch_width(), cfg.power_iters, cfg.seed)?;

    // B = Q^T X computed as (X^T Q)^T so only transpose-products are needed.
    let b = op.apply_transpose_mat(&q)?.transpose();
    let fb = numeric::full_svd_into(b)?;
    let u = &q * fb.u.columns(0, r);
    Ok(TruncatedSvd {
        u,
        sigma: fb.sigma.rows(0, r).into_owned(),
        v: fb.v.columns(0, r).into_owned(),
    })
}

/// Orthonormal basis approximating the range of `op`: the sketch/QR stage of
/// [`randsvd`] exposed on its own.
pub fn range_finder<O: LinearOperator + ?Sized>(
    op: &O,
    k: usize,
    power_iters: usize,
    seed: u64,
) -> Result<Matrix> {
    if k == 0 || k > op.nrows().min(op.ncols()) {
        return Err(CoreError::Config(format!(
            "range finder width {k} out of range for {}x{} operator",
            op.nrows(),
            op.ncols()
        )));
    }
    range_finder_from_rng(op, k, power_iters, seed)
}

fn range_finder_from_rng<O: LinearOperator + ?Sized>(
    op: &O,
    k: usize,
    power_iters: usize,
    seed: u64,
) -> Result<Matrix> {
    let mut rng = RngStream::new(seed);
    let omega = gaussian_matrix(&mut rng, op.ncols(), k);
    let y = op.apply_mat(&omega)?;
    let (mut q, _) = numeric::thin_qr(&y)?;
    for _ in 0..power_iters {
        let z = op.apply_transpose_mat(&q)?;
        let (z, _) = numeric::thin_qr(&z)?;
        let y = op.apply_mat(&z)?;
        let (qq, _) = numeric::thin_qr(&y)?;
        q = qq;
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::full_svd;

    fn rand_mat(seed: u64, r: usize, c: usize) -> Matrix {
        gaussian_matrix(&mut RngStream::new(seed), r, c)
    }

    /// Random matrix of exact rank `r` with unit-scale factors.
    fn exact_rank(seed: u64, m: usize, n: usize, r: usize) -> Matrix {
        rand_mat(seed, m, r) * rand_mat(seed + 1, r, n)
    }

    #[test]
    fn exact_rank_matrix_recovered() {
        let x = exact_rank(1, 30, 24, 5);
        let cfg = RsvdConfig { target_rank: 5, oversampling: 2, power_iters: 0, seed: 7 };
        let t = randsvd(&x, &cfg).unwrap();
        let full = full_svd(&x).unwrap();
        for i in 0..5 {
            assert!((t.sigma[i] - full.sigma[i]).abs() <= 1e-9 * full.sigma[0]);
        }
        let rec = &t.u * Matrix::from_diagonal(&t.sigma) * t.v.transpose();
        assert!((rec - &x).norm() <= 1e-9 * x.norm());
        let (ru, rv) = t.orthonormality_residuals();
        assert!(ru <= 1e-10 * (5f64).sqrt() && rv <= 1e-10 * (5f64).sqrt());
    }

    #[test]
    fn zero_operator() {
        let x = Matrix::zeros(12, 9);
        let cfg = RsvdConfig { target_rank: 3, oversampling: 3, power_iters: 1, seed: 0 };
        let t = randsvd(&x, &cfg).unwrap();
        assert!(t.sigma.iter().all(|s| *s == 0.0));
    }

    #[test]
    fn full_sampling_is_exact() {
        let diag: Vec<f64> = (0..10).map(|i| 0.5f64.powi(i)).collect();
        let x = Matrix::from_diagonal(&Vector::from_vec(diag));
        let cfg = RsvdConfig { target_rank: 3, oversampling: 7, power_iters: 0, seed: 3 };
        let t = randsvd(&x, &cfg).unwrap();
        assert!((t.sigma[0] - 1.0).abs() <= 1e-10);
        assert!((t.sigma[1] - 0.5).abs() <= 1e-10);
        assert!((t.sigma[2] - 0.25).abs() <= 1e-10);
    }

    #[test]
    fn range_finder_captures_exact_rank() {
        let x = exact_rank(4, 40, 22, 6);
        let q = range_finder(&x, 6, 0, 11).unwrap();
        assert!(numeric::orthonormality_residual(&q) <= 1e-10);
        let resid = &x - &q * q.tr_mul(&x);
        assert!(resid.norm() <= 1e-9 * x.norm());

        // Full-width sketch captures everything.
        let y = rand_mat(5, 15, 12);
        let q = range_finder(&y, 12, 0, 2).unwrap();
        let resid = &y - &q * q.tr_mul(&y);
        assert!(resid.norm() <= 1e-10 * y.norm());
    }

    #[test]
    fn config_validation() {
        let x = Matrix::zeros(6, 5);
        let cfg = RsvdConfig { target_rank: 4, oversampling: 2, power_iters: 0, seed: 0 };
        assert!(matches!(randsvd(&x, &cfg), Err(CoreError::Config(_))));
        let cfg = RsvdConfig { target_rank: 0, oversampling: 2, power_iters: 0, seed: 0 };
        assert!(matches!(randsvd(&x, &cfg), Err(CoreError::Config(_))));
    }

    /// Test matrix with geometric spectral decay ratio 0.5 and random
    /// singular vectors.
    fn geometric_decay(seed: u64, m: usize, n: usize) -> Matrix {
        let k = m.min(n);
        let (qu, _) = numeric::thin_qr(&rand_mat(seed, m, k)).unwrap();
        let (qv, _) = numeric::thin_qr(&rand_mat(seed + 1, n, k)).unwrap();
        let sigma = Vector::from_fn(k, |i, _| 0.5f64.powi(i as i32));
        qu * Matrix::from_diagonal(&sigma) * qv.transpose()
    }

    #[test]
    fn sigma_never_overshoots_and_error_near_optimal() {
        let x = geometric_decay(40, 28, 22);
        let full = full_svd(&x).unwrap();
        let r = 5;
        let mut passes = 0;
        for seed in 0..20u64 {
            let cfg = RsvdConfig { target_rank: r, oversampling: 4, power_iters: 1, seed };
            let t = randsvd(&x, &cfg).unwrap();
            for i in 0..r {
                assert!(t.sigma[i] <= full.sigma[i] + 1e-9 * full.sigma[0]);
            }
            let err = numeric::spectral_norm(&(&x - &t.u * Matrix::from_diagonal(&t.sigma) * t.v.transpose()));
            if err <= 10.0 * full.sigma[r] {
                passes += 1;
            }
        }
        assert!(passes >= 18, "only {passes}/20 seeds within 10x of sigma_(r+1)");
    }

    #[test]
    fn median_error_monotone_in_power_iters() {
        let x = geometric_decay(50, 30, 26);
        let full = full_svd(&x).unwrap();
        let r = 4;
        let median_err = |q: usize| {
            let mut errs: Vec<f64> = (0..9u64)
                .map(|seed| {
                    let cfg = RsvdConfig { target_rank: r, oversampling: 3, power_iters: q, seed };
                    let t = randsvd(&x, &cfg).unwrap();
                    numeric::spectral_norm(
                        &(&x - &t.u * Matrix::from_diagonal(&t.sigma) * t.v.transpose()),
                    )
                })
                .collect();
            errs.sort_by(f64::total_cmp);
            errs[4]
        };
        let (e0, e1, e2) = (median_err(0), median_err(1), median_err(2));
        let slack = 1e-12 * full.sigma[0];
        assert!(e1 <= e0 + slack, "q=1 median {e1} vs q=0 {e0}");
        assert!(e2 <= e1 + slack, "q=2 median {e2} vs q=1 {e1}");
    }

    #[test]
    fn determinism_bitwise() {
        let x = geometric_decay(60, 20, 17);
        let cfg = RsvdConfig { target_rank: 4, oversampling: 5, power_iters: 1, seed: 123 };
        let a = randsvd(&x, &cfg).unwrap();
        let b = randsvd(&x, &cfg).unwrap();
        assert_eq!(a.u, b.u);
        assert_eq!(a.sigma, b.sigma);
        assert_eq!(a.v, b.v);
    }
}
