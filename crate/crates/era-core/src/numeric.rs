//! Dense real linear-algebra kernels and deterministic Gaussian sampling.
//!
//! Everything here is a pure function over immutable inputs. Matrices are
//! `nalgebra::DMatrix<f64>` (column-major storage, `(row, col)` indexing).
//! Column signs of SVD/QR factors are *not* normalized; downstream math is
//! sign-invariant and tests only compare sign-invariant quantities.
//!
//! Large SVDs are delegated to the system LAPACK `dgesdd` kernel when the
//! `system-lapack` feature is enabled (default); small ones go through
//! nalgebra, which is single-threaded and bit-deterministic.

use nalgebra::{Complex, DMatrix, DVector};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{CoreError, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type ComplexMatrix = DMatrix<Complex<f64>>;
pub type ComplexVector = DVector<Complex<f64>>;

/// Matrices whose smaller dimension is at most this go through nalgebra's
/// own SVD; it is deterministic and fast enough at these sizes, and keeps
/// the randomized pipeline (which only ever factorizes short-fat sketch
/// matrices) independent of the threaded LAPACK kernel.
const LAPACK_MIN_DIM: usize = 128;

/// An SVD `X = U diag(sigma) V^T` with orthonormal `U` (M x k) and `V`
/// (N x k), `sigma` nonincreasing, `k = min(M, N)` for the full kernel.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: Matrix,
    pub sigma: Vector,
    pub v: Matrix,
}

impl SvdFactors {
    /// Frobenius residuals `(‖UᵀU − I‖_F, ‖VᵀV − I‖_F)`.
    pub fn orthonormality_residuals(&self) -> (f64, f64) {
        (orthonormality_residual(&self.u), orthonormality_residual(&self.v))
    }
}

pub fn orthonormality_residual(q: &Matrix) -> f64 {
    let k = q.ncols();
    let mut g = q.tr_mul(q);
    for i in 0..k {
        g[(i, i)] -= 1.0;
    }
    g.norm()
}

fn check_finite(x: &Matrix, what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CoreError::InvalidInput(format!("{what} contains non-finite entries")))
    }
}

/// Full (thin) SVD of `x`, singular values sorted nonincreasing.
pub fn full_svd(x: &Matrix) -> Result<SvdFactors> {
    check_finite(x, "svd input")?;
    if lapack_eligible(x.nrows(), x.ncols()) {
        lapack::dgesdd(x.clone())
    } else {
        full_svd_nalgebra(x.clone())
    }
}

/// Consuming variant of [`full_svd`]; avoids one copy of the input, which
/// matters when factorizing multi-gigabyte Hankel matrices.
pub fn full_svd_into(x: Matrix) -> Result<SvdFactors> {
    check_finite(&x, "svd input")?;
    if lapack_eligible(x.nrows(), x.ncols()) {
        lapack::dgesdd(x)
    } else {
        full_svd_nalgebra(x)
    }
}

fn lapack_eligible(m: usize, n: usize) -> bool {
    cfg!(feature = "system-lapack")
        && m.min(n) > LAPACK_MIN_DIM
        && m <= i32::MAX as usize
        && n <= i32::MAX as usize
}

fn full_svd_nalgebra(x: Matrix) -> Result<SvdFactors> {
    let svd = x
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| CoreError::Numerical("SVD did not converge".into()))?;
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    Ok(SvdFactors { u, sigma: svd.singular_values, v: v_t.transpose() })
}

/// Thin QR of a tall matrix (`rows >= cols`): `Y = QR` with orthonormal `Q`
/// (M x N) and upper-triangular `R` (N x N).
pub fn thin_qr(y: &Matrix) -> Result<(Matrix, Matrix)> {
    if y.nrows() < y.ncols() {
        return Err(CoreError::Dimension(format!(
            "thin QR needs rows >= cols, got {}x{}",
            y.nrows(),
            y.ncols()
        )));
    }
    check_finite(y, "qr input")?;
    let qr = y.clone().qr();
    Ok((qr.q(), qr.r()))
}

/// Moore-Penrose pseudoinverse via the SVD. Singular values at or below
/// `tol * sigma_1` are treated as zero; `tol` defaults to
/// `max(rows, cols) * eps`, the usual numerical-rank cutoff.
pub fn pinv(m: &Matrix, tol: Option<f64>) -> Result<Matrix> {
    let f = full_svd(m)?;
    let tol = tol.unwrap_or(m.nrows().max(m.ncols()) as f64 * f64::EPSILON);
    Ok(pinv_from_svd(&f, tol))
}

pub(crate) fn pinv_from_svd(f: &SvdFactors, tol: f64) -> Matrix {
    let cutoff = tol * f.sigma.max();
    let k = f.sigma.len();
    // V diag(1/sigma) U^T, dropping directions below the cutoff.
    let mut v_scaled = f.v.clone();
    for j in 0..k {
        let s = f.sigma[j];
        let inv = if s > cutoff && s > 0.0 { 1.0 / s } else { 0.0 };
        v_scaled.column_mut(j).scale_mut(inv);
    }
    v_scaled * f.u.transpose()
}

/// Eigendecomposition of a real square matrix.
///
/// Eigenvalues come from the real Schur form and are returned in descending
/// modulus order with complex-conjugate pairs adjacent (positive imaginary
/// part first). Eigenvectors are unit 2-norm with a fixed phase convention
/// (largest-magnitude entry rotated to the positive real axis) so that
/// derived quantities such as eigenvector condition numbers are reproducible.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<Complex<f64>>,
    pub vectors: ComplexMatrix,
}

impl Eigen {
    pub fn spectral_radius(&self) -> f64 {
        self.values.first().map(|z| z.norm()).unwrap_or(0.0)
    }
}

pub fn eig(a: &Matrix) -> Result<Eigen> {
    if a.nrows() != a.ncols() {
        return Err(CoreError::Dimension(format!(
            "eig needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    check_finite(a, "eig input")?;
    let n = a.nrows();
    if n == 0 {
        return Ok(Eigen { values: vec![], vectors: ComplexMatrix::zeros(0, 0) });
    }

    let mut values: Vec<Complex<f64>> = a
        .clone()
        .try_schur(f64::EPSILON, 0)
        .ok_or_else(|| CoreError::Numerical("Schur iteration did not converge".into()))?
        .complex_eigenvalues()
        .iter()
        .copied()
        .collect();
    values.sort_by(|x, y| {
        y.norm()
            .total_cmp(&x.norm())
            .then(y.re.total_cmp(&x.re))
            .then(y.im.abs().total_cmp(&x.im.abs()))
            .then(y.im.total_cmp(&x.im))
    });

    // Eigenvectors by null-space extraction: for each cluster of (nearly)
    // equal eigenvalues take the trailing right singular vectors of
    // (A - lambda I), which span its numerical kernel. Defective matrices
    // get a best-effort basis this way.
    let ac = a.map(|v| Complex::new(v, 0.0));
    let scale = a.norm();
    let cluster_tol = 1e-10 * scale.max(1.0);
    let mut vectors = ComplexMatrix::zeros(n, n);
    let mut idx = 0;
    while idx < n {
        let mut end = idx + 1;
        while end < n && (values[end] - values[idx]).norm() <= cluster_tol {
            end += 1;
        }
        let mult = end - idx;
        let mean = values[idx..end].iter().sum::<Complex<f64>>() / Complex::new(mult as f64, 0.0);
        let mut shifted = ac.clone();
        for i in 0..n {
            shifted[(i, i)] -= mean;
        }
        let svd = shifted
            .try_svd(false, true, f64::EPSILON, 0)
            .ok_or_else(|| CoreError::Numerical("complex SVD did not converge".into()))?;
        let v_t = svd.v_t.expect("v_t requested");
        for (offset, col) in (0..mult).enumerate() {
            // Smallest singular directions are the last rows of V^T.
            let row = n - 1 - offset;
            let mut vec: ComplexVector = v_t.row(row).transpose().map(|z| z.conj());
            normalize_phase(&mut vec);
            vectors.set_column(idx + col, &vec);
        }
        idx = end;
    }

    Ok(Eigen { values, vectors })
}

fn normalize_phase(v: &mut ComplexVector) {
    let norm = v.norm();
    if norm > 0.0 {
        *v /= Complex::new(norm, 0.0);
    }
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].norm() > v[best].norm() {
            best = i;
        }
    }
    let pivot = v[best];
    if pivot.norm() > 0.0 {
        let phase = pivot / Complex::new(pivot.norm(), 0.0);
        *v /= phase;
    }
}

/// Condition number `‖W‖_2 ‖W^{-1}‖_2` of a complex matrix, computed from
/// its singular values. Returns `inf` when numerically singular.
pub fn complex_condition_number(w: &ComplexMatrix) -> f64 {
    let svd = w.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    }
}

/// Largest singular value of a real matrix.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Deterministic stream of standard-normal samples.
///
/// Samples are produced by the Box-Muller transform over a ChaCha12
/// counter-based generator: sample `2p`/`2p+1` is a pure function of
/// `(seed, stream, p)`, so a fixed seed reproduces the sequence bit-for-bit
/// regardless of how calls are batched. The stream is single-owner; derive
/// independent substreams with [`RngStream::substream`] before dispatching
/// work to threads.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    chacha: ChaCha12Rng,
    spare: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, chacha: ChaCha12Rng::seed_from_u64(seed), spare: None }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream `idx` of the same seed (ChaCha stream splitting).
    pub fn substream(&self, idx: u64) -> Self {
        let mut chacha = ChaCha12Rng::seed_from_u64(self.seed);
        chacha.set_stream(idx);
        Self { seed: self.seed, chacha, spare: None }
    }

    /// Next standard-normal sample.
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = unit_open(self.chacha.next_u64());
        let u2 = unit_open(self.chacha.next_u64());
        let r = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        let (s, c) = angle.sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    /// Uniform sample in `[0, 1)`.
    pub fn next_uniform(&mut self) -> f64 {
        (self.chacha.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..bound` (`bound >= 1`).
    pub fn next_below(&mut self, bound: u64) -> u64 {
        ((self.next_uniform() * bound as f64) as u64).min(bound - 1)
    }
}

/// Map a `u64` to (0, 1]; never returns 0 so `ln` stays finite.
fn unit_open(x: u64) -> f64 {
    ((x >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Matrix of i.i.d. standard-normal entries, filled in row-major order from
/// the stream so the result does not depend on storage layout or batching.
pub fn gaussian_matrix(rng: &mut RngStream, rows: usize, cols: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.next_normal();
        }
    }
    m
}

#[cfg(feature = "system-lapack")]
mod lapack {
    use super::{CoreError, Matrix, Result, SvdFactors, Vector};
    use std::os::raw::c_char;

    extern "C" {
        fn dgesdd_(
            jobz: *const c_char,
            m: *const i32,
            n: *const i32,
            a: *mut f64,
            lda: *const i32,
            s: *mut f64,
            u: *mut f64,
            ldu: *const i32,
            vt: *mut f64,
            ldvt: *const i32,
            work: *mut f64,
            lwork: *const i32,
            iwork: *mut i32,
            info: *mut i32,
        );
    }

    /// Economy SVD via LAPACK's divide-and-conquer kernel. Consumes the
    /// input, which doubles as the `A` workspace.
    pub fn dgesdd(a: Matrix) -> Result<SvdFactors> {
        let m = a.nrows();
        let n = a.ncols();
        let k = m.min(n);
        let (mi, ni, ki) = (m as i32, n as i32, k as i32);
        let jobz = b'S' as c_char;
        let mut a = a;
        let mut s = vec![0.0f64; k];
        let mut u = Matrix::zeros(m, k);
        let mut vt = Matrix::zeros(k, n);
        let mut iwork = vec![0i32; 8 * k];
        let mut info = 0i32;

        // Workspace query.
        let mut work_query = [0.0f64; 1];
        let lwork_query = -1i32;
        unsafe {
            dgesdd_(
                &jobz,
                &mi,
                &ni,
                a.as_mut_slice().as_mut_ptr(),
                &mi,
                s.as_mut_ptr(),
                u.as_mut_slice().as_mut_ptr(),
                &mi,
                vt.as_mut_slice().as_mut_ptr(),
                &ki,
                work_query.as_mut_ptr(),
                &lwork_query,
                iwork.as_mut_ptr(),
                &mut info,
            );
        }
        if info != 0 {
            return Err(CoreError::Numerical(format!("dgesdd workspace query failed: info={info}")));
        }
        let lwork = work_query[0] as usize + 1;
        if lwork > i32::MAX as usize {
            return Err(CoreError::Numerical("dgesdd workspace exceeds i32".into()));
        }
        let mut work = vec![0.0f64; lwork];
        let lwork_i = lwork as i32;
        unsafe {
            dgesdd_(
                &jobz,
                &mi,
                &ni,
                a.as_mut_slice().as_mut_ptr(),
                &mi,
                s.as_mut_ptr(),
                u.as_mut_slice().as_mut_ptr(),
                &mi,
                vt.as_mut_slice().as_mut_ptr(),
                &ki,
                work.as_mut_ptr(),
                &lwork_i,
                iwork.as_mut_ptr(),
                &mut info,
            );
        }
        drop(a);
        drop(work);
        if info != 0 {
            return Err(CoreError::Numerical(format!("dgesdd failed: info={info}")));
        }
        Ok(SvdFactors { u, sigma: Vector::from_vec(s), v: vt.transpose() })
    }
}

#[cfg(not(feature = "system-lapack"))]
mod lapack {
    use super::{Matrix, Result, SvdFactors};

    pub fn dgesdd(_a: Matrix) -> Result<SvdFactors> {
        unreachable!("lapack dispatch is disabled without the system-lapack feature")
    }
}
