//! Implicit circulant, Hankel, and block-Hankel operators with
//! FFT-accelerated matrix-vector products, plus a dense-assembly oracle.
//!
//! A scalar Hankel matrix `H_s` (constant anti-diagonals, defined by its
//! first row and last column) embeds into a `2s x 2s` circulant `X_2s` whose
//! defining vector is `x = [h_c; 0; h_r(1..s-1)]`. Writing
//! `y = H_s v = (H_s J_s)(J_s v)` with the reversal permutation `J_s` turns
//! the product into a circulant one:
//!
//! ```text
//! y = first s entries of IFFT( FFT(x) .* FFT([J_s v; 0]) )
//! ```
//!
//! Note the input reversal: feeding `v` unreversed would compute `H_s J_s v`
//! instead. The dense-assembly oracle below pins this down in tests.
//!
//! The block operator applies the scalar kernel to every scalar (output,
//! input) channel pair: rows `i, i+l, ...` of `H_s` against entries
//! `j, j+m, ...` of the input. All `l*m` symbol spectra are computed once at
//! construction and shared by the forward and transposed products (each
//! scalar Hankel block is symmetric), so a product costs one FFT per input
//! channel, one inverse FFT per output channel, and pointwise multiplies.

use std::sync::Arc;

use nalgebra::Complex;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::numeric::{Matrix, Vector};
use crate::rsvd::LinearOperator;

/// First row and last column of a scalar `s x s` Hankel matrix.
#[derive(Debug, Clone)]
pub struct HankelSymbol {
    first_row: Vec<f64>,
    last_col: Vec<f64>,
}

impl HankelSymbol {
    /// The corner element `first_row[s-1]` must equal `last_col[0]`.
    pub fn new(first_row: Vec<f64>, last_col: Vec<f64>) -> Result<Self> {
        if first_row.is_empty() || first_row.len() != last_col.len() {
            return Err(CoreError::Dimension(format!(
                "Hankel symbol needs equal nonempty row/column, got {} and {}",
                first_row.len(),
                last_col.len()
            )));
        }
        if first_row[first_row.len() - 1] != last_col[0] {
            return Err(CoreError::InvalidInput(
                "Hankel symbol corner mismatch: first_row[s-1] != last_col[0]".into(),
            ));
        }
        Ok(Self { first_row, last_col })
    }

    /// Symbol of the `s x s` Hankel matrix with entries `g_1 .. g_{2s-1}`.
    pub fn from_sequence(g: &[f64]) -> Result<Self> {
        if g.len() % 2 == 0 {
            return Err(CoreError::Dimension("Hankel sequence must have odd length 2s-1".into()));
        }
        let s = (g.len() + 1) / 2;
        Self::new(g[..s].to_vec(), g[s - 1..].to_vec())
    }

    pub fn order(&self) -> usize {
        self.first_row.len()
    }

    pub fn first_row(&self) -> &[f64] {
        &self.first_row
    }

    pub fn last_col(&self) -> &[f64] {
        &self.last_col
    }

    /// Dense `s x s` Hankel matrix, for oracle use.
    pub fn to_dense(&self) -> Matrix {
        let s = self.order();
        Matrix::from_fn(s, s, |i, j| {
            if i + j < s {
                self.first_row[i + j]
            } else {
                self.last_col[i + j + 1 - s]
            }
        })
    }
}

/// Vector defining the `2s x 2s` circulant that embeds the Hankel matrix:
/// `x = (h_c[0..s], 0, h_r[0..s-1])`.
pub fn circulant_symbol(h: &HankelSymbol) -> Vec<f64> {
    let s = h.order();
    let mut x = Vec::with_capacity(2 * s);
    x.extend_from_slice(&h.last_col);
    x.push(0.0);
    x.extend_from_slice(&h.first_row[..s - 1]);
    x
}

/// `y = H_s v` through the circulant embedding. Plans FFTs per call; the
/// block operator below caches plans and spectra instead.
pub fn hankel_matvec(h: &HankelSymbol, v: &[f64]) -> Result<Vec<f64>> {
    let s = h.order();
    if v.len() != s {
        return Err(CoreError::Dimension(format!(
            "hankel_matvec: symbol order {s} vs vector length {}",
            v.len()
        )));
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(2 * s);
    let ifft = planner.plan_fft_inverse(2 * s);

    let mut spectrum: Vec<Complex<f64>> =
        circulant_symbol(h).into_iter().map(|x| Complex::new(x, 0.0)).collect();
    fft.process(&mut spectrum);

    let mut buf = vec![Complex::new(0.0, 0.0); 2 * s];
    for (t, slot) in buf.iter_mut().take(s).enumerate() {
        *slot = Complex::new(v[s - 1 - t], 0.0); // J_s v, zero-padded
    }
    fft.process(&mut buf);
    for (b, sp) in buf.iter_mut().zip(spectrum.iter()) {
        *b *= sp;
    }
    ifft.process(&mut buf);

    let scale = 1.0 / (2 * s) as f64;
    Ok(buf[..s].iter().map(|z| z.re * scale).collect())
}

/// Ordered impulse-response blocks `h_0 .. h_{2s-1}`, each `l x m`.
///
/// `h_0` is the feedthrough matrix `D`; blocks `1..2s-1` feed the Hankel
/// operator. Identification entry points require an even count of at least 4
/// blocks (`s >= 2`); shorter sequences can still be constructed, simulated
/// against, and serialized.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovSequence {
    ell: usize,
    m: usize,
    blocks: Vec<Matrix>,
    dt: Option<f64>,
    d_missing: bool,
}

impl MarkovSequence {
    pub fn new(blocks: Vec<Matrix>, dt: Option<f64>) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| CoreError::InvalidInput("empty Markov sequence".into()))?;
        let (ell, m) = (first.nrows(), first.ncols());
        if ell == 0 || m == 0 {
            return Err(CoreError::Dimension("Markov blocks must be nonempty".into()));
        }
        for (k, b) in blocks.iter().enumerate() {
            if b.nrows() != ell || b.ncols() != m {
                return Err(CoreError::Dimension(format!(
                    "Markov block {k} is {}x{}, expected {ell}x{m}",
                    b.nrows(),
                    b.ncols()
                )));
            }
            if !b.iter().all(|v| v.is_finite()) {
                return Err(CoreError::InvalidInput(format!("Markov block {k} has non-finite entries")));
            }
        }
        Ok(Self { ell, m, blocks, dt, d_missing: false })
    }

    /// Sequence that starts at `h_1`: a zero `D` block is prepended and the
    /// model recovered from it carries a missing-feedthrough flag.
    pub fn from_blocks_starting_at_h1(blocks: Vec<Matrix>, dt: Option<f64>) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| CoreError::InvalidInput("empty Markov sequence".into()))?;
        let zero_d = Matrix::zeros(first.nrows(), first.ncols());
        let mut all = Vec::with_capacity(blocks.len() + 1);
        all.push(zero_d);
        all.extend(blocks);
        let mut seq = Self::new(all, dt)?;
        seq.d_missing = true;
        Ok(seq)
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dt(&self) -> Option<f64> {
        self.dt
    }

    pub fn d_missing(&self) -> bool {
        self.d_missing
    }

    pub fn num_params(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, k: usize) -> &Matrix {
        &self.blocks[k]
    }

    pub fn blocks(&self) -> &[Matrix] {
        &self.blocks
    }

    /// Block count `s` of the Hankel matrix this sequence defines. Requires
    /// an even number of at least 4 blocks.
    pub fn hankel_order(&self) -> Result<usize> {
        let n = self.blocks.len();
        if n < 4 || n % 2 != 0 {
            return Err(CoreError::InvalidInput(format!(
                "identification needs an even number >= 4 of Markov blocks, got {n}"
            )));
        }
        Ok(n / 2)
    }

    /// Scalar sequence `g_k = h_k[(i, j)]` for `k = 1..2s-1`.
    fn scalar_channel(&self, i: usize, j: usize, s: usize) -> Vec<f64> {
        (1..2 * s).map(|k| self.blocks[k][(i, j)]).collect()
    }
}

/// Caps for code paths that materialize dense Hankel matrices.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DenseCaps {
    /// Cap on the larger matrix dimension `s * max(l, m)`.
    pub max_dim: usize,
    /// Cap on the total entry count `s^2 * l * m`.
    pub max_entries: usize,
}

impl Default for DenseCaps {
    fn default() -> Self {
        Self { max_dim: 4096, max_entries: 100_000_000 }
    }
}

impl DenseCaps {
    pub fn unbounded() -> Self {
        Self { max_dim: usize::MAX, max_entries: usize::MAX }
    }

    pub fn check(&self, s: usize, ell: usize, m: usize) -> Result<()> {
        let dim = s * ell.max(m);
        if dim > self.max_dim {
            return Err(CoreError::SizeCap(format!(
                "dense Hankel dimension s*max(l,m) = {dim} exceeds cap {} (use the implicit rsvd-h path or raise the cap)",
                self.max_dim
            )));
        }
        let entries = (s * ell).saturating_mul(s * m);
        if entries > self.max_entries {
            return Err(CoreError::SizeCap(format!(
                "dense Hankel entry count {entries} exceeds cap {} (use the implicit rsvd-h path or raise the cap)",
                self.max_entries
            )));
        }
        Ok(())
    }
}

/// Exact dense `H_s` (oracle and small-problem path only).
pub fn dense_assembly(markov: &MarkovSequence, s: usize, caps: &DenseCaps) -> Result<Matrix> {
    if s == 0 || markov.num_params() < 2 * s {
        return Err(CoreError::Dimension(format!(
            "dense_assembly needs 2s = {} blocks, sequence has {}",
            2 * s,
            markov.num_params()
        )));
    }
    let (ell, m) = (markov.ell(), markov.m());
    caps.check(s, ell, m)?;
    let mut h = Matrix::zeros(s * ell, s * m);
    for a in 0..s {
        for b in 0..s {
            let block = markov.block(a + b + 1);
            h.view_mut((a * ell, b * m), (ell, m)).copy_from(block);
        }
    }
    Ok(h)
}

/// Implicit `s*l x s*m` block-Hankel operator over a Markov sequence, with
/// all scalar-channel circulant spectra precomputed. Never materializes the
/// matrix; products run in `O(l m s log s)`.
pub struct BlockHankelOperator {
    s: usize,
    ell: usize,
    m: usize,
    /// Forward FFT of the circulant symbol for channel `(i, j)`, at `i*m+j`.
    /// Scalar Hankel blocks are symmetric, so the same spectra serve the
    /// transposed operator.
    spectra: Vec<Vec<Complex<f64>>>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl BlockHankelOperator {
    pub fn new(markov: &MarkovSequence) -> Result<Self> {
        let s = markov.hankel_order()?;
        let (ell, m) = (markov.ell(), markov.m());
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(2 * s);
        let ifft = planner.plan_fft_inverse(2 * s);

        let mut spectra = Vec::with_capacity(ell * m);
        let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for i in 0..ell {
            for j in 0..m {
                let channel = markov.scalar_channel(i, j, s);
                let symbol = HankelSymbol::from_sequence(&channel)?;
                let mut spec: Vec<Complex<f64>> =
                    circulant_symbol(&symbol).into_iter().map(|x| Complex::new(x, 0.0)).collect();
                fft.process_with_scratch(&mut spec, &mut scratch);
                spectra.push(spec);
            }
        }
        Ok(Self { s, ell, m, spectra, fft, ifft })
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn m(&self) -> usize {
        self.m
    }

    fn spectrum(&self, i: usize, j: usize) -> &[Complex<f64>] {
        &self.spectra[i * self.m + j]
    }

    /// Shared kernel for both product directions. `in_stride` channels are
    /// gathered from `x`, convolved against the channel spectra, and the
    /// results scattered into `out_stride` channels of the output.
    fn apply_channels(
        &self,
        x: &[f64],
        in_stride: usize,
        out_stride: usize,
        spec_of: impl Fn(usize, usize) -> usize,
    ) -> Vec<f64> {
        let s = self.s;
        let n2 = 2 * s;
        let scale = 1.0 / n2 as f64;
        let mut fft_scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut ifft_scratch = vec![Complex::new(0.0, 0.0); self.ifft.get_inplace_scratch_len()];

        // FFT of every reversed, zero-padded input channel.
        let mut channel_ffts = Vec::with_capacity(in_stride);
        for j in 0..in_stride {
            let mut buf = vec![Complex::new(0.0, 0.0); n2];
            for t in 0..s {
                buf[t] = Complex::new(x[j + (s - 1 - t) * in_stride], 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut fft_scratch);
            channel_ffts.push(buf);
        }

        let mut y = vec![0.0; s * out_stride];
        let mut acc = vec![Complex::new(0.0, 0.0); n2];
        for i in 0..out_stride {
            acc.fill(Complex::new(0.0, 0.0));
            for (j, chan) in channel_ffts.iter().enumerate() {
                let spec = &self.spectra[spec_of(i, j)];
                for t in 0..n2 {
                    acc[t] += spec[t] * chan[t];
                }
            }
            self.ifft.process_with_scratch(&mut acc, &mut ifft_scratch);
            let mut imag_sq = 0.0;
            let mut real_sq = 0.0;
            for t in 0..s {
                let z = acc[t] * scale;
                y[i + t * out_stride] = z.re;
                real_sq += z.re * z.re;
                imag_sq += z.im * z.im;
            }
            debug_assert!(
                imag_sq.sqrt() <= 1e-9 * real_sq.sqrt().max(f64::MIN_POSITIVE),
                "imaginary residue after IFFT too large"
            );
        }
        y
    }

    /// `y = H_s x` for `x` of length `s*m`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.s * self.m {
            return Err(CoreError::Dimension(format!(
                "block Hankel matvec: expected length {}, got {}",
                self.s * self.m,
                x.len()
            )));
        }
        Ok(self.apply_channels(x, self.m, self.ell, |i, j| i * self.m + j))
    }

    /// `x = H_s^T y` for `y` of length `s*l`; reuses the forward spectra
    /// since every scalar Hankel block equals its own transpose.
    pub fn rmatvec(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.s * self.ell {
            return Err(CoreError::Dimension(format!(
                "block Hankel rmatvec: expected length {}, got {}",
                self.s * self.ell,
                y.len()
            )));
        }
        Ok(self.apply_channels(y, self.ell, self.m, |j, i| i * self.m + j))
    }

    /// Column-batched `H_s X`; columns are independent and processed in
    /// parallel, each identically to a single matvec.
    pub fn matmat(&self, x: &Matrix) -> Result<Matrix> {
        if x.nrows() != self.s * self.m {
            return Err(CoreError::Dimension(format!(
                "block Hankel matmat: expected {} rows, got {}",
                self.s * self.m,
                x.nrows()
            )));
        }
        let cols: Vec<Vec<f64>> = (0..x.ncols())
            .into_par_iter()
            .map(|c| self.apply_channels(x.column(c).as_slice(), self.m, self.ell, |i, j| i * self.m + j))
            .collect();
        Ok(columns_to_matrix(self.s * self.ell, cols))
    }

    /// Column-batched `H_s^T Y`.
    pub fn rmatmat(&self, y: &Matrix) -> Result<Matrix> {
        if y.nrows() != self.s * self.ell {
            return Err(CoreError::Dimension(format!(
                "block Hankel rmatmat: expected {} rows, got {}",
                self.s * self.ell,
                y.nrows()
            )));
        }
        let cols: Vec<Vec<f64>> = (0..y.ncols())
            .into_par_iter()
            .map(|c| self.apply_channels(y.column(c).as_slice(), self.ell, self.m, |j, i| i * self.m + j))
            .collect();
        Ok(columns_to_matrix(self.s * self.m, cols))
    }
}

fn columns_to_matrix(rows: usize, cols: Vec<Vec<f64>>) -> Matrix {
    let ncols = cols.len();
    let mut m = Matrix::zeros(rows, ncols);
    for (c, col) in cols.into_iter().enumerate() {
        m.column_mut(c).copy_from_slice(&col);
    }
    m
}

impl LinearOperator for BlockHankelOperator {
    fn nrows(&self) -> usize {
        self.s * self.ell
    }

    fn ncols(&self) -> usize {
        self.s * self.m
    }

    fn apply(&self, x: &Vector) -> Result<Vector> {
        Ok(Vector::from_vec(self.matvec(x.as_slice())?))
    }

    fn apply_transpose(&self, y: &Vector) -> Result<Vector> {
        Ok(Vector::from_vec(self.rmatvec(y.as_slice())?))
    }

    fn apply_mat(&self, x: &Matrix) -> Result<Matrix> {
        self.matmat(x)
    }

    fn apply_transpose_mat(&self, y: &Matrix) -> Result<Matrix> {
        self.rmatmat(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{gaussian_matrix, RngStream};

    fn random_markov(seed: u64, ell: usize, m: usize, s: usize) -> MarkovSequence {
        let mut rng = RngStream::new(seed);
        let blocks = (0..2 * s).map(|_| gaussian_matrix(&mut rng, ell, m)).collect();
        MarkovSequence::new(blocks, None).unwrap()
    }

    #[test]
    fn circulant_symbol_layout() {
        // s = 2, first row (h1, h2), last column (h2, h3).
        let h = HankelSymbol::new(vec![1.0, 2.0], vec![2.0, 3.0]).unwrap();
        assert_eq!(circulant_symbol(&h), vec![2.0, 3.0, 0.0, 1.0]);

        let one = HankelSymbol::new(vec![5.0], vec![5.0]).unwrap();
        assert_eq!(circulant_symbol(&one), vec![5.0, 0.0]);

        let zero = HankelSymbol::new(vec![0.0; 3], vec![0.0; 3]).unwrap();
        assert_eq!(circulant_symbol(&zero), vec![0.0; 6]);
    }

    #[test]
    fn symbol_corner_mismatch_rejected() {
        assert!(HankelSymbol::new(vec![1.0, 2.0], vec![9.0, 3.0]).is_err());
    }

    #[test]
    fn hankel_matvec_small_case() {
        // H = [[1, 2], [2, 3]], v = (1, 1) -> (3, 5).
        let h = HankelSymbol::from_sequence(&[1.0, 2.0, 3.0]).unwrap();
        let y = hankel_matvec(&h, &[1.0, 1.0]).unwrap();
        assert!((y[0] - 3.0).abs() < 1e-12 && (y[1] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn hankel_matvec_zero_input() {
        let h = HankelSymbol::from_sequence(&[1.0, -2.0, 3.0, 0.5, 7.0]).unwrap();
        let y = hankel_matvec(&h, &[0.0; 3]).unwrap();
        assert!(y.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn hankel_matvec_unit_vector_extracts_column() {
        let mut rng = RngStream::new(3);
        let g: Vec<f64> = (0..5).map(|_| rng.next_normal()).collect();
        let h = HankelSymbol::from_sequence(&g).unwrap();
        let dense = h.to_dense();
        let y = hankel_matvec(&h, &[1.0, 0.0, 0.0]).unwrap();
        for i in 0..3 {
            assert!((y[i] - dense[(i, 0)]).abs() <= 1e-12 * dense.norm());
        }
    }

    #[test]
    fn hankel_matvec_against_dense_oracle() {
        let mut rng = RngStream::new(17);
        for s in [1usize, 2, 3, 5, 8, 17] {
            let g: Vec<f64> = (0..2 * s - 1).map(|_| rng.next_normal()).collect();
            let h = HankelSymbol::from_sequence(&g).unwrap();
            let v: Vec<f64> = (0..s).map(|_| rng.next_normal()).collect();
            let y = hankel_matvec(&h, &v).unwrap();
            let oracle = h.to_dense() * Vector::from_vec(v);
            let err = (Vector::from_vec(y) - &oracle).norm();
            assert!(err <= 1e-12 * oracle.norm().max(1.0), "s={s} err={err}");
        }
    }

    #[test]
    fn dense_assembly_layouts() {
        let seq = random_markov(1, 1, 1, 2);
        let h = dense_assembly(&seq, 2, &DenseCaps::default()).unwrap();
        let g1 = seq.block(1)[(0, 0)];
        let g2 = seq.block(2)[(0, 0)];
        let g3 = seq.block(3)[(0, 0)];
        assert_eq!(h[(0, 0)], g1);
        assert_eq!(h[(0, 1)], g2);
        assert_eq!(h[(1, 0)], g2);
        assert_eq!(h[(1, 1)], g3);

        // s = 1 via a longer sequence: top-left block is h_1.
        let seq = random_markov(2, 2, 3, 2);
        let h1 = dense_assembly(&seq, 1, &DenseCaps::default()).unwrap();
        assert_eq!(h1, seq.block(1).clone());
    }

    #[test]
    fn dense_assembly_stride_blocks_are_hankel() {
        let seq = random_markov(5, 3, 2, 4);
        let h = dense_assembly(&seq, 4, &DenseCaps::default()).unwrap();
        let (s, ell, m) = (4, 3, 2);
        for i in 0..ell {
            for j in 0..m {
                // Extract H(I_i, J_j) and check anti-diagonal constancy.
                let sub = Matrix::from_fn(s, s, |a, b| h[(i + a * ell, j + b * m)]);
                for a in 0..s {
                    for b in 0..s {
                        let k = a + b + 1;
                        assert_eq!(sub[(a, b)], seq.block(k)[(i, j)]);
                    }
                }
            }
        }
    }

    #[test]
    fn dense_assembly_cap() {
        let seq = random_markov(6, 2, 2, 8);
        let caps = DenseCaps { max_dim: 8, max_entries: usize::MAX };
        assert!(matches!(dense_assembly(&seq, 8, &caps), Err(CoreError::SizeCap(_))));
    }

    #[test]
    fn block_matvec_matches_dense_oracle() {
        for (seed, ell, m, s) in [(10u64, 2, 3, 4), (11, 1, 1, 6), (12, 5, 2, 3), (13, 3, 3, 16)] {
            let seq = random_markov(seed, ell, m, s);
            let op = BlockHankelOperator::new(&seq).unwrap();
            let dense = dense_assembly(&seq, s, &DenseCaps::default()).unwrap();
            let mut rng = RngStream::new(seed + 100);
            let x: Vec<f64> = (0..s * m).map(|_| rng.next_normal()).collect();
            let y = op.matvec(&x).unwrap();
            let oracle = &dense * Vector::from_vec(x.clone());
            let err = (Vector::from_vec(y) - &oracle).norm() / oracle.norm().max(1e-300);
            assert!(err <= 1e-11, "matvec err {err}");

            let yy: Vec<f64> = (0..s * ell).map(|_| rng.next_normal()).collect();
            let xt = op.rmatvec(&yy).unwrap();
            let oracle_t = dense.transpose() * Vector::from_vec(yy.clone());
            let err_t = (Vector::from_vec(xt) - &oracle_t).norm() / oracle_t.norm().max(1e-300);
            assert!(err_t <= 1e-11, "rmatvec err {err_t}");
        }
    }

    #[test]
    fn block_matvec_zero_and_siso() {
        let seq = random_markov(20, 1, 1, 5);
        let op = BlockHankelOperator::new(&seq).unwrap();
        assert!(op.matvec(&[0.0; 5]).unwrap().iter().all(|v| v.abs() < 1e-14));

        // SISO: the Hankel matrix is symmetric so rmatvec equals matvec.
        let mut rng = RngStream::new(21);
        let v: Vec<f64> = (0..5).map(|_| rng.next_normal()).collect();
        let a = op.matvec(&v).unwrap();
        let b = op.rmatvec(&v).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-12);
        }

        // And reduces to the scalar kernel.
        let g: Vec<f64> = (1..10).map(|k| seq.block(k)[(0, 0)]).collect();
        let h = HankelSymbol::from_sequence(&g).unwrap();
        let scalar = hankel_matvec(&h, &v).unwrap();
        for (x, y) in a.iter().zip(scalar.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn adjoint_identity() {
        let seq = random_markov(30, 3, 4, 8);
        let op = BlockHankelOperator::new(&seq).unwrap();
        let mut rng = RngStream::new(31);
        for _ in 0..5 {
            let x: Vec<f64> = (0..8 * 4).map(|_| rng.next_normal()).collect();
            let y: Vec<f64> = (0..8 * 3).map(|_| rng.next_normal()).collect();
            let hx = op.matvec(&x).unwrap();
            let hty = op.rmatvec(&y).unwrap();
            let lhs: f64 = hx.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(hty.iter()).map(|(a, b)| a * b).sum();
            let scale = lhs.abs().max(rhs.abs()).max(1e-300);
            assert!((lhs - rhs).abs() / scale <= 1e-11);
        }
    }

    #[test]
    fn matmat_equals_stacked_matvecs() {
        let seq = random_markov(40, 2, 3, 6);
        let op = BlockHankelOperator::new(&seq).unwrap();
        let mut rng = RngStream::new(41);
        let x = gaussian_matrix(&mut rng, 6 * 3, 3);
        let y = op.matmat(&x).unwrap();
        for c in 0..3 {
            let col = op.matvec(x.column(c).as_slice()).unwrap();
            for r in 0..y.nrows() {
                assert_eq!(y[(r, c)], col[r], "matmat must match per-column matvec bitwise");
            }
        }

        // X = I reconstructs the dense matrix.
        let eye = Matrix::identity(6 * 3, 6 * 3);
        let full = op.matmat(&eye).unwrap();
        let dense = dense_assembly(&seq, 6, &DenseCaps::default()).unwrap();
        assert!((full - &dense).norm() <= 1e-11 * dense.norm());
    }

    #[test]
    fn matvec_linearity() {
        let seq = random_markov(50, 2, 2, 7);
        let op = BlockHankelOperator::new(&seq).unwrap();
        let mut rng = RngStream::new(51);
        let x: Vec<f64> = (0..14).map(|_| rng.next_normal()).collect();
        let z: Vec<f64> = (0..14).map(|_| rng.next_normal()).collect();
        let (alpha, beta) = (0.37, -1.25);
        let combo: Vec<f64> = x.iter().zip(z.iter()).map(|(a, b)| alpha * a + beta * b).collect();
        let lhs = op.matvec(&combo).unwrap();
        let hx = op.matvec(&x).unwrap();
        let hz = op.matvec(&z).unwrap();
        for t in 0..lhs.len() {
            let rhs = alpha * hx[t] + beta * hz[t];
            assert!((lhs[t] - rhs).abs() <= 1e-11 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn length_mismatch_errors() {
        let seq = random_markov(60, 2, 3, 4);
        let op = BlockHankelOperator::new(&seq).unwrap();
        assert!(matches!(op.matvec(&[0.0; 5]), Err(CoreError::Dimension(_))));
        assert!(matches!(op.rmatvec(&[0.0; 5]), Err(CoreError::Dimension(_))));
    }

    #[test]
    fn short_sequences_rejected_for_identification() {
        let blocks = vec![Matrix::zeros(1, 1); 3];
        let seq = MarkovSequence::new(blocks, None).unwrap();
        assert!(seq.hankel_order().is_err());
        assert!(BlockHankelOperator::new(&seq).is_err());
    }
}
