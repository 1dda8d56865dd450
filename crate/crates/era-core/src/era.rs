//! System-matrix recovery from a truncated SVD of the block Hankel matrix.
//!
//! The left singular vectors of `H_s` span the observability range; shifting
//! them by one block row and solving the least-squares problem
//! `min ‖Upsilon_f A − Upsilon_l‖` recovers the state matrix, while the first
//! block row/column of the factorization yields `C` and `B`:
//!
//! ```text
//! A_r = Upsilon_f^+ Upsilon_l,   C_r = first l rows of U_r,
//! B_r = first m columns of Sigma_r V_r^T,   D_r = h_0.
//! ```
//!
//! The balanced formulation scales the same quantities by `Sigma^(+-1/2)`;
//! the two are similar and reproduce identical Markov parameters.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::hankel::{dense_assembly, BlockHankelOperator, DenseCaps, MarkovSequence};
use crate::metrics::{self, DiagnosticsReport, StageTimings};
use crate::numeric::{self, Matrix, Vector};
use crate::rsvd::{randsvd, RsvdConfig, TruncatedSvd};
use crate::tera::ProjectorMeta;

/// Which state-space coordinates the recovery produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    Standard,
    Balanced,
}

impl std::fmt::Display for Formulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Formulation::Standard => write!(f, "standard"),
            Formulation::Balanced => write!(f, "balanced"),
        }
    }
}

/// Row-shifted partitions of the left singular vectors: `upsilon_f` drops the
/// last block row of `U_r`, `upsilon_l` drops the first.
#[derive(Debug, Clone)]
pub struct UpsilonPair {
    pub upsilon_f: Matrix,
    pub upsilon_l: Matrix,
}

pub fn partition_singular_vectors(u_r: &Matrix, ell: usize, s: usize) -> Result<UpsilonPair> {
    if s < 2 {
        return Err(CoreError::Dimension(
            "shift partition needs s >= 2 block rows".into(),
        ));
    }
    if u_r.nrows() != s * ell {
        return Err(CoreError::Dimension(format!(
            "singular vectors have {} rows, expected s*l = {}",
            u_r.nrows(),
            s * ell
        )));
    }
    Ok(UpsilonPair {
        upsilon_f: u_r.rows(0, (s - 1) * ell).into_owned(),
        upsilon_l: u_r.rows(ell, (s - 1) * ell).into_owned(),
    })
}

/// Where a model came from; serialized alongside it.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub method: String,
    pub s: usize,
    pub r: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
}

/// Recovered reduced-order state-space model.
#[derive(Debug, Clone)]
pub struct IdentifiedModel {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
    pub order: usize,
    /// Retained singular values of the Hankel factorization.
    pub sigma: Vector,
    pub formulation: Formulation,
    /// Set when `Upsilon_f` was numerically rank-deficient and the recovery
    /// fell back to a best-effort pseudoinverse solve.
    pub rank_warning: bool,
    /// Set when the input sequence carried no `h_0` block; `d` is zero.
    pub d_missing: bool,
    pub provenance: Provenance,
    pub projectors: Option<ProjectorMeta>,
}

impl IdentifiedModel {
    pub fn num_outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn num_inputs(&self) -> usize {
        self.b.ncols()
    }
}

/// Standard-coordinates recovery from a truncated Hankel SVD.
pub fn recover_system(
    svd: &TruncatedSvd,
    markov: &MarkovSequence,
    s: usize,
) -> Result<IdentifiedModel> {
    recover(svd, markov, s, Formulation::Standard)
}

/// Balanced-coordinates recovery (`Sigma^(1/2)`-scaled); similar to the
/// standard model and errors out on zero retained singular values.
pub fn recover_system_balanced(
    svd: &TruncatedSvd,
    markov: &MarkovSequence,
    s: usize,
) -> Result<IdentifiedModel> {
    recover(svd, markov, s, Formulation::Balanced)
}

fn recover(
    svd: &TruncatedSvd,
    markov: &MarkovSequence,
    s: usize,
    formulation: Formulation,
) -> Result<IdentifiedModel> {
    let (ell, m) = (markov.ell(), markov.m());
    let r = svd.rank();
    if r == 0 {
        return Err(CoreError::Config("recovery needs rank r >= 1".into()));
    }
    if svd.u.nrows() != s * ell || svd.v.nrows() != s * m {
        return Err(CoreError::Dimension(format!(
            "SVD factors ({}x{} / {}x{}) do not match s={s}, l={ell}, m={m}",
            svd.u.nrows(),
            svd.u.ncols(),
            svd.v.nrows(),
            svd.v.ncols()
        )));
    }
    if r > ((s - 1) * ell).min(s * m) {
        return Err(CoreError::Config(format!(
            "rank {r} exceeds the shift-structure bound min((s-1)*l, s*m) = {}",
            ((s - 1) * ell).min(s * m)
        )));
    }

    let ups = partition_singular_vectors(&svd.u, ell, s)?;
    let f = numeric::full_svd(&ups.upsilon_f)?;
    let tol = ups.upsilon_f.nrows().max(r) as f64 * f64::EPSILON;
    let sigma_min = f.sigma[f.sigma.len() - 1];
    let rank_warning = sigma_min <= tol * f.sigma[0] || f.sigma[0] == 0.0;
    let a_std = numeric::pinv_from_svd(&f, tol) * &ups.upsilon_l;

    let c_rows = svd.u.rows(0, ell).into_owned();
    // First m columns of Sigma V^T, i.e. sigma-scaled leading rows of V.
    let b_std = Matrix::from_fn(r, m, |i, j| svd.sigma[i] * svd.v[(j, i)]);

    let (a, b, c) = match formulation {
        Formulation::Standard => (a_std, b_std, c_rows),
        Formulation::Balanced => {
            if svd.sigma.iter().any(|x| *x <= 0.0) {
                return Err(CoreError::Numerical(
                    "balanced recovery needs strictly positive retained singular values".into(),
                ));
            }
            let root: Vec<f64> = svd.sigma.iter().map(|x| x.sqrt()).collect();
            let a = Matrix::from_fn(r, r, |i, j| a_std[(i, j)] * root[j] / root[i]);
            let b = Matrix::from_fn(r, m, |i, j| root[i] * svd.v[(j, i)]);
            let c = Matrix::from_fn(ell, r, |i, j| c_rows[(i, j)] * root[j]);
            (a, b, c)
        }
    };

    Ok(IdentifiedModel {
        a,
        b,
        c,
        d: markov.block(0).clone(),
        order: r,
        sigma: svd.sigma.clone(),
        formulation,
        rank_warning,
        d_missing: markov.d_missing(),
        provenance: Provenance { method: "recover".into(), s, r, ..Default::default() },
        projectors: None,
    })
}

/// Factorization route used by [`identify`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdentifyMethod {
    /// Dense assembly plus full SVD; the size-capped reference path.
    FullSvd,
    /// Randomized SVD over the materialized dense matrix.
    RsvdDense,
    /// Randomized SVD over the implicit FFT block-Hankel operator.
    RsvdHankel,
}

impl IdentifyMethod {
    pub fn name(&self) -> &'static str {
        match self {
            IdentifyMethod::FullSvd => "full-svd",
            IdentifyMethod::RsvdDense => "rsvd-dense",
            IdentifyMethod::RsvdHankel => "rsvd-hankel",
        }
    }
}

#[derive(Debug, Clone)]
pub struct IdentifyOptions {
    pub method: IdentifyMethod,
    pub rank: usize,
    pub oversampling: usize,
    pub power_iters: usize,
    pub seed: u64,
    pub formulation: Formulation,
    pub caps: DenseCaps,
}

impl IdentifyOptions {
    pub fn new(method: IdentifyMethod, rank: usize) -> Self {
        Self {
            method,
            rank,
            oversampling: 20,
            power_iters: 1,
            seed: 0,
            formulation: Formulation::Standard,
            caps: DenseCaps::default(),
        }
    }

    pub fn rsvd_config(&self) -> RsvdConfig {
        RsvdConfig {
            target_rank: self.rank,
            oversampling: self.oversampling,
            power_iters: self.power_iters,
            seed: self.seed,
        }
    }
}

/// End-to-end identification: factorize the block Hankel matrix of `markov`
/// with the chosen method, recover the model, and attach diagnostics.
///
/// An all-zero (or otherwise rank-deficient) sequence is not a hard error:
/// the model comes back flagged with `rank_warning` so diagnostics can still
/// be inspected.
pub fn identify(
    markov: &MarkovSequence,
    opts: &IdentifyOptions,
) -> Result<(IdentifiedModel, DiagnosticsReport)> {
    let s = markov.hankel_order()?;

    let t0 = Instant::now();
    let (tsvd, build_seconds, svd_seconds) = match opts.method {
        IdentifyMethod::FullSvd => {
            let h = dense_assembly(markov, s, &opts.caps)?;
            let build_seconds = t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let f = numeric::full_svd_into(h)?;
            let tsvd = TruncatedSvd::from_full(&f, opts.rank.min(f.sigma.len()))?;
            (tsvd, build_seconds, t1.elapsed().as_secs_f64())
        }
        IdentifyMethod::RsvdDense => {
            let h = dense_assembly(markov, s, &opts.caps)?;
            let build_seconds = t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let tsvd = randsvd(&h, &opts.rsvd_config())?;
            (tsvd, build_seconds, t1.elapsed().as_secs_f64())
        }
        IdentifyMethod::RsvdHankel => {
            let op = BlockHankelOperator::new(markov)?;
            let build_seconds = t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let tsvd = randsvd(&op, &opts.rsvd_config())?;
            (tsvd, build_seconds, t1.elapsed().as_secs_f64())
        }
    };
    if tsvd.rank() != opts.rank {
        return Err(CoreError::Config(format!(
            "requested rank {} but the factorization produced {}",
            opts.rank,
            tsvd.rank()
        )));
    }

    let t2 = Instant::now();
    let mut model = match opts.formulation {
        Formulation::Standard => recover_system(&tsvd, markov, s)?,
        Formulation::Balanced => recover_system_balanced(&tsvd, markov, s)?,
    };
    model.provenance = Provenance {
        method: opts.method.name().into(),
        s,
        r: opts.rank,
        seed: match opts.method {
            IdentifyMethod::FullSvd => None,
            _ => Some(opts.seed),
        },
        rho: match opts.method {
            IdentifyMethod::FullSvd => None,
            _ => Some(opts.oversampling),
        },
        q: match opts.method {
            IdentifyMethod::FullSvd => None,
            _ => Some(opts.power_iters),
        },
    };
    let recovery_seconds = t2.elapsed().as_secs_f64();

    let timings = StageTimings { build_seconds, svd_seconds, recovery_seconds };
    let report = metrics::diagnostics_for(&tsvd, markov, &model, timings)?;
    Ok((model, report))
}

/// Impulse-response blocks `D, CB, CAB, ..., C A^(count-2) B` of a model,
/// produced by propagating the `n x m` state block (never forming `A^k`).
pub fn impulse_response(model: &IdentifiedModel, count: usize) -> Result<MarkovSequence> {
    if count == 0 {
        return Err(CoreError::Config("impulse response needs at least one block".into()));
    }
    let blocks = markov_blocks(&model.a, &model.b, &model.c, &model.d, count);
    MarkovSequence::new(blocks, None)
}

pub(crate) fn markov_blocks(
    a: &Matrix,
    b: &Matrix,
    c: &Matrix,
    d: &Matrix,
    count: usize,
) -> Vec<Matrix> {
    let mut blocks = Vec::with_capacity(count);
    blocks.push(d.clone());
    if count == 1 {
        return blocks;
    }
    let mut state = b.clone();
    for _ in 1..count {
        blocks.push(c * &state);
        state = a * &state;
    }
    blocks
}

/// Serialized form of an identified model (nested arrays are row-major).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub order: usize,
    pub dims: ModelDims,
    pub formulation: Formulation,
    pub a_r: Vec<Vec<f64>>,
    pub b_r: Vec<Vec<f64>>,
    pub c_r: Vec<Vec<f64>>,
    pub d_r: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub projectors: Option<ProjectorMeta>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map(Vec::len).unwrap_or(0);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CoreError::InvalidInput("ragged matrix rows".into()));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl ModelDocument {
    pub fn from_model(model: &IdentifiedModel) -> Self {
        let mut warnings = Vec::new();
        if model.rank_warning {
            warnings.push("rank-deficient shift block: recovery used a best-effort pseudoinverse".into());
        }
        if model.d_missing {
            warnings.push("input sequence had no h_0 block; D set to zero".into());
        }
        Self {
            format_version: 1,
            order: model.order,
            dims: ModelDims { ell: model.num_outputs(), m: model.num_inputs() },
            formulation: model.formulation,
            a_r: matrix_to_rows(&model.a),
            b_r: matrix_to_rows(&model.b),
            c_r: matrix_to_rows(&model.c),
            d_r: matrix_to_rows(&model.d),
            sigma: model.sigma.iter().copied().collect(),
            provenance: model.provenance.clone(),
            projectors: model.projectors.clone(),
            warnings,
        }
    }

    pub fn into_model(self) -> Result<IdentifiedModel> {
        let a = matrix_from_rows(&self.a_r)?;
        let b = matrix_from_rows(&self.b_r)?;
        let c = matrix_from_rows(&self.c_r)?;
        let d = matrix_from_rows(&self.d_r)?;
        let rank_warning = self.warnings.iter().any(|w| w.contains("rank-deficient"));
        let d_missing = self.warnings.iter().any(|w| w.contains("no h_0"));
        Ok(IdentifiedModel {
            order: self.order,
            sigma: Vector::from_vec(self.sigma),
            formulation: self.formulation,
            rank_warning,
            d_missing,
            provenance: self.provenance,
            projectors: self.projectors,
            a,
            b,
            c,
            d,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDims {
    pub ell: usize,
    pub m: usize,
}
