//! Accuracy, perturbation, and stability diagnostics for identified models.
//!
//! Spectra are compared through the (asymmetric) spectral variation and its
//! symmetrized Hausdorff distance; reconstructed Markov parameters through
//! per-step relative spectral-norm errors; singular subspaces through
//! canonical angles. The eigenvalue perturbation bound
//!
//! ```text
//! sv(spec(A_hat), spec(A)) <= kappa_2(W) * eta * (1 + sqrt(2) ||Yf^+||_2 / (1 - eta)),
//! eta = 2 sin(theta_max) ||Yf^+||_2 < 1,
//! ```
//!
//! with `W` the eigenvectors of the reference state matrix and `Yf` its
//! shift block, turns subspace accuracy into a certified eigenvalue error,
//! and `bound < 1 - rho(A)` certifies stability of the identified model.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::era::{partition_singular_vectors, IdentifiedModel, UpsilonPair};
use crate::error::{CoreError, Result};
use crate::hankel::MarkovSequence;
use crate::numeric::{self, Matrix};
use crate::rsvd::{LinearOperator, TruncatedSvd};
use crate::systems::LtiSystem;
use crate::tera::ProjectorMeta;

/// A finite multiset of eigenvalues with a label describing its origin.
#[derive(Debug, Clone)]
pub struct SpectrumSet {
    values: Vec<Complex<f64>>,
    label: String,
}

impl SpectrumSet {
    pub fn new(values: Vec<Complex<f64>>, label: impl Into<String>) -> Self {
        Self { values, label: label.into() }
    }

    pub fn from_matrix(a: &Matrix, label: impl Into<String>) -> Result<Self> {
        Ok(Self::new(numeric::eig(a)?.values, label))
    }

    pub fn values(&self) -> &[Complex<f64>] {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// Directed spectral variation `sv(spec(probe), spec(base))`: the largest
/// distance from an eigenvalue of `probe` to the nearest eigenvalue of
/// `base`. Not symmetric.
pub fn spectral_variation(base: &SpectrumSet, probe: &SpectrumSet) -> f64 {
    probe
        .values
        .iter()
        .map(|z| {
            base.values
                .iter()
                .map(|w| (z - w).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Hausdorff distance between two spectra: the larger of the two directed
/// spectral variations.
pub fn hausdorff(a: &SpectrumSet, b: &SpectrumSet) -> f64 {
    spectral_variation(a, b).max(spectral_variation(b, a))
}

/// State-space triple viewed through its Markov parameters.
#[derive(Debug, Clone, Copy)]
pub struct Realization<'a> {
    pub a: &'a Matrix,
    pub b: &'a Matrix,
    pub c: &'a Matrix,
}

impl<'a> From<&'a IdentifiedModel> for Realization<'a> {
    fn from(m: &'a IdentifiedModel) -> Self {
        Self { a: &m.a, b: &m.b, c: &m.c }
    }
}

impl<'a> From<&'a LtiSystem> for Realization<'a> {
    fn from(s: &'a LtiSystem) -> Self {
        Self { a: &s.a, b: &s.b, c: &s.c }
    }
}

/// Relative Markov-parameter errors
/// `M_k = ||C A^k B - C_hat A_hat^k B_hat||_2 / ||C A^k B||_2` for
/// `k = 1..=k_max`, computed by state propagation. A zero-norm reference
/// block makes the corresponding entry NaN (flagged, never silently
/// dropped).
pub fn markov_relative_error(
    reference: Realization<'_>,
    test: Realization<'_>,
    k_max: usize,
) -> Result<Vec<f64>> {
    if reference.c.nrows() != test.c.nrows() || reference.b.ncols() != test.b.ncols() {
        return Err(CoreError::Dimension(format!(
            "incompatible i/o dimensions: reference {}x{}, test {}x{}",
            reference.c.nrows(),
            reference.b.ncols(),
            test.c.nrows(),
            test.b.ncols()
        )));
    }
    let mut out = Vec::with_capacity(k_max);
    let mut p_ref = reference.a * reference.b;
    let mut p_test = test.a * test.b;
    for _k in 1..=k_max {
        let h_ref = reference.c * &p_ref;
        let h_test = test.c * &p_test;
        let denom = numeric::spectral_norm(&h_ref);
        if denom == 0.0 {
            out.push(f64::NAN);
        } else {
            out.push(numeric::spectral_norm(&(h_test - h_ref)) / denom);
        }
        p_ref = reference.a * p_ref;
        p_test = test.a * p_test;
    }
    Ok(out)
}

/// Canonical angles between the column spaces of two orthonormal matrices,
/// plus the Procrustes rotation `Z = P Q^T` aligning them.
#[derive(Debug, Clone)]
pub struct CanonicalAngles {
    /// `sin(theta_i)`, nondecreasing.
    pub sin_theta: Vec<f64>,
    pub sin_theta_max: f64,
    /// Orthogonal `Z` minimizing `||U Z - U_hat||_F`.
    pub procrustes: Matrix,
}

pub fn canonical_angles(u: &Matrix, u_hat: &Matrix) -> Result<CanonicalAngles> {
    if u.nrows() != u_hat.nrows() || u.ncols() != u_hat.ncols() {
        return Err(CoreError::Dimension("subspace bases must share their shape".into()));
    }
    let tol = 1e-8 * (u.ncols() as f64).sqrt();
    if numeric::orthonormality_residual(u) > tol || numeric::orthonormality_residual(u_hat) > tol {
        return Err(CoreError::InvalidInput(
            "canonical angles need orthonormal inputs".into(),
        ));
    }
    let f = numeric::full_svd(&u.tr_mul(u_hat))?;
    // Cosines, clamped into [0, 1]; nalgebra sorts them nonincreasing so the
    // sines come out nondecreasing.
    let sin_theta: Vec<f64> =
        f.sigma.iter().map(|c| (1.0 - c.clamp(0.0, 1.0).powi(2)).sqrt()).collect();
    let sin_theta_max = sin_theta.last().copied().unwrap_or(0.0);
    let procrustes = &f.u * f.v.transpose();
    Ok(CanonicalAngles { sin_theta, sin_theta_max, procrustes })
}

/// `eta = 2 sin(theta_max) ||Yf^+||_2`, the smallness condition of the
/// perturbation bound.
pub fn eta(sin_theta_max: f64, upsilon_pinv_norm: f64) -> f64 {
    2.0 * sin_theta_max * upsilon_pinv_norm
}

/// Eigenvalue perturbation bound; absent when `eta >= 1` (the bound's
/// smallness assumption fails).
pub fn theorem_bound(kappa_w: f64, upsilon_pinv_norm: f64, sin_theta_max: f64) -> Option<f64> {
    let e = eta(sin_theta_max, upsilon_pinv_norm);
    if e >= 1.0 {
        return None;
    }
    Some(kappa_w * e * (1.0 + std::f64::consts::SQRT_2 * upsilon_pinv_norm / (1.0 - e)))
}

/// Residual-based bound on `||sin Theta||_2`:
/// `max(||H V_hat - U_hat S_hat||_2, ||H^T U_hat - V_hat S_hat||_2) / delta`.
/// The singular-value gap `delta` is supplied by the caller.
pub fn residual_sin_theta_bound<O: LinearOperator + ?Sized>(
    op: &O,
    svd: &TruncatedSvd,
    delta: f64,
) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(CoreError::Config("gap delta must be positive".into()));
    }
    let sig = Matrix::from_diagonal(&svd.sigma);
    let r1 = op.apply_mat(&svd.v)? - &svd.u * &sig;
    let r2 = op.apply_transpose_mat(&svd.u)? - &svd.v * &sig;
    Ok(numeric::spectral_norm(&r1).max(numeric::spectral_norm(&r2)) / delta)
}

/// Per-stage wall times of an identification run.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub build_seconds: f64,
    pub svd_seconds: f64,
    pub recovery_seconds: f64,
}

/// Diagnostics attached to every identification run.
///
/// Subspace-dependent quantities (`sin_theta_max`, `eta`, `theorem_bound`,
/// `stability_margin`) need a reference factorization and are filled by
/// [`enrich_with_reference`]; they stay `None` for a standalone run.
/// `markov_relative_error` entries can be NaN where the reference block has
/// zero norm; serialization keeps the sentinel (as JSON null).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub sigma: Vec<f64>,
    pub upsilon_pinv_norm: f64,
    pub kappa_w: f64,
    pub spectral_radius: f64,
    pub stable_identified: bool,
    pub rank_warning: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sin_theta_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theorem_bound: Option<f64>,
    /// `1 - rho(A_r) - theorem_bound` when the bound exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stability_margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_bound: Option<f64>,
    /// Spectral radius of the reference model, when one was supplied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_spectral_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a4_violated: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub projectors: Option<ProjectorMeta>,
    pub timings: StageTimings,
}

/// Diagnostics computable from a single run: retained singular values,
/// `||Yf^+||_2`, eigenvector conditioning, spectral radius, timings.
pub fn diagnostics_for(
    svd: &TruncatedSvd,
    markov: &MarkovSequence,
    model: &IdentifiedModel,
    timings: StageTimings,
) -> Result<DiagnosticsReport> {
    let s = markov.hankel_order()?;
    let ups = partition_singular_vectors(&svd.u, markov.ell(), s)?;
    let upsilon_pinv_norm = upsilon_pinv_norm(&ups)?;
    let e = numeric::eig(&model.a)?;
    let kappa_w = numeric::complex_condition_number(&e.vectors);
    let spectral_radius = e.spectral_radius();
    Ok(DiagnosticsReport {
        sigma: svd.sigma.iter().copied().collect(),
        upsilon_pinv_norm,
        kappa_w,
        spectral_radius,
        stable_identified: spectral_radius < 1.0,
        rank_warning: model.rank_warning,
        sin_theta_max: None,
        eta: None,
        theorem_bound: None,
        stability_margin: None,
        residual_bound: None,
        reference_spectral_radius: None,
        a4_violated: None,
        projectors: model.projectors.clone(),
        timings,
    })
}

/// `||Yf^+||_2 = 1 / sigma_min(Yf)` from a dense SVD of the shift block.
pub fn upsilon_pinv_norm(ups: &UpsilonPair) -> Result<f64> {
    let f = numeric::full_svd(&ups.upsilon_f)?;
    let smin = f.sigma[f.sigma.len() - 1];
    Ok(if smin > 0.0 { 1.0 / smin } else { f64::INFINITY })
}

/// Fill the subspace-dependent diagnostics by comparing against a reference
/// factorization. `kappa_w` in the bound refers to the eigenvectors of the
/// *reference* state matrix, so the reference model must be supplied for a
/// faithful bound; otherwise the identified model's own conditioning is used
/// and the certification is marked accordingly by `stability_check`.
pub fn enrich_with_reference(
    report: &mut DiagnosticsReport,
    exact_u_r: &Matrix,
    approx_u_r: &Matrix,
    reference_model: Option<&IdentifiedModel>,
) -> Result<()> {
    let angles = canonical_angles(exact_u_r, approx_u_r)?;
    report.sin_theta_max = Some(angles.sin_theta_max);
    let e = eta(angles.sin_theta_max, report.upsilon_pinv_norm);
    report.eta = Some(e);
    report.a4_violated = Some(e >= 1.0);
    let kappa = match reference_model {
        Some(m) => {
            let eig = numeric::eig(&m.a)?;
            report.reference_spectral_radius = Some(eig.spectral_radius());
            numeric::complex_condition_number(&eig.vectors)
        }
        None => report.kappa_w,
    };
    report.theorem_bound = theorem_bound(kappa, report.upsilon_pinv_norm, angles.sin_theta_max);
    let rho = report.reference_spectral_radius.unwrap_or(report.spectral_radius);
    report.stability_margin = report.theorem_bound.map(|b| 1.0 - rho - b);
    Ok(())
}

/// Outcome of the stability test.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StabilityAssessment {
    /// Spectral radius of the identified model is below one.
    pub stable_identified: bool,
    /// `1 - rho` of the identified model.
    pub margin: f64,
    /// The perturbation bound certifies stability:
    /// `theorem_bound < 1 - rho(reference)`.
    pub certified: bool,
    /// The certification fell back to the identified model's own spectral
    /// radius because no reference was available.
    pub certified_against_identified: bool,
}

pub fn stability_check(model: &IdentifiedModel, diag: &DiagnosticsReport) -> Result<StabilityAssessment> {
    let rho_identified = numeric::eig(&model.a)?.spectral_radius();
    let (rho_ref, fell_back) = match diag.reference_spectral_radius {
        Some(r) => (r, false),
        None => (diag.spectral_radius, true),
    };
    let certified = matches!(diag.theorem_bound, Some(b) if b < 1.0 - rho_ref);
    Ok(StabilityAssessment {
        stable_identified: rho_identified < 1.0,
        margin: 1.0 - rho_identified,
        certified,
        certified_against_identified: certified && fell_back,
    })
}

/// Thresholds for [`assumption_audit`].
#[derive(Debug, Clone, Copy)]
pub struct AuditConfig {
    /// A1 proxy: eigenvector condition number must stay below this.
    pub kappa_max: f64,
    /// A3 proxy: `||h_(2s-1)||_F / max_k ||h_k||_F` must stay below this.
    pub tail_ratio_max: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self { kappa_max: 1e8, tail_ratio_max: 1e-3 }
    }
}

/// Pass/fail audit of the four assumptions behind the perturbation bound:
/// diagonalizable and well-conditioned `A_r` (A1), full-rank shift block
/// (A2), decayed Markov tail (A3), and `eta < 1` (A4, only when a subspace
/// angle is available).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionAudit {
    pub a1_kappa_w: f64,
    pub a1_pass: bool,
    pub a2_sigma_min: f64,
    pub a2_cutoff: f64,
    pub a2_pass: bool,
    pub a3_tail_ratio: f64,
    pub a3_pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a4_eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a4_pass: Option<bool>,
}

impl AssumptionAudit {
    pub fn all_pass(&self) -> bool {
        self.a1_pass && self.a2_pass && self.a3_pass && self.a4_pass.unwrap_or(true)
    }
}

pub fn assumption_audit(
    svd: &TruncatedSvd,
    ups: &UpsilonPair,
    markov: &MarkovSequence,
    sin_theta_max: Option<f64>,
    cfg: &AuditConfig,
) -> Result<AssumptionAudit> {
    let f = numeric::full_svd(&ups.upsilon_f)?;
    let a2_sigma_min = f.sigma[f.sigma.len() - 1];
    let tol = ups.upsilon_f.nrows().max(svd.rank()) as f64 * f64::EPSILON;
    let a2_cutoff = tol * f.sigma[0];
    let a2_pass = a2_sigma_min > a2_cutoff && f.sigma[0] > 0.0;

    let a_r = numeric::pinv_from_svd(&f, tol) * &ups.upsilon_l;
    let a1_kappa_w = numeric::complex_condition_number(&numeric::eig(&a_r)?.vectors);
    let a1_pass = a1_kappa_w.is_finite() && a1_kappa_w < cfg.kappa_max;

    let last = markov.block(markov.num_params() - 1).norm();
    let peak = (1..markov.num_params())
        .map(|k| markov.block(k).norm())
        .fold(0.0, f64::max);
    let a3_tail_ratio = if peak > 0.0 { last / peak } else { 1.0 };
    let a3_pass = a3_tail_ratio < cfg.tail_ratio_max;

    let pinv_norm = if a2_sigma_min > 0.0 { 1.0 / a2_sigma_min } else { f64::INFINITY };
    let a4_eta = sin_theta_max.map(|s| eta(s, pinv_norm));
    let a4_pass = a4_eta.map(|e| e < 1.0);

    Ok(AssumptionAudit {
        a1_kappa_w,
        a1_pass,
        a2_sigma_min,
        a2_cutoff,
        a2_pass,
        a3_tail_ratio,
        a3_pass,
        a4_eta,
        a4_pass,
    })
}
