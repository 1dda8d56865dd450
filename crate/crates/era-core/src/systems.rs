//! Synthetic discrete-time LTI test systems and impulse-response simulation.
//!
//! All generators work directly in discrete time: the random and oscillatory
//! systems place eigenvalues inside the unit disk by construction, and the
//! 1-D heat rod is discretized exactly through its closed-form
//! eigendecomposition (no general continuous-to-discrete conversion here).

use serde::{Deserialize, Serialize};

use crate::era::{markov_blocks, matrix_from_rows, matrix_to_rows};
use crate::error::{CoreError, Result};
use crate::hankel::MarkovSequence;
use crate::numeric::{self, gaussian_matrix, Matrix, RngStream};

/// Dense state-space quadruple `x_{k+1} = A x_k + B u_k`, `y_k = C x_k + D u_k`.
#[derive(Debug, Clone)]
pub struct LtiSystem {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
    /// Sampling interval metadata; not used by identification.
    pub dt: Option<f64>,
}

impl LtiSystem {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, d: Matrix, dt: Option<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(CoreError::Dimension("state matrix must be square".into()));
        }
        if b.nrows() != n || c.ncols() != n || d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(CoreError::Dimension(format!(
                "inconsistent system dimensions: A {}x{}, B {}x{}, C {}x{}, D {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        for (name, m) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
            if !m.iter().all(|v| v.is_finite()) {
                return Err(CoreError::InvalidInput(format!("{name} has non-finite entries")));
            }
        }
        Ok(Self { a, b, c, d, dt })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn num_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn num_outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        Ok(numeric::eig(&self.a)?.spectral_radius())
    }
}

/// Impulse-response blocks `h_0 = D`, `h_k = C A^(k-1) B` for
/// `k = 1..num_params-1`, computed by iterating the `n x m` state block.
pub fn simulate_impulse(sys: &LtiSystem, num_params: usize) -> Result<MarkovSequence> {
    if num_params < 2 {
        return Err(CoreError::Config("impulse simulation needs at least 2 Markov blocks".into()));
    }
    let blocks = markov_blocks(&sys.a, &sys.b, &sys.c, &sys.d, num_params);
    MarkovSequence::new(blocks, sys.dt)
}

/// Eigenvalue layout for the similarity-based generators.
struct SpectrumPlan {
    /// Real 2x2 rotation-scaling blocks (modulus, angle) and real eigenvalues.
    pairs: Vec<(f64, f64)>,
    reals: Vec<f64>,
}

impl SpectrumPlan {
    fn realize(&self, n: usize) -> Matrix {
        let mut lambda = Matrix::zeros(n, n);
        let mut idx = 0;
        for &(r, theta) in &self.pairs {
            let (s, c) = theta.sin_cos();
            lambda[(idx, idx)] = r * c;
            lambda[(idx, idx + 1)] = r * s;
            lambda[(idx + 1, idx)] = -r * s;
            lambda[(idx + 1, idx + 1)] = r * c;
            idx += 2;
        }
        for &v in &self.reals {
            lambda[(idx, idx)] = v;
            idx += 1;
        }
        lambda
    }

    fn eigenvalues(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for &(r, theta) in &self.pairs {
            out.push((r * theta.cos(), r * theta.sin()));
            out.push((r * theta.cos(), -r * theta.sin()));
        }
        for &v in &self.reals {
            out.push((v, 0.0));
        }
        out
    }

    fn min_separation(&self) -> f64 {
        let eigs = self.eigenvalues();
        let mut sep = f64::INFINITY;
        for i in 0..eigs.len() {
            for j in i + 1..eigs.len() {
                let d = ((eigs[i].0 - eigs[j].0).powi(2) + (eigs[i].1 - eigs[j].1).powi(2)).sqrt();
                sep = sep.min(d);
            }
        }
        sep
    }
}

/// Similarity transform `V Lambda V^{-1}` with a resampled-until-well-
/// conditioned random basis.
fn similarity_realize(plan: &SpectrumPlan, n: usize, rng: &mut RngStream) -> Option<Matrix> {
    for _ in 0..16 {
        let v = gaussian_matrix(rng, n, n);
        let f = numeric::full_svd(&v).ok()?;
        let cond = f.sigma[0] / f.sigma[n - 1];
        if !cond.is_finite() || cond > 100.0 {
            continue;
        }
        let vi = v.clone().try_inverse()?;
        return Some(&v * plan.realize(n) * vi);
    }
    None
}

fn min_singular_ratio(m: &Matrix) -> f64 {
    match numeric::full_svd(m) {
        Ok(f) => {
            let smax = f.sigma[0];
            if smax == 0.0 {
                0.0
            } else {
                f.sigma[f.sigma.len() - 1] / smax
            }
        }
        Err(_) => 0.0,
    }
}

/// Rank proxy used for the reachability/observability checks: smallest over
/// largest singular value of the full controllability/observability matrix.
fn controllability_ratio(a: &Matrix, b: &Matrix) -> f64 {
    let n = a.nrows();
    let m = b.ncols();
    let mut k = Matrix::zeros(n, n * m);
    let mut blk = b.clone();
    for j in 0..n {
        k.view_mut((0, j * m), (n, m)).copy_from(&blk);
        blk = a * blk;
    }
    min_singular_ratio(&k)
}

fn observability_ratio(a: &Matrix, c: &Matrix) -> f64 {
    controllability_ratio(&a.transpose(), &c.transpose())
}

/// Random stable, reachable, observable system with spectral radius at most
/// `rho_max`. Eigenvalue moduli are kept away from zero and mutually
/// separated so that exact-recovery round trips are well conditioned;
/// everything is resampled (deterministically, by substream) until the
/// conditioning checks pass.
pub fn random_stable_system(
    n: usize,
    m: usize,
    ell: usize,
    rho_max: f64,
    seed: u64,
) -> Result<LtiSystem> {
    if n == 0 || m == 0 || ell == 0 {
        return Err(CoreError::Config("system dimensions must be at least 1".into()));
    }
    if !(0.0 < rho_max && rho_max < 1.0) {
        return Err(CoreError::Config("rho_max must lie in (0, 1)".into()));
    }
    let base = RngStream::new(seed);
    let sep_floor = (0.04 * rho_max).min(0.02);
    for attempt in 0..64u64 {
        let mut rng = base.substream(attempt);
        let max_pairs = n / 2;
        let n_pairs = if max_pairs == 0 { 0 } else { rng.next_below(max_pairs as u64 + 1) as usize };
        let n_real = n - 2 * n_pairs;
        let lo = 0.5 * rho_max;
        let plan = SpectrumPlan {
            pairs: (0..n_pairs)
                .map(|_| {
                    let r = lo + rng.next_uniform() * (rho_max - lo);
                    let theta = 0.25 + rng.next_uniform() * (std::f64::consts::PI - 0.5);
                    (r, theta)
                })
                .collect(),
            reals: (0..n_real)
                .map(|_| {
                    let r = lo + rng.next_uniform() * (rho_max - lo);
                    if rng.next_uniform() < 0.5 {
                        -r
                    } else {
                        r
                    }
                })
                .collect(),
        };
        if n > 1 && plan.min_separation() < sep_floor {
            continue;
        }
        let Some(a) = similarity_realize(&plan, n, &mut rng) else { continue };
        let b = gaussian_matrix(&mut rng, n, m);
        let c = gaussian_matrix(&mut rng, ell, n);
        if controllability_ratio(&a, &b) < 1e-6 || observability_ratio(&a, &c) < 1e-6 {
            continue;
        }
        let d = Matrix::zeros(ell, m);
        return LtiSystem::new(a, b, c, d, None);
    }
    Err(CoreError::Numerical(format!(
        "could not generate a well-conditioned stable system for n={n}, m={m}, l={ell}"
    )))
}

/// Default tap counts for the heat rod, mirroring a small-input/small-output
/// diffusion benchmark.
pub const HEAT_DEFAULT_INPUTS: usize = 7;
pub const HEAT_DEFAULT_OUTPUTS: usize = 6;

/// Exactly discretized 1-D heat rod on `grid_n` interior nodes.
///
/// The continuous operator is `A_c = (kappa/h^2) tridiag(1, -2, 1)` with
/// `h = 1/(grid_n+1)`; its eigenpairs are known in closed form
/// (`lambda_j = -(4 kappa/h^2) sin^2(j pi / (2(grid_n+1)))` with sine
/// eigenvectors), so the exact discrete-time matrix is
/// `A = V diag(exp(lambda_j dt)) V^T`. Inputs are point sources and outputs
/// point sensors at golden-ratio-spread interior nodes, which keeps every
/// low-frequency mode visible from every tap.
pub fn heat1d_system(grid_n: usize, diffusivity: f64, dt: f64) -> Result<LtiSystem> {
    heat1d_system_with_taps(grid_n, diffusivity, dt, HEAT_DEFAULT_INPUTS, HEAT_DEFAULT_OUTPUTS)
}

pub fn heat1d_system_with_taps(
    grid_n: usize,
    diffusivity: f64,
    dt: f64,
    m: usize,
    ell: usize,
) -> Result<LtiSystem> {
    if grid_n < 2 {
        return Err(CoreError::Config("heat rod needs at least 2 interior nodes".into()));
    }
    if !(diffusivity > 0.0) || !(dt >= 0.0) || !dt.is_finite() {
        return Err(CoreError::Config("diffusivity must be positive and dt nonnegative".into()));
    }
    if m == 0 || ell == 0 || m > grid_n || ell > grid_n {
        return Err(CoreError::Config("tap counts must lie in 1..=grid_n".into()));
    }
    let n = grid_n;
    let a = if dt == 0.0 {
        // exp(0) = I exactly.
        Matrix::identity(n, n)
    } else {
        let h = 1.0 / (n as f64 + 1.0);
        let scale = (2.0 / (n as f64 + 1.0)).sqrt();
        let v = Matrix::from_fn(n, n, |i, j| {
            let (i1, j1) = (i as f64 + 1.0, j as f64 + 1.0);
            scale * (i1 * j1 * std::f64::consts::PI / (n as f64 + 1.0)).sin()
        });
        let decay = nalgebra::DVector::from_fn(n, |j, _| {
            let j1 = j as f64 + 1.0;
            let lambda = -(4.0 * diffusivity / (h * h))
                * (j1 * std::f64::consts::PI / (2.0 * (n as f64 + 1.0))).sin().powi(2);
            (lambda * dt).exp()
        });
        let a = &v * Matrix::from_diagonal(&decay) * v.transpose();
        // Symmetrize away the last bits of roundoff; A is symmetric by
        // construction.
        (&a + a.transpose()) * 0.5
    };

    let b_taps = golden_taps(n, m, 0.0);
    let c_taps = golden_taps(n, ell, 0.5);
    let mut b = Matrix::zeros(n, m);
    for (j, &node) in b_taps.iter().enumerate() {
        b[(node, j)] = 1.0;
    }
    let mut c = Matrix::zeros(ell, n);
    for (i, &node) in c_taps.iter().enumerate() {
        c[(i, node)] = 1.0;
    }
    LtiSystem::new(a, b, c, Matrix::zeros(ell, m), Some(dt))
}

/// `count` distinct interior node indices spread by the golden ratio.
fn golden_taps(n: usize, count: usize, phase: f64) -> Vec<usize> {
    let golden = 0.618_033_988_749_894_9_f64;
    let mut taken = vec![false; n];
    let mut taps = Vec::with_capacity(count);
    let mut k = 0u64;
    while taps.len() < count {
        k += 1;
        let frac = (phase + k as f64 * golden).fract();
        let mut idx = ((frac * n as f64) as usize).min(n - 1);
        while taken[idx] {
            idx = (idx + 1) % n;
        }
        taken[idx] = true;
        taps.push(idx);
    }
    taps
}

/// Lightly damped oscillatory system: `n_pairs` complex-conjugate eigenvalue
/// pairs `r e^{+-i theta}` with moduli in `(damping_lo, damping_hi)`, a
/// subset of `(0.9, 0.999)`.
///
/// Input columns (and output rows, unless `ell == 2*n_pairs` selects the
/// identity output map) carry geometrically decaying gains spanning three
/// decades, so the side matrices used by tangential compression have genuine
/// singular-value decay.
pub fn oscillatory_system(
    n_pairs: usize,
    m: usize,
    ell: usize,
    damping_lo: f64,
    damping_hi: f64,
    seed: u64,
) -> Result<LtiSystem> {
    if n_pairs == 0 || m == 0 || ell == 0 {
        return Err(CoreError::Config("system dimensions must be at least 1".into()));
    }
    if !(0.9 < damping_lo && damping_lo <= damping_hi && damping_hi < 0.999) {
        return Err(CoreError::Config(
            "damping range must satisfy 0.9 < lo <= hi < 0.999".into(),
        ));
    }
    let n = 2 * n_pairs;
    let base = RngStream::new(seed);
    for attempt in 0..64u64 {
        let mut rng = base.substream(attempt);
        let plan = SpectrumPlan {
            pairs: (0..n_pairs)
                .map(|_| {
                    let r = damping_lo + rng.next_uniform() * (damping_hi - damping_lo);
                    let theta = std::f64::consts::PI * (0.05 + 0.9 * rng.next_uniform());
                    (r, theta)
                })
                .collect(),
            reals: vec![],
        };
        if plan.min_separation() < 0.01 {
            continue;
        }
        let Some(a) = similarity_realize(&plan, n, &mut rng) else { continue };
        let mut b = gaussian_matrix(&mut rng, n, m);
        for j in 0..m {
            let gain = 10f64.powf(-3.0 * j as f64 / (m.max(2) - 1) as f64);
            b.column_mut(j).scale_mut(gain);
        }
        let c = if ell == n {
            Matrix::identity(n, n)
        } else {
            let mut c = gaussian_matrix(&mut rng, ell, n);
            for i in 0..ell {
                let gain = 10f64.powf(-3.0 * i as f64 / (ell.max(2) - 1) as f64);
                c.row_mut(i).scale_mut(gain);
            }
            c
        };
        if controllability_ratio(&a, &b) < 1e-12 || observability_ratio(&a, &c) < 1e-12 {
            continue;
        }
        let d = Matrix::zeros(ell, m);
        return LtiSystem::new(a, b, c, d, None);
    }
    Err(CoreError::Numerical("could not generate a well-conditioned oscillatory system".into()))
}

/// Serialized form of a state-space system (nested arrays are row-major).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemDocument {
    pub format_version: u32,
    pub n: usize,
    pub m: usize,
    pub l: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    /// Generator name and parameters that produced the system.
    pub provenance: SystemProvenance,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SystemProvenance {
    pub generator: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<(String, f64)>,
}

impl SystemDocument {
    pub fn from_system(sys: &LtiSystem, provenance: SystemProvenance) -> Self {
        Self {
            format_version: 1,
            n: sys.order(),
            m: sys.num_inputs(),
            l: sys.num_outputs(),
            dt: sys.dt,
            a: matrix_to_rows(&sys.a),
            b: matrix_to_rows(&sys.b),
            c: matrix_to_rows(&sys.c),
            d: matrix_to_rows(&sys.d),
            provenance,
        }
    }

    pub fn into_system(self) -> Result<LtiSystem> {
        LtiSystem::new(
            matrix_from_rows(&self.a)?,
            matrix_from_rows(&self.b)?,
            matrix_from_rows(&self.c)?,
            matrix_from_rows(&self.d)?,
            self.dt,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::era::{identify, IdentifyMethod, IdentifyOptions};
    use crate::metrics::{hausdorff, SpectrumSet};

    #[test]
    fn random_system_spectral_radius_and_determinism() {
        for seed in [1u64, 2, 3] {
            let sys = random_stable_system(8, 2, 2, 0.9, seed).unwrap();
            assert!(sys.spectral_radius().unwrap() <= 0.9 + 1e-8);
            let again = random_stable_system(8, 2, 2, 0.9, seed).unwrap();
            assert_eq!(sys.a, again.a);
            assert_eq!(sys.b, again.b);
        }
        let other = random_stable_system(8, 2, 2, 0.9, 999).unwrap();
        let first = random_stable_system(8, 2, 2, 0.9, 1).unwrap();
        assert_ne!(other.a, first.a);
    }

    #[test]
    fn heat_rod_symmetric_stable_with_exact_mode() {
        let n = 40;
        let sys = heat1d_system(n, 1.0, 5e-4).unwrap();
        assert!((&sys.a - sys.a.transpose()).norm() < 1e-12);

        let h = 1.0 / (n as f64 + 1.0);
        let lambda1 = -(4.0 / (h * h))
            * (std::f64::consts::PI / (2.0 * (n as f64 + 1.0))).sin().powi(2);
        let rho_expected = (lambda1 * 5e-4).exp();
        let rho = sys.spectral_radius().unwrap();
        assert!((rho - rho_expected).abs() < 1e-10 && rho < 1.0);

        // A v_1 = exp(lambda_1 dt) v_1 for the closed-form eigenvector.
        let scale = (2.0 / (n as f64 + 1.0)).sqrt();
        let v1 = crate::numeric::Vector::from_fn(n, |i, _| {
            scale * ((i as f64 + 1.0) * std::f64::consts::PI / (n as f64 + 1.0)).sin()
        });
        let residual = (&sys.a * &v1 - &v1 * rho_expected).norm();
        assert!(residual < 1e-10, "eigenpair residual {residual}");
    }

    #[test]
    fn heat_rod_dt_zero_is_identity() {
        let sys = heat1d_system(12, 1.0, 0.0).unwrap();
        assert_eq!(sys.a, Matrix::identity(12, 12));
    }

    #[test]
    fn heat_rod_matches_taylor_exponential() {
        // Small instance with dt * ||A_c|| <= 1 so the Taylor series is a
        // trustworthy oracle.
        let n = 8;
        let kappa = 1.0;
        let h = 1.0 / (n as f64 + 1.0);
        let dt = 0.9 / (4.0 * kappa / (h * h));
        let sys = heat1d_system(n, kappa, dt).unwrap();

        let mut a_c = Matrix::zeros(n, n);
        for i in 0..n {
            a_c[(i, i)] = -2.0;
            if i + 1 < n {
                a_c[(i, i + 1)] = 1.0;
                a_c[(i + 1, i)] = 1.0;
            }
        }
        a_c *= kappa / (h * h);

        let mut expm = Matrix::identity(n, n);
        let mut term = Matrix::identity(n, n);
        for k in 1..=20 {
            term = &term * &a_c * (dt / k as f64);
            expm += &term;
        }
        assert!((&sys.a - &expm).norm() <= 1e-9);
    }

    #[test]
    fn oscillatory_annulus_and_identity_output() {
        let sys = oscillatory_system(6, 3, 12, 0.92, 0.98, 5).unwrap();
        assert_eq!(sys.order(), 12);
        assert_eq!(sys.c, Matrix::identity(12, 12));
        let eigs = crate::numeric::eig(&sys.a).unwrap().values;
        for z in eigs {
            let r = z.norm();
            assert!((0.92 - 1e-8..=0.98 + 1e-8).contains(&r), "modulus {r}");
        }
        assert!(oscillatory_system(2, 2, 2, 0.5, 0.9, 0).is_err());
    }

    #[test]
    fn oscillatory_round_trip_recovers_annulus() {
        let sys = oscillatory_system(3, 2, 4, 0.91, 0.96, 11).unwrap();
        let markov = simulate_impulse(&sys, 400).unwrap();
        let opts = IdentifyOptions::new(IdentifyMethod::FullSvd, 6);
        let (model, _) = identify(&markov, &opts).unwrap();
        let truth = SpectrumSet::from_matrix(&sys.a, "true").unwrap();
        let found = SpectrumSet::from_matrix(&model.a, "identified").unwrap();
        assert!(hausdorff(&truth, &found) <= 1e-6);
    }

    #[test]
    fn impulse_blocks_and_decay() {
        let sys = random_stable_system(6, 2, 3, 0.8, 12).unwrap();
        let markov = simulate_impulse(&sys, 30).unwrap();
        assert_eq!(markov.block(0), &sys.d);
        assert!((markov.block(1) - &sys.c * &sys.b).norm() < 1e-13);

        // Decay bound ||h_k|| <= kappa * rho^(k-1) with measured kappa from
        // the eigendecomposition of A.
        let e = crate::numeric::eig(&sys.a).unwrap();
        let rho = e.spectral_radius();
        let kappa_v = crate::numeric::complex_condition_number(&e.vectors);
        let cb = sys.c.norm() * sys.b.norm();
        for k in 1..30 {
            let bound = 1.5 * kappa_v * cb * rho.powi(k as i32 - 1);
            let norm = markov.block(k).norm();
            assert!(norm <= bound, "k={k}: {norm} > {bound}");
        }
    }

    #[test]
    fn simulate_needs_two_blocks() {
        let sys = random_stable_system(2, 1, 1, 0.5, 1).unwrap();
        assert!(simulate_impulse(&sys, 1).is_err());
    }

    #[test]
    fn system_document_round_trip() {
        let sys = random_stable_system(4, 2, 3, 0.7, 8).unwrap();
        let doc = SystemDocument::from_system(
            &sys,
            SystemProvenance { generator: "random".into(), seed: Some(8), params: vec![] },
        );
        let json = serde_json::to_string(&doc).unwrap();
        let back: SystemDocument = serde_json::from_str(&json).unwrap();
        let sys2 = back.into_system().unwrap();
        assert_eq!(sys.a, sys2.a);
        assert_eq!(sys.d, sys2.d);
    }
}
