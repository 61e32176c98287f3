//! Post-solve analysis.
//!
//! With `X⁽¹⁾ = (A₁, B₁, Q₁)` and the computed `X_M`, `Y_M`:
//!
//! ```text
//! T₁ = (X_M − B₁)⁻¹ A₁        S₁ = A₁ (Q₁ − Y_M)⁻¹
//! ```
//!
//! The plain iteration converges like `ρ(T₁)²` per step; `ρ(T₁) = 1` is the
//! critical case (`X_M − Y_M` singular), where it degrades to `O(1/k)`.

use std::collections::BTreeMap;

use crate::exec::Execution;
use crate::linalg::{self, HermitianMatrix, LinalgError, Matrix, DEFAULT_EIG_ITERS, DEFAULT_PD_TOL, DEFAULT_SR_TOL};
use crate::solvers::{self, SolveResult};
use crate::transform::{self, IterTriple, ProblemSpec, TransformError};
use crate::{Complex64, Sign};

pub const DEFAULT_CRIT_TOL: f64 = 1e-6;
pub const DEFAULT_PSI_SAMPLES: usize = 256;
pub const DEFAULT_PSI_TOL: f64 = 1e-8;
/// `X_M − Y_M` eigenvalues below this fraction of `‖X_M‖_F` count as null.
const NULLITY_TOL: f64 = 1e-8;
/// How many plain steps the identity checks look at.
const CHECK_DEPTH: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiagError {
    #[error("{0} is not positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("need at least {needed} error samples above the noise floor, got {got}")]
    InsufficientHistory { needed: usize, got: usize },
    #[error("{0}")]
    Linalg(#[from] LinalgError),
    #[error("{0}")]
    Transform(#[from] TransformError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criticality {
    Noncritical,
    Critical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalityReport {
    pub rho_t1: f64,
    pub criticality: Criticality,
    pub nullity_xm_minus_ym: usize,
    /// Eigenvalues of `T₁S₁ᴴ` within `crit_tol` of one.
    pub unit_multiplicity: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiReport {
    /// Smallest eigenvalue of `ψ(e^{iθ})` over the samples.
    pub min_eig: f64,
    /// Some sample has `det ψ ≠ 0` (all eigenvalues clear of `psi_tol`).
    pub regular: bool,
    pub samples: usize,
}

impl PsiReport {
    /// Sampled version of "ψ regular and ⪰ 0 on the unit circle". Heuristic, not a certificate.
    pub fn indicates_solvable(&self, psi_tol: f64) -> bool {
        self.regular && self.min_eig >= -psi_tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub rho_t1: Option<f64>,
    pub rho_s1: Option<f64>,
    pub rho_t1s1h: Option<f64>,
    pub critical: bool,
    pub nullity_xm_minus_ym: Option<usize>,
    pub unit_multiplicity: Option<usize>,
    pub measured_rate: Option<f64>,
    pub psi: PsiReport,
    /// Worst deviation per structural identity.
    pub identity_checks: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnoseOptions {
    pub crit_tol: f64,
    pub psi_samples: usize,
    pub psi_tol: f64,
    pub exec: Execution,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        DiagnoseOptions {
            crit_tol: DEFAULT_CRIT_TOL,
            psi_samples: DEFAULT_PSI_SAMPLES,
            psi_tol: DEFAULT_PSI_TOL,
            exec: Execution::Parallel,
        }
    }
}

fn rho(m: &Matrix) -> Result<f64, DiagError> {
    Ok(linalg::spectral_radius(m, DEFAULT_SR_TOL, DEFAULT_EIG_ITERS)?)
}

fn first_triple(p: &ProblemSpec, res: &SolveResult) -> Result<IterTriple, DiagError> {
    match &res.initial {
        Some(t) => Ok(t.clone()),
        None => Ok(transform::initial_triple_unchecked(p)?),
    }
}

/// `(X_M − B)⁻¹ A` for a triple.
fn t_of(x_m: &HermitianMatrix, t: &IterTriple) -> Result<Matrix, DiagError> {
    linalg::pd_solve(&x_m.sub(&t.b), &t.a, DEFAULT_PD_TOL).map_err(|_| DiagError::NotPositiveDefinite("X_M − B⁽ᵏ⁾"))
}

/// `T₁ = (X_M − B₁)⁻¹ A₁` and `S₁ = A₁ (Q₁ − Y_M)⁻¹`.
pub fn compute_t1_s1(p: &ProblemSpec, res: &SolveResult) -> Result<(Matrix, Matrix), DiagError> {
    let t1 = first_triple(p, res)?;
    let t = t_of(&res.x_m, &t1)?;
    let s = linalg::pd_solve(&t1.q.sub(&res.y_m), &t1.a.adjoint(), DEFAULT_PD_TOL)
        .map_err(|_| DiagError::NotPositiveDefinite("Q⁽¹⁾ − Y_M"))?
        .adjoint();
    Ok((t, s))
}

/// Critical iff `ρ(T₁) ≥ 1 − crit_tol`; the minus sign is never critical.
pub fn classify_criticality(
    p: &ProblemSpec,
    res: &SolveResult,
    t1: &Matrix,
    s1: &Matrix,
    crit_tol: f64,
) -> Result<CriticalityReport, DiagError> {
    let rho_t1 = rho(t1)?;
    let criticality = if p.sign() == Sign::Plus && rho_t1 >= 1.0 - crit_tol {
        Criticality::Critical
    } else {
        Criticality::Noncritical
    };
    let gap_tol = NULLITY_TOL * linalg::frobenius(&res.x_m);
    let nullity = res.x_m.sub(&res.y_m).eigenvalues().iter().filter(|&&l| l < gap_tol).count();
    let unit = linalg::eigenvalues(&(t1 * s1.adjoint()), DEFAULT_SR_TOL, DEFAULT_EIG_ITERS)?
        .iter()
        .filter(|z| (*z - Complex64::new(1.0, 0.0)).norm() <= crit_tol)
        .count();
    Ok(CriticalityReport { rho_t1, criticality, nullity_xm_minus_ym: nullity, unit_multiplicity: unit })
}

/// Samples `ψ(λ) = Q₁ − B₁ + λA₁ + λ⁻¹A₁ᴴ` at `samples` equispaced points of the unit circle.
pub fn psi_unit_circle_check(t1: &IterTriple, samples: usize, psi_tol: f64, exec: Execution) -> Result<PsiReport, DiagError> {
    if samples < 8 {
        return Err(DiagError::InvalidArgument(format!("need at least 8 ψ samples, got {samples}")));
    }
    let base = t1.q.sub(&t1.b);
    let ah = t1.a.adjoint();
    let scale = linalg::frobenius(&base).max(linalg::frobenius(&t1.a)).max(1.0);
    let eigs = exec.map_range(samples, |j| {
        let theta = 2.0 * std::f64::consts::PI * j as f64 / samples as f64;
        let lambda = Complex64::from_polar(1.0, theta);
        let psi = base.as_matrix() + &t1.a * lambda + &ah * lambda.conj();
        HermitianMatrix::from_hermitian_part(&psi).eigenvalues()
    });
    let min_eig = eigs.iter().map(|e| e[0]).fold(f64::INFINITY, f64::min);
    let regular = eigs.iter().any(|e| e.iter().all(|l| l.abs() > psi_tol * scale));
    Ok(PsiReport { min_eig, regular, samples })
}

/// Default noise floor for [`estimate_rate`]: `1e3·ε·max(1, ‖X‖_F)`.
pub fn noise_floor(x: &HermitianMatrix) -> f64 {
    1e3 * f64::EPSILON * linalg::frobenius(x).max(1.0)
}

/// `‖Q⁽ᵏ⁾ − X‖_F` along a sequence of triples.
pub fn error_sequence(triples: &[IterTriple], x: &HermitianMatrix) -> Vec<f64> {
    triples.iter().map(|t| linalg::frobenius(&t.q.sub(x))).collect()
}

/// Geometric-mean ratio of successive errors over the last (up to) ten
/// entries of the leading run of errors above `floor`.
pub fn estimate_rate(errors: &[f64], floor: f64) -> Result<f64, DiagError> {
    let run = errors.iter().take_while(|&&e| e > floor && e.is_finite()).count();
    if run < 2 {
        return Err(DiagError::InsufficientHistory { needed: 2, got: run });
    }
    let window = &errors[run.saturating_sub(10)..run];
    let (first, last) = (window[0], window[window.len() - 1]);
    Ok((last / first).powf(1.0 / (window.len() - 1) as f64))
}

/// `‖(X_M − B⁽ᵏ⁾)⁻¹A⁽ᵏ⁾ − T₁ᵏ‖_F` and `‖Q⁽ᵏ⁾ − X_M − T_kᴴ(X_M − B⁽ᵏ⁾)T_k‖_F`.
pub fn verify_t_power(p: &ProblemSpec, res: &SolveResult, k: usize) -> Result<(f64, f64), DiagError> {
    if k == 0 {
        return Err(DiagError::InvalidArgument("k must be ≥ 1".into()));
    }
    let traj = transform::plain_trajectory_from(&first_triple(p, res)?, k)?;
    let t1 = t_of(&res.x_m, &traj[0])?;
    let tk_triple = &traj[k - 1];
    let tk = t_of(&res.x_m, tk_triple)?;
    let mut power = t1.clone();
    for _ in 1..k {
        power = &power * &t1;
    }
    let power_dev = linalg::frobenius(&(&tk - power));
    let rep = tk.adjoint() * res.x_m.sub(&tk_triple.b).as_matrix() * &tk;
    let rep_dev = linalg::frobenius(&(tk_triple.q.sub(&res.x_m).as_matrix() - rep));
    Ok((power_dev, rep_dev))
}

/// `T½⁽ᵏ⁾ = (f(X_M) − B½⁽ᵏ⁾)⁻¹ A½⁽ᵏ⁾` for `k = 1..=kmax`.
pub fn half_t_matrices(p: &ProblemSpec, x_m: &HermitianMatrix, kmax: usize) -> Result<Vec<Matrix>, DiagError> {
    let (halves, _) = solvers::alternating_trajectory(p, kmax)?;
    let fx = p.op().apply_hermitian(x_m);
    halves
        .iter()
        .map(|h| {
            linalg::pd_solve(&fx.sub(&h.b), &h.a, DEFAULT_PD_TOL).map_err(|_| DiagError::NotPositiveDefinite("f(X_M) − B½⁽ᵏ⁾"))
        })
        .collect()
}

/// Largest relative deviation among `T_{i+j−1} = f̃(T½⁽ⁱ⁾)T½⁽ʲ⁾`, `T½⁽ⁱ⁺ʲ⁾ = T½⁽ⁱ⁾T_j`
/// and `T½⁽ᵏ⁾ = T½⁽¹⁾T₁ᵏ⁻¹` (`k = i + j`), where `f̃` is the order-preserving companion of `f`.
pub fn verify_half_t_relation(p: &ProblemSpec, res: &SolveResult, i: usize, j: usize) -> Result<f64, DiagError> {
    if i == 0 || j == 0 {
        return Err(DiagError::InvalidArgument("i and j must be ≥ 1".into()));
    }
    let k = i + j;
    let half_t = half_t_matrices(p, &res.x_m, k)?;
    let traj = transform::plain_trajectory_from(&first_triple(p, res)?, k)?;
    let t = |m: usize| t_of(&res.x_m, &traj[m - 1]);
    let rel = |lhs: &Matrix, rhs: &Matrix| linalg::frobenius(&(lhs - rhs)) / linalg::frobenius(rhs).max(1.0);

    let a = rel(&t(i + j - 1)?, &(p.op().apply_preserving(&half_t[i - 1]) * &half_t[j - 1]));
    let b = rel(&half_t[k - 1], &(&half_t[i - 1] * t(j)?));
    let t1 = t(1)?;
    let mut chain = half_t[0].clone();
    for _ in 1..k {
        chain = &chain * &t1;
    }
    let c = rel(&half_t[k - 1], &chain);
    Ok(a.max(b).max(c))
}

fn sorted_moduli(m: &Matrix) -> Result<Vec<f64>, DiagError> {
    let mut v: Vec<f64> = linalg::eigenvalues(m, DEFAULT_SR_TOL, DEFAULT_EIG_ITERS)?.iter().map(|z| z.norm()).collect();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Full report. Quantities that need a positive definite `X_M − B₁` are left
/// empty when the solve did not produce one.
pub fn diagnose(p: &ProblemSpec, res: &SolveResult, opts: &DiagnoseOptions) -> Result<DiagnosticsReport, DiagError> {
    let t1_triple = first_triple(p, res)?;
    let psi = psi_unit_circle_check(&t1_triple, opts.psi_samples, opts.psi_tol, opts.exec)?;
    let mut report = DiagnosticsReport {
        rho_t1: None,
        rho_s1: None,
        rho_t1s1h: None,
        critical: false,
        nullity_xm_minus_ym: None,
        unit_multiplicity: None,
        measured_rate: None,
        psi,
        identity_checks: BTreeMap::new(),
    };
    if !res.converged() {
        return Ok(report);
    }
    let Ok((t1, s1)) = compute_t1_s1(p, res) else {
        return Ok(report);
    };
    let crit = classify_criticality(p, res, &t1, &s1, opts.crit_tol)?;
    report.rho_t1 = Some(crit.rho_t1);
    report.rho_s1 = Some(rho(&s1)?);
    report.rho_t1s1h = Some(rho(&(&t1 * s1.adjoint()))?);
    report.critical = crit.criticality == Criticality::Critical;
    report.nullity_xm_minus_ym = Some(crit.nullity_xm_minus_ym);
    report.unit_multiplicity = Some(crit.unit_multiplicity);
    if res.triples.len() >= 2 {
        let errors = error_sequence(&res.triples, &res.x_m);
        report.measured_rate = estimate_rate(&errors, noise_floor(&res.x_m)).ok();
    }

    let checks = &mut report.identity_checks;
    let (ts, ss) = (sorted_moduli(&t1)?, sorted_moduli(&s1)?);
    checks.insert(
        "sigma_T1_vs_S1".into(),
        ts.iter().zip(&ss).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
    );
    let t1s1h = linalg::eigenvalues(&(&t1 * s1.adjoint()), DEFAULT_SR_TOL, DEFAULT_EIG_ITERS)?;
    checks.insert(
        "T1S1H_real_nonnegative".into(),
        t1s1h.iter().map(|z| z.im.abs().max(-z.re)).fold(0.0, f64::max),
    );
    let mut power = 0.0_f64;
    let mut rep = 0.0_f64;
    for k in 1..=CHECK_DEPTH {
        if let Ok((a, b)) = verify_t_power(p, res, k) {
            power = power.max(a);
            rep = rep.max(b);
        }
    }
    checks.insert("T_power".into(), power);
    checks.insert("error_representation".into(), rep);
    if let Ok(dev) = verify_half_t_relation(p, res, 2, 3) {
        checks.insert("half_T_relations".into(), dev);
    }
    Ok(report)
}
