//! Seeded instance generation.
//!
//! Every generator is a pure function of its [`GenSpec`]: the same spec
//! (seed included) yields a bit-identical [`ProblemSpec`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{self, HermitianMatrix, Matrix};
use crate::operator::{MatrixOperator, OperatorKind};
use crate::transform::{ProblemSpec, TransformError};
use crate::{Complex64, Field, Sign};

const MAX_DRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenMode {
    Solvable,
    Critical,
    UnsolvableScalarFamily,
    Scalar,
}

impl GenMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GenMode::Solvable => "solvable",
            GenMode::Critical => "critical",
            GenMode::UnsolvableScalarFamily => "unsolvable_scalar_family",
            GenMode::Scalar => "scalar",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "solvable" => Some(GenMode::Solvable),
            "critical" => Some(GenMode::Critical),
            "unsolvable_scalar_family" => Some(GenMode::UnsolvableScalarFamily),
            "scalar" => Some(GenMode::Scalar),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub n: usize,
    pub sign: Sign,
    pub operator_kind: OperatorKind,
    pub seed: u64,
    pub mode: GenMode,
    /// Solvable mode: `‖Aᴴ f(X)⁻¹ A‖₂ = (1 − margin)·λ_min(X)`.
    pub margin: f64,
    pub a: f64,
    pub q: f64,
    /// Defaults to the operator's natural field.
    pub field: Option<Field>,
    /// Critical mode: how many channels sit exactly at `q = 2a`.
    pub critical_channels: usize,
    /// Solvable mode: force `A = 0`.
    pub zero_a: bool,
}

impl GenSpec {
    pub fn solvable(n: usize, sign: Sign, operator_kind: OperatorKind, seed: u64) -> Self {
        GenSpec {
            n,
            sign,
            operator_kind,
            seed,
            mode: GenMode::Solvable,
            margin: 0.3,
            a: 1.0,
            q: 2.0,
            field: None,
            critical_channels: 1,
            zero_a: false,
        }
    }

    pub fn critical(n: usize, seed: u64) -> Self {
        GenSpec {
            mode: GenMode::Critical,
            field: Some(Field::Complex),
            ..GenSpec::solvable(n, Sign::Plus, OperatorKind::Identity, seed)
        }
    }

    pub fn scalar(a: f64, q: f64, sign: Sign) -> Self {
        GenSpec {
            mode: GenMode::Scalar,
            a,
            q,
            ..GenSpec::solvable(1, sign, OperatorKind::Identity, 0)
        }
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = margin;
        self
    }

    pub fn field(&self) -> Field {
        self.field.unwrap_or_else(|| self.operator_kind.natural_field())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedInstance {
    pub problem: ProblemSpec,
    /// An exact solution by construction (maximal for critical and scalar modes).
    pub known_solution: Option<HermitianMatrix>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenError {
    #[error("invalid generator input: {0}")]
    InvalidInput(String),
    #[error("no valid instance after {0} draws")]
    RetryExhausted(usize),
    #[error("{0}")]
    Transform(#[from] TransformError),
}

pub fn generate(spec: &GenSpec) -> Result<GeneratedInstance, GenError> {
    match spec.mode {
        GenMode::Solvable => gen_solvable(spec),
        GenMode::Critical => gen_critical(spec),
        GenMode::Scalar => gen_scalar(spec.a, spec.q, spec.sign),
        GenMode::UnsolvableScalarFamily => gen_unsolvable_scalar(spec.a),
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, m: usize, field: Field) -> Matrix {
    Matrix::from_fn(n, m, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = match field {
            Field::Real => 0.0,
            Field::Complex => rng.sample(StandardNormal),
        };
        Complex64::new(re, im)
    })
}

/// Haar-like unitary (orthogonal for the real field): QR of a Gaussian draw
/// with the phases of `R`'s diagonal folded into `Q`.
pub fn random_unitary(rng: &mut ChaCha8Rng, n: usize, field: Field) -> Matrix {
    let qr = gaussian(rng, n, n, field).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() == 0.0 { Complex64::new(1.0, 0.0) } else { d / d.norm() };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// `V diag(±1) Vᴴ` with at least one `−1` when `n > 1`.
pub fn random_involution(rng: &mut ChaCha8Rng, n: usize, field: Field) -> Matrix {
    let v = random_unitary(rng, n, field);
    let mut signs: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    if n > 1 && signs.iter().all(|&s| s > 0.0) {
        signs[0] = -1.0;
    }
    let d = HermitianMatrix::from_diagonal(&signs);
    let u = &v * d.as_matrix() * v.adjoint();
    HermitianMatrix::from_hermitian_part(&u).into_matrix()
}

fn make_operator(rng: &mut ChaCha8Rng, kind: OperatorKind, n: usize, field: Field) -> Result<MatrixOperator, GenError> {
    let u = (kind == OperatorKind::InvolutorySimilarity).then(|| random_involution(rng, n, field));
    MatrixOperator::from_kind(kind, u).map_err(|e| GenError::Transform(e.into()))
}

/// Random `X ≻ 0` with spectrum in `[1, 4]` and a random `A`, then `Q = X ± Aᴴ f(X)⁻¹ A`.
///
/// `A` is scaled so that `‖Aᴴ f(X)⁻¹ A‖₂ = (1 − margin)·λ_min(X)`, which keeps
/// `Q ≻ 0` for the minus sign by construction.
pub fn gen_solvable(spec: &GenSpec) -> Result<GeneratedInstance, GenError> {
    let n = spec.n;
    if n == 0 {
        return Err(GenError::InvalidInput("n must be at least 1".into()));
    }
    if !(spec.margin > 0.0 && spec.margin < 1.0) {
        return Err(GenError::InvalidInput(format!("margin must lie in (0, 1), got {}", spec.margin)));
    }
    let field = spec.field();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for _ in 0..MAX_DRAWS {
        let op = make_operator(&mut rng, spec.operator_kind, n, field)?;
        let v = random_unitary(&mut rng, n, field);
        let eig: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..4.0)).collect();
        let lmin = eig.iter().copied().fold(f64::INFINITY, f64::min);
        let x = HermitianMatrix::from_hermitian_part(&(&v * HermitianMatrix::from_diagonal(&eig).as_matrix() * v.adjoint()));
        let g = gaussian(&mut rng, n, n, field);
        let fx = op.apply(&x);
        let a = if spec.zero_a {
            Matrix::zeros(n, n)
        } else {
            let Ok(fx_inv_g) = linalg::lu_solve(&fx, &g, "f(X)") else { continue };
            let m = HermitianMatrix::from_hermitian_part(&(g.adjoint() * fx_inv_g));
            let norm2 = m.max_eigenvalue();
            if !(norm2 > 0.0) {
                continue;
            }
            g * Complex64::new(((1.0 - spec.margin) * lmin / norm2).sqrt(), 0.0)
        };
        let Ok(fx_inv_a) = linalg::lu_solve(&fx, &a, "f(X)") else { continue };
        let q = x.as_matrix() + a.adjoint() * fx_inv_a * Complex64::new(spec.sign.factor(), 0.0);
        let q = HermitianMatrix::from_hermitian_part(&q).into_matrix();
        match ProblemSpec::new(spec.sign, a, q, op, field) {
            Ok(problem) => return Ok(GeneratedInstance { problem, known_solution: Some(x) }),
            Err(TransformError::QNotPositiveDefinite) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(GenError::RetryExhausted(MAX_DRAWS))
}

/// Plus sign, identity operator, `A = Uᴴ diag(a) U`, `Q = Uᴴ diag(q) U` with
/// `q_i = 2a_i` on the first `critical_channels` channels and `q_i > 2a_i` elsewhere.
pub fn gen_critical(spec: &GenSpec) -> Result<GeneratedInstance, GenError> {
    let n = spec.n;
    if n == 0 {
        return Err(GenError::InvalidInput("n must be at least 1".into()));
    }
    if spec.critical_channels == 0 || spec.critical_channels > n {
        return Err(GenError::InvalidInput(format!(
            "critical_channels must lie in 1..={n}, got {}",
            spec.critical_channels
        )));
    }
    let field = spec.field.unwrap_or(Field::Complex);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let q: Vec<f64> = a
        .iter()
        .enumerate()
        .map(|(i, &ai)| {
            if i < spec.critical_channels {
                2.0 * ai
            } else {
                2.0 * ai * (1.0 + rng.random_range(0.25..1.0))
            }
        })
        .collect();
    let x: Vec<f64> = a
        .iter()
        .zip(&q)
        .map(|(&ai, &qi)| (qi + (qi * qi - 4.0 * ai * ai).max(0.0).sqrt()) / 2.0)
        .collect();
    let u = random_unitary(&mut rng, n, field);
    let conj = |d: &[f64]| u.adjoint() * HermitianMatrix::from_diagonal(d).as_matrix() * &u;
    let a_mat = HermitianMatrix::from_hermitian_part(&conj(&a)).into_matrix();
    let q_mat = HermitianMatrix::from_hermitian_part(&conj(&q)).into_matrix();
    let problem = ProblemSpec::new(Sign::Plus, a_mat, q_mat, MatrixOperator::identity(), field)?;
    Ok(GeneratedInstance {
        problem,
        known_solution: Some(HermitianMatrix::from_hermitian_part(&conj(&x))),
    })
}

/// The 1×1 real instance `x ± a²/x = q`.
pub fn gen_scalar(a: f64, q: f64, sign: Sign) -> Result<GeneratedInstance, GenError> {
    if !(q > 0.0) || !a.is_finite() || !q.is_finite() {
        return Err(GenError::InvalidInput(format!("need finite a and q > 0, got a={a}, q={q}")));
    }
    let problem = ProblemSpec::new(sign, linalg::scalar(a), linalg::scalar(q), MatrixOperator::identity(), Field::Real)?;
    let disc = match sign {
        Sign::Plus => q * q - 4.0 * a * a,
        Sign::Minus => q * q + 4.0 * a * a,
    };
    let known_solution = (disc >= 0.0).then(|| HermitianMatrix::from_diagonal(&[(q + disc.sqrt()) / 2.0]));
    Ok(GeneratedInstance { problem, known_solution })
}

/// Plus-sign scalar with `q = 1.5|a|`, below the solvability threshold `q = 2|a|`.
pub fn gen_unsolvable_scalar(a: f64) -> Result<GeneratedInstance, GenError> {
    if a == 0.0 {
        return Err(GenError::InvalidInput("a must be nonzero".into()));
    }
    gen_scalar(a, 1.5 * a.abs(), Sign::Plus)
}

/// A 2×2 complex plus-sign instance with `f` = entrywise conjugate, whose
/// maximal solution is known to three decimals.
pub fn conjugate_example() -> GeneratedInstance {
    let c = Complex64::new;
    let a = Matrix::from_row_slice(2, 2, &[c(0., 26.), c(-16., 2.), c(-14., 9.), c(-19., -9.)]);
    let q = Matrix::from_row_slice(2, 2, &[c(128.193, 0.), c(24.813, 92.180), c(24.813, -92.180), c(97.003, 0.)]);
    let x = Matrix::from_row_slice(2, 2, &[c(120.595, 0.), c(28.387, 85.261), c(28.387, -85.261), c(80.758, 0.)]);
    GeneratedInstance {
        problem: ProblemSpec::new(Sign::Plus, a, q, MatrixOperator::conjugate(), Field::Complex)
            .expect("example data is a valid instance"),
        known_solution: Some(HermitianMatrix::from_hermitian_part(&x)),
    }
}
