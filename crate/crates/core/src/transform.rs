//! Reduction to the standard equation and the triple composition law.
//!
//! One Sherman–Morrison–Woodbury step turns `X ± Aᴴ f(X)⁻¹ A = Q` into
//! `X + A₁ᴴ (X − B₁)⁻¹ A₁ = Q₁`. Iterating that reduction produces triples
//! `X⁽ᵏ⁾ = (A⁽ᵏ⁾, B⁽ᵏ⁾, Q⁽ᵏ⁾)` which compose as
//!
//! ```text
//! A⁽ⁱ⁺ʲ⁾ = A⁽ʲ⁾ (Q⁽ʲ⁾ − B⁽ⁱ⁾)⁻¹ A⁽ⁱ⁾
//! B⁽ⁱ⁺ʲ⁾ = B⁽ʲ⁾ + A⁽ʲ⁾ (Q⁽ʲ⁾ − B⁽ⁱ⁾)⁻¹ A⁽ʲ⁾ᴴ
//! Q⁽ⁱ⁺ʲ⁾ = Q⁽ⁱ⁾ − A⁽ⁱ⁾ᴴ (Q⁽ʲ⁾ − B⁽ⁱ⁾)⁻¹ A⁽ⁱ⁾
//! ```
//!
//! The plain fixed-point step is the special case `j = 1`.

use crate::linalg::{self, HermitianMatrix, LinalgError, Matrix, DEFAULT_HERM_TOL, DEFAULT_PD_TOL};
use crate::operator::{MatrixOperator, OperatorError};
use crate::{Complex64, Field, Sign};

/// Relative tolerance for re-hermitizing `B` and `Q` after every composition.
const REHERM_TOL: f64 = 1e-8;
/// Base eigenvalue slack for "semidefinite up to rounding", relative to the matrix scale.
const SINGULAR_TOL: f64 = 1e-10;

/// Rounding level of a triple at effective index `k`: errors in the composed
/// triples grow roughly like `k·ε` (this dominates only near a critical limit).
pub fn rounding_slack(k: u64, scale: f64) -> f64 {
    SINGULAR_TOL.max(32.0 * k as f64 * f64::EPSILON) * scale.max(1.0)
}

/// Classifies a pivot whose LDLᴴ factorization failed at effective index `k`.
pub(crate) fn pivot_failure(pivot: &HermitianMatrix, k: u64, what: String) -> TransformError {
    let lmin = pivot.min_eigenvalue();
    if lmin >= -rounding_slack(k, linalg::frobenius(pivot)) {
        TransformError::SingularPivot(format!("{what} (λ_min = {lmin:e})"))
    } else {
        TransformError::Breakdown(format!("{what} is not positive definite (λ_min = {lmin:e})"))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransformError {
    #[error("{0}")]
    Linalg(#[from] LinalgError),
    #[error("{0}")]
    Operator(#[from] OperatorError),
    #[error("{0} must be square")]
    NotSquare(&'static str),
    #[error("A is {a}x{a} but Q is {q}x{q}")]
    DimensionMismatch { a: usize, q: usize },
    #[error("matrix {0} has nonzero imaginary parts but the field is real")]
    FieldMismatch(&'static str),
    #[error("matrix {0} contains NaN or infinite entries")]
    NonFinite(&'static str),
    #[error("Q is not positive definite")]
    QNotPositiveDefinite,
    #[error("the equation has no positive definite solution: Q⁽¹⁾ is not positive definite")]
    NotSolvable,
    #[error("breakdown: {0}")]
    Breakdown(String),
    /// A pivot that is positive semidefinite up to rounding but not numerically
    /// definite: the iteration has hit the accuracy floor (typically critical case).
    #[error("pivot numerically singular: {0}")]
    SingularPivot(String),
    #[error("f(X) is singular")]
    SingularOperand,
}

/// One equation instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    sign: Sign,
    a: Matrix,
    q: HermitianMatrix,
    op: MatrixOperator,
    field: Field,
}

impl ProblemSpec {
    /// Validates shapes, field, operator compatibility and `Q ≻ 0`.
    pub fn new(sign: Sign, a: Matrix, q: Matrix, op: MatrixOperator, field: Field) -> Result<Self, TransformError> {
        if !a.is_square() {
            return Err(TransformError::NotSquare("A"));
        }
        if !q.is_square() {
            return Err(TransformError::NotSquare("Q"));
        }
        if a.nrows() != q.nrows() {
            return Err(TransformError::DimensionMismatch { a: a.nrows(), q: q.nrows() });
        }
        if !linalg::is_finite(&a) {
            return Err(TransformError::NonFinite("A"));
        }
        if !linalg::is_finite(&q) {
            return Err(TransformError::NonFinite("Q"));
        }
        if field == Field::Real {
            if !linalg::is_real(&a) {
                return Err(TransformError::FieldMismatch("A"));
            }
            if !linalg::is_real(&q) {
                return Err(TransformError::FieldMismatch("Q"));
            }
        }
        op.check_compatible(a.nrows(), field)?;
        let q = linalg::hermitize(&q, DEFAULT_HERM_TOL * linalg::frobenius(&q).max(1.0))?;
        if linalg::is_positive_definite(&q, DEFAULT_PD_TOL).is_none() {
            return Err(TransformError::QNotPositiveDefinite);
        }
        Ok(ProblemSpec { sign, a, q, op, field })
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn q(&self) -> &HermitianMatrix {
        &self.q
    }

    pub fn op(&self) -> &MatrixOperator {
        &self.op
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Same problem with `Q` replaced by `Q + εI`.
    pub fn with_shifted_q(&self, eps: f64) -> Result<Self, TransformError> {
        ProblemSpec::new(self.sign, self.a.clone(), self.q.shift(eps).into_matrix(), self.op.clone(), self.field)
    }

    /// True when the smallest singular value of `A` is at most `1e−10·σ_max`.
    pub fn a_is_singular(&self) -> bool {
        let s = linalg::singular_values(&self.a);
        let smax = s[0];
        smax == 0.0 || *s.last().expect("n ≥ 1") <= 1e-10 * smax
    }

    /// Non-fatal caveats about the instance.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.sign == Sign::Minus && self.a_is_singular() {
            w.push("A is singular: convergence for the minus sign is not guaranteed".to_string());
        }
        w
    }
}

/// `(A⁽ᵏ⁾, B⁽ᵏ⁾, Q⁽ᵏ⁾)` at step index `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterTriple {
    pub k: u64,
    pub a: Matrix,
    pub b: HermitianMatrix,
    pub q: HermitianMatrix,
}

impl IterTriple {
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn is_finite(&self) -> bool {
        linalg::is_finite(&self.a) && self.b.is_finite() && self.q.is_finite()
    }

    /// Largest relative Frobenius deviation over the three components.
    pub fn relative_distance(&self, other: &IterTriple) -> f64 {
        let rel = |x: &Matrix, y: &Matrix| linalg::frobenius(&(x - y)) / linalg::frobenius(y).max(1.0);
        rel(&self.a, &other.a).max(rel(&self.b, &other.b)).max(rel(&self.q, &other.q))
    }
}

fn rehermitize(m: &Matrix, what: &str) -> Result<HermitianMatrix, TransformError> {
    linalg::hermitize(m, REHERM_TOL * linalg::frobenius(m).max(f64::MIN_POSITIVE))
        .map_err(|e| TransformError::Breakdown(format!("{what} lost hermiticity ({e})")))
}

/// `(f̃(A) f(Q)⁻¹ A, ±f̃(A) f(Q)⁻¹ f̃(A)ᴴ, Q ∓ Aᴴ f(Q)⁻¹ A)` without the `Q⁽¹⁾ ≻ 0` check.
///
/// `f̃` is the order-preserving companion of `f` (equal to `f` unless `f` is the transpose).
pub fn initial_triple_unchecked(p: &ProblemSpec) -> Result<IterTriple, TransformError> {
    let s = Complex64::new(p.sign.factor(), 0.0);
    let fq = p.op.apply_hermitian(&p.q);
    let fa = p.op.apply_preserving(&p.a);
    let factor = linalg::ldl_factor(&fq, DEFAULT_PD_TOL).map_err(|_| TransformError::QNotPositiveDefinite)?;
    let n = p.dim();
    let mut rhs = Matrix::zeros(n, 2 * n);
    rhs.columns_mut(0, n).copy_from(&p.a);
    rhs.columns_mut(n, n).copy_from(&fa.adjoint());
    let sol = factor.solve(&rhs);
    let fq_inv_a = sol.columns(0, n);
    let fq_inv_fah = sol.columns(n, n);
    let a1 = &fa * fq_inv_a;
    let b1 = &fa * fq_inv_fah * s;
    let q1 = p.q.as_matrix() - p.a.adjoint() * fq_inv_a * s;
    Ok(IterTriple {
        k: 1,
        a: a1,
        b: rehermitize(&b1, "B⁽¹⁾")?,
        q: rehermitize(&q1, "Q⁽¹⁾")?,
    })
}

/// The triple `X⁽¹⁾` of the reduced standard equation.
///
/// For the plus sign a non-positive-definite `Q⁽¹⁾` proves there is no solution.
pub fn initial_triple(p: &ProblemSpec) -> Result<IterTriple, TransformError> {
    let t = initial_triple_unchecked(p)?;
    if p.sign == Sign::Plus && linalg::is_positive_definite(&t.q, DEFAULT_PD_TOL).is_none() {
        return Err(TransformError::NotSolvable);
    }
    Ok(t)
}

/// The first triple of the dual equation:
/// `(Aᴴ f(Q)⁻¹ f̃(A)ᴴ, ±Aᴴ f(Q)⁻¹ A, Q ∓ f̃(A) f(Q)⁻¹ f̃(A)ᴴ)`.
pub fn dual_initial_triple(p: &ProblemSpec) -> Result<IterTriple, TransformError> {
    let s = Complex64::new(p.sign.factor(), 0.0);
    let fq = p.op.apply_hermitian(&p.q);
    let fa = p.op.apply_preserving(&p.a);
    let factor = linalg::ldl_factor(&fq, DEFAULT_PD_TOL).map_err(|_| TransformError::QNotPositiveDefinite)?;
    let n = p.dim();
    let mut rhs = Matrix::zeros(n, 2 * n);
    rhs.columns_mut(0, n).copy_from(&p.a);
    rhs.columns_mut(n, n).copy_from(&fa.adjoint());
    let sol = factor.solve(&rhs);
    let ah = p.a.adjoint();
    let a1 = &ah * sol.columns(n, n);
    let b1 = &ah * sol.columns(0, n) * s;
    let q1 = p.q.as_matrix() - &fa * sol.columns(n, n) * s;
    Ok(IterTriple {
        k: 1,
        a: a1,
        b: rehermitize(&b1, "dual B⁽¹⁾")?,
        q: rehermitize(&q1, "dual Q⁽¹⁾")?,
    })
}

/// `X⁽ⁱ⁾ ∘ X⁽ʲ⁾ = X⁽ⁱ⁺ʲ⁾`; one LDLᴴ factorization of `Q⁽ʲ⁾ − B⁽ⁱ⁾` serves all three updates.
pub fn combine_triples(xi: &IterTriple, xj: &IterTriple) -> Result<IterTriple, TransformError> {
    let n = xi.dim();
    if xj.dim() != n {
        return Err(TransformError::DimensionMismatch { a: n, q: xj.dim() });
    }
    let pivot = xj.q.sub(&xi.b);
    let factor = linalg::ldl_factor(&pivot, DEFAULT_PD_TOL)
        .map_err(|_| pivot_failure(&pivot, xi.k.saturating_add(xj.k), format!("Q⁽{}⁾ − B⁽{}⁾", xj.k, xi.k)))?;
    let mut rhs = Matrix::zeros(n, 2 * n);
    rhs.columns_mut(0, n).copy_from(&xi.a);
    rhs.columns_mut(n, n).copy_from(&xj.a.adjoint());
    let sol = factor.solve(&rhs);
    let a = &xj.a * sol.columns(0, n);
    let b = xj.b.as_matrix() + &xj.a * sol.columns(n, n);
    let q = xi.q.as_matrix() - xi.a.adjoint() * sol.columns(0, n);
    let out = IterTriple {
        k: xi.k.saturating_add(xj.k),
        a,
        b: rehermitize(&b, "B")?,
        q: rehermitize(&q, "Q")?,
    };
    if !out.is_finite() {
        return Err(TransformError::NonFinite("iterated triple"));
    }
    Ok(out)
}

/// One plain fixed-point step: `X⁽ᵏ⁺¹⁾ = X⁽ᵏ⁾ ∘ X⁽¹⁾`.
pub fn step_triple(current: &IterTriple, base: &IterTriple) -> Result<IterTriple, TransformError> {
    debug_assert_eq!(base.k, 1, "step_triple expects the k = 1 triple as base");
    combine_triples(current, base)
}

/// `X⁽¹⁾, …, X⁽ᵏᵐᵃˣ⁾` by plain steps from `t1`; stops early at the first breakdown.
pub fn plain_trajectory_from(t1: &IterTriple, kmax: usize) -> Result<Vec<IterTriple>, TransformError> {
    let mut out = Vec::with_capacity(kmax);
    if kmax == 0 {
        return Ok(out);
    }
    out.push(t1.clone());
    while out.len() < kmax {
        let next = step_triple(out.last().expect("non-empty"), t1)?;
        out.push(next);
    }
    Ok(out)
}

pub fn plain_trajectory(p: &ProblemSpec, kmax: usize) -> Result<Vec<IterTriple>, TransformError> {
    plain_trajectory_from(&initial_triple(p)?, kmax)
}

/// `‖X ± Aᴴ f(X)⁻¹ A − Q‖_F / max(1, ‖Q‖_F)`.
pub fn equation_residual(p: &ProblemSpec, x: &HermitianMatrix) -> Result<f64, TransformError> {
    if x.dim() != p.dim() {
        return Err(TransformError::DimensionMismatch { a: p.dim(), q: x.dim() });
    }
    let fx = p.op.apply(x);
    let fx_inv_a = linalg::lu_solve(&fx, &p.a, "f(X)").map_err(|_| TransformError::SingularOperand)?;
    let r = x.as_matrix() + p.a.adjoint() * fx_inv_a * Complex64::new(p.sign.factor(), 0.0) - p.q.as_matrix();
    Ok(linalg::frobenius(&r) / linalg::frobenius(&p.q).max(1.0))
}
