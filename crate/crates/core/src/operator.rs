//! The matrix operator `f`.
//!
//! Supported kinds are exactly the period-2, additive, multiplicative and
//! positivity-preserving maps used by the solvers: identity, transpose (real
//! field), entrywise conjugate (complex field) and `X ↦ U X U` for a unitary
//! involution `U`.
//!
//! Transpose reverses multiplication order. The triple recursions are written
//! for order-preserving operators, so solvers call [`MatrixOperator::apply_preserving`],
//! which returns `f(X)ᴴ` for reversing kinds. That companion agrees with `f`
//! on Hermitian matrices (the only arguments `f` ever sees in the equation
//! itself), is order-preserving, and leaves every solution unchanged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exec::Execution;
use crate::linalg::{self, HermitianMatrix, Matrix};
use crate::{Complex64, Field};

const STRUCTURE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperatorKind {
    Identity,
    Transpose,
    Conjugate,
    InvolutorySimilarity,
}

impl OperatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OperatorKind::Identity => "identity",
            OperatorKind::Transpose => "transpose",
            OperatorKind::Conjugate => "conjugate",
            OperatorKind::InvolutorySimilarity => "involutory_similarity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(OperatorKind::Identity),
            "transpose" => Some(OperatorKind::Transpose),
            "conjugate" => Some(OperatorKind::Conjugate),
            "involutory_similarity" => Some(OperatorKind::InvolutorySimilarity),
            _ => None,
        }
    }

    /// The field a generated instance uses when none is requested.
    pub fn natural_field(self) -> Field {
        match self {
            OperatorKind::Identity | OperatorKind::Transpose => Field::Real,
            OperatorKind::Conjugate | OperatorKind::InvolutorySimilarity => Field::Complex,
        }
    }

    pub fn orientation(self) -> Orientation {
        match self {
            OperatorKind::Transpose => Orientation::Reversing,
            _ => Orientation::Preserving,
        }
    }
}

impl std::fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether `f(XY) = f(X)f(Y)` or `f(XY) = f(Y)f(X)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    Preserving,
    Reversing,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OperatorError {
    #[error("operator '{kind}' requires the {required} field")]
    FieldMismatch { kind: OperatorKind, required: &'static str },
    #[error("dimension mismatch: operator acts on {expected}x{expected}, got {rows}x{cols}")]
    DimensionMismatch { expected: usize, rows: usize, cols: usize },
    #[error("U is not unitary (‖UᴴU − I‖_F = {0:e})")]
    NotUnitary(f64),
    #[error("U is not an involution (‖U² − I‖_F = {0:e})")]
    NotInvolutory(f64),
    #[error("involutory_similarity requires a matrix U")]
    MissingU,
    #[error("axiom verification needs at least one sample")]
    NoSamples,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixOperator {
    kind: OperatorKind,
    u: Option<Matrix>,
}

impl MatrixOperator {
    pub fn identity() -> Self {
        MatrixOperator { kind: OperatorKind::Identity, u: None }
    }

    pub fn transpose() -> Self {
        MatrixOperator { kind: OperatorKind::Transpose, u: None }
    }

    pub fn conjugate() -> Self {
        MatrixOperator { kind: OperatorKind::Conjugate, u: None }
    }

    /// `X ↦ U X U`; `U` must be unitary with `U² = I` (to 1e−10).
    pub fn involutory_similarity(u: Matrix) -> Result<Self, OperatorError> {
        if !u.is_square() {
            return Err(OperatorError::DimensionMismatch {
                expected: u.nrows(),
                rows: u.nrows(),
                cols: u.ncols(),
            });
        }
        let n = u.nrows();
        let id = Matrix::identity(n, n);
        let unitary = linalg::frobenius(&(u.adjoint() * &u - &id));
        if !(unitary <= STRUCTURE_TOL) {
            return Err(OperatorError::NotUnitary(unitary));
        }
        let involution = linalg::frobenius(&(&u * &u - &id));
        if !(involution <= STRUCTURE_TOL) {
            return Err(OperatorError::NotInvolutory(involution));
        }
        Ok(MatrixOperator { kind: OperatorKind::InvolutorySimilarity, u: Some(u) })
    }

    /// Builds an operator from its kind, taking `u` only for the similarity kind.
    pub fn from_kind(kind: OperatorKind, u: Option<Matrix>) -> Result<Self, OperatorError> {
        match kind {
            OperatorKind::Identity => Ok(Self::identity()),
            OperatorKind::Transpose => Ok(Self::transpose()),
            OperatorKind::Conjugate => Ok(Self::conjugate()),
            OperatorKind::InvolutorySimilarity => {
                Self::involutory_similarity(u.ok_or(OperatorError::MissingU)?)
            }
        }
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn u(&self) -> Option<&Matrix> {
        self.u.as_ref()
    }

    pub fn orientation(&self) -> Orientation {
        self.kind.orientation()
    }

    /// Checks that `f` may act on `n×n` data over `field`.
    pub fn check_compatible(&self, n: usize, field: Field) -> Result<(), OperatorError> {
        match (self.kind, field) {
            (OperatorKind::Transpose, Field::Complex) => Err(OperatorError::FieldMismatch {
                kind: self.kind,
                required: "real",
            }),
            (OperatorKind::Conjugate, Field::Real) => Err(OperatorError::FieldMismatch {
                kind: self.kind,
                required: "complex",
            }),
            _ => match &self.u {
                Some(u) if u.nrows() != n => Err(OperatorError::DimensionMismatch {
                    expected: u.nrows(),
                    rows: n,
                    cols: n,
                }),
                _ => Ok(()),
            },
        }
    }

    /// `f(X)`, validating shape and field.
    pub fn apply_checked(&self, x: &Matrix) -> Result<Matrix, OperatorError> {
        if !x.is_square() || self.u.as_ref().is_some_and(|u| u.nrows() != x.nrows()) {
            return Err(OperatorError::DimensionMismatch {
                expected: self.u.as_ref().map_or(x.nrows(), |u| u.nrows()),
                rows: x.nrows(),
                cols: x.ncols(),
            });
        }
        if self.kind == OperatorKind::Transpose && !linalg::is_real(x) {
            return Err(OperatorError::FieldMismatch { kind: self.kind, required: "real" });
        }
        Ok(self.apply(x))
    }

    /// `f(X)`.
    pub fn apply(&self, x: &Matrix) -> Matrix {
        match self.kind {
            OperatorKind::Identity => x.clone(),
            OperatorKind::Transpose => x.transpose(),
            OperatorKind::Conjugate => x.map(|z| z.conj()),
            OperatorKind::InvolutorySimilarity => {
                let u = self.u.as_ref().expect("similarity operator always carries U");
                u * x * u
            }
        }
    }

    /// The order-preserving companion of `f`: `f` itself, or `f(X)ᴴ` when `f` reverses order.
    pub fn apply_preserving(&self, x: &Matrix) -> Matrix {
        match self.orientation() {
            Orientation::Preserving => self.apply(x),
            Orientation::Reversing => self.apply(x).adjoint(),
        }
    }

    /// `f` on a Hermitian argument; the result is Hermitian for every supported kind.
    pub fn apply_hermitian(&self, x: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix::from_hermitian_part(&self.apply(x))
    }
}

/// Worst-case deviations observed by [`verify_operator_axioms`].
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorAxiomReport {
    pub period_two: f64,
    pub additivity: f64,
    pub multiplicativity: f64,
    pub positivity: f64,
    pub unitality: f64,
    pub inverse_compatibility: f64,
    pub adjoint_preservation: f64,
    pub order_preservation: f64,
    pub sample_count: usize,
    pub seed: u64,
}

impl OperatorAxiomReport {
    pub fn worst(&self) -> f64 {
        [
            self.period_two,
            self.additivity,
            self.multiplicativity,
            self.positivity,
            self.unitality,
            self.inverse_compatibility,
            self.adjoint_preservation,
            self.order_preservation,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.worst() <= tol
    }

    fn merge(self, other: Self) -> Self {
        OperatorAxiomReport {
            period_two: self.period_two.max(other.period_two),
            additivity: self.additivity.max(other.additivity),
            multiplicativity: self.multiplicativity.max(other.multiplicativity),
            positivity: self.positivity.max(other.positivity),
            unitality: self.unitality.max(other.unitality),
            inverse_compatibility: self.inverse_compatibility.max(other.inverse_compatibility),
            adjoint_preservation: self.adjoint_preservation.max(other.adjoint_preservation),
            order_preservation: self.order_preservation.max(other.order_preservation),
            sample_count: self.sample_count + other.sample_count,
            seed: self.seed,
        }
    }
}

fn max_entry(m: &Matrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn random_sample(rng: &mut ChaCha8Rng, n: usize, field: Field) -> Matrix {
    Matrix::from_fn(n, n, |_, _| {
        let re = rng.random_range(-1.0..1.0);
        let im = match field {
            Field::Real => 0.0,
            Field::Complex => rng.random_range(-1.0..1.0),
        };
        Complex64::new(re, im)
    })
}

fn one_sample(op: &MatrixOperator, n: usize, field: Field, seed: u64, index: usize) -> OperatorAxiomReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let x = random_sample(&mut rng, n, field);
    let y = random_sample(&mut rng, n, field);
    let g = random_sample(&mut rng, n, field);
    let h = random_sample(&mut rng, n, field);
    let f = |m: &Matrix| op.apply(m);
    let id = Matrix::identity(n, n);

    let product = match op.orientation() {
        Orientation::Preserving => f(&x) * f(&y),
        Orientation::Reversing => f(&y) * f(&x),
    };
    // diagonally dominated, so comfortably invertible
    let shifted = &x + &id * Complex64::new(2.0 * n as f64, 0.0);
    let inverse_dev = match (linalg::inverse(&shifted, "sample"), linalg::inverse(&f(&shifted), "f(sample)")) {
        (Ok(inv), Ok(f_inv)) => max_entry(&(f(&inv) - f_inv)),
        _ => f64::INFINITY,
    };

    let r = &g * g.adjoint();
    let p = &r + &h * h.adjoint();
    let min_eig = |m: &Matrix| HermitianMatrix::from_hermitian_part(m).min_eigenvalue();

    OperatorAxiomReport {
        period_two: max_entry(&(f(&f(&x)) - &x)),
        additivity: max_entry(&(f(&(&x + &y)) - f(&x) - f(&y))),
        multiplicativity: max_entry(&(f(&(&x * &y)) - product)),
        positivity: (-min_eig(&f(&r))).max(0.0),
        unitality: max_entry(&(f(&id) - &id)),
        inverse_compatibility: inverse_dev,
        adjoint_preservation: max_entry(&(f(&x.adjoint()) - f(&x).adjoint())),
        order_preservation: (-min_eig(&(f(&p) - f(&r)))).max(0.0),
        sample_count: 1,
        seed,
    }
}

/// Randomized spot check of the operator axioms on `samples` draws of size `n`.
///
/// Samples are real for transpose and complex otherwise. Each sample uses its
/// own ChaCha stream, so the report is identical under either execution mode.
pub fn verify_operator_axioms(
    op: &MatrixOperator,
    n: usize,
    samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<OperatorAxiomReport, OperatorError> {
    if samples == 0 {
        return Err(OperatorError::NoSamples);
    }
    let field = op.kind().natural_field();
    op.check_compatible(n, field)?;
    let reports = exec.map_range(samples, |i| one_sample(op, n, field, seed, i));
    Ok(reports.into_iter().reduce(OperatorAxiomReport::merge).expect("samples ≥ 1"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::from_real_rows;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn swap2() -> Matrix {
        from_real_rows(&[&[0., 1.], &[1., 0.]])
    }

    #[test]
    fn apply_examples() {
        let m = Matrix::from_element(1, 1, c(0., 1.));
        assert_eq!(MatrixOperator::conjugate().apply(&m)[(0, 0)], c(0., -1.));

        let t = MatrixOperator::transpose().apply(&from_real_rows(&[&[1., 2.], &[3., 4.]]));
        assert_eq!(t, from_real_rows(&[&[1., 3.], &[2., 4.]]));

        let sim = MatrixOperator::involutory_similarity(swap2()).unwrap();
        let d = from_real_rows(&[&[5., 0.], &[0., 7.]]);
        assert_eq!(sim.apply(&d), from_real_rows(&[&[7., 0.], &[0., 5.]]));
    }

    #[test]
    fn checked_apply_rejects_bad_input() {
        let complex = Matrix::from_element(2, 2, c(1., 1.));
        assert!(matches!(
            MatrixOperator::transpose().apply_checked(&complex),
            Err(OperatorError::FieldMismatch { .. })
        ));
        let sim = MatrixOperator::involutory_similarity(swap2()).unwrap();
        assert!(matches!(
            sim.apply_checked(&Matrix::identity(3, 3)),
            Err(OperatorError::DimensionMismatch { .. })
        ));
        assert!(MatrixOperator::conjugate().check_compatible(2, Field::Real).is_err());
    }

    #[test]
    fn non_involutory_u_is_rejected() {
        // a rotation by 90°: unitary, but U² = −I
        let rot = from_real_rows(&[&[0., -1.], &[1., 0.]]);
        assert!(matches!(
            MatrixOperator::involutory_similarity(rot),
            Err(OperatorError::NotInvolutory(_))
        ));
        let scaled = from_real_rows(&[&[2., 0.], &[0., 0.5]]);
        assert!(matches!(
            MatrixOperator::involutory_similarity(scaled),
            Err(OperatorError::NotUnitary(_))
        ));
    }

    #[test]
    fn identity_axioms_are_exact() {
        let r = verify_operator_axioms(&MatrixOperator::identity(), 4, 20, 1, Execution::Sequential).unwrap();
        assert_eq!(r.period_two, 0.0);
        assert_eq!(r.additivity, 0.0);
        assert_eq!(r.multiplicativity, 0.0);
        assert_eq!(r.unitality, 0.0);
        assert_eq!(r.adjoint_preservation, 0.0);
        assert_eq!(r.sample_count, 20);
    }

    #[test]
    fn conjugate_axioms_hold_to_roundoff() {
        let r = verify_operator_axioms(&MatrixOperator::conjugate(), 3, 50, 9, Execution::Parallel).unwrap();
        assert!(r.passes(1e-12), "{r:?}");
    }

    #[test]
    fn preserving_companion_of_transpose() {
        let x = from_real_rows(&[&[1., 2.], &[3., 4.]]);
        let y = from_real_rows(&[&[0., 1.], &[5., -1.]]);
        let op = MatrixOperator::transpose();
        let fp = |m: &Matrix| op.apply_preserving(m);
        assert_eq!(fp(&(&x * &y)), fp(&x) * fp(&y));
        let h = from_real_rows(&[&[2., 1.], &[1., 3.]]);
        assert_eq!(fp(&h), op.apply(&h));
    }

    mod props {
        use super::*;
        use crate::probgen;
        use proptest::prelude::*;
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;

        fn random(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
            Matrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn operators_are_involutions(seed in any::<u64>(), n in 1usize..6, which in 0usize..4) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let op = match which {
                    0 => MatrixOperator::identity(),
                    1 => MatrixOperator::transpose(),
                    2 => MatrixOperator::conjugate(),
                    _ => MatrixOperator::involutory_similarity(probgen::random_involution(&mut rng, n, crate::Field::Complex)).unwrap(),
                };
                let x = random(&mut rng, n);
                let twice = op.apply(&op.apply(&x));
                prop_assert!(linalg::frobenius(&(twice - &x)) <= 1e-12 * linalg::frobenius(&x).max(1.0));
                let h = HermitianMatrix::from_hermitian_part(&x);
                let fh = op.apply(&h);
                prop_assert!(linalg::hermitian_deviation(&fh) <= 1e-12 * linalg::frobenius(&fh).max(1.0));
                // spectrum (and so definiteness) is preserved on Hermitian inputs
                let (e, fe) = (h.eigenvalues(), op.apply_hermitian(&h).eigenvalues());
                for (u, v) in e.iter().zip(&fe) {
                    prop_assert!((u - v).abs() <= 1e-10 * (1.0 + u.abs()));
                }
            }

            #[test]
            fn preserving_companion_is_multiplicative(seed in any::<u64>(), n in 1usize..6, which in 0usize..3) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let op = [MatrixOperator::identity(), MatrixOperator::transpose(), MatrixOperator::conjugate()][which].clone();
                let (x, y) = (random(&mut rng, n), random(&mut rng, n));
                let lhs = op.apply_preserving(&(&x * &y));
                let rhs = op.apply_preserving(&x) * op.apply_preserving(&y);
                prop_assert!(linalg::frobenius(&(lhs - rhs)) <= 1e-12 * (1.0 + linalg::frobenius(&x) * linalg::frobenius(&y)));
            }
        }
    }
}

