//! Solvers for the nonlinear matrix equations
//!
//! ```text
//! X + Aᴴ f(X)⁻¹ A = Q      (plus sign)
//! X − Aᴴ f(X)⁻¹ A = Q      (minus sign)
//! ```
//!
//! where `f` is a period-2, additive, multiplicative and positivity-preserving
//! matrix operator (identity, transpose, entrywise conjugate or an involutory
//! unitary similarity).
//!
//! One Sherman–Morrison–Woodbury step reduces either equation to the standard
//! form `X + A₁ᴴ (X − B₁)⁻¹ A₁ = Q₁`. The triple `(A⁽ᵏ⁾, B⁽ᵏ⁾, Q⁽ᵏ⁾)` produced by
//! the fixed-point recursion obeys a composition law (`X⁽ⁱ⁾ ∘ X⁽ʲ⁾ = X⁽ⁱ⁺ʲ⁾`),
//! which is what the accelerated solvers in [`solvers`] exploit.
//!
//! Module map:
//!
//! - [`linalg`]: dense complex kernels (LDLᴴ, spectral radius, Hermitian eigenvalues).
//! - [`operator`]: the operator `f` and randomized axiom verification.
//! - [`transform`]: problem definition, initial/dual triples, triple recursion and composition.
//! - [`solvers`]: fixed-point, restarted, order-r, scheduled and alternating iterations.
//! - [`diagnostics`]: `T₁`/`S₁`, criticality, ψ(λ) check, rate estimates, identity verifiers.
//! - [`probgen`]: seeded generation of solvable, critical and scalar instances.
//! - [`format`]: the JSON problem/result files and the history CSV.
//! - [`exec`]: data-parallel map with a sequential fallback.

pub mod diagnostics;
pub mod exec;
pub mod format;
pub mod linalg;
pub mod operator;
pub mod probgen;
pub mod solvers;
pub mod transform;

pub use linalg::{HermitianMatrix, Matrix};
pub use num_complex::Complex64;
pub use operator::{MatrixOperator, OperatorKind, Orientation};
pub use solvers::{Algorithm, SolveOptions, SolveResult, SolveStatus};
pub use transform::{IterTriple, ProblemSpec};

/// Which of the two equations is being solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    /// `X + Aᴴ f(X)⁻¹ A = Q`
    Plus,
    /// `X − Aᴴ f(X)⁻¹ A = Q`
    Minus,
}

impl Sign {
    /// `+1.0` for [`Sign::Plus`], `-1.0` for [`Sign::Minus`].
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sign::Plus => "plus",
            Sign::Minus => "minus",
        }
    }
}

/// Scalar field of the problem data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    Real,
    Complex,
}

impl Field {
    pub fn as_str(self) -> &'static str {
        match self {
            Field::Real => "real",
            Field::Complex => "complex",
        }
    }
}
