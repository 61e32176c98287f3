//! Oracles and instance families shared by the integration suites.
#![allow(dead_code)]

use nme_core::linalg::{self, HermitianMatrix, Matrix};
use nme_core::probgen::{self, GenSpec};
use nme_core::transform::IterTriple;
use nme_core::{Complex64, OperatorKind, ProblemSpec, Sign};

pub const PLAIN_OPS: [OperatorKind; 3] = [OperatorKind::Identity, OperatorKind::Transpose, OperatorKind::Conjugate];
pub const ALL_OPS: [OperatorKind; 4] = [
    OperatorKind::Identity,
    OperatorKind::Transpose,
    OperatorKind::Conjugate,
    OperatorKind::InvolutorySimilarity,
];

pub fn solvable(n: usize, sign: Sign, kind: OperatorKind, seed: u64) -> ProblemSpec {
    probgen::gen_solvable(&GenSpec::solvable(n, sign, kind, seed)).expect("generator").problem
}

pub fn scalar(a: f64, q: f64, sign: Sign) -> ProblemSpec {
    probgen::gen_scalar(a, q, sign).expect("scalar").problem
}

/// `X₁ = Q`, `X_j = Q ∓ Aᴴ f(X_{j−1})⁻¹ A`, with an explicit LU inverse and the
/// operator itself (not its order-preserving companion). Returns `X₁ … X_m`.
pub fn direct_fixed_point(p: &ProblemSpec, m: usize) -> Vec<Matrix> {
    let s = Complex64::new(p.sign().factor(), 0.0);
    let q = p.q().as_matrix().clone();
    let a = p.a();
    let mut xs = vec![q.clone()];
    while xs.len() < m {
        let fx = p.op().apply(xs.last().unwrap());
        let inv = fx.try_inverse().expect("f(X) invertible");
        xs.push(&q - a.adjoint() * inv * a * s);
    }
    xs
}

/// `x₁ = q`, `x_{j+1} = q ∓ a²/x_j` in plain floating point.
pub fn scalar_recursion(a: f64, q: f64, sign: Sign, m: usize) -> Vec<f64> {
    let mut xs = vec![q];
    while xs.len() < m {
        let x = *xs.last().unwrap();
        xs.push(q - sign.factor() * a * a / x);
    }
    xs
}

pub fn min_eig(m: &Matrix) -> f64 {
    HermitianMatrix::from_hermitian_part(m).min_eigenvalue()
}

pub fn rel(x: &Matrix, y: &Matrix) -> f64 {
    linalg::frobenius(&(x - y)) / linalg::frobenius(y).max(1.0)
}

pub fn q00(t: &IterTriple) -> f64 {
    t.q[(0, 0)].re
}

/// Smallest eigenvalue over every inequality of the ordering chain along `traj`:
/// monotone `Q` (down) and `B` (up); plus `0 ⪯ B, Q − B ⪰ 0, Q ⪯ Q₀`,
/// minus `B ⪯ 0, Q₀ ⪰ 0, Q ⪰ Q₀`. Non-negative means the chain holds.
pub fn ordering_margin(q0: &HermitianMatrix, sign: Sign, traj: &[IterTriple]) -> f64 {
    let q0 = q0.as_matrix();
    let mut worst = f64::INFINITY;
    for (i, t) in traj.iter().enumerate() {
        let (b, q) = (t.b.as_matrix(), t.q.as_matrix());
        let checks = match sign {
            Sign::Plus => [min_eig(b), min_eig(&(q - b)), min_eig(&(q0 - q))],
            Sign::Minus => [-HermitianMatrix::from_hermitian_part(b).max_eigenvalue(), min_eig(q0), min_eig(&(q - q0))],
        };
        worst = checks.iter().fold(worst, |w, &c| w.min(c));
        if i > 0 {
            let prev = &traj[i - 1];
            worst = worst.min(min_eig(&(prev.q.as_matrix() - q))).min(min_eig(&(b - prev.b.as_matrix())));
        }
    }
    worst
}

pub fn timed<T>(f: impl FnOnce() -> T) -> (T, std::time::Duration) {
    let start = std::time::Instant::now();
    let out = f();
    (out, start.elapsed())
}
