//! Dense complex kernels.
//!
//! Real-field problems are stored as complex matrices with zero imaginary
//! parts and go through the same code paths. Products, LU solves, Hermitian
//! eigenvalues and singular values come from `nalgebra`; the Hermitian
//! LDLᴴ factorization and the general (non-Hermitian) eigenvalue solver are
//! implemented here because the solvers need control over pivot thresholds
//! and over convergence on unimodular spectra.

use std::ops::Deref;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::Sign;

/// Dense complex matrix, column-major storage, `(row, col)` indexing.
pub type Matrix = DMatrix<Complex64>;

/// Default relative pivot threshold for positive-definiteness tests.
pub const DEFAULT_PD_TOL: f64 = 1e-12;

/// Default relative tolerance used when symmetrizing user input.
pub const DEFAULT_HERM_TOL: f64 = 1e-12;

/// Default relative accuracy requested from [`spectral_radius`].
pub const DEFAULT_SR_TOL: f64 = 1e-14;

/// Default per-eigenvalue QR iteration budget for [`spectral_radius`].
pub const DEFAULT_EIG_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian: max |M[i,j] - conj(M[j,i])| = {deviation:e} exceeds {tol:e}")]
    NotHermitian { deviation: f64, tol: f64 },
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("singular matrix in {0}")]
    Singular(&'static str),
    #[error("eigenvalue iteration did not converge after {iterations} sweeps")]
    NoConvergence { iterations: usize },
}

/// A square matrix that is Hermitian, stored in the symmetrized form `(M + Mᴴ)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(Matrix);

impl HermitianMatrix {
    /// Checks `m` against `herm_tol` (absolute) and stores its Hermitian part.
    pub fn new(m: Matrix, herm_tol: f64) -> Result<Self, LinalgError> {
        hermitize(&m, herm_tol)
    }

    /// Stores the Hermitian part of `m` without any tolerance check.
    pub fn from_hermitian_part(m: &Matrix) -> Self {
        assert!(m.is_square(), "Hermitian part of a non-square matrix");
        HermitianMatrix((m + m.adjoint()) * Complex64::new(0.5, 0.0))
    }

    pub fn identity(n: usize) -> Self {
        HermitianMatrix(Matrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        HermitianMatrix(Matrix::zeros(n, n))
    }

    /// Real diagonal matrix.
    pub fn from_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        HermitianMatrix(Matrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(d[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn add(&self, other: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix(&self.0 - &other.0)
    }

    pub fn scale(&self, s: f64) -> HermitianMatrix {
        HermitianMatrix(&self.0 * Complex64::new(s, 0.0))
    }

    pub fn shift(&self, s: f64) -> HermitianMatrix {
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += Complex64::new(s, 0.0);
        }
        HermitianMatrix(m)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let n = self.dim();
        if n == 1 {
            return vec![self.0[(0, 0)].re];
        }
        let eig = nalgebra::SymmetricEigen::try_new(self.0.clone(), f64::EPSILON, 0)
            .map(|e| e.eigenvalues)
            .expect("Hermitian eigenvalue iteration is unconditionally convergent");
        let mut v: Vec<f64> = eig.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().expect("non-empty matrix")
    }

    pub fn is_finite(&self) -> bool {
        is_finite(&self.0)
    }
}

impl Deref for HermitianMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

/// Largest `|M[i,j] − conj(M[j,i])|`.
pub fn hermitian_deviation(m: &Matrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in j..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Returns `(M + Mᴴ)/2` after checking that `M` deviates from it by at most `herm_tol`.
pub fn hermitize(m: &Matrix, herm_tol: f64) -> Result<HermitianMatrix, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let deviation = hermitian_deviation(m);
    if deviation > herm_tol || deviation.is_nan() {
        return Err(LinalgError::NotHermitian {
            deviation,
            tol: herm_tol,
        });
    }
    Ok(HermitianMatrix::from_hermitian_part(m))
}

pub fn frobenius(m: &Matrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Maximum absolute row sum.
pub fn inf_norm(m: &Matrix) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn is_finite(m: &Matrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// True when every imaginary part is exactly zero.
pub fn is_real(m: &Matrix) -> bool {
    m.iter().all(|z| z.im == 0.0)
}

pub fn from_real_rows(rows: &[&[f64]]) -> Matrix {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    Matrix::from_fn(n, m, |i, j| Complex64::new(rows[i][j], 0.0))
}

pub fn scalar(x: f64) -> Matrix {
    Matrix::from_element(1, 1, Complex64::new(x, 0.0))
}

/// Unit-lower-triangular LDLᴴ factorization of a Hermitian positive definite matrix.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    l: Matrix,
    d: Vec<f64>,
}

impl LdlFactor {
    pub fn dim(&self) -> usize {
        self.d.len()
    }

    /// The pivots `d`, all positive.
    pub fn pivots(&self) -> &[f64] {
        &self.d
    }

    /// Solves `M X = B` for every column of `B`.
    pub fn solve(&self, b: &Matrix) -> Matrix {
        let n = self.dim();
        assert_eq!(b.nrows(), n, "right-hand side has wrong row count");
        let mut x = b.clone();
        for c in 0..x.ncols() {
            // L y = b
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= self.l[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s;
            }
            for i in 0..n {
                x[(i, c)] /= self.d[i];
            }
            // Lᴴ x = z
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in i + 1..n {
                    s -= self.l[(k, i)].conj() * x[(k, c)];
                }
                x[(i, c)] = s;
            }
        }
        x
    }

    pub fn inverse(&self) -> HermitianMatrix {
        HermitianMatrix::from_hermitian_part(&self.solve(&Matrix::identity(self.dim(), self.dim())))
    }
}

/// Attempts an LDLᴴ factorization; succeeds iff every pivot exceeds
/// `pd_tol · max(1, ‖M‖∞)`.
pub fn ldl_factor(m: &HermitianMatrix, pd_tol: f64) -> Result<LdlFactor, LinalgError> {
    let n = m.dim();
    let threshold = pd_tol * inf_norm(m).max(1.0);
    let mut l = Matrix::identity(n, n);
    let mut d = vec![0.0; n];
    for j in 0..n {
        let mut dj = m[(j, j)].re;
        for k in 0..j {
            dj -= l[(j, k)].norm_sqr() * d[k];
        }
        if !(dj > threshold) {
            return Err(LinalgError::NotPositiveDefinite { index: j, pivot: dj });
        }
        d[j] = dj;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj() * d[k];
            }
            l[(i, j)] = s / dj;
        }
    }
    Ok(LdlFactor { l, d })
}

/// Positive-definiteness test that hands back the factorization on success.
pub fn is_positive_definite(m: &HermitianMatrix, pd_tol: f64) -> Option<LdlFactor> {
    ldl_factor(m, pd_tol).ok()
}

/// Solves `M X = B` for Hermitian positive definite `M`.
///
/// The residual satisfies `‖M X − B‖_F ≲ c·n·ε·cond(M)·‖B‖_F` (backward stable LDLᴴ).
pub fn pd_solve(m: &HermitianMatrix, b: &Matrix, pd_tol: f64) -> Result<Matrix, LinalgError> {
    if b.nrows() != m.dim() {
        return Err(LinalgError::DimensionMismatch(format!(
            "{}x{} system with {} right-hand-side rows",
            m.dim(),
            m.dim(),
            b.nrows()
        )));
    }
    Ok(ldl_factor(m, pd_tol)?.solve(b))
}

/// General square solve by partial-pivoting LU.
pub fn lu_solve(m: &Matrix, b: &Matrix, context: &'static str) -> Result<Matrix, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let lu = m.clone().lu();
    lu.solve(b)
        .filter(is_finite)
        .ok_or(LinalgError::Singular(context))
}

pub fn inverse(m: &Matrix, context: &'static str) -> Result<Matrix, LinalgError> {
    let n = m.nrows();
    lu_solve(m, &Matrix::identity(n, n), context)
}

/// Singular values in descending order.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    let svd = nalgebra::SVD::new(m.clone(), false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Numerical rank with threshold `rel_tol · σ_max`.
pub fn numerical_rank(m: &Matrix, rel_tol: f64) -> usize {
    let s = singular_values(m);
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > rel_tol * smax).count()
}

/// All eigenvalues of a general square matrix: Householder reduction to
/// upper Hessenberg form, then single-shift complex QR with deflation.
///
/// `max_iters` bounds the QR sweeps spent on any one eigenvalue.
pub fn eigenvalues(m: &Matrix, tol: f64, max_iters: usize) -> Result<Vec<Complex64>, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    if !is_finite(m) {
        return Err(LinalgError::NoConvergence { iterations: 0 });
    }
    let mut h = m.clone();
    reduce_to_hessenberg(&mut h);
    hessenberg_qr(&mut h, tol.max(f64::EPSILON), max_iters.max(1))
}

/// `ρ(M)`, the largest eigenvalue modulus.
pub fn spectral_radius(m: &Matrix, sr_tol: f64, max_iters: usize) -> Result<f64, LinalgError> {
    Ok(eigenvalues(m, sr_tol, max_iters)?
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

fn reduce_to_hessenberg(h: &mut Matrix) {
    let n = h.nrows();
    if n < 3 {
        return;
    }
    for k in 0..n - 2 {
        let norm: f64 = (k + 1..n).map(|i| h[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = h[(k + 1, k)];
        let phase = if x0.norm() == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            x0 / x0.norm()
        };
        let alpha = -phase * norm;
        let mut v: Vec<Complex64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        for z in v.iter_mut() {
            *z /= vnorm;
        }
        // H ← (I − 2vvᴴ) H on rows k+1..n
        for j in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for (t, vi) in v.iter().enumerate() {
                s += vi.conj() * h[(k + 1 + t, j)];
            }
            s *= 2.0;
            for (t, vi) in v.iter().enumerate() {
                h[(k + 1 + t, j)] -= vi * s;
            }
        }
        // H ← H (I − 2vvᴴ) on columns k+1..n
        for i in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for (t, vi) in v.iter().enumerate() {
                s += h[(i, k + 1 + t)] * vi;
            }
            s *= 2.0;
            for (t, vi) in v.iter().enumerate() {
                h[(i, k + 1 + t)] -= s * vi.conj();
            }
        }
        for i in k + 2..n {
            h[(i, k)] = Complex64::new(0.0, 0.0);
        }
    }
}

fn eig2x2(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> (Complex64, Complex64) {
    let half_tr = (a + d) * 0.5;
    let half_diff = (a - d) * 0.5;
    let disc = (half_diff * half_diff + b * c).sqrt();
    (half_tr + disc, half_tr - disc)
}

/// Givens rotation `(c, s)` with `[c s; −s̄ c]·[a; b] = [r; 0]`.
fn givens(a: Complex64, b: Complex64) -> (f64, Complex64) {
    let an = a.norm();
    let bn = b.norm();
    if bn == 0.0 {
        return (1.0, Complex64::new(0.0, 0.0));
    }
    if an == 0.0 {
        return (0.0, b.conj() / bn);
    }
    let r = an.hypot(bn);
    (an / r, (a / an) * b.conj() / r)
}

fn hessenberg_qr(h: &mut Matrix, tol: f64, max_iters: usize) -> Result<Vec<Complex64>, LinalgError> {
    let n = h.nrows();
    let mut eig = vec![Complex64::new(0.0, 0.0); n];
    let scale = h.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let tiny = f64::MIN_POSITIVE * n as f64 / f64::EPSILON;
    let mut hi = n - 1;
    let mut iters_here = 0usize;
    let mut total = 0usize;
    loop {
        if hi == 0 {
            eig[0] = h[(0, 0)];
            break;
        }
        // locate the start of the active unreduced block
        let mut lo = hi;
        while lo > 0 {
            let sub = h[(lo, lo - 1)].norm();
            let diag = h[(lo, lo)].norm() + h[(lo - 1, lo - 1)].norm();
            let ref_scale = if diag == 0.0 { scale } else { diag };
            if sub <= tol * ref_scale || sub <= tiny {
                h[(lo, lo - 1)] = Complex64::new(0.0, 0.0);
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            eig[hi] = h[(hi, hi)];
            hi -= 1;
            iters_here = 0;
            continue;
        }
        if lo + 1 == hi {
            let (l1, l2) = eig2x2(h[(lo, lo)], h[(lo, hi)], h[(hi, lo)], h[(hi, hi)]);
            eig[lo] = l1;
            eig[hi] = l2;
            if lo == 0 {
                break;
            }
            hi = lo - 1;
            iters_here = 0;
            continue;
        }
        iters_here += 1;
        total += 1;
        if iters_here > max_iters {
            return Err(LinalgError::NoConvergence { iterations: total });
        }
        let shift = if iters_here % 10 == 0 {
            // exceptional shift breaks cycles on unimodular spectra
            let mut s = 0.75 * h[(hi, hi - 1)].norm();
            if hi - 1 > lo {
                s += 0.4375 * h[(hi - 1, hi - 2)].norm();
            }
            h[(hi, hi)] + Complex64::new(s, 0.3 * s)
        } else {
            let (l1, l2) = eig2x2(
                h[(hi - 1, hi - 1)],
                h[(hi - 1, hi)],
                h[(hi, hi - 1)],
                h[(hi, hi)],
            );
            if (l1 - h[(hi, hi)]).norm() <= (l2 - h[(hi, hi)]).norm() {
                l1
            } else {
                l2
            }
        };
        qr_sweep(h, lo, hi, shift);
    }
    Ok(eig)
}

fn qr_sweep(h: &mut Matrix, lo: usize, hi: usize, shift: Complex64) {
    for i in lo..=hi {
        h[(i, i)] -= shift;
    }
    let mut rots = Vec::with_capacity(hi - lo);
    for k in lo..hi {
        let (c, s) = givens(h[(k, k)], h[(k + 1, k)]);
        for j in k..=hi {
            let x = h[(k, j)];
            let y = h[(k + 1, j)];
            h[(k, j)] = x * c + s * y;
            h[(k + 1, j)] = -s.conj() * x + y * c;
        }
        rots.push((c, s));
    }
    for (t, &(c, s)) in rots.iter().enumerate() {
        let k = lo + t;
        for i in lo..=(k + 1).min(hi) {
            let x = h[(i, k)];
            let y = h[(i, k + 1)];
            h[(i, k)] = x * c + y * s.conj();
            h[(i, k + 1)] = -x * s + y * c;
        }
    }
    for i in lo..=hi {
        h[(i, i)] += shift;
    }
}

/// `‖(X ± AᴴYA)⁻¹ − [X⁻¹ ∓ X⁻¹Aᴴ(Y⁻¹ ± AX⁻¹Aᴴ)⁻¹AX⁻¹]‖_F`.
///
/// Both sides are formed with explicit LU inverses; used as an oracle for the
/// Sherman–Morrison–Woodbury identity the triple recursion is built on.
pub fn smwf_residual(
    x: &HermitianMatrix,
    y: &HermitianMatrix,
    a: &Matrix,
    sign: Sign,
) -> Result<f64, LinalgError> {
    let n = x.dim();
    if y.dim() != n || a.nrows() != n || a.ncols() != n {
        return Err(LinalgError::DimensionMismatch(
            "SMWF operands must all be n x n".into(),
        ));
    }
    let s = Complex64::new(sign.factor(), 0.0);
    let ah = a.adjoint();
    let lhs = inverse(&(x.as_matrix() + &ah * y.as_matrix() * a * s), "X ± AᴴYA")?;
    let xinv = inverse(x, "X")?;
    let yinv = inverse(y, "Y")?;
    let inner = inverse(&(yinv + a * &xinv * &ah * s), "Y⁻¹ ± AX⁻¹Aᴴ")?;
    let rhs = &xinv - &xinv * &ah * inner * a * &xinv * s;
    Ok(frobenius(&(lhs - rhs)))
}
