//! Fixed-point, accelerated and alternating iterations.
//!
//! Every scheme advances a "main" triple whose `k` is its effective index:
//! the number of plain fixed-point steps it is equivalent to. The index is
//! maintained by [`combine_triples`] itself (indices add under composition),
//! so accelerated solvers never compute it by formula.
//!
//! Stopping needs both a Cauchy test on `Q` and the true equation residual:
//! at sublinear rates the Cauchy test alone stops far too early.

use crate::exec::Execution;
use crate::linalg::{self, HermitianMatrix, Matrix, DEFAULT_PD_TOL};
use crate::transform::{self, combine_triples, step_triple, IterTriple, ProblemSpec, TransformError};
use crate::{Complex64, Sign};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Algorithm {
    FixedPoint,
    /// Restart from the base `X⁽ˡ⁾`.
    Restart { ell: usize },
    /// Composition order `r ≥ 2`; `r = 2` is the doubling iteration.
    OrderR { r: usize },
    /// Outer step `k` uses `g(k) = schedule[(k − 1) mod len]`.
    Schedule(Vec<usize>),
    Alternating,
}

impl Algorithm {
    /// Short name used in CSV output: `fixed`, `restart-3`, `order-2`, `schedule-2:3:2`, `alternating`.
    pub fn name(&self) -> String {
        match self {
            Algorithm::FixedPoint => "fixed".into(),
            Algorithm::Restart { ell } => format!("restart-{ell}"),
            Algorithm::OrderR { r } => format!("order-{r}"),
            Algorithm::Schedule(g) => {
                let parts: Vec<String> = g.iter().map(|v| v.to_string()).collect();
                format!("schedule-{}", parts.join(":"))
            }
            Algorithm::Alternating => "alternating".into(),
        }
    }

    /// Inverse of [`Algorithm::name`]; bare `order`/`restart`/`schedule` are not accepted.
    pub fn parse(s: &str) -> Result<Self, SolveOptionsError> {
        let bad = || SolveOptionsError(format!("unknown algorithm '{s}'"));
        let alg = match s {
            "fixed" => Algorithm::FixedPoint,
            "alternating" => Algorithm::Alternating,
            _ => {
                let (head, tail) = s.split_once('-').ok_or_else(bad)?;
                let num = |t: &str| t.parse::<usize>().map_err(|_| bad());
                match head {
                    "order" => Algorithm::OrderR { r: num(tail)? },
                    "restart" => Algorithm::Restart { ell: num(tail)? },
                    "schedule" => Algorithm::Schedule(tail.split(':').map(num).collect::<Result<_, _>>()?),
                    _ => return Err(bad()),
                }
            }
        };
        alg.validate()?;
        Ok(alg)
    }

    pub fn validate(&self) -> Result<(), SolveOptionsError> {
        match self {
            Algorithm::Restart { ell } if *ell < 1 => Err(SolveOptionsError("restart length must be ≥ 1".into())),
            Algorithm::OrderR { r } if *r < 2 => Err(SolveOptionsError("order r must be ≥ 2".into())),
            Algorithm::Schedule(g) if g.is_empty() => Err(SolveOptionsError("schedule must not be empty".into())),
            Algorithm::Schedule(g) if g.iter().any(|&v| v < 2) => {
                Err(SolveOptionsError("schedule entries must be ≥ 2".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn is_accelerated(&self) -> bool {
        !matches!(self, Algorithm::FixedPoint | Algorithm::Alternating)
    }

    pub fn default_max_iter(&self) -> usize {
        if self.is_accelerated() {
            100
        } else {
            1000
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct SolveOptionsError(pub String);

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub algorithm: Algorithm,
    pub tol: f64,
    /// `None` picks the algorithm's default (1000 plain, 100 accelerated).
    pub max_iter: Option<usize>,
    pub record_history: bool,
    /// Keep every main triple (and half-step triple) in the result.
    pub record_triples: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            algorithm: Algorithm::OrderR { r: 2 },
            tol: 1e-12,
            max_iter: None,
            record_history: true,
            record_triples: false,
        }
    }
}

impl SolveOptions {
    pub fn new(algorithm: Algorithm) -> Self {
        SolveOptions { algorithm, ..Default::default() }
    }

    pub fn tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = Some(max_iter);
        self
    }

    pub fn with_triples(mut self) -> Self {
        self.record_triples = true;
        self
    }

    pub fn effective_max_iter(&self) -> usize {
        self.max_iter.unwrap_or_else(|| self.algorithm.default_max_iter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Converged,
    NotSolvable,
    Breakdown,
    MaxIterExceeded,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "Converged",
            SolveStatus::NotSolvable => "NotSolvable",
            SolveStatus::Breakdown => "Breakdown",
            SolveStatus::MaxIterExceeded => "MaxIterExceeded",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub iter: usize,
    pub effective_index: u64,
    pub norm_a: f64,
    pub delta_q: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub algorithm: Algorithm,
    /// Maximal solution estimate: the last `Q⁽ᵏ⁾` (or the last good one on failure).
    pub x_m: HermitianMatrix,
    /// The last `B⁽ᵏ⁾`, approximating `Y_M`.
    pub y_m: HermitianMatrix,
    pub iterations: usize,
    pub effective_index: u64,
    pub final_residual: f64,
    pub history: Vec<HistoryEntry>,
    pub warnings: Vec<String>,
    /// Why the solve stopped short, if it did.
    pub message: Option<String>,
    /// `X⁽¹⁾`, needed by diagnostics.
    pub initial: Option<IterTriple>,
    /// Main triples in iteration order (only with `record_triples`).
    pub triples: Vec<IterTriple>,
    /// Half-step triples of the alternating iteration (only with `record_triples`).
    pub half_triples: Vec<IterTriple>,
}

impl SolveResult {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

struct Advance {
    triple: IterTriple,
    /// What the Cauchy test compares the new `Q` against (default: the previous main `Q`).
    cauchy_ref: Option<HermitianMatrix>,
    half: Option<IterTriple>,
}

impl Advance {
    fn main(triple: IterTriple) -> Self {
        Advance { triple, cauchy_ref: None, half: None }
    }
}

struct Failure {
    status: SolveStatus,
    message: String,
    /// The next step hit a numerically singular pivot rather than an indefinite one.
    stalled: bool,
}

fn failure_from(sign: Sign, err: TransformError) -> Failure {
    let status = match (&err, sign) {
        (TransformError::NotSolvable, _) => SolveStatus::NotSolvable,
        (TransformError::NonFinite(_), _) => SolveStatus::Breakdown,
        (TransformError::Breakdown(_), Sign::Plus) => SolveStatus::NotSolvable,
        _ => SolveStatus::Breakdown,
    };
    let stalled = matches!(err, TransformError::SingularPivot(_));
    Failure { status, message: err.to_string(), stalled }
}

fn ordering_failure(sign: Sign, what: String) -> Failure {
    Failure {
        status: match sign {
            Sign::Plus => SolveStatus::NotSolvable,
            Sign::Minus => SolveStatus::Breakdown,
        },
        message: format!("ordering lost: {what}"),
        stalled: false,
    }
}

/// Monotonicity `Q_prev ⪰ Q_new`, `B_new ⪰ B_prev`, plus the sign-specific bounds
/// (`Q_k − B_k ⪰ 0` for plus; `B_k ⪯ 0`, `Q_k ⪰ Q` for minus).
fn check_ordering(p: &ProblemSpec, prev: Option<&IterTriple>, cur: &IterTriple) -> Result<(), Failure> {
    let slack = transform::rounding_slack(cur.k, linalg::frobenius(p.q()));
    let sign = p.sign();
    if let Some(prev) = prev {
        let dq = prev.q.sub(&cur.q).min_eigenvalue();
        if dq < -slack {
            return Err(ordering_failure(sign, format!("Q⁽{}⁾ ⋡ Q⁽{}⁾ (λ_min = {dq:e})", prev.k, cur.k)));
        }
        let db = cur.b.sub(&prev.b).min_eigenvalue();
        if db < -slack {
            return Err(ordering_failure(sign, format!("B⁽{}⁾ ⋡ B⁽{}⁾ (λ_min = {db:e})", cur.k, prev.k)));
        }
    }
    match sign {
        Sign::Plus => {
            let gap = cur.q.sub(&cur.b).min_eigenvalue();
            if gap < -slack {
                return Err(ordering_failure(sign, format!("Q⁽{0}⁾ − B⁽{0}⁾ ⋡ 0 (λ_min = {gap:e})", cur.k)));
            }
        }
        Sign::Minus => {
            let bmax = cur.b.max_eigenvalue();
            if bmax > slack {
                return Err(ordering_failure(sign, format!("B⁽{}⁾ ⋠ 0 (λ_max = {bmax:e})", cur.k)));
            }
            let qmin = cur.q.sub(p.q()).min_eigenvalue();
            if qmin < -slack {
                return Err(ordering_failure(sign, format!("Q⁽{}⁾ ⋡ Q (λ_min = {qmin:e})", cur.k)));
            }
        }
    }
    Ok(())
}

/// Runs the shared stopping/recording loop. `first` is iteration 1; `advance`
/// produces iteration `i + 1` from the main triple of iteration `i`.
fn drive<F>(p: &ProblemSpec, opts: &SolveOptions, initial: Option<IterTriple>, first: Result<Advance, Failure>, mut advance: F) -> SolveResult
where
    F: FnMut(&IterTriple, usize) -> Result<Advance, Failure>,
{
    let n = p.dim();
    let max_iter = opts.effective_max_iter().max(1);
    let mut res = SolveResult {
        status: SolveStatus::MaxIterExceeded,
        algorithm: opts.algorithm.clone(),
        x_m: p.q().clone(),
        y_m: HermitianMatrix::zeros(n),
        iterations: 0,
        effective_index: 0,
        final_residual: f64::NAN,
        history: Vec::new(),
        warnings: p.warnings(),
        message: None,
        initial,
        triples: Vec::new(),
        half_triples: Vec::new(),
    };
    let mut step = match first {
        Ok(s) => s,
        Err(f) => {
            res.status = f.status;
            res.message = Some(f.message);
            return res;
        }
    };
    let mut prev: Option<IterTriple> = None;
    let mut iter = 1usize;
    loop {
        let cur = step.triple;
        if !cur.is_finite() {
            res.status = SolveStatus::Breakdown;
            res.message = Some(format!("non-finite entries at iteration {iter}"));
            return res;
        }
        if let Err(f) = check_ordering(p, prev.as_ref(), &cur) {
            res.status = f.status;
            res.message = Some(f.message);
            return res;
        }
        let reference = step
            .cauchy_ref
            .unwrap_or_else(|| prev.as_ref().map_or_else(|| p.q().clone(), |t| t.q.clone()));
        let delta_q = linalg::frobenius(&cur.q.sub(&reference));
        let residual = transform::equation_residual(p, &cur.q).unwrap_or(f64::INFINITY);
        if opts.record_history {
            res.history.push(HistoryEntry {
                iter,
                effective_index: cur.k,
                norm_a: linalg::frobenius(&cur.a),
                delta_q,
                residual,
            });
        }
        res.x_m = cur.q.clone();
        res.y_m = cur.b.clone();
        res.iterations = iter;
        res.effective_index = cur.k;
        res.final_residual = residual;
        if opts.record_triples {
            res.triples.push(cur.clone());
            if let Some(h) = step.half.take() {
                res.half_triples.push(h);
            }
        }
        if delta_q <= opts.tol * linalg::frobenius(&reference).max(1.0) && residual <= opts.tol {
            if linalg::is_positive_definite(&cur.q, DEFAULT_PD_TOL).is_none() {
                res.status = SolveStatus::Breakdown;
                res.message = Some("limit is not positive definite".into());
            } else {
                res.status = SolveStatus::Converged;
            }
            return res;
        }
        if iter >= max_iter {
            res.status = SolveStatus::MaxIterExceeded;
            res.message = Some(format!("no convergence within {max_iter} iterations"));
            return res;
        }
        match advance(&cur, iter) {
            Ok(next) => step = next,
            // At the accuracy floor the residual test is the authority.
            Err(f) if f.stalled && residual <= opts.tol => {
                res.status = SolveStatus::Converged;
                res.warnings.push(format!("stopped at attainable accuracy: {}", f.message));
                return res;
            }
            Err(f) => {
                res.status = f.status;
                res.message = Some(f.message);
                return res;
            }
        }
        prev = Some(cur);
        iter += 1;
    }
}

pub fn solve(p: &ProblemSpec, opts: &SolveOptions) -> Result<SolveResult, SolveOptionsError> {
    opts.algorithm.validate()?;
    if !(opts.tol > 0.0) {
        return Err(SolveOptionsError(format!("tolerance must be positive, got {}", opts.tol)));
    }
    Ok(match &opts.algorithm {
        Algorithm::FixedPoint => solve_fixed_point(p, opts),
        Algorithm::Restart { ell } => solve_accel_restart(p, opts, *ell),
        Algorithm::OrderR { r } => solve_accel_order_r(p, opts, *r),
        Algorithm::Schedule(g) => solve_accel_schedule(p, opts, g),
        Algorithm::Alternating => solve_alternating(p, opts),
    })
}

/// Solves independent problems; results come back in input order.
pub fn batch_solve(problems: &[ProblemSpec], opts: &SolveOptions, exec: Execution) -> Result<Vec<SolveResult>, SolveOptionsError> {
    opts.algorithm.validate()?;
    Ok(exec.map(problems, |p| solve(p, opts).expect("options validated above")))
}

fn start(p: &ProblemSpec) -> Result<IterTriple, Failure> {
    transform::initial_triple(p).map_err(|e| failure_from(p.sign(), e))
}

/// Plain iteration: `X⁽ᵏ⁺¹⁾ = X⁽ᵏ⁾ ∘ X⁽¹⁾`.
pub fn solve_fixed_point(p: &ProblemSpec, opts: &SolveOptions) -> SolveResult {
    let t1 = match start(p) {
        Ok(t) => t,
        Err(f) => return drive(p, opts, None, Err(f), |_, _| unreachable!()),
    };
    let sign = p.sign();
    let base = t1.clone();
    drive(p, opts, Some(t1.clone()), Ok(Advance::main(t1)), move |cur, _| {
        step_triple(cur, &base).map(Advance::main).map_err(|e| failure_from(sign, e))
    })
}

/// Restarted iteration: outer iterate `k` is `X⁽ᵏˡ⁾`.
pub fn solve_accel_restart(p: &ProblemSpec, opts: &SolveOptions, ell: usize) -> SolveResult {
    let sign = p.sign();
    let t1 = match start(p) {
        Ok(t) => t,
        Err(f) => return drive(p, opts, None, Err(f), |_, _| unreachable!()),
    };
    let mut base = t1.clone();
    for _ in 1..ell.max(1) {
        match step_triple(&base, &t1) {
            Ok(t) => base = t,
            Err(e) => {
                let f = failure_from(sign, e);
                return drive(p, opts, Some(t1), Err(f), |_, _| unreachable!());
            }
        }
    }
    let first = base.clone();
    drive(p, opts, Some(t1), Ok(Advance::main(first)), move |cur, _| {
        combine_triples(cur, &base).map(Advance::main).map_err(|e| failure_from(sign, e))
    })
}

/// Order-`r` iteration: `X̂⁽ᵏ⁺¹⁾` has index `r·n_k`, built by `r − 1` compositions with `X̂⁽ᵏ⁾`.
pub fn solve_accel_order_r(p: &ProblemSpec, opts: &SolveOptions, r: usize) -> SolveResult {
    let sign = p.sign();
    let t1 = match start(p) {
        Ok(t) => t,
        Err(f) => return drive(p, opts, None, Err(f), |_, _| unreachable!()),
    };
    drive(p, opts, Some(t1.clone()), Ok(Advance::main(t1)), move |hat, outer| {
        let mut xi = hat.clone();
        for i in 1..r.saturating_sub(1) {
            xi = combine_triples(&xi, hat).map_err(|e| {
                let mut f = failure_from(sign, e);
                f.message = format!("{} (inner step {i} of outer iteration {outer})", f.message);
                f
            })?;
        }
        combine_triples(&xi, hat).map(Advance::main).map_err(|e| failure_from(sign, e))
    })
}

/// Scheduled iteration: step `k` self-composes `g(k) − 2` times (doubling the
/// inner index each time), then composes once more with `X̂⁽ᵏ⁾`, so
/// `n_{k+1} = n_k·(1 + 2^{g(k)−2})`.
pub fn solve_accel_schedule(p: &ProblemSpec, opts: &SolveOptions, schedule: &[usize]) -> SolveResult {
    let sign = p.sign();
    let t1 = match start(p) {
        Ok(t) => t,
        Err(f) => return drive(p, opts, None, Err(f), |_, _| unreachable!()),
    };
    let schedule = schedule.to_vec();
    drive(p, opts, Some(t1.clone()), Ok(Advance::main(t1)), move |hat, outer| {
        let g = schedule[(outer - 1) % schedule.len()];
        let mut xi = hat.clone();
        for i in 0..g.saturating_sub(2) {
            xi = combine_triples(&xi, &xi).map_err(|e| {
                let mut f = failure_from(sign, e);
                f.message = format!("{} (inner step {} of outer iteration {outer})", f.message, i + 1);
                f
            })?;
        }
        combine_triples(&xi, hat).map(Advance::main).map_err(|e| failure_from(sign, e))
    })
}

/// Full step `k` from half step `k` (`M = f(Q) − B½`):
/// `(f̃(A) M⁻¹ A½, ±f̃(A) M⁻¹ f̃(A)ᴴ, Q½ ∓ A½ᴴ M⁻¹ A½)`.
fn full_from_half(p: &ProblemSpec, fq: &HermitianMatrix, fa: &Matrix, half: &IterTriple) -> Result<IterTriple, TransformError> {
    let n = p.dim();
    let s = Complex64::new(p.sign().factor(), 0.0);
    let m = fq.sub(&half.b);
    let factor = linalg::ldl_factor(&m, DEFAULT_PD_TOL)
        .map_err(|_| transform::pivot_failure(&m, 2 * half.k, format!("f(Q) − B½⁽{}⁾", half.k)))?;
    let mut rhs = Matrix::zeros(n, 2 * n);
    rhs.columns_mut(0, n).copy_from(&half.a);
    rhs.columns_mut(n, n).copy_from(&fa.adjoint());
    let sol = factor.solve(&rhs);
    let t = IterTriple {
        k: half.k,
        a: fa * sol.columns(0, n),
        b: HermitianMatrix::from_hermitian_part(&(fa * sol.columns(n, n) * s)),
        q: HermitianMatrix::from_hermitian_part(&(half.q.as_matrix() - half.a.adjoint() * sol.columns(0, n) * s)),
    };
    if !t.is_finite() {
        return Err(TransformError::NonFinite("full-step triple"));
    }
    Ok(t)
}

/// Half step `k + 1` from full step `k` (`N = Q − B⁽ᵏ⁾`):
/// `(A N⁻¹ A⁽ᵏ⁾, ±A N⁻¹ Aᴴ, Q⁽ᵏ⁾ − A⁽ᵏ⁾ᴴ N⁻¹ A⁽ᵏ⁾)`.
fn half_from_full(p: &ProblemSpec, full: &IterTriple) -> Result<IterTriple, TransformError> {
    let n = p.dim();
    let s = Complex64::new(p.sign().factor(), 0.0);
    let nmat = p.q().sub(&full.b);
    let factor = linalg::ldl_factor(&nmat, DEFAULT_PD_TOL)
        .map_err(|_| transform::pivot_failure(&nmat, 2 * full.k + 1, format!("Q − B⁽{}⁾", full.k)))?;
    let a = p.a();
    let mut rhs = Matrix::zeros(n, 2 * n);
    rhs.columns_mut(0, n).copy_from(&full.a);
    rhs.columns_mut(n, n).copy_from(&a.adjoint());
    let sol = factor.solve(&rhs);
    let t = IterTriple {
        k: full.k + 1,
        a: a * sol.columns(0, n),
        b: HermitianMatrix::from_hermitian_part(&(a * sol.columns(n, n) * s)),
        q: HermitianMatrix::from_hermitian_part(&(full.q.as_matrix() - full.a.adjoint() * sol.columns(0, n))),
    };
    if !t.is_finite() {
        return Err(TransformError::NonFinite("half-step triple"));
    }
    Ok(t)
}

/// The first half-step triple `(A, 0, Q)`.
pub fn initial_half_triple(p: &ProblemSpec) -> IterTriple {
    IterTriple { k: 1, a: p.a().clone(), b: HermitianMatrix::zeros(p.dim()), q: p.q().clone() }
}

/// The first `kmax` half-step and full-step triples, without any stopping test.
pub fn alternating_trajectory(p: &ProblemSpec, kmax: usize) -> Result<(Vec<IterTriple>, Vec<IterTriple>), TransformError> {
    let fq = p.op().apply_hermitian(p.q());
    let fa = p.op().apply_preserving(p.a());
    let mut halves = Vec::with_capacity(kmax);
    let mut fulls = Vec::with_capacity(kmax);
    if kmax == 0 {
        return Ok((halves, fulls));
    }
    let mut half = initial_half_triple(p);
    loop {
        let full = full_from_half(p, &fq, &fa, &half)?;
        halves.push(half);
        if fulls.len() + 1 == kmax {
            fulls.push(full);
            return Ok((halves, fulls));
        }
        half = half_from_full(p, &full)?;
        fulls.push(full);
    }
}

/// Alternates half and full steps. Full triples reproduce the fixed-point
/// trajectory; `Q½⁽ᵏ⁾` is the odd plain iterate between `Q⁽ᵏ⁻¹⁾` and `Q⁽ᵏ⁾`.
/// The Cauchy test compares `Q⁽ᵏ⁾` with `Q½⁽ᵏ⁾`.
pub fn solve_alternating(p: &ProblemSpec, opts: &SolveOptions) -> SolveResult {
    let sign = p.sign();
    let fq = p.op().apply_hermitian(p.q());
    let fa = p.op().apply_preserving(p.a());
    let h1 = initial_half_triple(p);
    let first = full_from_half(p, &fq, &fa, &h1).map_err(|e| failure_from(sign, e)).and_then(|t| {
        if sign == Sign::Plus && linalg::is_positive_definite(&t.q, DEFAULT_PD_TOL).is_none() {
            Err(failure_from(sign, TransformError::NotSolvable))
        } else {
            Ok(t)
        }
    });
    let initial = first.as_ref().ok().cloned();
    let first = first.map(|t| Advance { cauchy_ref: Some(h1.q.clone()), half: Some(h1), triple: t });
    drive(p, opts, initial, first, move |full, _| {
        let half = half_from_full(p, full).map_err(|e| failure_from(sign, e))?;
        let next = full_from_half(p, &fq, &fa, &half).map_err(|e| failure_from(sign, e))?;
        Ok(Advance { cauchy_ref: Some(half.q.clone()), half: Some(half), triple: next })
    })
}

/// `Y_M` from a converged solve, flagged valid only when `A` is nonsingular.
pub fn extract_minimal_solution(res: &SolveResult, p: &ProblemSpec) -> (HermitianMatrix, bool) {
    (res.y_m.clone(), res.converged() && !p.a_is_singular())
}
