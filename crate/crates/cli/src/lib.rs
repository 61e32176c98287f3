//! `nme` command line: `solve`, `diagnose`, `gen` and `bench`.
//!
//! Exit codes: 0 converged (and every non-solve success), 2 not solvable,
//! 3 breakdown, 4 iteration limit, 1 bad input or flags.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nme_core::diagnostics::{self, DiagnoseOptions, DiagnosticsReport};
use nme_core::exec::Execution;
use nme_core::format;
use nme_core::probgen::{self, GenMode, GenSpec};
use nme_core::{Algorithm, Field, OperatorKind, ProblemSpec, Sign, SolveOptions, SolveResult, SolveStatus};

pub const BENCH_HEADER: &str = "problem,algorithm,status,iterations,effective_index,final_residual,measured_rate,rho_T1";

#[derive(Parser, Debug)]
#[command(name = "nme", version, about = "Solve X ± Aᴴ f(X)⁻¹ A = Q")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a problem file and write the result document.
    Solve(SolveArgs),
    /// Solve, then report T₁/S₁ spectra, criticality and the ψ check.
    Diagnose(DiagnoseArgs),
    /// Generate a problem file.
    Gen(GenArgs),
    /// Run every algorithm on every problem of a suite; write a CSV table.
    Bench(BenchArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum AlgFamily {
    Fixed,
    Restart,
    #[value(name = "order-r")]
    OrderR,
    Schedule,
    Alternating,
}

#[derive(Args, Debug)]
struct SolverFlags {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "order-r")]
    algorithm: AlgFamily,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Restart length for `restart`.
    #[arg(long)]
    ell: Option<usize>,
    /// Composition order for `order-r` (default 2).
    #[arg(long)]
    order: Option<usize>,
    /// Comma list of orders for `schedule`, cycled.
    #[arg(long, value_delimiter = ',')]
    schedule: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    solver: SolverFlags,
    /// Result document; printed to stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = diagnostics::DEFAULT_PSI_SAMPLES)]
    psi_samples: usize,
    #[arg(long)]
    sequential: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SignArg {
    Plus,
    Minus,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum OperatorArg {
    Identity,
    Transpose,
    Conjugate,
    #[value(name = "involutory_similarity")]
    InvolutorySimilarity,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Solvable,
    Critical,
    Scalar,
    #[value(name = "unsolvable_scalar_family")]
    Unsolvable,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FieldArg {
    Real,
    Complex,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, value_enum, default_value = "plus")]
    sign: SignArg,
    #[arg(long, value_enum, default_value = "identity")]
    operator: OperatorArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "solvable")]
    mode: ModeArg,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long, value_enum)]
    field: Option<FieldArg>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Text file listing problem files, one per line (relative to the suite file; `#` comments).
    #[arg(long)]
    suite: PathBuf,
    /// Algorithm names: fixed, alternating, order-R, restart-L, schedule-a:b:c.
    #[arg(long, value_delimiter = ',', default_value = "fixed,order-2,order-3")]
    algorithms: Vec<String>,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    sequential: bool,
}

pub fn exit_code(status: SolveStatus) -> i32 {
    match status {
        SolveStatus::Converged => 0,
        SolveStatus::NotSolvable => 2,
        SolveStatus::Breakdown => 3,
        SolveStatus::MaxIterExceeded => 4,
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let out = match cli.cmd {
        Command::Solve(a) => cmd_solve(&a),
        Command::Diagnose(a) => cmd_diagnose(&a),
        Command::Gen(a) => cmd_gen(&a).map(|_| 0),
        Command::Bench(a) => cmd_bench(&a).map(|_| 0),
    };
    match out {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn algorithm(f: &SolverFlags) -> anyhow::Result<Algorithm> {
    let alg = match f.algorithm {
        AlgFamily::Fixed => Algorithm::FixedPoint,
        AlgFamily::Alternating => Algorithm::Alternating,
        AlgFamily::OrderR => Algorithm::OrderR { r: f.order.unwrap_or(2) },
        AlgFamily::Restart => Algorithm::Restart { ell: f.ell.context("--algorithm restart needs --ell")? },
        AlgFamily::Schedule => Algorithm::Schedule(f.schedule.clone().context("--algorithm schedule needs --schedule")?),
    };
    alg.validate()?;
    Ok(alg)
}

fn options(alg: Algorithm, tol: f64, max_iter: Option<usize>) -> anyhow::Result<SolveOptions> {
    if !(tol.is_finite() && tol > 0.0) {
        bail!("--tol must be a positive number");
    }
    let mut opts = SolveOptions::new(alg).tol(tol).with_triples();
    opts.max_iter = max_iter;
    Ok(opts)
}

fn read_problem(path: &Path) -> anyhow::Result<ProblemSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    format::parse_problem(&text).with_context(|| format!("{}", path.display()))
}

fn write_out(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => match std::io::stdout().lock().write_all(text.as_bytes()) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e).context("cannot write to stdout"),
            _ => Ok(()),
        },
    }
}

fn solve_file(f: &SolverFlags) -> anyhow::Result<(ProblemSpec, SolveResult)> {
    let p = read_problem(&f.input)?;
    let opts = options(algorithm(f)?, f.tol, f.max_iter)?;
    let res = nme_core::solvers::solve(&p, &opts)?;
    Ok((p, res))
}

fn summary(res: &SolveResult) -> String {
    format!(
        "{}: {} after {} iterations (effective index {}), residual {:.3e}",
        res.algorithm.name(),
        res.status,
        res.iterations,
        res.effective_index,
        res.final_residual
    )
}

fn cmd_solve(a: &SolveArgs) -> anyhow::Result<i32> {
    let (p, res) = solve_file(&a.solver)?;
    let diag = diagnostics::diagnose(&p, &res, &DiagnoseOptions::default()).ok();
    let doc = format::write_result(&p, &res, diag.as_ref());
    if let Some(h) = &a.history {
        fs::write(h, format::history_csv(&res.history)).with_context(|| format!("cannot write {}", h.display()))?;
    }
    write_out(a.output.as_deref(), &doc)?;
    if a.output.is_some() {
        println!("{}", summary(&res));
    }
    for w in &res.warnings {
        eprintln!("warning: {w}");
    }
    Ok(exit_code(res.status))
}

fn cmd_diagnose(a: &DiagnoseArgs) -> anyhow::Result<i32> {
    let (p, res) = solve_file(&a.solver)?;
    let opts = DiagnoseOptions {
        psi_samples: a.psi_samples,
        exec: if a.sequential { Execution::Sequential } else { Execution::Parallel },
        ..Default::default()
    };
    let d = diagnostics::diagnose(&p, &res, &opts)?;
    match &a.output {
        Some(path) => {
            fs::write(path, format::write_result(&p, &res, Some(&d)))
                .with_context(|| format!("cannot write {}", path.display()))?;
            println!("{}; {}", summary(&res), diag_summary(&d));
        }
        None => println!("{}", serde_json::to_string_pretty(&format::diagnostics_to_json(&d))?),
    }
    Ok(exit_code(res.status))
}

fn diag_summary(d: &DiagnosticsReport) -> String {
    let rho = d.rho_t1.map_or("n/a".to_string(), |r| format!("{r:.6}"));
    format!("rho(T1) = {rho}, critical = {}, min eig psi = {:.3e}", d.critical, d.psi.min_eig)
}

fn gen_spec(a: &GenArgs) -> GenSpec {
    let sign = match a.sign {
        SignArg::Plus => Sign::Plus,
        SignArg::Minus => Sign::Minus,
    };
    let kind = match a.operator {
        OperatorArg::Identity => OperatorKind::Identity,
        OperatorArg::Transpose => OperatorKind::Transpose,
        OperatorArg::Conjugate => OperatorKind::Conjugate,
        OperatorArg::InvolutorySimilarity => OperatorKind::InvolutorySimilarity,
    };
    let mut spec = match a.mode {
        ModeArg::Critical => GenSpec::critical(a.n, a.seed),
        _ => GenSpec::solvable(a.n, sign, kind, a.seed),
    };
    spec.mode = match a.mode {
        ModeArg::Solvable => GenMode::Solvable,
        ModeArg::Critical => GenMode::Critical,
        ModeArg::Scalar => GenMode::Scalar,
        ModeArg::Unsolvable => GenMode::UnsolvableScalarFamily,
    };
    if let Some(v) = a.a {
        spec.a = v;
    }
    if let Some(v) = a.q {
        spec.q = v;
    }
    if let Some(v) = a.margin {
        spec.margin = v;
    }
    if let Some(f) = a.field {
        spec.field = Some(match f {
            FieldArg::Real => Field::Real,
            FieldArg::Complex => Field::Complex,
        });
    }
    spec
}

fn cmd_gen(a: &GenArgs) -> anyhow::Result<()> {
    let spec = gen_spec(a);
    let inst = probgen::generate(&spec)?;
    write_out(a.output.as_deref(), &format::write_problem(&inst.problem))?;
    if let Some(path) = &a.output {
        println!("wrote {} instance (n = {}) to {}", spec.mode.as_str(), inst.problem.dim(), path.display());
    }
    Ok(())
}

/// Problem paths listed in a suite file, resolved against the suite's directory.
pub fn read_suite(path: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read suite {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect())
}

fn num(x: Option<f64>) -> String {
    x.filter(|v| v.is_finite()).map_or(String::new(), |v| format!("{v:e}"))
}

fn bench_row(name: &str, p: &ProblemSpec, opts: &SolveOptions) -> String {
    let alg = opts.algorithm.name();
    let res = match nme_core::solvers::solve(p, opts) {
        Ok(r) => r,
        Err(e) => return format!("{name},{alg},Error: {},,,,,", e.to_string().replace(',', ";")),
    };
    if res.status == SolveStatus::NotSolvable {
        return format!("{name},{alg},{},,,,,", res.status);
    }
    let d = diagnostics::diagnose(p, &res, &DiagnoseOptions { exec: Execution::Sequential, ..Default::default() }).ok();
    format!(
        "{name},{alg},{},{},{},{},{},{}",
        res.status,
        res.iterations,
        res.effective_index,
        num(Some(res.final_residual)),
        num(d.as_ref().and_then(|d| d.measured_rate)),
        num(d.as_ref().and_then(|d| d.rho_t1)),
    )
}

fn cmd_bench(a: &BenchArgs) -> anyhow::Result<()> {
    let algs = a
        .algorithms
        .iter()
        .map(|s| Algorithm::parse(s.trim()).map_err(anyhow::Error::from))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut problems = Vec::new();
    for path in read_suite(&a.suite)? {
        let name = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        problems.push((name.replace(',', "_"), read_problem(&path)?));
    }
    let cells: Vec<(usize, SolveOptions)> = (0..problems.len())
        .flat_map(|i| algs.iter().map(move |alg| (i, alg.clone())))
        .map(|(i, alg)| options(alg, a.tol, a.max_iter).map(|o| (i, o)))
        .collect::<anyhow::Result<_>>()?;
    let exec = if a.sequential { Execution::Sequential } else { Execution::Parallel };
    let rows = exec.map(&cells, |(i, opts)| bench_row(&problems[*i].0, &problems[*i].1, opts));
    let mut csv = String::from(BENCH_HEADER);
    csv.push('\n');
    for r in rows {
        csv.push_str(&r);
        csv.push('\n');
    }
    write_out(a.output.as_deref(), &csv)?;
    if let Some(path) = &a.output {
        println!("{} problems x {} algorithms -> {}", problems.len(), algs.len(), path.display());
    }
    Ok(())
}
