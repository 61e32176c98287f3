//! File formats: the JSON problem and result documents and the history CSV.
//!
//! Matrices are row-major nested arrays. Real-field entries are plain numbers;
//! complex-field entries are `[re, im]` pairs. Numbers are written with the
//! shortest decimal that round-trips, so parse ∘ write is bit-exact.

use serde_json::{json, Map, Value};

use crate::diagnostics::DiagnosticsReport;
use crate::linalg::Matrix;
use crate::operator::{MatrixOperator, OperatorKind};
use crate::solvers::{HistoryEntry, SolveResult};
use crate::transform::{ProblemSpec, TransformError};
use crate::{Complex64, Field, Sign};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("invalid problem: {0}")]
    Invalid(#[from] TransformError),
}

fn schema(path: &str, message: impl Into<String>) -> FormatError {
    FormatError::Schema { path: path.to_string(), message: message.into() }
}

fn entry_to_json(z: Complex64, field: Field) -> Value {
    match field {
        Field::Real => json!(z.re),
        Field::Complex => json!([z.re, z.im]),
    }
}

pub fn matrix_to_json(m: &Matrix, field: Field) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| entry_to_json(m[(i, j)], field)).collect()))
            .collect(),
    )
}

fn number(v: &Value, path: &str) -> Result<f64, FormatError> {
    v.as_f64().ok_or_else(|| schema(path, "expected a number"))
}

fn entry_from_json(v: &Value, field: Field, path: &str) -> Result<Complex64, FormatError> {
    match (field, v) {
        (_, Value::Number(_)) => Ok(Complex64::new(number(v, path)?, 0.0)),
        (Field::Complex, Value::Array(pair)) if pair.len() == 2 => Ok(Complex64::new(
            number(&pair[0], &format!("{path}[0]"))?,
            number(&pair[1], &format!("{path}[1]"))?,
        )),
        (Field::Complex, _) => Err(schema(path, "expected a number or an [re, im] pair")),
        (Field::Real, _) => Err(schema(path, "expected a number (field is real)")),
    }
}

pub fn matrix_from_json(v: &Value, field: Field, path: &str) -> Result<Matrix, FormatError> {
    let rows = v.as_array().ok_or_else(|| schema(path, "expected an array of rows"))?;
    if rows.is_empty() {
        return Err(schema(path, "matrix must have at least one row"));
    }
    let mut cols = None;
    let mut entries = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let rpath = format!("{path}[{i}]");
        let row = row.as_array().ok_or_else(|| schema(&rpath, "expected a row array"))?;
        match cols {
            None if row.is_empty() => return Err(schema(&rpath, "matrix must have at least one column")),
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(schema(&rpath, format!("row has {} entries, expected {c}", row.len())))
            }
            _ => {}
        }
        for (j, e) in row.iter().enumerate() {
            entries.push(entry_from_json(e, field, &format!("{rpath}[{j}]"))?);
        }
    }
    Ok(Matrix::from_row_slice(rows.len(), cols.expect("at least one row"), &entries))
}

fn str_field<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a str, FormatError> {
    obj.get(key)
        .ok_or_else(|| schema(path, format!("missing field \"{key}\"")))?
        .as_str()
        .ok_or_else(|| schema(&format!("{path}.{key}"), "expected a string"))
}

pub fn problem_to_json(p: &ProblemSpec) -> Value {
    let field = p.field();
    let mut op = Map::new();
    op.insert("kind".into(), json!(p.op().kind().as_str()));
    if let Some(u) = p.op().u() {
        op.insert("U".into(), matrix_to_json(u, field));
    }
    json!({
        "field": field.as_str(),
        "sign": p.sign().as_str(),
        "operator": Value::Object(op),
        "A": matrix_to_json(p.a(), field),
        "Q": matrix_to_json(p.q(), field),
    })
}

pub fn write_problem(p: &ProblemSpec) -> String {
    let mut s = serde_json::to_string_pretty(&problem_to_json(p)).expect("JSON values always serialize");
    s.push('\n');
    s
}

pub fn problem_from_json(v: &Value) -> Result<ProblemSpec, FormatError> {
    let obj = v.as_object().ok_or_else(|| schema("$", "expected an object"))?;
    let field = match str_field(obj, "field", "$")? {
        "real" => Field::Real,
        "complex" => Field::Complex,
        other => return Err(schema("$.field", format!("expected \"real\" or \"complex\", got \"{other}\""))),
    };
    let sign = match str_field(obj, "sign", "$")? {
        "plus" => Sign::Plus,
        "minus" => Sign::Minus,
        other => return Err(schema("$.sign", format!("expected \"plus\" or \"minus\", got \"{other}\""))),
    };
    let op_obj = obj
        .get("operator")
        .ok_or_else(|| schema("$", "missing field \"operator\""))?
        .as_object()
        .ok_or_else(|| schema("$.operator", "expected an object"))?;
    let kind_str = str_field(op_obj, "kind", "$.operator")?;
    let kind = OperatorKind::parse(kind_str).ok_or_else(|| {
        schema(
            "$.operator.kind",
            format!("unknown operator \"{kind_str}\" (expected identity, transpose, conjugate or involutory_similarity)"),
        )
    })?;
    let u = match op_obj.get("U") {
        Some(u) => Some(matrix_from_json(u, field, "$.operator.U")?),
        None => None,
    };
    if u.is_some() && kind != OperatorKind::InvolutorySimilarity {
        return Err(schema("$.operator.U", "only involutory_similarity takes a U matrix"));
    }
    let op = MatrixOperator::from_kind(kind, u).map_err(|e| schema("$.operator", e.to_string()))?;
    let a = matrix_from_json(obj.get("A").ok_or_else(|| schema("$", "missing field \"A\""))?, field, "$.A")?;
    let q = matrix_from_json(obj.get("Q").ok_or_else(|| schema("$", "missing field \"Q\""))?, field, "$.Q")?;
    Ok(ProblemSpec::new(sign, a, q, op, field)?)
}

pub fn parse_problem(text: &str) -> Result<ProblemSpec, FormatError> {
    let v: Value = serde_json::from_str(text).map_err(|e| FormatError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    problem_from_json(&v)
}

fn opt_num(x: Option<f64>) -> Value {
    match x {
        Some(v) if v.is_finite() => json!(v),
        _ => Value::Null,
    }
}

pub fn diagnostics_to_json(d: &DiagnosticsReport) -> Value {
    let checks: Map<String, Value> = d.identity_checks.iter().map(|(k, v)| (k.clone(), opt_num(Some(*v)))).collect();
    json!({
        "rho_T1": opt_num(d.rho_t1),
        "rho_S1": opt_num(d.rho_s1),
        "rho_T1S1H": opt_num(d.rho_t1s1h),
        "critical": d.critical,
        "nullity_XM_minus_YM": d.nullity_xm_minus_ym,
        "unit_eigenvalue_multiplicity": d.unit_multiplicity,
        "measured_rate": opt_num(d.measured_rate),
        "psi": {
            "min_eig": opt_num(Some(d.psi.min_eig)),
            "regular": d.psi.regular,
            "samples": d.psi.samples,
            "heuristic": true,
        },
        "identity_checks": Value::Object(checks),
    })
}

pub fn result_to_json(p: &ProblemSpec, res: &SolveResult, diagnostics: Option<&DiagnosticsReport>) -> Value {
    let field = p.field();
    json!({
        "status": res.status.as_str(),
        "algorithm": res.algorithm.name(),
        "iterations": res.iterations,
        "effective_index": res.effective_index,
        "residual": opt_num(Some(res.final_residual)),
        "X": matrix_to_json(&res.x_m, field),
        "Y": matrix_to_json(&res.y_m, field),
        "diagnostics": diagnostics.map_or(Value::Null, diagnostics_to_json),
        "warnings": res.warnings,
        "message": res.message,
    })
}

pub fn write_result(p: &ProblemSpec, res: &SolveResult, diagnostics: Option<&DiagnosticsReport>) -> String {
    let mut s = serde_json::to_string_pretty(&result_to_json(p, res, diagnostics)).expect("JSON values always serialize");
    s.push('\n');
    s
}

pub const HISTORY_HEADER: &str = "iter,effective_index,normA,deltaQ,residual";

pub fn history_csv(history: &[HistoryEntry]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for h in history {
        out.push_str(&format!("{},{},{:e},{:e},{:e}\n", h.iter, h.effective_index, h.norm_a, h.delta_q, h.residual));
    }
    out
}
