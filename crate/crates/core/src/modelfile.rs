//! JSON model files.
//!
//! ```json
//! { "kind": "qbd",
//!   "blocks": { "B1": [[-1]], "B0": [[1]], "B2": [[2]],
//!               "A0": [[1]], "A1": [[-3]], "A2": [[2]] } }
//! ```
//!
//! Generic kinds (`qbd`, `ldqbd`, `gim1`, `mg1`) carry `blocks`; model kinds
//! (`retrial`, `mnmn1`, `vacation`, `repairable`, `supermarket`) carry
//! `params`. `horizon` and `tol` are optional overrides. Unknown fields are
//! rejected and every diagnostic names the offending field path.

use std::fmt;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use crate::ldqbd::{LdQbdModel, LevelBlocks};
use crate::matkernel::Mat;
use crate::models::{RepairableParams, RetrialParams, VacationParams};
use crate::qbd::QbdModel;
use crate::skipfree::SkipFreeModel;

/// Parse or validation failure with the field path (or line/column) at fault.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for ParseError {}

fn err(path: impl Into<String>, message: impl Into<String>) -> ParseError {
    ParseError {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Qbd,
    Ldqbd,
    Gim1,
    Mg1,
    Retrial,
    Mnmn1,
    Vacation,
    Repairable,
    Supermarket,
}

impl Kind {
    pub fn label(self) -> &'static str {
        match self {
            Kind::Qbd => "qbd",
            Kind::Ldqbd => "ldqbd",
            Kind::Gim1 => "gim1",
            Kind::Mg1 => "mg1",
            Kind::Retrial => "retrial",
            Kind::Mnmn1 => "mnmn1",
            Kind::Vacation => "vacation",
            Kind::Repairable => "repairable",
            Kind::Supermarket => "supermarket",
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope {
    kind: Kind,
    blocks: Option<Value>,
    params: Option<Value>,
    horizon: Option<usize>,
    tol: Option<f64>,
}

type RawMat = Vec<Vec<f64>>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct QbdBlocks {
    B1: RawMat,
    B0: RawMat,
    B2: RawMat,
    A0: RawMat,
    A1: RawMat,
    A2: RawMat,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct LdLevel {
    A0: RawMat,
    A1: RawMat,
    A2: Option<RawMat>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LdBlocks {
    levels: Vec<LdLevel>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct SkipBlocks {
    B: Vec<RawMat>,
    A: Vec<RawMat>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RetrialFile {
    lambda: f64,
    mu: f64,
    theta: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MnMn1File {
    lambda: Vec<f64>,
    mu: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VacationFile {
    lambda: f64,
    theta: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RepairableFile {
    lambda: f64,
    mu: f64,
    alpha: f64,
    beta: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SupermarketFile {
    rho: f64,
    d: u32,
}

/// Birth rates `λ_0, λ_1, …` and death rates `μ_1, μ_2, …`; the last entry of
/// each list repeats forever.
#[derive(Debug, Clone, PartialEq)]
pub struct RateLists {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

impl RateLists {
    pub fn lambda_at(&self, n: usize) -> f64 {
        self.lambda[n.min(self.lambda.len() - 1)]
    }

    /// `μ_n` for `n ≥ 1`.
    pub fn mu_at(&self, n: usize) -> f64 {
        self.mu[(n.max(1) - 1).min(self.mu.len() - 1)]
    }
}

#[derive(Debug, Clone)]
pub enum ModelSpec {
    Qbd(QbdModel),
    LdQbd(LdQbdModel),
    Gim1(SkipFreeModel),
    Mg1(SkipFreeModel),
    Retrial(RetrialParams),
    MnMn1(RateLists),
    Vacation(VacationParams),
    Repairable(RepairableParams),
    Supermarket { rho: f64, d: u32 },
}

#[derive(Debug, Clone)]
pub struct ModelFile {
    pub kind: Kind,
    pub spec: ModelSpec,
    pub horizon: Option<usize>,
    pub tol: Option<f64>,
}

fn typed<T: DeserializeOwned>(value: Value, prefix: &str) -> Result<T, ParseError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." {
            prefix.to_string()
        } else {
            format!("{prefix}.{inner}")
        };
        err(path, e.into_inner().to_string())
    })
}

fn matrix(raw: &RawMat, path: &str) -> Result<Mat, ParseError> {
    if raw.is_empty() {
        return Err(err(path, "matrix has no rows"));
    }
    let cols = raw[0].len();
    if cols == 0 {
        return Err(err(format!("{path}[0]"), "row is empty"));
    }
    for (i, row) in raw.iter().enumerate() {
        if row.len() != cols {
            return Err(err(
                format!("{path}[{i}]"),
                format!("row has {} entries, expected {cols}", row.len()),
            ));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(err(format!("{path}[{i}][{j}]"), "entry is not finite"));
        }
    }
    Ok(Mat::from_rows(raw))
}

fn finite(v: f64, path: &str) -> Result<f64, ParseError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(err(path, "value is not finite"))
    }
}

fn required(v: Option<Value>, field: &str, kind: Kind) -> Result<Value, ParseError> {
    v.ok_or_else(|| err(field, format!("required for kind `{}`", kind.label())))
}

fn forbidden(v: &Option<Value>, field: &str, kind: Kind) -> Result<(), ParseError> {
    if v.is_some() {
        Err(err(field, format!("not used by kind `{}`", kind.label())))
    } else {
        Ok(())
    }
}

fn invalid(path: &str) -> impl Fn(crate::Error) -> ParseError + '_ {
    move |e| err(path, e.to_string())
}

pub fn parse_model_file(text: &str) -> Result<ModelFile, ParseError> {
    let value: Value = serde_json::from_str(text).map_err(|e| {
        err(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    let env: Envelope = typed(value, "$")?;
    if let Some(t) = env.tol {
        if !(t.is_finite() && t > 0.0) {
            return Err(err("tol", "must be a positive number"));
        }
    }
    let kind = env.kind;
    let generic = matches!(kind, Kind::Qbd | Kind::Ldqbd | Kind::Gim1 | Kind::Mg1);
    if generic {
        forbidden(&env.params, "params", kind)?;
    } else {
        forbidden(&env.blocks, "blocks", kind)?;
    }

    let spec = match kind {
        Kind::Qbd => {
            let b: QbdBlocks = typed(required(env.blocks, "blocks", kind)?, "blocks")?;
            QbdModel::new(
                matrix(&b.B1, "blocks.B1")?,
                matrix(&b.B0, "blocks.B0")?,
                matrix(&b.B2, "blocks.B2")?,
                matrix(&b.A0, "blocks.A0")?,
                matrix(&b.A1, "blocks.A1")?,
                matrix(&b.A2, "blocks.A2")?,
            )
            .map(ModelSpec::Qbd)
            .map_err(invalid("blocks"))?
        }
        Kind::Ldqbd => {
            let b: LdBlocks = typed(required(env.blocks, "blocks", kind)?, "blocks")?;
            let mut levels = Vec::with_capacity(b.levels.len());
            for (k, lv) in b.levels.iter().enumerate() {
                let p = format!("blocks.levels[{k}]");
                let a0 = matrix(&lv.A0, &format!("{p}.A0"))?;
                let a1 = matrix(&lv.A1, &format!("{p}.A1"))?;
                let a2 = match (&lv.A2, k) {
                    (None, 0) => Mat::zeros(a1.rows(), 0),
                    (Some(_), 0) => {
                        return Err(err(format!("{p}.A2"), "level 0 has no down block"))
                    }
                    (Some(raw), _) => matrix(raw, &format!("{p}.A2"))?,
                    (None, _) => return Err(err(format!("{p}.A2"), "missing down block")),
                };
                levels.push(LevelBlocks { a0, a1, a2 });
            }
            let horizon = env
                .horizon
                .unwrap_or_else(|| levels.len().saturating_sub(1).max(2));
            LdQbdModel::from_table(levels, horizon)
                .map(ModelSpec::LdQbd)
                .map_err(invalid("blocks"))?
        }
        Kind::Gim1 | Kind::Mg1 => {
            let b: SkipBlocks = typed(required(env.blocks, "blocks", kind)?, "blocks")?;
            let bs =
                b.B.iter()
                    .enumerate()
                    .map(|(k, m)| matrix(m, &format!("blocks.B[{k}]")))
                    .collect::<Result<Vec<_>, _>>()?;
            let as_ =
                b.A.iter()
                    .enumerate()
                    .map(|(k, m)| matrix(m, &format!("blocks.A[{k}]")))
                    .collect::<Result<Vec<_>, _>>()?;
            if kind == Kind::Gim1 {
                SkipFreeModel::gim1(bs, as_)
                    .map(ModelSpec::Gim1)
                    .map_err(invalid("blocks"))?
            } else {
                SkipFreeModel::mg1(bs, as_)
                    .map(ModelSpec::Mg1)
                    .map_err(invalid("blocks"))?
            }
        }
        Kind::Retrial => {
            let p: RetrialFile = typed(required(env.params, "params", kind)?, "params")?;
            let p = RetrialParams {
                lambda: finite(p.lambda, "params.lambda")?,
                mu: finite(p.mu, "params.mu")?,
                theta: finite(p.theta, "params.theta")?,
            };
            p.validate().map_err(invalid("params"))?;
            ModelSpec::Retrial(p)
        }
        Kind::Mnmn1 => {
            let p: MnMn1File = typed(required(env.params, "params", kind)?, "params")?;
            if p.lambda.is_empty() {
                return Err(err("params.lambda", "needs at least one rate"));
            }
            if p.mu.is_empty() {
                return Err(err("params.mu", "needs at least one rate"));
            }
            for (i, v) in p.lambda.iter().enumerate() {
                if !(v.is_finite() && *v >= 0.0) {
                    return Err(err(
                        format!("params.lambda[{i}]"),
                        "must be a nonnegative rate",
                    ));
                }
            }
            for (i, v) in p.mu.iter().enumerate() {
                if !(v.is_finite() && *v > 0.0) {
                    return Err(err(format!("params.mu[{i}]"), "must be a positive rate"));
                }
            }
            ModelSpec::MnMn1(RateLists {
                lambda: p.lambda,
                mu: p.mu,
            })
        }
        Kind::Vacation => {
            let p: VacationFile = typed(required(env.params, "params", kind)?, "params")?;
            let p = VacationParams {
                lambda: finite(p.lambda, "params.lambda")?,
                theta: finite(p.theta, "params.theta")?,
            };
            p.validate().map_err(invalid("params"))?;
            ModelSpec::Vacation(p)
        }
        Kind::Repairable => {
            let p: RepairableFile = typed(required(env.params, "params", kind)?, "params")?;
            let p = RepairableParams {
                lambda: finite(p.lambda, "params.lambda")?,
                mu: finite(p.mu, "params.mu")?,
                alpha: finite(p.alpha, "params.alpha")?,
                beta: finite(p.beta, "params.beta")?,
            };
            p.validate().map_err(invalid("params"))?;
            ModelSpec::Repairable(p)
        }
        Kind::Supermarket => {
            let p: SupermarketFile = typed(required(env.params, "params", kind)?, "params")?;
            let rho = finite(p.rho, "params.rho")?;
            if !(rho > 0.0 && rho < 1.0) {
                return Err(err("params.rho", "must lie in (0, 1)"));
            }
            if p.d < 1 {
                return Err(err("params.d", "must be at least 1"));
            }
            ModelSpec::Supermarket { rho, d: p.d }
        }
    };
    Ok(ModelFile {
        kind,
        spec,
        horizon: env.horizon,
        tol: env.tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MM1: &str = r#"{"kind":"qbd","blocks":{"B1":[[-1]],"B0":[[1]],"B2":[[2]],"A0":[[1]],"A1":[[-3]],"A2":[[2]]}}"#;

    #[test]
    fn parses_qbd() {
        let f = parse_model_file(MM1).unwrap();
        assert_eq!(f.kind, Kind::Qbd);
        assert!(matches!(f.spec, ModelSpec::Qbd(_)));
    }

    #[test]
    fn ragged_matrix_names_the_row() {
        let text = r#"{"kind":"qbd","blocks":{"B1":[[-1]],"B0":[[1]],"B2":[[2]],"A0":[[1]],"A1":[[-3],[1,2]],"A2":[[2]]}}"#;
        let e = parse_model_file(text).unwrap_err();
        assert_eq!(e.path, "blocks.A1[1]");
    }

    #[test]
    fn unknown_field_rejected() {
        let e = parse_model_file(r#"{"kind":"vacation","params":{"lambda":0.5,"theta":1,"mu":1}}"#)
            .unwrap_err();
        assert_eq!(e.path, "params.mu");
        assert!(e.message.contains("unknown field"), "{}", e.message);
        let e =
            parse_model_file(r#"{"kind":"vacation","params":{"lambda":0.5,"theta":1},"extra":1}"#)
                .unwrap_err();
        assert!(e.message.contains("unknown field"));
    }

    #[test]
    fn wrong_type_has_path() {
        let e = parse_model_file(r#"{"kind":"retrial","params":{"lambda":"x","mu":1,"theta":1}}"#)
            .unwrap_err();
        assert_eq!(e.path, "params.lambda");
    }

    #[test]
    fn syntax_error_has_position() {
        let e = parse_model_file("{\"kind\":\n  qbd}").unwrap_err();
        assert!(e.path.starts_with("line 2"), "{}", e.path);
    }

    #[test]
    fn non_generator_rejected() {
        let text = MM1.replace("[[-3]]", "[[-2.5]]");
        let e = parse_model_file(&text).unwrap_err();
        assert_eq!(e.path, "blocks");
    }
}
