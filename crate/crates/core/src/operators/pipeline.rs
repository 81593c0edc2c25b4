//! Textual pipeline language.
//!
//! ```text
//! pipeline := stage ('|' stage)*
//! stage    := name (':' key '=' value (',' key '=' value)*)?
//! ```
//!
//! Whitespace around tokens is ignored. `Display` produces the canonical
//! form, which parses back to an equal [`PipelineSpec`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::{OpError, Operator};
use crate::buffer::ImageBuffer;
use crate::seed::stage_rng;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StageError {
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("{0}")]
    Syntax(String),
    #[error("missing parameter `{0}`")]
    MissingParam(&'static str),
    #[error("unexpected parameter `{0}`")]
    UnexpectedParam(String),
    #[error("parameter `{0}` given more than once")]
    DuplicateParam(String),
    #[error("parameter `{key}`={value}: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error("empty pipeline")]
    Empty,
    #[error("stage {index} (`{text}`): {error}")]
    Stage { index: usize, text: String, error: StageError },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("stage {stage} ({operator}): {source}")]
pub struct PipelineRunError {
    pub stage: usize,
    pub operator: String,
    #[source]
    pub source: OpError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSpec {
    stages: Vec<Operator>,
}

impl PipelineSpec {
    pub fn new(stages: Vec<Operator>) -> Result<Self, PipelineError> {
        if stages.is_empty() {
            return Err(PipelineError::Empty);
        }
        Ok(Self { stages })
    }

    pub fn identity() -> Self {
        Self { stages: vec![Operator::Identity] }
    }

    pub fn stages(&self) -> &[Operator] {
        &self.stages
    }

    pub fn is_identity(&self) -> bool {
        self.stages.iter().all(|s| *s == Operator::Identity)
    }

    pub fn is_stochastic(&self) -> bool {
        self.stages.iter().any(Operator::is_stochastic)
    }

    /// Stage list of `self` followed by `other`.
    pub fn then(&self, other: &PipelineSpec) -> PipelineSpec {
        let mut stages = self.stages.clone();
        stages.extend(other.stages.iter().cloned());
        PipelineSpec { stages }
    }
}

impl fmt::Display for PipelineSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, stage) in self.stages.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write!(f, "{stage}")?;
        }
        Ok(())
    }
}

impl FromStr for PipelineSpec {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_pipeline(s)
    }
}

#[derive(Clone, Copy)]
enum Kind {
    /// Integer-valued, with an inclusive lower bound.
    Int { min: i64, max: Option<i64>, odd: bool },
    /// Finite real with an optional strict or non-strict lower bound.
    Real { min: Option<f64>, strict: bool },
}

struct Param {
    key: &'static str,
    kind: Kind,
    default: Option<f64>,
}

const fn required(key: &'static str, kind: Kind) -> Param {
    Param { key, kind, default: None }
}

const KS: Param = required("ks", Kind::Int { min: 1, max: None, odd: true });

fn schema(name: &str) -> Option<&'static [Param]> {
    const JPEG: &[Param] = &[required("quality", Kind::Int { min: 1, max: Some(100), odd: false })];
    const BLUR: &[Param] = &[KS];
    const NOISE: &[Param] = &[
        Param { key: "mean", kind: Kind::Real { min: None, strict: false }, default: Some(0.0) },
        required("var", Kind::Real { min: Some(0.0), strict: false }),
    ];
    const GAMMA: &[Param] = &[required("g", Kind::Real { min: Some(0.0), strict: true })];
    const RESIZE: &[Param] = &[required("scale", Kind::Real { min: Some(0.0), strict: true })];
    Some(match name {
        "identity" => &[],
        "jpeg" => JPEG,
        "gblur" | "meanblur" | "medianblur" => BLUR,
        "gnoise" => NOISE,
        "gamma" => GAMMA,
        "resize" => RESIZE,
        _ => return None,
    })
}

fn check_value(param: &Param, raw: &str) -> Result<f64, StageError> {
    let invalid = |reason: String| StageError::InvalidValue { key: param.key.into(), value: raw.into(), reason };
    let value: f64 = raw.parse().map_err(|_| invalid("not a number".into()))?;
    if !value.is_finite() {
        return Err(invalid("must be finite".into()));
    }
    match param.kind {
        Kind::Int { min, max, odd } => {
            if value.fract() != 0.0 {
                return Err(invalid("must be an integer".into()));
            }
            if value < min as f64 || max.is_some_and(|m| value > m as f64) {
                let range = match max {
                    Some(m) => format!("[{min}, {m}]"),
                    None => format!(">= {min}"),
                };
                return Err(invalid(format!("must be in {range}")));
            }
            if odd && value % 2.0 == 0.0 {
                return Err(invalid("must be odd".into()));
            }
        }
        Kind::Real { min: Some(min), strict } => {
            if (strict && value <= min) || (!strict && value < min) {
                let op = if strict { ">" } else { ">=" };
                return Err(invalid(format!("must be {op} {min}")));
            }
        }
        Kind::Real { min: None, .. } => {}
    }
    Ok(value)
}

fn build(name: &str, v: &BTreeMap<&'static str, f64>) -> Operator {
    match name {
        "identity" => Operator::Identity,
        "jpeg" => Operator::Jpeg { quality: v["quality"] as u32 },
        "gblur" => Operator::GaussianBlur { ks: v["ks"] as usize },
        "meanblur" => Operator::MeanBlur { ks: v["ks"] as usize },
        "medianblur" => Operator::MedianBlur { ks: v["ks"] as usize },
        "gnoise" => Operator::GaussianNoise { mean: v["mean"], var: v["var"] },
        "gamma" => Operator::Gamma { g: v["g"] },
        "resize" => Operator::Resize { scale: v["scale"] },
        _ => unreachable!("schema lookup precedes build"),
    }
}

fn parse_stage(text: &str) -> Result<Operator, StageError> {
    let (name, args) = match text.split_once(':') {
        Some((name, args)) => (name.trim(), Some(args)),
        None => (text.trim(), None),
    };
    if name.is_empty() {
        return Err(StageError::Syntax("missing operator name".into()));
    }
    let schema = schema(name).ok_or_else(|| StageError::UnknownOperator(name.into()))?;

    let mut given: BTreeMap<&str, &str> = BTreeMap::new();
    if let Some(args) = args {
        for pair in args.split(',') {
            let (key, value) = pair
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| StageError::Syntax(format!("expected key=value, found `{}`", pair.trim())))?;
            if key.is_empty() || value.is_empty() {
                return Err(StageError::Syntax(format!("expected key=value, found `{}`", pair.trim())));
            }
            if given.insert(key, value).is_some() {
                return Err(StageError::DuplicateParam(key.into()));
            }
        }
    }
    if let Some(extra) = given.keys().find(|k| !schema.iter().any(|p| p.key == **k)) {
        return Err(StageError::UnexpectedParam((*extra).into()));
    }

    let mut values = BTreeMap::new();
    for param in schema {
        let value = match (given.get(param.key), param.default) {
            (Some(raw), _) => check_value(param, raw)?,
            (None, Some(default)) => default,
            (None, None) => return Err(StageError::MissingParam(param.key)),
        };
        values.insert(param.key, value);
    }
    Ok(build(name, &values))
}

pub fn parse_pipeline(text: &str) -> Result<PipelineSpec, PipelineError> {
    if text.trim().is_empty() {
        return Err(PipelineError::Empty);
    }
    let stages = text
        .split('|')
        .enumerate()
        .map(|(index, raw)| {
            parse_stage(raw).map_err(|error| PipelineError::Stage { index, text: raw.trim().into(), error })
        })
        .collect::<Result<Vec<_>, _>>()?;
    PipelineSpec::new(stages)
}

/// Applies stages left to right. Stage `i` of a stochastic operator draws
/// from the stream keyed by `(seed, frame_id, i)`.
pub fn apply_pipeline(
    spec: &PipelineSpec,
    img: &ImageBuffer,
    seed: u64,
    frame_id: &str,
) -> Result<ImageBuffer, PipelineRunError> {
    let mut current = img.clone();
    for (i, stage) in spec.stages.iter().enumerate() {
        current = stage
            .apply(&current, || stage_rng(seed, frame_id, i))
            .map_err(|source| PipelineRunError { stage: i, operator: stage.to_string(), source })?;
    }
    Ok(current)
}
