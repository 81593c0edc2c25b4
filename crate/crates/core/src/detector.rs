//! Black-box detector scoring over a file-based JSONL protocol.
//!
//! The harness writes a batch file with one `{"frame_id": ..., "path": ...}`
//! object per line and runs the detector command with `{batch_file}`
//! substituted. The detector prints one `{"frame_id": ..., "score": ...}`
//! line per frame on stdout and exits 0. Scores are P(fake) in `[0, 1]`;
//! adapters around detectors that emit P(real) must invert them.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buffer::ImageBuffer;
use crate::external::Invocation;
use crate::operators::kernel::reflect101;
use crate::process::{count_placeholder, fill_template, run_shell, shell_quote, ProcessError};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("invalid detector `{name}`: {reason}")]
    InvalidSpec { name: String, reason: String },
    #[error("invalid batch: {0}")]
    InvalidBatch(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error("detector `{name}` exited with status {code:?}: {diagnostics}")]
    Failed { name: String, code: Option<i32>, diagnostics: String },
    #[error("detector output line {line}: {message}")]
    Unparseable { line: usize, message: String },
    #[error("detector output line {line}: frame `{frame_id}` was not in the batch")]
    UnknownFrame { line: usize, frame_id: String },
    #[error("detector output line {line}: duplicate score for frame `{frame_id}`")]
    Duplicate { line: usize, frame_id: String },
    #[error("detector output line {line}: score {score} for frame `{frame_id}` is outside [0, 1]")]
    OutOfRange { line: usize, frame_id: String, score: f64 },
    #[error("detector returned {got} scores for {expected} frames; missing: [{}]", .missing.join(", "))]
    Missing { expected: usize, got: usize, missing: Vec<String> },
    #[error("cannot score frame `{frame_id}`: {message}")]
    Frame { frame_id: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub frame_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchItem {
    pub frame_id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub name: String,
    pub command_template: String,
    pub timeout: Duration,
}

impl DetectorSpec {
    pub fn new(name: impl Into<String>, command_template: impl Into<String>, timeout: Duration) -> Result<Self, DetectorError> {
        let spec = Self { name: name.into(), command_template: command_template.into(), timeout };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        let n = count_placeholder(&self.command_template, "batch_file");
        if n != 1 {
            return Err(DetectorError::InvalidSpec {
                name: self.name.clone(),
                reason: format!("template must contain {{batch_file}} exactly once (found {n})"),
            });
        }
        if self.timeout.is_zero() {
            return Err(DetectorError::InvalidSpec { name: self.name.clone(), reason: "timeout must be positive".into() });
        }
        Ok(())
    }
}

pub fn write_batch(path: &Path, batch: &[BatchItem]) -> Result<(), DetectorError> {
    let mut text = String::new();
    for item in batch {
        text.push_str(&serde_json::to_string(item).expect("batch items serialize"));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|source| DetectorError::Io { context: format!("writing {}", path.display()), source })
}

pub fn read_batch(path: &Path) -> Result<Vec<BatchItem>, DetectorError> {
    let file = std::fs::File::open(path)
        .map_err(|source| DetectorError::Io { context: format!("opening {}", path.display()), source })?;
    let mut items = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DetectorError::Io { context: format!("reading {}", path.display()), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let item: BatchItem = serde_json::from_str(&line)
            .map_err(|e| DetectorError::InvalidBatch(format!("line {}: {e}", i + 1)))?;
        items.push(item);
    }
    Ok(items)
}

/// Validates detector stdout against the batch and returns scores in batch order.
pub fn parse_scores(stdout: &str, batch: &[BatchItem]) -> Result<Vec<ScoreRecord>, DetectorError> {
    let wanted: HashSet<&str> = batch.iter().map(|b| b.frame_id.as_str()).collect();
    let mut scores: HashMap<String, f64> = HashMap::with_capacity(batch.len());
    for (i, line) in stdout.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: ScoreRecord = serde_json::from_str(line)
            .map_err(|e| DetectorError::Unparseable { line: line_no, message: e.to_string() })?;
        if !wanted.contains(record.frame_id.as_str()) {
            return Err(DetectorError::UnknownFrame { line: line_no, frame_id: record.frame_id });
        }
        if !(0.0..=1.0).contains(&record.score) {
            return Err(DetectorError::OutOfRange { line: line_no, frame_id: record.frame_id, score: record.score });
        }
        if scores.insert(record.frame_id.clone(), record.score).is_some() {
            return Err(DetectorError::Duplicate { line: line_no, frame_id: record.frame_id });
        }
    }
    let missing: Vec<String> = batch
        .iter()
        .filter(|b| !scores.contains_key(&b.frame_id))
        .map(|b| b.frame_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(DetectorError::Missing { expected: batch.len(), got: scores.len(), missing });
    }
    Ok(batch
        .iter()
        .map(|b| ScoreRecord { frame_id: b.frame_id.clone(), score: scores[&b.frame_id] })
        .collect())
}

pub fn run_detector(spec: &DetectorSpec, batch: &[BatchItem]) -> Result<Vec<ScoreRecord>, DetectorError> {
    run_detector_logged(spec, batch, &mut Vec::new())
}

pub fn run_detector_logged(
    spec: &DetectorSpec,
    batch: &[BatchItem],
    log: &mut Vec<Invocation>,
) -> Result<Vec<ScoreRecord>, DetectorError> {
    spec.validate()?;
    let mut seen = HashSet::with_capacity(batch.len());
    if let Some(dup) = batch.iter().find(|b| !seen.insert(b.frame_id.as_str())) {
        return Err(DetectorError::InvalidBatch(format!("duplicate frame_id `{}`", dup.frame_id)));
    }
    let dir = tempfile::tempdir().map_err(|source| DetectorError::Io { context: "creating batch dir".into(), source })?;
    let batch_file = dir.path().join("batch.jsonl");
    write_batch(&batch_file, batch)?;

    let command = fill_template(&spec.command_template, &[("batch_file", shell_quote(&batch_file.to_string_lossy()))]);
    let started = Instant::now();
    let output = run_shell(&command, spec.timeout, None)?;
    log.push(Invocation {
        command: output.command.clone(),
        exit_code: output.code(),
        elapsed_ms: started.elapsed().as_millis(),
        stderr: output.log_text(),
    });
    if !output.success() {
        return Err(DetectorError::Failed { name: spec.name.clone(), code: output.code(), diagnostics: output.diagnostics() });
    }
    let stdout = String::from_utf8(output.stdout)
        .map_err(|e| DetectorError::Unparseable { line: 0, message: format!("stdout is not UTF-8: {e}") })?;
    parse_scores(&stdout, batch)
}

pub const MOCK_SLOPE: f64 = 25.0;
pub const MOCK_BIAS: f64 = -2.0;

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Mean absolute response of the 4-neighbour 3×3 Laplacian over BT.601 luma,
/// with reflect-101 borders.
pub fn high_frequency_energy(img: &ImageBuffer) -> f64 {
    let (w, h) = (img.width(), img.height());
    let luma: Vec<f64> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| {
            0.299 * f64::from(img.get(x, y, 0)) + 0.587 * f64::from(img.get(x, y, 1)) + 0.114 * f64::from(img.get(x, y, 2))
        })
        .collect();
    let at = |x: isize, y: isize| luma[reflect101(y, h) * w + reflect101(x, w)];
    let mut total = 0.0;
    for y in 0..h as isize {
        for x in 0..w as isize {
            let lap = at(x - 1, y) + at(x + 1, y) + at(x, y - 1) + at(x, y + 1) - 4.0 * at(x, y);
            total += lap.abs();
        }
    }
    total / (w * h) as f64
}

/// Deterministic stand-in detector: `logistic(25·E − 2)` where `E` is
/// [`high_frequency_energy`]. Busy, high-frequency frames read as fake.
pub fn mock_score(img: &ImageBuffer) -> f64 {
    logistic(MOCK_SLOPE * high_frequency_energy(img) + MOCK_BIAS)
}

/// Implements the detector protocol with [`mock_score`]: reads a batch file,
/// writes one score line per frame.
pub fn serve_mock_batch(batch_file: &Path, out: &mut impl Write) -> Result<usize, DetectorError> {
    let batch = read_batch(batch_file)?;
    for item in &batch {
        let img = ImageBuffer::read(&item.path)
            .map_err(|e| DetectorError::Frame { frame_id: item.frame_id.clone(), message: e.to_string() })?;
        let record = ScoreRecord { frame_id: item.frame_id.clone(), score: mock_score(&img) };
        writeln!(out, "{}", serde_json::to_string(&record).expect("scores serialize"))
            .map_err(|source| DetectorError::Io { context: "writing scores".into(), source })?;
    }
    Ok(batch.len())
}
