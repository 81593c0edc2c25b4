//! Experiment orchestration: corpus preparation, cached perturbation,
//! detector scoring, evaluation, and run artifacts.
//!
//! Per-frame operator work runs on a rayon pool and communicates only through
//! the cache directory. Video and external operations run one subprocess at a
//! time. Aggregation and report writing are single-threaded.
//!
//! Run directory layout:
//!
//! ```text
//! <out>/run.json                     metadata, corpus digest, versions, failures
//! <out>/config.toml                  the config as loaded
//! <out>/run.log                      every external invocation and failure
//! <out>/perturbed/<op>.jsonl         frame paths per operation (batch format)
//! <out>/<detector>/scores/<op>.jsonl {"frame_id","label","score"} per frame
//! <out>/<detector>/report.{csv,md,json}
//! <out>/<detector>/families.csv     pristine vs each manipulation family
//! <out>/<detector>/series_<family>.csv
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::buffer::ImageBuffer;
use crate::config::{ConfigError, ExperimentConfig, OperationConfig, OperationKind, BENCH_PLACEHOLDER};
use crate::corpus::{load_frame, load_manifest, select_frames, validate_corpus, CorpusError, Manifest, ValidationReport};
use crate::detector::{run_detector_logged, BatchItem, DetectorError, DetectorSpec};
use crate::external::{run_external_operator_logged, video_roundtrip, ExternalOpSpec, FrameSet, Invocation, VideoCodecSpec};
use crate::metrics::{evaluate_run, FrameInfo, LabeledScore, MetricsError};
use crate::operators::{apply_pipeline, PipelineSpec};
use crate::report::{build_table, emit_quality_series, emit_report, family_breakdown_csv, EvalReport, Format, Grouping, OperationInfo, ReportError, RunMetadata};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("corpus failed validation:\n{0}")]
    InvalidCorpus(ValidationReport),
    #[error("detector `{detector}` failed on operation `{operation}`: {source}")]
    Detector {
        detector: String,
        operation: String,
        #[source]
        source: DetectorError,
    },
    #[error("evaluation for detector `{detector}`: {source}")]
    Metrics {
        detector: String,
        #[source]
        source: MetricsError,
    },
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Scores { path: String, message: String },
}

impl RunError {
    /// 1 for configuration and corpus problems, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Corpus(_) | RunError::InvalidCorpus(_) => 1,
            _ => 2,
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> RunError {
    let context = context.into();
    move |source| RunError::Io { context, source }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn put_field(hasher: &mut Sha256, field: &[u8]) {
    hasher.update((field.len() as u64).to_le_bytes());
    hasher.update(field);
}

/// Digest naming a cached perturbed frame. Covers everything that determines
/// its pixels: the frame, the canonical operation text, the master seed, and
/// the content of the source frame.
pub fn cache_key(frame_id: &str, pipeline: &str, seed: u64, source_hash: &str) -> String {
    let mut h = Sha256::new();
    put_field(&mut h, b"perturbench/cache/v1");
    put_field(&mut h, frame_id.as_bytes());
    put_field(&mut h, pipeline.as_bytes());
    h.update(seed.to_le_bytes());
    put_field(&mut h, source_hash.as_bytes());
    hex::encode(h.finalize())
}

/// The selected frames of a validated corpus with their content hashes.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub root: PathBuf,
    pub frames: Manifest,
    /// SHA-256 of each source file, aligned with `frames`.
    pub source_hashes: Vec<String>,
    /// Digest over the selected manifest rows and every source hash.
    pub digest: String,
    pub info: HashMap<String, FrameInfo>,
}

impl PreparedCorpus {
    pub fn load(manifest: &Path, root: &Path, n_per_video: Option<usize>) -> Result<Self, RunError> {
        let full = load_manifest(manifest)?;
        let frames = match n_per_video {
            Some(n) => select_frames(&full, n),
            None => full,
        };
        let report = validate_corpus(&frames, root);
        if !report.is_valid() || frames.is_empty() {
            return Err(RunError::InvalidCorpus(report));
        }
        let root = std::path::absolute(root).unwrap_or_else(|_| root.to_path_buf());
        let source_hashes = frames
            .entries()
            .par_iter()
            .map(|e| {
                let path = root.join(&e.path);
                std::fs::read(&path).map(|b| sha256_hex(&b)).map_err(io_err(format!("reading {}", path.display())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut digest_input = frames.to_csv();
        for h in &source_hashes {
            digest_input.push_str(h);
            digest_input.push('\n');
        }
        let info = frames
            .entries()
            .iter()
            .map(|e| (e.frame_id.clone(), FrameInfo { video_id: e.video_id.clone(), family: e.family }))
            .collect();
        Ok(Self { root, digest: sha256_hex(digest_input.as_bytes()), frames, source_hashes, info })
    }

    pub fn source_path(&self, index: usize) -> PathBuf {
        self.root.join(&self.frames.entries()[index].path)
    }

    fn labeled(&self, frame_id: &str, score: f64) -> LabeledScore {
        let label = self.frames.get(frame_id).expect("scores are checked against the batch").label;
        LabeledScore::new(frame_id, label, score)
    }
}

/// One line of the run log.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Invocation { context: String, invocation: Invocation },
    Failure { operation: String, message: String },
    Note { message: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct OperationFailure {
    pub operation: String,
    pub message: String,
}

/// Perturbed frames of one operation, in corpus order.
#[derive(Debug, Clone)]
pub struct Materialized {
    pub label: String,
    pub frames: Vec<BatchItem>,
}

#[derive(Debug, Clone)]
pub struct DetectorScores {
    pub detector: String,
    pub operations: Vec<(String, Vec<LabeledScore>)>,
}

/// A configured run bound to a prepared corpus, cache, and worker pool.
pub struct Session {
    pub config: ExperimentConfig,
    pub corpus: PreparedCorpus,
    pub cache_dir: PathBuf,
    pool: rayon::ThreadPool,
    log: Vec<LogEvent>,
    failures: Vec<OperationFailure>,
}

impl Session {
    /// Validates the config and the corpus before any work is done.
    pub fn open(config: ExperimentConfig) -> Result<Self, RunError> {
        config.validate()?;
        if let Some(d) = config.detectors.iter().find(|d| d.command_template.contains(BENCH_PLACEHOLDER)) {
            return Err(ConfigError::Invalid(format!("detector `{}`: {BENCH_PLACEHOLDER} was not resolved", d.name)).into());
        }
        let corpus = PreparedCorpus::load(&config.corpus.manifest, &config.corpus.root, config.corpus.n_per_video)?;
        let cache_dir = config.cache_dir.clone().unwrap_or_else(|| config.output_dir.join("cache"));
        let cache_dir = std::path::absolute(&cache_dir).unwrap_or(cache_dir);
        std::fs::create_dir_all(cache_dir.join("frames")).map_err(io_err(format!("creating {}", cache_dir.display())))?;
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = config.workers {
            builder = builder.num_threads(n);
        }
        let pool = builder.build().map_err(|e| ConfigError::Invalid(format!("worker pool: {e}")))?;
        Ok(Self { config, corpus, cache_dir, pool, log: Vec::new(), failures: Vec::new() })
    }

    pub fn log(&self) -> &[LogEvent] {
        &self.log
    }

    pub fn failures(&self) -> &[OperationFailure] {
        &self.failures
    }

    fn cached_path(&self, key: &str) -> PathBuf {
        self.cache_dir.join("frames").join(format!("{key}.png"))
    }

    fn write_cached(&self, path: &Path, img: &ImageBuffer) -> Result<(), String> {
        let dir = path.parent().expect("cache paths have a parent");
        let tmp = tempfile::Builder::new()
            .prefix(".partial-")
            .suffix(".png")
            .tempfile_in(dir)
            .map_err(|e| format!("creating cache file in {}: {e}", dir.display()))?;
        img.write_png(tmp.path()).map_err(|e| e.to_string())?;
        tmp.persist(path).map_err(|e| format!("storing {}: {e}", path.display()))?;
        Ok(())
    }

    /// Produces (or finds cached) frames for every operation. Failures are
    /// recorded and the operation is left out of the result.
    pub fn materialize_all(&mut self) -> Vec<Materialized> {
        let ops = self.config.operations.clone();
        let mut done = Vec::with_capacity(ops.len());
        for op in &ops {
            match self.materialize(op) {
                Ok(frames) => done.push(Materialized { label: op.label.clone(), frames }),
                Err(message) => {
                    self.log.push(LogEvent::Failure { operation: op.label.clone(), message: message.clone() });
                    self.failures.push(OperationFailure { operation: op.label.clone(), message });
                }
            }
        }
        done
    }

    pub fn materialize(&mut self, op: &OperationConfig) -> Result<Vec<BatchItem>, String> {
        match &op.kind {
            OperationKind::Pipeline(spec) => self.materialize_pipeline(spec),
            OperationKind::Video(spec) => self.materialize_video(&op.label, spec),
            OperationKind::External(spec) => self.materialize_external(&op.label, spec),
        }
    }

    fn materialize_pipeline(&self, spec: &PipelineSpec) -> Result<Vec<BatchItem>, String> {
        let entries = self.corpus.frames.entries();
        if spec.is_identity() {
            return Ok(entries
                .iter()
                .enumerate()
                .map(|(i, e)| BatchItem { frame_id: e.frame_id.clone(), path: self.corpus.source_path(i) })
                .collect());
        }
        let canonical = spec.to_string();
        let seed = self.config.seed;
        self.pool.install(|| {
            entries
                .par_iter()
                .enumerate()
                .map(|(i, e)| {
                    let path = self.cached_path(&cache_key(&e.frame_id, &canonical, seed, &self.corpus.source_hashes[i]));
                    if !path.exists() {
                        let img = load_frame(e, &self.corpus.root).map_err(|err| format!("{}: {err}", e.frame_id))?;
                        let out = apply_pipeline(spec, &img, seed, &e.frame_id).map_err(|err| format!("{}: {err}", e.frame_id))?;
                        self.write_cached(&path, &out)?;
                    }
                    Ok(BatchItem { frame_id: e.frame_id.clone(), path })
                })
                .collect()
        })
    }

    /// Stages `indexes` as `000000.png`, `000001.png`, ... and copies
    /// outputs named the same way from `out` into the cache.
    fn stage(&self, indexes: &[usize], dir: &Path) -> Result<FrameSet, String> {
        std::fs::create_dir_all(dir).map_err(|e| format!("creating {}: {e}", dir.display()))?;
        let mut names = Vec::with_capacity(indexes.len());
        for (j, &i) in indexes.iter().enumerate() {
            let name = format!("{j:06}.png");
            let src = self.corpus.source_path(i);
            std::fs::copy(&src, dir.join(&name)).map_err(|e| format!("staging {}: {e}", src.display()))?;
            names.push(name);
        }
        Ok(FrameSet::new(dir, names))
    }

    fn collect(&self, out: &FrameSet, targets: &[PathBuf]) -> Result<(), String> {
        for (path, target) in out.paths().zip(targets) {
            let img = ImageBuffer::read(&path).map_err(|e| e.to_string())?;
            self.write_cached(target, &img)?;
        }
        Ok(())
    }

    fn materialize_video(&mut self, label: &str, spec: &VideoCodecSpec) -> Result<Vec<BatchItem>, String> {
        let transcoder = self.config.transcoder.clone();
        let canonical = format!("{}|encode={}|decode={}", spec.canonical(), transcoder.encode, transcoder.decode);
        let entries = self.corpus.frames.entries();

        let mut videos: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            videos.entry(e.video_id.as_str()).or_default().push(i);
        }
        let mut paths = vec![PathBuf::new(); entries.len()];
        let mut pending = Vec::new();
        for (video, mut members) in videos {
            members.sort_by_key(|&i| (entries[i].frame_index, i));
            // a decoded frame depends on every frame of its clip
            let mut clip = Sha256::new();
            for &i in &members {
                put_field(&mut clip, self.corpus.source_hashes[i].as_bytes());
            }
            let clip_hash = hex::encode(clip.finalize());
            let targets: Vec<PathBuf> = members
                .iter()
                .map(|&i| self.cached_path(&cache_key(&entries[i].frame_id, &canonical, self.config.seed, &clip_hash)))
                .collect();
            for (&i, t) in members.iter().zip(&targets) {
                paths[i] = t.clone();
            }
            if !targets.iter().all(|t| t.exists()) {
                pending.push((video.to_string(), members, targets));
            }
        }

        for (video, members, targets) in pending {
            let tmp = tempfile::tempdir().map_err(|e| format!("creating scratch dir: {e}"))?;
            let input = self.stage(&members, &tmp.path().join("in"))?;
            let mut invocations = Vec::new();
            let result = video_roundtrip(&input, spec, &transcoder, &tmp.path().join("work"), &tmp.path().join("out"), &mut invocations);
            self.log.extend(invocations.into_iter().map(|invocation| LogEvent::Invocation {
                context: format!("{label} / video {video}"),
                invocation,
            }));
            let out = result.map_err(|e| format!("video {video}: {e}"))?;
            self.collect(&out, &targets)?;
        }
        Ok(entries.iter().zip(paths).map(|(e, path)| BatchItem { frame_id: e.frame_id.clone(), path }).collect())
    }

    fn materialize_external(&mut self, label: &str, spec: &ExternalOpSpec) -> Result<Vec<BatchItem>, String> {
        let canonical = spec.canonical();
        let entries = self.corpus.frames.entries();
        let targets: Vec<PathBuf> = entries
            .iter()
            .enumerate()
            .map(|(i, e)| self.cached_path(&cache_key(&e.frame_id, &canonical, self.config.seed, &self.corpus.source_hashes[i])))
            .collect();
        if !targets.iter().all(|t| t.exists()) {
            let tmp = tempfile::tempdir().map_err(|e| format!("creating scratch dir: {e}"))?;
            let all: Vec<usize> = (0..entries.len()).collect();
            let input = self.stage(&all, &tmp.path().join("in"))?;
            let mut invocations = Vec::new();
            let result = run_external_operator_logged(spec, input.dir(), &tmp.path().join("out"), &mut invocations);
            self.log.extend(invocations.into_iter().map(|invocation| LogEvent::Invocation { context: label.to_string(), invocation }));
            let out = result.map_err(|e| e.to_string())?;
            self.collect(&out, &targets)?;
        }
        Ok(entries.iter().zip(targets).map(|(e, path)| BatchItem { frame_id: e.frame_id.clone(), path }).collect())
    }

    /// Scores every materialized operation with one detector. Any detector
    /// error aborts: rows scored under different conditions are not comparable.
    pub fn score(&mut self, detector: &DetectorSpec, materialized: &[Materialized]) -> Result<DetectorScores, RunError> {
        let mut operations = Vec::with_capacity(materialized.len());
        for m in materialized {
            let mut invocations = Vec::new();
            let result = run_detector_logged(detector, &m.frames, &mut invocations);
            self.log.extend(invocations.into_iter().map(|invocation| LogEvent::Invocation {
                context: format!("{} / {}", detector.name, m.label),
                invocation,
            }));
            let records = result.map_err(|source| RunError::Detector {
                detector: detector.name.clone(),
                operation: m.label.clone(),
                source,
            })?;
            operations.push((m.label.clone(), records.into_iter().map(|r| self.corpus.labeled(&r.frame_id, r.score)).collect()));
        }
        Ok(DetectorScores { detector: detector.name.clone(), operations })
    }

    pub fn metadata(&self, detector: &str) -> RunMetadata {
        RunMetadata {
            run_id: self.run_id(),
            seed: self.config.seed,
            detector: detector.to_string(),
            corpus_digest: self.corpus.digest.clone(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            threshold: self.config.threshold,
            aggregation: format!("{:?}", self.config.aggregation).to_lowercase(),
        }
    }

    /// Stable identifier derived from the config, the seed, and the corpus.
    pub fn run_id(&self) -> String {
        let mut h = Sha256::new();
        put_field(&mut h, self.config.source_text.as_bytes());
        h.update(self.config.seed.to_le_bytes());
        put_field(&mut h, self.corpus.digest.as_bytes());
        hex::encode(h.finalize())[..16].to_string()
    }

    pub fn evaluate(&self, scores: &DetectorScores) -> Result<EvalReport, RunError> {
        let options = crate::metrics::EvalOptions {
            threshold: self.config.threshold,
            aggregation: self.config.aggregation,
            deltas: true,
            frames: Some(&self.corpus.info),
        };
        let rows = evaluate_run(&scores.operations, &options)
            .map_err(|source| RunError::Metrics { detector: scores.detector.clone(), source })?;
        let infos: Vec<OperationInfo> = self
            .config
            .operations
            .iter()
            .map(|o| OperationInfo { label: o.label.clone(), category: o.category.key().to_string(), pipeline: o.describe() })
            .collect();
        Ok(EvalReport::from_evaluation(rows, &infos, self.metadata(&scores.detector))?)
    }

    pub fn write_log(&self) -> Result<(), RunError> {
        let out = &self.config.output_dir;
        std::fs::create_dir_all(out).map_err(io_err(format!("creating {}", out.display())))?;
        let mut text = String::new();
        for event in &self.log {
            match event {
                LogEvent::Invocation { context, invocation } => {
                    let _ = writeln!(
                        text,
                        "[{context}] exit={} {}ms: {}",
                        invocation.exit_code.map_or("killed".to_string(), |c| c.to_string()),
                        invocation.elapsed_ms,
                        invocation.command
                    );
                    for line in invocation.stderr.lines() {
                        let _ = writeln!(text, "    {line}");
                    }
                }
                LogEvent::Failure { operation, message } => {
                    let _ = writeln!(text, "[{operation}] FAILED: {message}");
                }
                LogEvent::Note { message } => {
                    let _ = writeln!(text, "{message}");
                }
            }
        }
        write_file(&out.join("run.log"), text.as_bytes())
    }

    pub fn note(&mut self, message: impl Into<String>) {
        self.log.push(LogEvent::Note { message: message.into() });
    }

    pub fn write_run_metadata(&self, completed: bool) -> Result<(), RunError> {
        let out = &self.config.output_dir;
        let failed: HashMap<&str, &str> =
            self.failures.iter().map(|f| (f.operation.as_str(), f.message.as_str())).collect();
        let operations: Vec<serde_json::Value> = self
            .config
            .operations
            .iter()
            .map(|o| {
                serde_json::json!({
                    "label": o.label,
                    "category": o.category.key(),
                    "pipeline": o.describe(),
                    "status": if failed.contains_key(o.label.as_str()) { "failed" } else { "ok" },
                    "error": failed.get(o.label.as_str()),
                })
            })
            .collect();
        let doc = serde_json::json!({
            "run_id": self.run_id(),
            "completed": completed,
            "timestamp": chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            "seed": self.config.seed,
            "threshold": self.config.threshold,
            "aggregation": self.config.aggregation,
            "workers": self.config.workers,
            "corpus": {
                "manifest": self.config.corpus.manifest,
                "root": self.corpus.root,
                "frames": self.corpus.frames.len(),
                "digest": self.corpus.digest,
            },
            "versions": {
                "perturbench": env!("CARGO_PKG_VERSION"),
                "cache_format": "perturbench/cache/v1",
            },
            "transcoder": {
                "encode": self.config.transcoder.encode,
                "decode": self.config.transcoder.decode,
            },
            "detectors": self.config.detectors.iter().map(|d| serde_json::json!({
                "name": d.name,
                "command": d.command_template,
            })).collect::<Vec<_>>(),
            "operations": operations,
            "failures": self.failures,
            "cache_dir": self.cache_dir,
            "config": "config.toml",
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("metadata serializes");
        text.push('\n');
        write_file(&out.join("run.json"), text.as_bytes())?;
        write_file(&out.join("config.toml"), self.config.source_text.as_bytes())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(io_err(format!("writing {}", path.display())))
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn perturbed_listing_path(out_dir: &Path, label: &str) -> PathBuf {
    out_dir.join("perturbed").join(format!("{label}.jsonl"))
}

pub fn scores_path(out_dir: &Path, detector: &str, label: &str) -> PathBuf {
    out_dir.join(detector).join("scores").join(format!("{label}.jsonl"))
}

pub fn write_listings(out_dir: &Path, materialized: &[Materialized]) -> Result<(), RunError> {
    for m in materialized {
        write_file(&perturbed_listing_path(out_dir, &m.label), jsonl(&m.frames).as_bytes())?;
    }
    Ok(())
}

pub fn write_scores(out_dir: &Path, scores: &DetectorScores) -> Result<(), RunError> {
    for (label, data) in &scores.operations {
        write_file(&scores_path(out_dir, &scores.detector, label), jsonl(data).as_bytes())?;
    }
    Ok(())
}

/// Reads persisted scores for the given operations, skipping ones with no file.
pub fn load_scores(out_dir: &Path, detector: &str, labels: &[String]) -> Result<DetectorScores, RunError> {
    let mut operations = Vec::new();
    for label in labels {
        let path = scores_path(out_dir, detector, label);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => continue,
            Err(source) => return Err(RunError::Io { context: format!("reading {}", path.display()), source }),
        };
        let data = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| {
                serde_json::from_str::<LabeledScore>(l)
                    .map_err(|e| RunError::Scores { path: path.display().to_string(), message: format!("line {}: {e}", n + 1) })
            })
            .collect::<Result<Vec<_>, _>>()?;
        operations.push((label.clone(), data));
    }
    Ok(DetectorScores { detector: detector.to_string(), operations })
}

/// Writes `report.{csv,md,json}` and one series CSV per configured series.
pub fn write_report_artifacts(out_dir: &Path, config: &ExperimentConfig, report: &EvalReport) -> Result<(), RunError> {
    let dir = out_dir.join(&report.metadata.detector);
    let table = build_table(report, Grouping::ByCategory)?;
    for (format, name) in [(Format::Csv, "report.csv"), (Format::Markdown, "report.md"), (Format::Json, "report.json")] {
        write_file(&dir.join(name), &emit_report(&table, format))?;
    }
    if report.rows().iter().any(|r| !r.families.is_empty()) {
        write_file(&dir.join("families.csv"), family_breakdown_csv(report).as_bytes())?;
    }
    for s in &config.series {
        // operations that failed are absent from the report; plot what remains
        let points: Vec<(String, f64)> = s.points.iter().filter(|(op, _)| report.row(op).is_some()).cloned().collect();
        let series = emit_quality_series(report, &s.family, &points)?;
        write_file(&dir.join(format!("series_{}.csv", s.family)), series.to_csv().as_bytes())?;
    }
    Ok(())
}

#[derive(Debug)]
pub struct RunOutcome {
    pub reports: Vec<EvalReport>,
    pub failures: Vec<OperationFailure>,
}

/// Full experiment: perturb, score with every detector, evaluate, and write
/// all artifacts. Operation failures are recorded and their rows omitted.
pub fn run_experiment(config: ExperimentConfig) -> Result<RunOutcome, RunError> {
    let mut session = Session::open(config)?;
    let result = run_session(&mut session);
    if let Err(e) = &result {
        session.note(format!("run aborted: {e}"));
    }
    session.write_log()?;
    session.write_run_metadata(result.is_ok())?;
    let reports = result?;
    Ok(RunOutcome { reports, failures: session.failures.clone() })
}

fn run_session(session: &mut Session) -> Result<Vec<EvalReport>, RunError> {
    let out = session.config.output_dir.clone();
    let materialized = session.materialize_all();
    write_listings(&out, &materialized)?;
    let detectors = session.config.detectors.clone();
    let mut reports = Vec::with_capacity(detectors.len());
    for detector in &detectors {
        let scores = session.score(detector, &materialized)?;
        write_scores(&out, &scores)?;
        let report = session.evaluate(&scores)?;
        write_report_artifacts(&out, &session.config, &report)?;
        reports.push(report);
    }
    Ok(reports)
}
