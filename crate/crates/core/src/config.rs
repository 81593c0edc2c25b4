//! Experiment configuration (TOML).
//!
//! ```toml
//! seed = 42
//! threshold = 0.5
//! aggregation = "frame"        # or "video"
//! workers = 4                  # optional, defaults to all cores
//! output_dir = "out"
//! cache_dir = "cache"          # optional
//!
//! [corpus]
//! manifest = "manifest.csv"
//! root = "."
//! n_per_video = 4              # optional
//!
//! [transcoder]                 # optional, defaults to ffmpeg
//! encode = "ffmpeg ... {in_dir}/%06d.png ... {tmp}.mp4"
//! decode = "ffmpeg -i {tmp}.mp4 {out_dir}/%06d.png"
//! timeout_secs = 600
//!
//! [[operations]]
//! label = "raw"
//! category = "raw"
//! pipeline = "identity"
//!
//! [[operations]]
//! label = "h264_crf23"
//! category = "video_compression"
//! video = { codec = "h264", crf = 23 }
//!
//! [[operations]]
//! label = "learned"
//! category = "ai_based_compression"
//! external = { name = "codec", command = "tool {in_dir} {out_dir} {param:q}", params = { q = "1" } }
//!
//! [[detectors]]
//! name = "mock"
//! command = "{bench} mock-detector --batch {batch_file}"
//!
//! [[series]]
//! family = "jpeg"
//! points = [{ operation = "jpeg95", x = 95 }, { operation = "jpeg50", x = 50 }]
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::detector::{DetectorError, DetectorSpec};
use crate::external::{ExternalError, ExternalOpSpec, TranscoderTemplates, VideoCodecSpec, DEFAULT_TIMEOUT};
use crate::metrics::{Aggregation, BASELINE_LABEL};
use crate::operators::{parse_pipeline, Operator, PipelineError, PipelineSpec};
use crate::report::{Category, ReportError};

/// Stand-in for the path of the running `bench` executable in detector commands.
pub const BENCH_PLACEHOLDER: &str = "{bench}";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Syntax(Box<toml::de::Error>),
    #[error("operation `{label}`: {message}")]
    Operation { label: String, message: String },
    #[error("operation `{label}`: {source}")]
    Pipeline {
        label: String,
        #[source]
        source: Box<PipelineError>,
    },
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    External(#[from] ExternalError),
    #[error(transparent)]
    Category(#[from] ReportError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_threshold")]
    threshold: f64,
    #[serde(default)]
    aggregation: Aggregation,
    workers: Option<usize>,
    cache_dir: Option<PathBuf>,
    #[serde(default = "default_output")]
    output_dir: PathBuf,
    corpus: RawCorpus,
    transcoder: Option<RawTranscoder>,
    #[serde(default)]
    operations: Vec<RawOperation>,
    #[serde(default)]
    detectors: Vec<RawDetector>,
    #[serde(default)]
    series: Vec<RawSeries>,
}

fn default_threshold() -> f64 {
    0.5
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_timeout_secs() -> u64 {
    DEFAULT_TIMEOUT.as_secs()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCorpus {
    manifest: PathBuf,
    #[serde(default)]
    root: Option<PathBuf>,
    n_per_video: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTranscoder {
    encode: String,
    decode: String,
    #[serde(default = "default_timeout_secs")]
    timeout_secs: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOperation {
    label: String,
    category: String,
    pipeline: Option<String>,
    video: Option<VideoCodecSpec>,
    external: Option<RawExternal>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExternal {
    name: String,
    command: String,
    #[serde(default = "default_timeout_secs")]
    timeout_secs: u64,
    #[serde(default)]
    params: BTreeMap<String, String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetector {
    name: String,
    command: String,
    #[serde(default = "default_timeout_secs")]
    timeout_secs: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSeries {
    family: String,
    points: Vec<RawPoint>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPoint {
    operation: String,
    x: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub manifest: PathBuf,
    pub root: PathBuf,
    pub n_per_video: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperationKind {
    Pipeline(PipelineSpec),
    Video(VideoCodecSpec),
    External(ExternalOpSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperationConfig {
    pub label: String,
    pub category: Category,
    pub kind: OperationKind,
}

impl OperationConfig {
    /// Text shown in the report's pipeline column.
    pub fn describe(&self) -> String {
        match &self.kind {
            OperationKind::Pipeline(p) => p.to_string(),
            OperationKind::Video(v) => v.canonical(),
            OperationKind::External(e) => format!("external:{}", e.name),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesConfig {
    pub family: String,
    pub points: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub corpus: CorpusConfig,
    pub operations: Vec<OperationConfig>,
    pub detectors: Vec<DetectorSpec>,
    pub seed: u64,
    pub threshold: f64,
    pub aggregation: Aggregation,
    pub workers: Option<usize>,
    pub cache_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub transcoder: TranscoderTemplates,
    pub series: Vec<SeriesConfig>,
    /// The config text as loaded, copied into each run directory.
    pub source_text: String,
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

fn positive_timeout(secs: u64, what: &str) -> Result<Duration, ConfigError> {
    if secs == 0 {
        return Err(ConfigError::Invalid(format!("{what}: timeout_secs must be positive")));
    }
    Ok(Duration::from_secs(secs))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let base = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let base = std::path::absolute(&base).unwrap_or(base);
        Self::parse(&text, &base)
    }

    /// Parses and validates a config; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(Box::new(e)))?;

        let mut operations = Vec::with_capacity(raw.operations.len());
        for op in raw.operations {
            let category: Category = op.category.parse()?;
            let op_err = |message: &str| ConfigError::Operation { label: op.label.clone(), message: message.into() };
            let kind = match (op.pipeline, op.video, op.external) {
                (Some(text), None, None) => OperationKind::Pipeline(
                    parse_pipeline(&text).map_err(|source| ConfigError::Pipeline { label: op.label.clone(), source: Box::new(source) })?,
                ),
                (None, Some(video), None) => {
                    video.validate()?;
                    OperationKind::Video(video)
                }
                (None, None, Some(ext)) => {
                    let timeout = positive_timeout(ext.timeout_secs, &op.label)?;
                    OperationKind::External(ExternalOpSpec::new(ext.name, ext.command, timeout, ext.params)?)
                }
                _ => return Err(op_err("exactly one of `pipeline`, `video`, `external` is required")),
            };
            operations.push(OperationConfig { label: op.label, category, kind });
        }

        let detectors = raw
            .detectors
            .into_iter()
            .map(|d| {
                let timeout = positive_timeout(d.timeout_secs, &d.name)?;
                Ok(DetectorSpec::new(d.name, d.command, timeout)?)
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;

        let transcoder = match raw.transcoder {
            Some(t) => TranscoderTemplates {
                encode: t.encode,
                decode: t.decode,
                timeout: positive_timeout(t.timeout_secs, "transcoder")?,
            },
            None => TranscoderTemplates::default(),
        };

        let config = Self {
            corpus: CorpusConfig {
                manifest: resolve(base_dir, raw.corpus.manifest),
                root: resolve(base_dir, raw.corpus.root.unwrap_or_default()),
                n_per_video: raw.corpus.n_per_video,
            },
            operations,
            detectors,
            seed: raw.seed,
            threshold: raw.threshold,
            aggregation: raw.aggregation,
            workers: raw.workers,
            cache_dir: raw.cache_dir.map(|p| resolve(base_dir, p)),
            output_dir: resolve(base_dir, raw.output_dir),
            transcoder,
            series: raw
                .series
                .into_iter()
                .map(|s| SeriesConfig { family: s.family, points: s.points.into_iter().map(|p| (p.operation, p.x)).collect() })
                .collect(),
            source_text: text.to_string(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.operations.is_empty() {
            return Err(ConfigError::Invalid("no operations configured".into()));
        }
        let mut labels = HashSet::new();
        for op in &self.operations {
            if op.label.is_empty() || op.label.contains(['/', '\\']) || op.label.starts_with('.') {
                return Err(ConfigError::Invalid(format!("operation label `{}` is not a valid file name", op.label)));
            }
            if !labels.insert(op.label.as_str()) {
                return Err(ConfigError::Invalid(format!("duplicate operation label `{}`", op.label)));
            }
        }
        let raw: Vec<&OperationConfig> = self.operations.iter().filter(|o| o.label == BASELINE_LABEL).collect();
        match raw.as_slice() {
            [op] => match &op.kind {
                OperationKind::Pipeline(p) if p.is_identity() => {}
                _ => return Err(ConfigError::Invalid("the `raw` operation must use the identity pipeline".into())),
            },
            [] => return Err(ConfigError::Invalid("an operation labelled `raw` is required".into())),
            _ => unreachable!("labels are unique"),
        }

        if self.detectors.is_empty() {
            return Err(ConfigError::Invalid("no detectors configured".into()));
        }
        let mut names = HashSet::new();
        for d in &self.detectors {
            if d.name.is_empty() || d.name.contains(['/', '\\']) || d.name.starts_with('.') {
                return Err(ConfigError::Invalid(format!("detector name `{}` is not a valid directory name", d.name)));
            }
            if !names.insert(d.name.as_str()) {
                return Err(ConfigError::Invalid(format!("duplicate detector `{}`", d.name)));
            }
        }

        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(ConfigError::Invalid(format!("threshold {} is outside [0, 1]", self.threshold)));
        }
        if self.workers == Some(0) {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        if self.corpus.n_per_video == Some(0) {
            return Err(ConfigError::Invalid("n_per_video must be at least 1".into()));
        }
        for s in &self.series {
            for (op, x) in &s.points {
                if !labels.contains(op.as_str()) {
                    return Err(ConfigError::Invalid(format!("series `{}` names unknown operation `{op}`", s.family)));
                }
                if !x.is_finite() {
                    return Err(ConfigError::Invalid(format!("series `{}` has a non-finite x", s.family)));
                }
            }
        }
        Ok(())
    }

    pub fn operation(&self, label: &str) -> Option<&OperationConfig> {
        self.operations.iter().find(|o| o.label == label)
    }

    /// Keeps only the `raw` baseline plus one ad hoc pipeline labelled `label`.
    pub fn with_single_pipeline(mut self, label: &str, pipeline: PipelineSpec) -> Result<Self, ConfigError> {
        let category = match pipeline.stages() {
            [] => Category::Raw,
            [only] => match only {
                Operator::Identity => Category::Raw,
                Operator::Jpeg { .. } => Category::ImageTranscoding,
                Operator::GaussianBlur { .. } | Operator::MeanBlur { .. } | Operator::MedianBlur { .. } => {
                    Category::ImageSmoothing
                }
                Operator::GaussianNoise { .. } => Category::AdditiveNoise,
                Operator::Gamma { .. } => Category::GammaCorrection,
                Operator::Resize { .. } => Category::Resizing,
            },
            _ => Category::Combination,
        };
        self.operations.retain(|o| o.label == BASELINE_LABEL);
        self.operations.push(OperationConfig { label: label.to_string(), category, kind: OperationKind::Pipeline(pipeline) });
        self.series.clear();
        self.validate()?;
        Ok(self)
    }

    /// Replaces `{bench}` in detector commands with the given executable.
    pub fn with_bench_executable(mut self, exe: &Path) -> Self {
        let quoted = crate::process::shell_quote(&exe.to_string_lossy());
        for d in &mut self.detectors {
            d.command_template = d.command_template.replace(BENCH_PLACEHOLDER, &quoted);
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
seed = 7
[corpus]
manifest = "m.csv"

[[detectors]]
name = "mock"
command = "{bench} mock-detector --batch {batch_file}"
"#;

    fn with_ops(ops: &str) -> String {
        format!("{BASE}\n{ops}")
    }

    const RAW: &str = r#"
[[operations]]
label = "raw"
category = "raw"
pipeline = "identity"
"#;

    #[test]
    fn parses_all_operation_kinds() {
        let text = with_ops(&format!(
            r#"{RAW}
[[operations]]
label = "combo"
category = "combination"
pipeline = "gnoise:var=0.01|gblur:ks=5"

[[operations]]
label = "h265"
category = "Video Compression"
video = {{ codec = "h265", crf = 40 }}

[[operations]]
label = "learned"
category = "ai_based_compression"
external = {{ name = "tool", command = "t {{in_dir}} {{out_dir}} {{param:q}}", params = {{ q = "2" }} }}
"#
        ));
        let c = ExperimentConfig::parse(&text, Path::new("/base")).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.threshold, 0.5);
        assert_eq!(c.corpus.manifest, Path::new("/base/m.csv"));
        assert_eq!(c.corpus.root, Path::new("/base/"));
        assert_eq!(c.output_dir, Path::new("/base/out"));
        let labels: Vec<&str> = c.operations.iter().map(|o| o.label.as_str()).collect();
        assert_eq!(labels, ["raw", "combo", "h265", "learned"]);
        assert_eq!(c.operations[1].describe(), "gnoise:mean=0,var=0.01|gblur:ks=5");
        assert_eq!(c.operations[2].category, Category::VideoCompression);
        assert!(matches!(&c.operations[2].kind, OperationKind::Video(v) if v.crf == 40 && v.fps == 30));
        assert_eq!(c.operations[3].describe(), "external:tool");
        assert_eq!(c.detectors[0].timeout, DEFAULT_TIMEOUT);
    }

    #[test]
    fn missing_raw_is_rejected() {
        let text = with_ops("[[operations]]\nlabel = \"g\"\ncategory = \"gamma_correction\"\npipeline = \"gamma:g=2.5\"\n");
        let err = ExperimentConfig::parse(&text, Path::new("/")).unwrap_err();
        assert!(err.to_string().contains("`raw`"), "{err}");
    }

    #[test]
    fn raw_must_be_identity() {
        let text = with_ops("[[operations]]\nlabel = \"raw\"\ncategory = \"raw\"\npipeline = \"gamma:g=2.5\"\n");
        assert!(ExperimentConfig::parse(&text, Path::new("/")).is_err());
    }

    #[test]
    fn duplicate_labels_rejected() {
        let text = with_ops(&format!("{RAW}{RAW}"));
        let err = ExperimentConfig::parse(&text, Path::new("/")).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn operation_needs_exactly_one_kind() {
        let text = with_ops(&format!(
            "{RAW}[[operations]]\nlabel = \"x\"\ncategory = \"resizing\"\npipeline = \"resize:scale=1.3\"\nvideo = {{ codec = \"h264\", crf = 23 }}\n"
        ));
        assert!(matches!(ExperimentConfig::parse(&text, Path::new("/")), Err(ConfigError::Operation { .. })));
        let text = with_ops(&format!("{RAW}[[operations]]\nlabel = \"x\"\ncategory = \"resizing\"\n"));
        assert!(matches!(ExperimentConfig::parse(&text, Path::new("/")), Err(ConfigError::Operation { .. })));
    }

    #[test]
    fn bad_pipeline_and_category_rejected() {
        let text = with_ops(&format!("{RAW}[[operations]]\nlabel = \"x\"\ncategory = \"image_smoothing\"\npipeline = \"gblur:ks=4\"\n"));
        let err = ExperimentConfig::parse(&text, Path::new("/")).unwrap_err();
        assert!(matches!(err, ConfigError::Pipeline { .. }), "{err}");
        let text = with_ops(&format!("{RAW}[[operations]]\nlabel = \"x\"\ncategory = \"sharpening\"\npipeline = \"gblur:ks=3\"\n"));
        assert!(matches!(ExperimentConfig::parse(&text, Path::new("/")), Err(ConfigError::Category(_))));
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = format!("{}\nsede = 3\n", with_ops(RAW)).replacen("seed = 7", "seed = 7\nsede = 3", 1);
        assert!(matches!(ExperimentConfig::parse(&text, Path::new("/")), Err(ConfigError::Syntax(_))));
    }

    #[test]
    fn bench_placeholder_is_substituted() {
        let c = ExperimentConfig::parse(&with_ops(RAW), Path::new("/")).unwrap();
        let c = c.with_bench_executable(Path::new("/opt/my bench"));
        assert_eq!(c.detectors[0].command_template, "'/opt/my bench' mock-detector --batch {batch_file}");
    }

    #[test]
    fn series_must_reference_operations() {
        let text = format!("{}\n[[series]]\nfamily = \"jpeg\"\npoints = [{{ operation = \"jpeg95\", x = 95 }}]\n", with_ops(RAW));
        assert!(ExperimentConfig::parse(&text, Path::new("/")).is_err());
    }

    #[test]
    fn single_pipeline_keeps_baseline() {
        let text = with_ops(&format!("{RAW}[[operations]]\nlabel = \"g\"\ncategory = \"gamma_correction\"\npipeline = \"gamma:g=2.5\"\n"));
        let c = ExperimentConfig::parse(&text, Path::new("/")).unwrap();
        let c = c.with_single_pipeline("ops", parse_pipeline("gblur:ks=3").unwrap()).unwrap();
        let labels: Vec<&str> = c.operations.iter().map(|o| o.label.as_str()).collect();
        assert_eq!(labels, ["raw", "ops"]);
        assert_eq!(c.operations[1].category, Category::ImageSmoothing);
        let c = c.with_single_pipeline("ops", parse_pipeline("gblur:ks=3|gamma:g=2").unwrap()).unwrap();
        assert_eq!(c.operations[1].category, Category::Combination);
    }

    #[test]
    fn threshold_range_checked() {
        let text = with_ops(RAW).replacen("seed = 7", "seed = 7\nthreshold = 1.5", 1);
        assert!(ExperimentConfig::parse(&text, Path::new("/")).is_err());
    }
}
