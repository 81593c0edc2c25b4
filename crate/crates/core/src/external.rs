//! Perturbations delegated to external programs.
//!
//! Contract: the harness fills `in_dir` with the batch's PNG frames and runs
//! the command once. Afterwards `out_dir` must hold exactly the same file
//! names, each a decodable frame. Video codecs are wrapped the same way via
//! an encode template and a decode template.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buffer::ImageBuffer;
use crate::process::{count_placeholder, fill_template, run_shell, shell_quote, CommandOutput, ProcessError};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(600);
pub const DEFAULT_FPS: u32 = 30;

pub const DEFAULT_ENCODE_TEMPLATE: &str = "ffmpeg -y -loglevel error -framerate {fps} -i {in_dir}/%06d.png \
     -c:v {codec_lib} -crf {crf} -pix_fmt yuv420p {tmp}.mp4";
pub const DEFAULT_DECODE_TEMPLATE: &str = "ffmpeg -y -loglevel error -i {tmp}.mp4 {out_dir}/%06d.png";

#[derive(Debug, Error)]
pub enum ExternalError {
    #[error("invalid external operator: {0}")]
    InvalidSpec(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error("`{name}` exited with status {code:?}: {diagnostics}")]
    Failed { name: String, code: Option<i32>, diagnostics: String },
    #[error("transcoder not found when running `{command}`")]
    TranscoderMissing { command: String },
    #[error("output of `{name}` does not match its input (missing: [{}], extra: [{}])", .missing.join(", "), .extra.join(", "))]
    OutputMismatch { name: String, missing: Vec<String>, extra: Vec<String> },
    #[error("output of `{name}` has undecodable frames: [{}]", .files.join(", "))]
    Undecodable { name: String, files: Vec<String> },
    #[error("video round trip returned {got} frames, expected {expected}")]
    FrameCount { expected: usize, got: usize },
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> ExternalError {
    let context = context.into();
    move |source| ExternalError::Io { context, source }
}

/// One logged subprocess invocation.
#[derive(Debug, Clone, Serialize)]
pub struct Invocation {
    pub command: String,
    pub exit_code: Option<i32>,
    pub elapsed_ms: u128,
    pub stderr: String,
}

impl Invocation {
    fn from_output(out: &CommandOutput, started: Instant) -> Self {
        Self {
            command: out.command.clone(),
            exit_code: out.code(),
            elapsed_ms: started.elapsed().as_millis(),
            stderr: out.log_text(),
        }
    }
}

/// Command template with `{in_dir}`, `{out_dir}` and optional `{param:KEY}` slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalOpSpec {
    pub name: String,
    pub command_template: String,
    pub timeout: Duration,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

impl ExternalOpSpec {
    pub fn new(
        name: impl Into<String>,
        command_template: impl Into<String>,
        timeout: Duration,
        params: BTreeMap<String, String>,
    ) -> Result<Self, ExternalError> {
        let spec = Self { name: name.into(), command_template: command_template.into(), timeout, params };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ExternalError> {
        for slot in ["in_dir", "out_dir"] {
            let n = count_placeholder(&self.command_template, slot);
            if n != 1 {
                return Err(ExternalError::InvalidSpec(format!(
                    "`{}`: template must contain {{{slot}}} exactly once (found {n})",
                    self.name
                )));
            }
        }
        for key in param_slots(&self.command_template) {
            if !self.params.contains_key(&key) {
                return Err(ExternalError::InvalidSpec(format!("`{}`: no value for {{param:{key}}}", self.name)));
            }
        }
        if self.timeout.is_zero() {
            return Err(ExternalError::InvalidSpec(format!("`{}`: timeout must be positive", self.name)));
        }
        Ok(())
    }

    /// Canonical description used for cache keys.
    pub fn canonical(&self) -> String {
        let params: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("external:{}:{}:{}", self.name, self.command_template, params.join(","))
    }

    fn render(&self, in_dir: &Path, out_dir: &Path) -> String {
        let mut values = vec![
            ("in_dir", shell_quote(&in_dir.to_string_lossy())),
            ("out_dir", shell_quote(&out_dir.to_string_lossy())),
        ];
        let param_keys: Vec<String> = self.params.keys().map(|k| format!("param:{k}")).collect();
        for (key, value) in param_keys.iter().zip(self.params.values()) {
            values.push((key.as_str(), shell_quote(value)));
        }
        fill_template(&self.command_template, &values)
    }
}

fn param_slots(template: &str) -> BTreeSet<String> {
    let mut keys = BTreeSet::new();
    let mut rest = template;
    while let Some(start) = rest.find("{param:") {
        let after = &rest[start + 7..];
        match after.find('}') {
            Some(end) => {
                keys.insert(after[..end].to_string());
                rest = &after[end..];
            }
            None => break,
        }
    }
    keys
}

/// An ordered set of frame files living in one directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSet {
    dir: PathBuf,
    names: Vec<String>,
}

impl FrameSet {
    pub fn new(dir: impl Into<PathBuf>, names: Vec<String>) -> Self {
        Self { dir: dir.into(), names }
    }

    /// All regular files in `dir`, sorted by name.
    pub fn scan(dir: &Path) -> Result<Self, ExternalError> {
        Ok(Self { dir: dir.to_path_buf(), names: list_files(dir)?.into_iter().collect() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn paths(&self) -> impl Iterator<Item = PathBuf> + '_ {
        self.names.iter().map(|n| self.dir.join(n))
    }
}

fn list_files(dir: &Path) -> Result<BTreeSet<String>, ExternalError> {
    let mut names = BTreeSet::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(format!("reading {}", dir.display())))? {
        let entry = entry.map_err(io_err(format!("reading {}", dir.display())))?;
        if entry.file_type().map_err(io_err("stat"))?.is_file() {
            names.insert(entry.file_name().to_string_lossy().into_owned());
        }
    }
    Ok(names)
}

pub fn run_external_operator(spec: &ExternalOpSpec, in_dir: &Path, out_dir: &Path) -> Result<FrameSet, ExternalError> {
    run_external_operator_logged(spec, in_dir, out_dir, &mut Vec::new())
}

pub fn run_external_operator_logged(
    spec: &ExternalOpSpec,
    in_dir: &Path,
    out_dir: &Path,
    log: &mut Vec<Invocation>,
) -> Result<FrameSet, ExternalError> {
    spec.validate()?;
    let inputs = list_files(in_dir)?;
    std::fs::create_dir_all(out_dir).map_err(io_err(format!("creating {}", out_dir.display())))?;

    let command = spec.render(in_dir, out_dir);
    let started = Instant::now();
    let output = run_shell(&command, spec.timeout, None)?;
    log.push(Invocation::from_output(&output, started));
    if !output.success() {
        return Err(ExternalError::Failed { name: spec.name.clone(), code: output.code(), diagnostics: output.diagnostics() });
    }

    let outputs = list_files(out_dir)?;
    let missing: Vec<String> = inputs.difference(&outputs).cloned().collect();
    let extra: Vec<String> = outputs.difference(&inputs).cloned().collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(ExternalError::OutputMismatch { name: spec.name.clone(), missing, extra });
    }
    let undecodable: Vec<String> = outputs
        .iter()
        .filter(|name| ImageBuffer::read(&out_dir.join(name)).is_err())
        .cloned()
        .collect();
    if !undecodable.is_empty() {
        return Err(ExternalError::Undecodable { name: spec.name.clone(), files: undecodable });
    }
    Ok(FrameSet { dir: out_dir.to_path_buf(), names: outputs.into_iter().collect() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VideoCodec {
    H264,
    H265,
}

impl VideoCodec {
    pub fn library(self) -> &'static str {
        match self {
            VideoCodec::H264 => "libx264",
            VideoCodec::H265 => "libx265",
        }
    }
}

impl fmt::Display for VideoCodec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VideoCodec::H264 => "h264",
            VideoCodec::H265 => "h265",
        })
    }
}

impl FromStr for VideoCodec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "h264" => Ok(VideoCodec::H264),
            "h265" => Ok(VideoCodec::H265),
            other => Err(format!("unknown codec `{other}` (expected h264|h265)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoCodecSpec {
    pub codec: VideoCodec,
    pub crf: u32,
    #[serde(default = "default_fps")]
    pub fps: u32,
}

fn default_fps() -> u32 {
    DEFAULT_FPS
}

impl VideoCodecSpec {
    pub const MAX_CRF: u32 = 51;

    pub fn validate(&self) -> Result<(), ExternalError> {
        if self.crf > Self::MAX_CRF {
            return Err(ExternalError::InvalidSpec(format!("crf must be in [0, 51], got {}", self.crf)));
        }
        if self.fps == 0 {
            return Err(ExternalError::InvalidSpec("fps must be positive".into()));
        }
        Ok(())
    }

    pub fn canonical(&self) -> String {
        format!("video:{}:crf={}:fps={}", self.codec, self.crf, self.fps)
    }
}

/// Encode and decode command templates for the external transcoder.
///
/// Encode placeholders: `{in_dir}` (frames `000001.png`, `000002.png`, ...),
/// `{fps}`, `{codec}`, `{codec_lib}`, `{crf}`, `{tmp}` (a scratch path stem).
/// Decode placeholders: `{tmp}`, `{out_dir}`, `{fps}`; decoded frames must be
/// numbered the same way.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscoderTemplates {
    pub encode: String,
    pub decode: String,
    #[serde(default = "default_timeout")]
    pub timeout: Duration,
}

fn default_timeout() -> Duration {
    DEFAULT_TIMEOUT
}

impl Default for TranscoderTemplates {
    fn default() -> Self {
        Self { encode: DEFAULT_ENCODE_TEMPLATE.into(), decode: DEFAULT_DECODE_TEMPLATE.into(), timeout: DEFAULT_TIMEOUT }
    }
}

fn sequence_name(i: usize) -> String {
    format!("{:06}.png", i + 1)
}

fn run_transcoder_step(command: String, timeout: Duration, log: &mut Vec<Invocation>) -> Result<(), ExternalError> {
    let started = Instant::now();
    let output = run_shell(&command, timeout, None)?;
    log.push(Invocation::from_output(&output, started));
    if output.command_not_found() {
        return Err(ExternalError::TranscoderMissing { command });
    }
    if !output.success() {
        return Err(ExternalError::Failed { name: "transcoder".into(), code: output.code(), diagnostics: output.diagnostics() });
    }
    Ok(())
}

/// Assembles `frames` (already in frame-index order) into a video, encodes it
/// at the requested CRF, decodes it, and writes the decoded frames to
/// `out_dir` under the original file names.
pub fn video_roundtrip(
    frames: &FrameSet,
    spec: &VideoCodecSpec,
    transcoder: &TranscoderTemplates,
    work_dir: &Path,
    out_dir: &Path,
    log: &mut Vec<Invocation>,
) -> Result<FrameSet, ExternalError> {
    spec.validate()?;
    let seq_dir = work_dir.join("sequence");
    let dec_dir = work_dir.join("decoded");
    for dir in [&seq_dir, &dec_dir, &out_dir.to_path_buf()] {
        std::fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))?;
    }
    for (i, src) in frames.paths().enumerate() {
        std::fs::copy(&src, seq_dir.join(sequence_name(i))).map_err(io_err(format!("staging {}", src.display())))?;
    }

    let tmp = work_dir.join("video");
    let common = [
        ("fps", spec.fps.to_string()),
        ("codec", spec.codec.to_string()),
        ("codec_lib", spec.codec.library().to_string()),
        ("crf", spec.crf.to_string()),
        ("tmp", shell_quote(&tmp.to_string_lossy())),
    ];
    let mut encode_values = common.to_vec();
    encode_values.push(("in_dir", shell_quote(&seq_dir.to_string_lossy())));
    run_transcoder_step(fill_template(&transcoder.encode, &encode_values), transcoder.timeout, log)?;
    let mut decode_values = common.to_vec();
    decode_values.push(("out_dir", shell_quote(&dec_dir.to_string_lossy())));
    run_transcoder_step(fill_template(&transcoder.decode, &decode_values), transcoder.timeout, log)?;

    let decoded = list_files(&dec_dir)?;
    let expected: BTreeSet<String> = (0..frames.len()).map(sequence_name).collect();
    if decoded != expected {
        return Err(ExternalError::FrameCount { expected: frames.len(), got: decoded.len() });
    }
    for (i, name) in frames.names().iter().enumerate() {
        let src = dec_dir.join(sequence_name(i));
        ImageBuffer::read(&src)
            .map_err(|_| ExternalError::Undecodable { name: "transcoder".into(), files: vec![sequence_name(i)] })?;
        std::fs::copy(&src, out_dir.join(name)).map_err(io_err(format!("collecting {}", src.display())))?;
    }
    Ok(FrameSet { dir: out_dir.to_path_buf(), names: frames.names().to_vec() })
}
