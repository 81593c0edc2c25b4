//! Labeled frame corpus: manifest parsing, frame selection, and validation.
//!
//! The manifest is a UTF-8 CSV with the header
//! `frame_id,video_id,frame_index,label,family,path`. Paths are relative to
//! a corpus root directory. Frames are pre-cropped 8-bit RGB PNGs.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buffer::{ImageBuffer, ImageIoError};

pub const MANIFEST_HEADER: [&str; 6] = ["frame_id", "video_id", "frame_index", "label", "family", "path"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest header must be `{}`, found `{found}`", MANIFEST_HEADER.join(","))]
    Header { found: String },
    #[error("manifest row {row}: {message}")]
    Row { row: u64, message: String },
    #[error("duplicate frame_id `{0}` in manifest")]
    DuplicateFrameId(String),
    #[error(transparent)]
    Image(#[from] ImageIoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Fake => "fake",
        }
    }

    pub fn is_fake(self) -> bool {
        self == Label::Fake
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "real" => Ok(Label::Real),
            "fake" => Ok(Label::Fake),
            other => Err(format!("unknown label `{other}` (expected real|fake)")),
        }
    }
}

/// Manipulation family of a frame; `Pristine` marks unmanipulated footage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Pristine,
    Deepfake,
    Faceswap,
    Face2face,
    Neuraltextures,
    Other,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Pristine,
        Family::Deepfake,
        Family::Faceswap,
        Family::Face2face,
        Family::Neuraltextures,
        Family::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Pristine => "pristine",
            Family::Deepfake => "deepfake",
            Family::Faceswap => "faceswap",
            Family::Face2face => "face2face",
            Family::Neuraltextures => "neuraltextures",
            Family::Other => "other",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|fam| fam.as_str() == s)
            .ok_or_else(|| format!("unknown family `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub frame_id: String,
    pub video_id: String,
    pub frame_index: u64,
    pub label: Label,
    pub family: Family,
    pub path: PathBuf,
}

impl ManifestEntry {
    pub fn is_consistent(&self) -> bool {
        (self.label == Label::Real) == (self.family == Family::Pristine)
    }
}

/// Ordered list of manifest entries with unique frame ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            if !seen.insert(e.frame_id.as_str()) {
                return Err(CorpusError::DuplicateFrameId(e.frame_id.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, frame_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.frame_id == frame_id)
    }

    pub fn family_counts(&self) -> BTreeMap<Family, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.family).or_insert(0) += 1;
        }
        counts
    }

    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| CorpusError::Row { row: 1, message: e.to_string() })?
            .clone();
        if header.iter().ne(MANIFEST_HEADER) {
            return Err(CorpusError::Header { found: header.iter().collect::<Vec<_>>().join(",") });
        }

        let mut entries = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| CorpusError::Row {
                row: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let row = record.position().map_or(0, |p| p.line());
            let bad = |message: String| CorpusError::Row { row, message };
            let field = |i: usize| -> Result<&str, CorpusError> {
                let v = record.get(i).unwrap_or_default();
                if v.is_empty() {
                    Err(CorpusError::Row { row, message: format!("empty {}", MANIFEST_HEADER[i]) })
                } else {
                    Ok(v)
                }
            };
            entries.push(ManifestEntry {
                frame_id: field(0)?.to_string(),
                video_id: field(1)?.to_string(),
                frame_index: field(2)?
                    .parse()
                    .map_err(|_| bad(format!("frame_index `{}` is not a non-negative integer", &record[2])))?,
                label: field(3)?.parse().map_err(bad)?,
                family: field(4)?.parse().map_err(bad)?,
                path: PathBuf::from(field(5)?),
            });
        }
        Self::new(entries)
    }

    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(MANIFEST_HEADER).expect("in-memory write");
        for e in &self.entries {
            writer
                .write_record([
                    e.frame_id.as_str(),
                    e.video_id.as_str(),
                    &e.frame_index.to_string(),
                    e.label.as_str(),
                    e.family.as_str(),
                    &e.path.to_string_lossy(),
                ])
                .expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest, CorpusError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    Manifest::parse(&text)
}

/// Keeps the `n_per_video` lowest frame indexes of every video, preserving file order.
pub fn select_frames(manifest: &Manifest, n_per_video: usize) -> Manifest {
    assert!(n_per_video >= 1, "n_per_video must be at least 1");
    let mut by_video: HashMap<&str, Vec<(u64, usize)>> = HashMap::new();
    for (pos, e) in manifest.entries.iter().enumerate() {
        by_video.entry(&e.video_id).or_default().push((e.frame_index, pos));
    }
    let mut keep = vec![false; manifest.len()];
    for mut frames in by_video.into_values() {
        frames.sort_unstable();
        for &(_, pos) in frames.iter().take(n_per_video) {
            keep[pos] = true;
        }
    }
    let entries = manifest
        .entries
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(e, _)| e.clone())
        .collect();
    Manifest { entries }
}

pub fn load_frame(entry: &ManifestEntry, root: &Path) -> Result<ImageBuffer, CorpusError> {
    Ok(ImageBuffer::read(&root.join(&entry.path))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    MissingFile,
    UndecodableFile,
    DimensionOutlier,
    LabelFamilyMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Issue {
    pub frame_id: String,
    pub kind: IssueKind,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub frames_checked: usize,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn count(&self, kind: IssueKind) -> usize {
        self.issues.iter().filter(|i| i.kind == kind).count()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} frames checked, {} issue(s)", self.frames_checked, self.issues.len())?;
        for issue in &self.issues {
            writeln!(f, "  {:?} {}: {}", issue.kind, issue.frame_id, issue.detail)?;
        }
        Ok(())
    }
}

/// A frame whose width or height is less than half or more than twice the
/// corpus median is reported as a dimension outlier.
const OUTLIER_FACTOR: usize = 2;

/// Issues for one entry plus its dimensions when readable.
type Probe = (Vec<Issue>, Option<(usize, usize)>);

/// Checks every entry; problems are collected in manifest order, never raised.
pub fn validate_corpus(manifest: &Manifest, root: &Path) -> ValidationReport {
    let probes: Vec<Probe> = manifest
        .entries
        .par_iter()
        .map(|e| {
            let mut issues = Vec::new();
            if !e.is_consistent() {
                issues.push(Issue {
                    frame_id: e.frame_id.clone(),
                    kind: IssueKind::LabelFamilyMismatch,
                    detail: format!("label {} with family {}", e.label, e.family),
                });
            }
            let path = root.join(&e.path);
            let mut dims = None;
            if !path.is_file() {
                issues.push(Issue {
                    frame_id: e.frame_id.clone(),
                    kind: IssueKind::MissingFile,
                    detail: path.display().to_string(),
                });
            } else {
                match ImageBuffer::read(&path) {
                    Ok(img) => dims = Some((img.width(), img.height())),
                    Err(err) => issues.push(Issue {
                        frame_id: e.frame_id.clone(),
                        kind: IssueKind::UndecodableFile,
                        detail: err.to_string(),
                    }),
                }
            }
            (issues, dims)
        })
        .collect();

    let median = |mut v: Vec<usize>| -> usize {
        v.sort_unstable();
        v.get(v.len() / 2).copied().unwrap_or(0)
    };
    let widths: Vec<usize> = probes.iter().filter_map(|(_, d)| d.map(|d| d.0)).collect();
    let heights: Vec<usize> = probes.iter().filter_map(|(_, d)| d.map(|d| d.1)).collect();
    let (mw, mh) = (median(widths), median(heights));
    let outside = |v: usize, m: usize| v * OUTLIER_FACTOR < m || v > m * OUTLIER_FACTOR;

    let mut report = ValidationReport { frames_checked: manifest.len(), issues: Vec::new() };
    for (entry, (issues, dims)) in manifest.entries.iter().zip(probes) {
        report.issues.extend(issues);
        if let Some((w, h)) = dims {
            if outside(w, mw) || outside(h, mh) {
                report.issues.push(Issue {
                    frame_id: entry.frame_id.clone(),
                    kind: IssueKind::DimensionOutlier,
                    detail: format!("{w}x{h} vs corpus median {mw}x{mh}"),
                });
            }
        }
    }
    report
}
