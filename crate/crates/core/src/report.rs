//! Degradation tables and quality-sweep series.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::Family;
use crate::metrics::{MetricDelta, MetricRow, OperationMetrics, BASELINE_LABEL};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("report has no rows")]
    Empty,
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("more than one `raw` row")]
    DuplicateBaseline,
    #[error("deltas must be present exactly when a `raw` row is present")]
    DeltaMismatch,
    #[error("operation `{0}` is not in the report")]
    MissingOperation(String),
    #[error("no operation metadata for `{0}`")]
    MissingMetadata(String),
}

/// Operation groups, in the order the degradation table lists them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Raw,
    VideoCompression,
    ImageTranscoding,
    ImageSmoothing,
    AdditiveNoise,
    GammaCorrection,
    Combination,
    Resizing,
    AiBasedCompression,
}

impl Category {
    pub const ALL: [Category; 9] = [
        Category::Raw,
        Category::VideoCompression,
        Category::ImageTranscoding,
        Category::ImageSmoothing,
        Category::AdditiveNoise,
        Category::GammaCorrection,
        Category::Combination,
        Category::Resizing,
        Category::AiBasedCompression,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Category::Raw => "raw",
            Category::VideoCompression => "video_compression",
            Category::ImageTranscoding => "image_transcoding",
            Category::ImageSmoothing => "image_smoothing",
            Category::AdditiveNoise => "additive_noise",
            Category::GammaCorrection => "gamma_correction",
            Category::Combination => "combination",
            Category::Resizing => "resizing",
            Category::AiBasedCompression => "ai_based_compression",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Category::Raw => "Raw",
            Category::VideoCompression => "Video Compression",
            Category::ImageTranscoding => "Image Transcoding",
            Category::ImageSmoothing => "Image Smoothing",
            Category::AdditiveNoise => "Additive Noise",
            Category::GammaCorrection => "Gamma Correction",
            Category::Combination => "Combination",
            Category::Resizing => "Resizing",
            Category::AiBasedCompression => "AI-based Compression",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

impl FromStr for Category {
    type Err = ReportError;

    /// Accepts the snake_case key or the title, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase();
        Category::ALL
            .into_iter()
            .find(|c| c.key() == norm || c.title().to_ascii_lowercase() == norm)
            .ok_or_else(|| ReportError::UnknownCategory(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub run_id: String,
    pub seed: u64,
    pub detector: String,
    pub corpus_digest: String,
    pub timestamp: String,
    pub threshold: f64,
    pub aggregation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub label: String,
    pub category: String,
    pub pipeline: String,
    pub metrics: MetricRow,
    pub delta: Option<MetricDelta>,
    pub families: Vec<(Family, MetricRow)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    rows: Vec<ReportRow>,
    pub metadata: RunMetadata,
}

/// Declared facts about one configured operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperationInfo {
    pub label: String,
    pub category: String,
    pub pipeline: String,
}

impl EvalReport {
    pub fn new(rows: Vec<ReportRow>, metadata: RunMetadata) -> Result<Self, ReportError> {
        let raw_rows = rows.iter().filter(|r| r.label == BASELINE_LABEL).count();
        if raw_rows > 1 {
            return Err(ReportError::DuplicateBaseline);
        }
        if rows.iter().any(|r| r.delta.is_some() != (raw_rows == 1)) {
            return Err(ReportError::DeltaMismatch);
        }
        Ok(Self { rows, metadata })
    }

    /// Joins evaluated rows with their declared category and pipeline text.
    pub fn from_evaluation(
        evaluation: Vec<OperationMetrics>,
        operations: &[OperationInfo],
        metadata: RunMetadata,
    ) -> Result<Self, ReportError> {
        let rows = evaluation
            .into_iter()
            .map(|e| {
                let info = operations
                    .iter()
                    .find(|o| o.label == e.label)
                    .ok_or_else(|| ReportError::MissingMetadata(e.label.clone()))?;
                Ok(ReportRow {
                    label: e.label,
                    category: info.category.clone(),
                    pipeline: info.pipeline.clone(),
                    metrics: e.metrics,
                    delta: e.delta,
                    families: e.families,
                })
            })
            .collect::<Result<Vec<_>, ReportError>>()?;
        Self::new(rows, metadata)
    }

    pub fn rows(&self) -> &[ReportRow] {
        &self.rows
    }

    pub fn row(&self, label: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Grouping {
    #[default]
    ByCategory,
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub category: String,
    pub operation: String,
    pub pipeline: String,
    pub accuracy: f64,
    pub auc: f64,
    pub eer: f64,
    pub f1: f64,
    pub delta_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Table {
    pub rows: Vec<TableRow>,
    /// Whether any row carries a delta worth a column of its own.
    pub has_delta: bool,
    #[serde(skip)]
    pub grouped: bool,
}

pub fn build_table(report: &EvalReport, grouping: Grouping) -> Result<Table, ReportError> {
    if report.rows.is_empty() {
        return Err(ReportError::Empty);
    }
    let categorized: Vec<(Category, &ReportRow)> = report
        .rows
        .iter()
        .map(|r| r.category.parse().map(|c| (c, r)))
        .collect::<Result<_, _>>()?;

    let ordered: Vec<(Category, &ReportRow)> = match grouping {
        Grouping::Flat => categorized,
        Grouping::ByCategory => {
            // groups appear in order of first mention; rows keep config order within a group
            let mut order: Vec<Category> = Vec::new();
            for (c, _) in &categorized {
                if !order.contains(c) {
                    order.push(*c);
                }
            }
            order
                .into_iter()
                .flat_map(|c| categorized.iter().filter(move |(rc, _)| *rc == c).copied())
                .collect()
        }
    };

    let has_delta = report.rows.iter().any(|r| r.label != BASELINE_LABEL && r.delta.is_some());
    let rows = ordered
        .into_iter()
        .map(|(category, r)| TableRow {
            category: category.title().to_string(),
            operation: r.label.clone(),
            pipeline: r.pipeline.clone(),
            accuracy: r.metrics.accuracy,
            auc: r.metrics.auc,
            eer: r.metrics.eer,
            f1: r.metrics.f1,
            delta_acc: if r.label == BASELINE_LABEL { None } else { r.delta.map(|d| d.accuracy) },
        })
        .collect();
    Ok(Table { rows, has_delta, grouped: grouping == Grouping::ByCategory })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Markdown,
    Json,
}

pub const CSV_HEADER: &str = "category,operation,pipeline,accuracy,auc,eer,f1,delta_acc";

/// Two-decimal fixed formatting; negative zero prints as `0.00`.
pub fn fixed2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn round2(v: f64) -> f64 {
    let r = (v * 100.0).round() / 100.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|")
}

pub fn emit_report(table: &Table, format: Format) -> Vec<u8> {
    let mut out = String::new();
    match format {
        Format::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            for r in &table.rows {
                let fields = [
                    csv_field(&r.category),
                    csv_field(&r.operation),
                    csv_field(&r.pipeline),
                    fixed2(r.accuracy),
                    fixed2(r.auc),
                    fixed2(r.eer),
                    fixed2(r.f1),
                    r.delta_acc.map(fixed2).unwrap_or_default(),
                ];
                out.push_str(&fields.join(","));
                out.push('\n');
            }
        }
        Format::Markdown => {
            out.push_str("| Category | Operation | Pipeline | Accuracy | AUC | EER | F1 |");
            if table.has_delta {
                out.push_str(" ΔAcc |");
            }
            out.push_str("\n|---|---|---|---:|---:|---:|---:|");
            if table.has_delta {
                out.push_str("---:|");
            }
            out.push('\n');
            let mut previous: Option<&str> = None;
            for r in &table.rows {
                let category = if table.grouped && previous == Some(r.category.as_str()) { "" } else { &r.category };
                previous = Some(&r.category);
                out.push_str(&format!(
                    "| {} | {} | `{}` | {} | {} | {} | {} |",
                    md_cell(category),
                    md_cell(&r.operation),
                    md_cell(&r.pipeline),
                    fixed2(r.accuracy),
                    fixed2(r.auc),
                    fixed2(r.eer),
                    fixed2(r.f1)
                ));
                if table.has_delta {
                    let d = r.delta_acc.map_or_else(|| "-".to_string(), |d| format!("{}{}", if d > 0.0 { "+" } else { "" }, fixed2(d)));
                    out.push_str(&format!(" {d} |"));
                }
                out.push('\n');
            }
        }
        Format::Json => {
            let rounded: Vec<TableRow> = table
                .rows
                .iter()
                .map(|r| TableRow {
                    accuracy: round2(r.accuracy),
                    auc: round2(r.auc),
                    eer: round2(r.eer),
                    f1: round2(r.f1),
                    delta_acc: r.delta_acc.map(round2),
                    ..r.clone()
                })
                .collect();
            let doc = Table { rows: rounded, has_delta: table.has_delta, grouped: table.grouped };
            out = serde_json::to_string_pretty(&doc).expect("table serializes");
            out.push('\n');
        }
    }
    out.into_bytes()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub operation: String,
    pub x: f64,
    pub accuracy: f64,
}

/// Accuracy against a quality parameter for one compression family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesData {
    pub family: String,
    pub points: Vec<SeriesPoint>,
    /// Accuracy on unprocessed frames, drawn as a horizontal reference.
    pub raw_reference: Option<f64>,
}

impl SeriesData {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("family,operation,x,accuracy,raw_accuracy\n");
        let raw = self.raw_reference.map(fixed2).unwrap_or_default();
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                csv_field(&self.family),
                csv_field(&p.operation),
                p.x,
                fixed2(p.accuracy),
                raw
            ));
        }
        out
    }
}

pub const FAMILY_CSV_HEADER: &str = "operation,family,accuracy,auc,eer,f1,real,fake";

/// Pristine frames against each manipulation family, one line per
/// `(operation, family)` in report order.
pub fn family_breakdown_csv(report: &EvalReport) -> String {
    let mut out = format!("{FAMILY_CSV_HEADER}\n");
    for row in &report.rows {
        for (family, m) in &row.families {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                csv_field(&row.label),
                family,
                fixed2(m.accuracy),
                fixed2(m.auc),
                fixed2(m.eer),
                fixed2(m.f1),
                m.negatives,
                m.positives
            ));
        }
    }
    out
}

pub fn emit_quality_series(report: &EvalReport, family: &str, series: &[(String, f64)]) -> Result<SeriesData, ReportError> {
    let mut points = series
        .iter()
        .map(|(label, x)| {
            let row = report.row(label).ok_or_else(|| ReportError::MissingOperation(label.clone()))?;
            Ok(SeriesPoint { operation: label.clone(), x: *x, accuracy: row.metrics.accuracy })
        })
        .collect::<Result<Vec<_>, ReportError>>()?;
    points.sort_by(|a, b| a.x.total_cmp(&b.x));
    let mut seen = HashSet::new();
    points.retain(|p| seen.insert(p.operation.clone()));
    Ok(SeriesData {
        family: family.to_string(),
        points,
        raw_reference: report.row(BASELINE_LABEL).map(|r| r.metrics.accuracy),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Confusion;

    fn metrics(accuracy: f64) -> MetricRow {
        MetricRow {
            accuracy,
            auc: 70.0,
            eer: 30.0,
            f1: 85.0,
            counts: Confusion::default(),
            positives: 8,
            negatives: 2,
        }
    }

    fn meta() -> RunMetadata {
        RunMetadata {
            run_id: "r".into(),
            seed: 42,
            detector: "mock".into(),
            corpus_digest: "d".into(),
            timestamp: "t".into(),
            threshold: 0.5,
            aggregation: "frame".into(),
        }
    }

    fn report(rows: &[(&str, &str, f64)]) -> EvalReport {
        let raw = rows.iter().find(|r| r.0 == "raw").map(|r| r.2);
        let rows = rows
            .iter()
            .map(|&(label, category, acc)| ReportRow {
                label: label.into(),
                category: category.into(),
                pipeline: "identity".into(),
                metrics: metrics(acc),
                delta: raw.map(|r| MetricDelta { accuracy: acc - r, auc: 0.0, eer: 0.0, f1: 0.0 }),
                families: vec![],
            })
            .collect();
        EvalReport::new(rows, meta()).unwrap()
    }

    #[test]
    fn single_raw_row_has_no_delta_column() {
        let t = build_table(&report(&[("raw", "raw", 80.25)]), Grouping::ByCategory).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert!(!t.has_delta);
        let md = String::from_utf8(emit_report(&t, Format::Markdown)).unwrap();
        assert!(!md.contains("ΔAcc"));
    }

    #[test]
    fn deltas_are_differences_from_raw() {
        let t = build_table(
            &report(&[("raw", "raw", 80.25), ("jpeg95", "image_transcoding", 78.88), ("jpeg50", "Image Transcoding", 72.14)]),
            Grouping::ByCategory,
        )
        .unwrap();
        assert!(t.has_delta);
        assert_eq!(t.rows[0].delta_acc, None);
        assert!((t.rows[1].delta_acc.unwrap() - (78.88 - 80.25)).abs() < 1e-9);
        assert!((t.rows[2].delta_acc.unwrap() - (72.14 - 80.25)).abs() < 1e-9);
        let csv = String::from_utf8(emit_report(&t, Format::Csv)).unwrap();
        assert_eq!(csv.lines().nth(2).unwrap(), "Image Transcoding,jpeg95,identity,78.88,70.00,30.00,85.00,-1.37");
    }

    #[test]
    fn grouping_keeps_every_row_once() {
        let r = report(&[
            ("raw", "raw", 80.0),
            ("gb3", "image_smoothing", 75.0),
            ("jpeg95", "image_transcoding", 78.0),
            ("mb5", "image_smoothing", 72.0),
        ]);
        let grouped = build_table(&r, Grouping::ByCategory).unwrap();
        let ops: Vec<&str> = grouped.rows.iter().map(|r| r.operation.as_str()).collect();
        assert_eq!(ops, ["raw", "gb3", "mb5", "jpeg95"]);
        let flat = build_table(&r, Grouping::Flat).unwrap();
        let ops: Vec<&str> = flat.rows.iter().map(|r| r.operation.as_str()).collect();
        assert_eq!(ops, ["raw", "gb3", "jpeg95", "mb5"]);
    }

    #[test]
    fn unknown_category_rejected() {
        let r = report(&[("raw", "raw", 80.0), ("x", "sharpening", 70.0)]);
        assert_eq!(build_table(&r, Grouping::Flat), Err(ReportError::UnknownCategory("sharpening".into())));
    }

    #[test]
    fn report_invariants() {
        let row = |label: &str, delta: bool| ReportRow {
            label: label.into(),
            category: "raw".into(),
            pipeline: "identity".into(),
            metrics: metrics(1.0),
            delta: delta.then_some(MetricDelta { accuracy: 0.0, auc: 0.0, eer: 0.0, f1: 0.0 }),
            families: vec![],
        };
        assert_eq!(EvalReport::new(vec![row("raw", true), row("raw", true)], meta()), Err(ReportError::DuplicateBaseline));
        assert_eq!(EvalReport::new(vec![row("x", true)], meta()), Err(ReportError::DeltaMismatch));
        assert_eq!(EvalReport::new(vec![row("raw", false)], meta()), Err(ReportError::DeltaMismatch));
        assert!(EvalReport::new(vec![row("x", false)], meta()).is_ok());
    }

    #[test]
    fn csv_shapes() {
        let empty = String::from_utf8(emit_report(&Table::default(), Format::Csv)).unwrap();
        assert_eq!(empty, format!("{CSV_HEADER}\n"));
        let t = build_table(&report(&[("raw", "raw", 80.25)]), Grouping::Flat).unwrap();
        let one = String::from_utf8(emit_report(&t, Format::Csv)).unwrap();
        assert_eq!(one.lines().count(), 2);
        assert_eq!(one.lines().nth(1).unwrap(), "Raw,raw,identity,80.25,70.00,30.00,85.00,");
    }

    #[test]
    fn serialization_is_pure() {
        let r = report(&[("raw", "raw", 80.0), ("gn", "additive_noise", 27.66)]);
        for format in [Format::Csv, Format::Markdown, Format::Json] {
            let a = emit_report(&build_table(&r, Grouping::ByCategory).unwrap(), format);
            let b = emit_report(&build_table(&r.clone(), Grouping::ByCategory).unwrap(), format);
            assert_eq!(a, b);
        }
        let json: serde_json::Value =
            serde_json::from_slice(&emit_report(&build_table(&r, Grouping::Flat).unwrap(), Format::Json)).unwrap();
        assert_eq!(json["rows"][1]["delta_acc"], serde_json::json!(-52.34));
    }

    #[test]
    fn fixed_formatting() {
        assert_eq!(fixed2(-0.001), "0.00");
        assert_eq!(fixed2(66.666_666), "66.67");
        assert_eq!(fixed2(100.0), "100.00");
    }

    #[test]
    fn quality_series() {
        let r = report(&[("raw", "raw", 80.25), ("jpeg95", "image_transcoding", 78.88), ("jpeg50", "image_transcoding", 72.14), ("jpeg75", "image_transcoding", 76.57)]);
        let s = emit_quality_series(&r, "jpeg", &[("jpeg95".into(), 95.0), ("jpeg50".into(), 50.0), ("jpeg75".into(), 75.0)]).unwrap();
        let xs: Vec<f64> = s.points.iter().map(|p| p.x).collect();
        assert_eq!(xs, [50.0, 75.0, 95.0]);
        assert_eq!(s.raw_reference, Some(80.25));
        assert_eq!(s.to_csv().lines().count(), 4);

        let one = emit_quality_series(&r, "jpeg", &[("jpeg95".into(), 95.0)]).unwrap();
        assert_eq!(one.points.len(), 1);
        assert_eq!(
            emit_quality_series(&r, "jpeg", &[("jpeg10".into(), 10.0)]),
            Err(ReportError::MissingOperation("jpeg10".into()))
        );
    }
}
