//! Detection metrics: ROC, AUC, EER, and threshold metrics (accuracy, F1).
//!
//! Fake is the positive class. Scores are P(fake); a frame is predicted fake
//! when its score is at or above the decision threshold.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Family, Label};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("ROC needs both classes (positives: {positives}, negatives: {negatives})")]
    SingleClass { positives: usize, negatives: usize },
    #[error("score {score} for `{frame_id}` is outside [0, 1]")]
    InvalidScore { frame_id: String, score: f64 },
    #[error("no `raw` operation to compute deltas against")]
    MissingBaseline,
    #[error("operation `{0}` appears more than once")]
    DuplicateOperation(String),
    #[error("operation `{operation}`: {source}")]
    Operation {
        operation: String,
        #[source]
        source: Box<MetricsError>,
    },
    #[error("frame `{0}` has no corpus entry for grouping")]
    UnknownFrame(String),
    #[error("video `{0}` mixes real and fake frames")]
    MixedVideo(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub frame_id: String,
    pub label: Label,
    pub score: f64,
}

impl LabeledScore {
    pub fn new(frame_id: impl Into<String>, label: Label, score: f64) -> Self {
        Self { frame_id: frame_id.into(), label, score }
    }
}

/// ROC as `(fpr, tpr)` points from `(0, 0)` to `(1, 1)`. `thresholds[i]` is
/// the score cut producing `points[i]`; the first is `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
    pub thresholds: Vec<f64>,
    pub positives: usize,
    pub negatives: usize,
}

fn check_scores(data: &[LabeledScore]) -> Result<(), MetricsError> {
    match data.iter().find(|d| !(0.0..=1.0).contains(&d.score)) {
        Some(bad) => Err(MetricsError::InvalidScore { frame_id: bad.frame_id.clone(), score: bad.score }),
        None => Ok(()),
    }
}

/// Sweeps unique score thresholds in descending order; tied scores move the
/// curve in a single (possibly diagonal) step.
pub fn roc_curve(data: &[LabeledScore]) -> Result<RocCurve, MetricsError> {
    check_scores(data)?;
    let positives = data.iter().filter(|d| d.label.is_fake()).count();
    let negatives = data.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::SingleClass { positives, negatives });
    }

    let mut sorted: Vec<(f64, bool)> = data.iter().map(|d| (d.score, d.label.is_fake())).collect();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (p, n) = (positives as f64, negatives as f64);
    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = vec![f64::INFINITY];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let cut = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == cut {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n, tp as f64 / p));
        thresholds.push(cut);
    }
    Ok(RocCurve { points, thresholds, positives, negatives })
}

/// Trapezoidal area under the curve.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EerPoint {
    /// `(fpr + fnr) / 2` at the crossing.
    pub rate: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub threshold: f64,
}

/// Operating point where FPR = FNR, interpolated linearly along the curve
/// segment that crosses `fpr + tpr = 1`.
pub fn eer(curve: &RocCurve) -> EerPoint {
    let gap = |(fpr, tpr): (f64, f64)| fpr + tpr - 1.0;
    let pts = &curve.points;
    for i in 0..pts.len() - 1 {
        let (g0, g1) = (gap(pts[i]), gap(pts[i + 1]));
        if g0 == 0.0 {
            let (fpr, tpr) = pts[i];
            return EerPoint { rate: fpr, fpr, fnr: 1.0 - tpr, threshold: curve.thresholds[i] };
        }
        if g0 < 0.0 && g1 >= 0.0 {
            let t = -g0 / (g1 - g0);
            let fpr = pts[i].0 + t * (pts[i + 1].0 - pts[i].0);
            let tpr = pts[i].1 + t * (pts[i + 1].1 - pts[i].1);
            let fnr = 1.0 - tpr;
            let (c0, c1) = (curve.thresholds[i], curve.thresholds[i + 1]);
            let threshold = if c0.is_finite() { c0 + t * (c1 - c0) } else { c1 };
            return EerPoint { rate: (fpr + fnr) / 2.0, fpr, fnr, threshold };
        }
    }
    // the last point is (1, 1), where the gap is +1, so the loop always returns
    unreachable!("ROC curve must end at (1, 1)")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Fractions in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Confusion,
}

pub fn confusion(data: &[LabeledScore], threshold: f64) -> Confusion {
    let mut c = Confusion::default();
    for d in data {
        match (d.label.is_fake(), d.score >= threshold) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    c
}

pub fn threshold_metrics(data: &[LabeledScore], threshold: f64) -> ThresholdMetrics {
    from_confusion(confusion(data, threshold))
}

pub fn from_confusion(counts: Confusion) -> ThresholdMetrics {
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(counts.tp, counts.tp + counts.fp);
    let recall = ratio(counts.tp, counts.tp + counts.fn_);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    ThresholdMetrics { accuracy: ratio(counts.tp + counts.tn, counts.total()), precision, recall, f1, counts }
}

/// One evaluated operation. Rates are percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricRow {
    pub accuracy: f64,
    pub auc: f64,
    pub eer: f64,
    pub f1: f64,
    pub counts: Confusion,
    pub positives: usize,
    pub negatives: usize,
}

pub fn metric_row(data: &[LabeledScore], threshold: f64) -> Result<MetricRow, MetricsError> {
    let curve = roc_curve(data)?;
    let t = threshold_metrics(data, threshold);
    Ok(MetricRow {
        accuracy: 100.0 * t.accuracy,
        auc: 100.0 * auc(&curve),
        eer: 100.0 * eer(&curve).rate,
        f1: 100.0 * t.f1,
        counts: t.counts,
        positives: curve.positives,
        negatives: curve.negatives,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricDelta {
    pub accuracy: f64,
    pub auc: f64,
    pub eer: f64,
    pub f1: f64,
}

impl MetricDelta {
    pub fn between(row: &MetricRow, baseline: &MetricRow) -> Self {
        Self {
            accuracy: row.accuracy - baseline.accuracy,
            auc: row.auc - baseline.auc,
            eer: row.eer - baseline.eer,
            f1: row.f1 - baseline.f1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Frame,
    Video,
}

/// Corpus facts needed for video aggregation and family breakdowns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameInfo {
    pub video_id: String,
    pub family: Family,
}

/// A video's label and its `(frame_id, score)` samples.
type VideoSamples<'a> = (Label, Vec<(&'a str, f64)>);

/// Collapses frames to one sample per video with the mean frame score.
pub fn aggregate_by_video(
    data: &[LabeledScore],
    info: &HashMap<String, FrameInfo>,
) -> Result<Vec<LabeledScore>, MetricsError> {
    let mut videos: BTreeMap<&str, VideoSamples> = BTreeMap::new();
    for d in data {
        let fi = info.get(&d.frame_id).ok_or_else(|| MetricsError::UnknownFrame(d.frame_id.clone()))?;
        let slot = videos.entry(fi.video_id.as_str()).or_insert((d.label, Vec::new()));
        if slot.0 != d.label {
            return Err(MetricsError::MixedVideo(fi.video_id.clone()));
        }
        slot.1.push((d.frame_id.as_str(), d.score));
    }
    Ok(videos
        .into_iter()
        .map(|(video, (label, mut frames))| {
            // fixed summation order keeps the mean independent of input order
            frames.sort_by(|a, b| a.0.cmp(b.0).then(a.1.total_cmp(&b.1)));
            let mean = frames.iter().map(|f| f.1).sum::<f64>() / frames.len() as f64;
            LabeledScore::new(video, label, mean)
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct EvalOptions<'a> {
    pub threshold: f64,
    pub aggregation: Aggregation,
    /// Require a `raw` operation and compute deltas against it.
    pub deltas: bool,
    /// Needed for video aggregation and per-family rows.
    pub frames: Option<&'a HashMap<String, FrameInfo>>,
}

impl Default for EvalOptions<'_> {
    fn default() -> Self {
        Self { threshold: 0.5, aggregation: Aggregation::Frame, deltas: true, frames: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperationMetrics {
    pub label: String,
    pub metrics: MetricRow,
    pub delta: Option<MetricDelta>,
    /// Pristine frames against each manipulation family in turn.
    pub families: Vec<(Family, MetricRow)>,
}

pub const BASELINE_LABEL: &str = "raw";

/// Metric rows for every operation, in the given order, with deltas against
/// the operation labelled `raw`.
pub fn evaluate_run(
    scores: &[(String, Vec<LabeledScore>)],
    options: &EvalOptions<'_>,
) -> Result<Vec<OperationMetrics>, MetricsError> {
    let mut seen = std::collections::HashSet::new();
    for (label, _) in scores {
        if !seen.insert(label.as_str()) {
            return Err(MetricsError::DuplicateOperation(label.clone()));
        }
    }
    let wrap = |operation: &str| {
        let operation = operation.to_string();
        move |source| MetricsError::Operation { operation, source: Box::new(source) }
    };

    let mut rows = Vec::with_capacity(scores.len());
    for (label, data) in scores {
        let samples = match (options.aggregation, options.frames) {
            (Aggregation::Frame, _) => data.clone(),
            (Aggregation::Video, Some(info)) => aggregate_by_video(data, info).map_err(wrap(label))?,
            (Aggregation::Video, None) => {
                return Err(wrap(label)(MetricsError::UnknownFrame("<no corpus information>".into())))
            }
        };
        let metrics = metric_row(&samples, options.threshold).map_err(wrap(label))?;

        let mut families = Vec::new();
        if let Some(info) = options.frames {
            let mut by_family: BTreeMap<Family, Vec<LabeledScore>> = BTreeMap::new();
            for d in data {
                let fi = info.get(&d.frame_id).ok_or_else(|| wrap(label)(MetricsError::UnknownFrame(d.frame_id.clone())))?;
                by_family.entry(fi.family).or_default().push(d.clone());
            }
            let pristine = by_family.remove(&Family::Pristine).unwrap_or_default();
            if !pristine.is_empty() {
                for (family, fakes) in by_family {
                    let mut subset = pristine.clone();
                    subset.extend(fakes);
                    let subset = match options.aggregation {
                        Aggregation::Frame => subset,
                        Aggregation::Video => aggregate_by_video(&subset, info).map_err(wrap(label))?,
                    };
                    if let Ok(row) = metric_row(&subset, options.threshold) {
                        families.push((family, row));
                    }
                }
            }
        }
        rows.push(OperationMetrics { label: label.clone(), metrics, delta: None, families });
    }

    if options.deltas {
        let baseline = rows
            .iter()
            .find(|r| r.label == BASELINE_LABEL)
            .map(|r| r.metrics)
            .ok_or(MetricsError::MissingBaseline)?;
        for row in &mut rows {
            row.delta = Some(MetricDelta::between(&row.metrics, &baseline));
        }
    }
    Ok(rows)
}

/// Mann–Whitney concordance with ties counted as one half.
pub fn pairwise_auc(data: &[LabeledScore]) -> f64 {
    let pos: Vec<f64> = data.iter().filter(|d| d.label.is_fake()).map(|d| d.score).collect();
    let neg: Vec<f64> = data.iter().filter(|d| !d.label.is_fake()).map(|d| d.score).collect();
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            wins += match p.total_cmp(&n) {
                Ordering::Greater => 1.0,
                Ordering::Equal => 0.5,
                Ordering::Less => 0.0,
            };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn data(pos: &[f64], neg: &[f64]) -> Vec<LabeledScore> {
        let mut v: Vec<_> = pos.iter().enumerate().map(|(i, &s)| LabeledScore::new(format!("p{i}"), Label::Fake, s)).collect();
        v.extend(neg.iter().enumerate().map(|(i, &s)| LabeledScore::new(format!("n{i}"), Label::Real, s)));
        v
    }

    fn invert(d: &[LabeledScore]) -> Vec<LabeledScore> {
        d.iter()
            .map(|x| LabeledScore {
                label: if x.label.is_fake() { Label::Real } else { Label::Fake },
                ..x.clone()
            })
            .collect()
    }

    #[test]
    fn perfect_separation() {
        let d = data(&[0.9, 0.8], &[0.2, 0.1]);
        let c = roc_curve(&d).unwrap();
        for p in [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
            assert!(c.points.contains(&p));
        }
        assert_eq!(auc(&c), 1.0);
        assert_eq!(eer(&c).rate, 0.0);
        assert_eq!(auc(&roc_curve(&invert(&d)).unwrap()), 0.0);
    }

    #[test]
    fn all_tied_scores() {
        let d = data(&[0.5, 0.5, 0.5], &[0.5, 0.5]);
        let c = roc_curve(&d).unwrap();
        assert_eq!(c.points, [(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(auc(&c), 0.5);
        let e = eer(&c);
        assert_eq!(e.rate, 0.5);
        assert_eq!(e.threshold, 0.5);
    }

    #[test]
    fn four_score_fixture() {
        let d = data(&[0.9, 0.6], &[0.8, 0.1]);
        let c = roc_curve(&d).unwrap();
        // thresholds 0.9, 0.8, 0.6, 0.1 enumerated by hand
        assert_eq!(c.points, [(0.0, 0.0), (0.0, 0.5), (0.5, 0.5), (0.5, 1.0), (1.0, 1.0)]);
        assert_eq!(&c.thresholds[1..], &[0.9, 0.8, 0.6, 0.1]);
        assert_eq!(auc(&c), 0.75);
        let e = eer(&c);
        assert_eq!((e.rate, e.fpr, e.fnr, e.threshold), (0.5, 0.5, 0.5, 0.8));
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(roc_curve(&data(&[0.3], &[])), Err(MetricsError::SingleClass { .. })));
        assert!(matches!(roc_curve(&data(&[1.5], &[0.1])), Err(MetricsError::InvalidScore { .. })));
    }

    #[test]
    fn f1_hand_fixture() {
        // TP=2, FP=1, FN=1, TN=1
        let d = data(&[0.9, 0.8, 0.2], &[0.7, 0.1]);
        let t = threshold_metrics(&d, 0.5);
        assert_eq!(t.counts, Confusion { tp: 2, fp: 1, tn: 1, fn_: 1 });
        assert!((t.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((t.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((100.0 * t.f1 - 66.67).abs() < 0.01);
        assert!((t.accuracy - 0.6).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions_and_f1_convention() {
        let d = data(&[0.9, 0.8], &[0.2, 0.1]);
        let t = threshold_metrics(&d, 0.5);
        assert_eq!((t.accuracy, t.f1), (1.0, 1.0));
        let none_predicted = threshold_metrics(&data(&[0.2, 0.3], &[0.1]), 0.5);
        assert_eq!(none_predicted.f1, 0.0);
        assert_eq!(none_predicted.precision, 0.0);
        // threshold is inclusive
        assert_eq!(threshold_metrics(&data(&[0.5], &[0.1]), 0.5).counts.tp, 1);
    }

    #[test]
    fn evaluate_run_rows_and_deltas() {
        let same = data(&[0.9, 0.6], &[0.8, 0.1]);
        let scores = vec![
            ("raw".to_string(), same.clone()),
            ("jpeg95".to_string(), same.clone()),
            ("gnoise".to_string(), data(&[0.9, 0.9], &[0.9, 0.9])),
        ];
        let rows = evaluate_run(&scores, &EvalOptions::default()).unwrap();
        assert_eq!(rows.iter().map(|r| r.label.as_str()).collect::<Vec<_>>(), ["raw", "jpeg95", "gnoise"]);
        assert_eq!(rows[0].metrics, rows[1].metrics);
        assert_eq!(rows[1].delta.unwrap(), MetricDelta { accuracy: 0.0, auc: 0.0, eer: 0.0, f1: 0.0 });
        assert_eq!(rows[2].metrics.accuracy, 50.0);
        assert_eq!(rows[2].delta.unwrap().accuracy, -25.0);

        let no_raw = vec![("jpeg95".to_string(), same.clone())];
        assert_eq!(evaluate_run(&no_raw, &EvalOptions::default()), Err(MetricsError::MissingBaseline));
        let opts = EvalOptions { deltas: false, ..EvalOptions::default() };
        assert!(evaluate_run(&no_raw, &opts).unwrap()[0].delta.is_none());
        let dup = vec![("raw".to_string(), same.clone()), ("raw".to_string(), same)];
        assert!(matches!(evaluate_run(&dup, &opts), Err(MetricsError::DuplicateOperation(_))));
    }

    #[test]
    fn video_aggregation_and_families() {
        let mut info = HashMap::new();
        let mut d = Vec::new();
        let frames = [
            ("r0", "vr", Family::Pristine, 0.1),
            ("r1", "vr", Family::Pristine, 0.3),
            ("d0", "vd", Family::Deepfake, 0.9),
            ("d1", "vd", Family::Deepfake, 0.7),
            ("s0", "vs", Family::Faceswap, 0.2),
            ("s1", "vs", Family::Faceswap, 0.1),
        ];
        for (id, video, family, score) in frames {
            info.insert(id.to_string(), FrameInfo { video_id: video.into(), family });
            let label = if family == Family::Pristine { Label::Real } else { Label::Fake };
            d.push(LabeledScore::new(id, label, score));
        }
        let videos = aggregate_by_video(&d, &info).unwrap();
        assert_eq!(videos.len(), 3);
        let vd = videos.iter().find(|v| v.frame_id == "vd").unwrap();
        assert!((vd.score - 0.8).abs() < 1e-12);

        let opts = EvalOptions { frames: Some(&info), deltas: false, ..EvalOptions::default() };
        let rows = evaluate_run(&[("raw".into(), d.clone())], &opts).unwrap();
        let fams: Vec<Family> = rows[0].families.iter().map(|f| f.0).collect();
        assert_eq!(fams, [Family::Deepfake, Family::Faceswap]);
        assert_eq!(rows[0].families[0].1.auc, 100.0);
        assert_eq!(rows[0].families[0].1.positives, 2);

        let video_opts = EvalOptions { aggregation: Aggregation::Video, ..opts };
        let rows = evaluate_run(&[("raw".into(), d)], &video_opts).unwrap();
        assert_eq!(rows[0].metrics.positives + rows[0].metrics.negatives, 3);
    }

    fn scored_sets() -> impl Strategy<Value = Vec<LabeledScore>> {
        // coarse grid forces ties
        (1usize..25, 1usize..25).prop_flat_map(|(np, nn)| {
            (prop::collection::vec(0u8..=20, np), prop::collection::vec(0u8..=20, nn)).prop_map(|(p, n)| {
                let p: Vec<f64> = p.into_iter().map(|v| f64::from(v) / 20.0).collect();
                let n: Vec<f64> = n.into_iter().map(|v| f64::from(v) / 20.0).collect();
                data(&p, &n)
            })
        })
    }

    proptest! {
        #[test]
        fn trapezoid_matches_concordance(d in scored_sets()) {
            let c = roc_curve(&d).unwrap();
            prop_assert!((auc(&c) - pairwise_auc(&d)).abs() <= 1e-9);
        }

        #[test]
        fn relabeling_complements_auc(d in scored_sets()) {
            let a = auc(&roc_curve(&d).unwrap());
            let b = auc(&roc_curve(&invert(&d)).unwrap());
            prop_assert!((a + b - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn monotone_transform_keeps_auc(d in scored_sets()) {
            let squashed: Vec<_> = d.iter().map(|x| LabeledScore { score: x.score.powf(3.0) * 0.5 + 0.1, ..x.clone() }).collect();
            prop_assert_eq!(auc(&roc_curve(&d).unwrap()), auc(&roc_curve(&squashed).unwrap()));
        }

        #[test]
        fn curve_is_monotone_with_exact_endpoints(d in scored_sets()) {
            let c = roc_curve(&d).unwrap();
            prop_assert_eq!(c.points[0], (0.0, 0.0));
            prop_assert_eq!(*c.points.last().unwrap(), (1.0, 1.0));
            for w in c.points.windows(2) {
                prop_assert!(w[0].0 <= w[1].0 && w[0].1 <= w[1].1);
            }
        }

        #[test]
        fn eer_balances_error_rates(d in scored_sets()) {
            let e = eer(&roc_curve(&d).unwrap());
            prop_assert!((e.fpr - e.fnr).abs() <= 1e-9);
            prop_assert!((0.0..=1.0).contains(&e.rate));
        }

        #[test]
        fn confusion_partitions_input(d in scored_sets(), t in 0.0f64..1.0) {
            let m = threshold_metrics(&d, t);
            prop_assert_eq!(m.counts.total(), d.len());
            let errors = (m.counts.fp + m.counts.fn_) as f64 / d.len() as f64;
            prop_assert!((m.accuracy + errors - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn evaluation_ignores_input_order(d in scored_sets(), rot in 0usize..50) {
            let mut shuffled = d.clone();
            shuffled.reverse();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            let a = evaluate_run(&[("raw".into(), d)], &EvalOptions::default()).unwrap();
            let b = evaluate_run(&[("raw".into(), shuffled)], &EvalOptions::default()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
