//! Classification metrics, ROC curves and AUC.
//!
//! F1 here is the harmonic mean of sensitivity and specificity, not the
//! precision/recall F1. Class 1 is the positive class.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Percentages; `None` marks a metric whose denominator is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub acc: f64,
    pub sen: Option<f64>,
    pub spe: Option<f64>,
    pub f1: Option<f64>,
    pub auc: Option<f64>,
    pub counts: ConfusionCounts,
}

/// Harmonic mean of two percentages; 0 when both are 0.
pub fn harmonic_f1(sen: f64, spe: f64) -> f64 {
    if sen + spe == 0.0 {
        0.0
    } else {
        2.0 * sen * spe / (sen + spe)
    }
}

pub fn metrics(c: ConfusionCounts) -> Result<MetricsReport> {
    if c.total() == 0 {
        return Err(Error::InvalidArgument("all confusion counts are zero".into()));
    }
    let pct = |num: u64, den: u64| (den > 0).then(|| 100.0 * num as f64 / den as f64);
    let acc = 100.0 * (c.tp + c.tn) as f64 / c.total() as f64;
    let sen = pct(c.tp, c.tp + c.fn_);
    let spe = pct(c.tn, c.tn + c.fp);
    let f1 = match (sen, spe) {
        (Some(a), Some(b)) => Some(harmonic_f1(a, b)),
        _ => None,
    };
    Ok(MetricsReport { acc, sen, spe, f1, auc: None, counts: c })
}

/// Hard decision from class probabilities: argmax, ties go to class 0.
pub fn decide(probs: [f64; 2]) -> u8 {
    u8::from(probs[1] > probs[0])
}

pub fn confusion(predictions: &[u8], labels: &[u8]) -> Result<ConfusionCounts> {
    if predictions.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!("{} predictions for {} labels", predictions.len(), labels.len())));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (1, 1) => c.tp += 1,
            (0, 0) => c.tn += 1,
            (1, 0) => c.fp += 1,
            (0, 1) => c.fn_ += 1,
            _ => return Err(Error::InvalidArgument(format!("labels must be 0 or 1, got ({p}, {l})"))),
        }
    }
    Ok(c)
}

/// True when every prediction is the same class (a collapsed classifier).
pub fn is_collapsed(predictions: &[u8]) -> bool {
    predictions.windows(2).all(|w| w[0] == w[1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// (fpr, tpr) from (0, 0) to (1, 1).
    pub points: Vec<(f64, f64)>,
}

/// Threshold sweep over the unique scores in descending order; samples with
/// equal scores enter together.
pub fn roc(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("ROC scores".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidArgument("ROC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(RocCurve { points })
}

/// Trapezoid area under the curve, in percent.
pub fn auc(curve: &RocCurve) -> f64 {
    let area: f64 = curve.points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum();
    100.0 * area
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.2}"))
}

impl MetricsReport {
    pub fn with_auc(mut self, auc: Option<f64>) -> Self {
        self.auc = auc;
        self
    }

    pub fn csv_fields(&self) -> [String; 5] {
        [format!("{:.2}", self.acc), fmt_opt(self.sen), fmt_opt(self.spe), fmt_opt(self.f1), fmt_opt(self.auc)]
    }
}

pub const METRICS_HEADER: [&str; 7] = ["run_id", "task", "acc", "sen", "spe", "f1", "auc"];

/// Metrics table: one row per (run id, task) pair.
pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[(String, String, MetricsReport)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(METRICS_HEADER)?;
    for (run, task, r) in rows {
        let mut rec = vec![run.clone(), task.clone()];
        rec.extend(r.csv_fields());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_roc_csv(path: impl AsRef<Path>, curve: &RocCurve) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["fpr", "tpr"])?;
    for (f, t) in &curve.points {
        w.write_record([f.to_string(), t.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Minimal SVG line plot; `series` holds (label, points) with coordinates in
/// the unit square.
pub fn line_plot_svg(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    const W: f64 = 420.0;
    const H: f64 = 420.0;
    const M: f64 = 50.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
    let sx = |x: f64| M + x * (W - 2.0 * M);
    let sy = |y: f64| H - M - y * (H - 2.0 * M);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#, W / 2.0);
    let _ = writeln!(
        s,
        r#"<rect x="{M}" y="{M}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * M,
        H - 2.0 * M
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, W / 2.0, H - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{y_label}</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (k, (label, pts)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let d: Vec<String> = pts
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| format!("{}{:.2},{:.2}", if i == 0 { 'M' } else { 'L' }, sx(x), sy(y)))
            .collect();
        let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, d.join(" "));
        let _ =
            writeln!(s, r#"<text x="{}" y="{}" fill="{color}">{label}</text>"#, M + 10.0, M + 16.0 * (k as f64 + 1.0));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(tp: u64, tn: u64, fp: u64, fn_: u64) -> ConfusionCounts {
        ConfusionCounts { tp, tn, fp, fn_ }
    }

    #[test]
    fn perfect_classifier() {
        let r = metrics(counts(10, 10, 0, 0)).unwrap();
        assert_eq!((r.acc, r.sen, r.spe, r.f1), (100.0, Some(100.0), Some(100.0), Some(100.0)));
    }

    #[test]
    fn undefined_is_distinct_from_zero() {
        // all predictions positive on a mixed set: SEN 100, SPE 0
        let r = metrics(counts(5, 0, 5, 0)).unwrap();
        assert_eq!((r.sen, r.spe, r.f1), (Some(100.0), Some(0.0), Some(0.0)));
        // no negatives at all: SPE undefined
        let r = metrics(counts(5, 0, 0, 1)).unwrap();
        assert_eq!(r.spe, None);
        assert_eq!(r.f1, None);
        assert_eq!(r.csv_fields()[2], "undefined");
        assert!(metrics(ConfusionCounts::default()).is_err());
    }

    #[test]
    fn confusion_tally() {
        assert_eq!(confusion(&[1, 0, 1], &[1, 0, 1]).unwrap(), counts(2, 1, 0, 0));
        assert_eq!(confusion(&[0, 1, 0], &[1, 0, 1]).unwrap(), counts(0, 0, 1, 2));
        assert_eq!(confusion(&[1, 1, 0, 0, 1, 0], &[1, 0, 0, 1, 1, 0]).unwrap(), counts(2, 2, 1, 1));
    }

    #[test]
    fn tie_goes_to_class_zero() {
        assert_eq!(decide([0.5, 0.5]), 0);
        assert_eq!(decide([0.4, 0.6]), 1);
    }

    #[test]
    fn collapse_flag() {
        assert!(is_collapsed(&[1, 1, 1]));
        assert!(!is_collapsed(&[1, 0, 1]));
    }

    #[test]
    fn hand_auc() {
        let c = roc(&[0.9, 0.8, 0.3, 0.2], &[1, 0, 1, 0]).unwrap();
        assert!((auc(&c) - 75.0).abs() < 1e-12);
        let c = roc(&[0.9, 0.8, 0.3, 0.2], &[1, 1, 0, 0]).unwrap();
        assert_eq!(auc(&c), 100.0);
        assert!(roc(&[0.1, 0.2], &[1, 1]).is_err());
    }

    #[test]
    fn random_scores_near_half() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let scores: Vec<f64> = (0..1000).map(|_| rng.gen()).collect();
        let labels: Vec<u8> = (0..1000).map(|_| rng.gen_range(0..2)).collect();
        assert!((auc(&roc(&scores, &labels).unwrap()) - 50.0).abs() < 5.0);
    }

    #[test]
    fn svg_has_one_path_per_series() {
        let svg = line_plot_svg("t", "x", "y", &[("a".into(), vec![(0.0, 0.0), (1.0, 1.0)]), ("b".into(), vec![])]);
        assert_eq!(svg.matches("<path").count(), 2);
    }

    proptest! {
        #[test]
        fn scale_free(a in 0u64..50, b in 0u64..50, c in 0u64..50, d in 1u64..50) {
            let r1 = metrics(counts(a, b, c, d)).unwrap();
            let r10 = metrics(counts(10 * a, 10 * b, 10 * c, 10 * d)).unwrap();
            prop_assert_eq!(r1.csv_fields(), r10.csv_fields());
            prop_assert!((r1.acc - r10.acc).abs() < 1e-12);
        }

        #[test]
        fn roc_monotone_and_anchored(scores in proptest::collection::vec(0u8..10, 2..60), seed in any::<u64>()) {
            let labels: Vec<u8> = (0..scores.len()).map(|i| ((seed >> (i % 64)) & 1) as u8).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let s: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
            let c = roc(&s, &labels).unwrap();
            prop_assert_eq!(c.points[0], (0.0, 0.0));
            prop_assert_eq!(*c.points.last().unwrap(), (1.0, 1.0));
            for w in c.points.windows(2) {
                prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
            }
        }
    }
}
