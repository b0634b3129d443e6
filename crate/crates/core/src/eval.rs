//! Confusion matrices, threshold metrics, ROC and precision-recall curves,
//! AUC, and aggregation of per-fold curves.

use std::fmt;
use std::io::Write;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{scores} scores for {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("label {0} is not binary")]
    NonBinary(u8),
    #[error("curve needs both classes ({positives} positives, {negatives} negatives)")]
    SingleClass { positives: usize, negatives: usize },
    #[error("cannot aggregate {0}")]
    Aggregate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn check(scores: &[f64], labels: &[u8]) -> Result<(), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y > 1) {
        return Err(EvalError::NonBinary(bad));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tp: u64,
}

impl ConfusionMatrix {
    /// Actual negatives N.
    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    /// Actual positives P.
    pub fn positives(&self) -> u64 {
        self.fn_ + self.tp
    }

    /// Predicted negatives N̂.
    pub fn predicted_negatives(&self) -> u64 {
        self.tn + self.fn_
    }

    /// Predicted positives P̂.
    pub fn predicted_positives(&self) -> u64 {
        self.fp + self.tp
    }

    pub fn n(&self) -> u64 {
        self.negatives() + self.positives()
    }
}

/// Counts with "positive iff score > threshold" (strict).
pub fn confusion_at(scores: &[f64], labels: &[u8], threshold: f64) -> Result<ConfusionMatrix, EvalError> {
    check(scores, labels)?;
    let mut cm = ConfusionMatrix::default();
    for (&s, &y) in scores.iter().zip(labels) {
        match (s > threshold, y == 1) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// Threshold metrics. `None` marks a rate whose denominator (P or N) is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub recall: Option<f64>,
    pub fpr: Option<f64>,
    /// 0 when nothing is predicted positive.
    pub precision: f64,
    pub tnr: Option<f64>,
    /// 0 when there are no true positives.
    pub f1: f64,
    pub balanced_accuracy: Option<f64>,
}

fn ratio(a: u64, b: u64) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

pub fn metrics(cm: &ConfusionMatrix) -> Metrics {
    let recall = ratio(cm.tp, cm.positives());
    let tnr = ratio(cm.tn, cm.negatives());
    let precision = ratio(cm.tp, cm.predicted_positives()).unwrap_or(0.0);
    let f1 = if cm.tp == 0 {
        0.0
    } else {
        2.0 * cm.tp as f64 / (2 * cm.tp + cm.fp + cm.fn_) as f64
    };
    Metrics {
        recall,
        fpr: ratio(cm.fp, cm.negatives()),
        precision,
        tnr,
        f1,
        balanced_accuracy: recall.zip(tnr).map(|(r, t)| (r + t) / 2.0),
    }
}

/// Mean squared difference between score and label.
pub fn brier(scores: &[f64], labels: &[u8]) -> Result<f64, EvalError> {
    check(scores, labels)?;
    if scores.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| (s - y as f64).powi(2))
        .sum();
    Ok(sum / scores.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    /// x = false-positive rate, y = recall.
    Roc,
    /// x = recall, y = precision.
    Pr,
}

impl CurveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveKind::Roc => "roc",
            CurveKind::Pr => "pr",
        }
    }
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
    /// Scores strictly above this value are positive; `+inf` for the ROC origin.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub kind: CurveKind,
    pub points: Vec<CurvePoint>,
}

/// Cumulative (threshold, TP, FP) after each block of tied scores, in
/// descending score order.
fn operating_points(scores: &[f64], labels: &[u8]) -> Vec<(f64, u64, u64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
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
        // at threshold just below s: everything scoring >= s is positive
        out.push((s, tp, fp));
    }
    out
}

fn class_counts(labels: &[u8]) -> (usize, usize) {
    let p = labels.iter().filter(|&&y| y == 1).count();
    (p, labels.len() - p)
}

/// ROC points at every distinct score, from (0,0) to (1,1). Tied scores
/// form one step, which becomes a diagonal segment.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<Curve, EvalError> {
    check(scores, labels)?;
    let (p, n) = class_counts(labels);
    if p == 0 || n == 0 {
        return Err(EvalError::SingleClass { positives: p, negatives: n });
    }
    let mut points = vec![CurvePoint {
        x: 0.0,
        y: 0.0,
        threshold: f64::INFINITY,
    }];
    for (s, tp, fp) in operating_points(scores, labels) {
        points.push(CurvePoint {
            x: fp as f64 / n as f64,
            y: tp as f64 / p as f64,
            threshold: s,
        });
    }
    Ok(Curve {
        kind: CurveKind::Roc,
        points,
    })
}

/// (recall, precision) at every distinct score, in descending score order.
pub fn pr_curve(scores: &[f64], labels: &[u8]) -> Result<Curve, EvalError> {
    check(scores, labels)?;
    let (p, n) = class_counts(labels);
    if p == 0 {
        return Err(EvalError::SingleClass { positives: p, negatives: n });
    }
    let points = operating_points(scores, labels)
        .into_iter()
        .map(|(s, tp, fp)| CurvePoint {
            x: tp as f64 / p as f64,
            y: tp as f64 / (tp + fp) as f64,
            threshold: s,
        })
        .collect();
    Ok(Curve {
        kind: CurveKind::Pr,
        points,
    })
}

/// Trapezoidal area under the curve's points.
pub fn auc(curve: &Curve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].x - w[0].x) * (w[0].y + w[1].y) / 2.0)
        .sum()
}

/// ROC AUC of a scorer; shorthand for `auc(&roc_curve(..)?)`.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64, EvalError> {
    Ok(auc(&roc_curve(scores, labels)?))
}

/// Curve value at `x`: linear between neighbouring points, the largest y
/// where several points share x, flat beyond the ends.
pub fn interpolate(curve: &Curve, x: f64) -> f64 {
    let pts = &curve.points;
    let first = pts.first().expect("non-empty curve");
    let last = pts.last().expect("non-empty curve");
    if x <= first.x {
        return pts.iter().take_while(|p| p.x == first.x).map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    }
    if x >= last.x {
        return pts.iter().rev().take_while(|p| p.x == last.x).map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    }
    let at: Vec<f64> = pts.iter().filter(|p| p.x == x).map(|p| p.y).collect();
    if !at.is_empty() {
        return at.into_iter().fold(f64::NEG_INFINITY, f64::max);
    }
    let j = pts.iter().position(|p| p.x > x).expect("x below last point");
    let (a, b) = (&pts[j - 1], &pts[j]);
    a.y + (b.y - a.y) * (x - a.x) / (b.x - a.x)
}

/// How per-fold curves are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    /// Average of the fold curves on a fixed x-grid.
    Vertical,
    /// One curve over the pooled fold scores.
    Pooled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateCurve {
    pub kind: CurveKind,
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Vertical averaging of at least two curves of one kind on `grid_size`
/// evenly spaced x values in [0, 1].
pub fn aggregate_curves(curves: &[Curve], grid_size: usize) -> Result<AggregateCurve, EvalError> {
    if curves.len() < 2 {
        return Err(EvalError::Aggregate("fewer than two curves".into()));
    }
    if grid_size < 2 {
        return Err(EvalError::Aggregate("a grid of fewer than two points".into()));
    }
    let kind = curves[0].kind;
    if curves.iter().any(|c| c.kind != kind) {
        return Err(EvalError::Aggregate("curves of different kinds".into()));
    }
    if curves.iter().any(|c| c.points.is_empty()) {
        return Err(EvalError::Aggregate("an empty curve".into()));
    }
    let grid: Vec<f64> = (0..grid_size).map(|i| i as f64 / (grid_size - 1) as f64).collect();
    let k = curves.len() as f64;
    let mut agg = AggregateCurve {
        kind,
        grid: grid.clone(),
        mean: Vec::with_capacity(grid_size),
        min: Vec::with_capacity(grid_size),
        max: Vec::with_capacity(grid_size),
    };
    for &x in &grid {
        let ys: Vec<f64> = curves.iter().map(|c| interpolate(c, x)).collect();
        agg.mean.push(ys.iter().sum::<f64>() / k);
        agg.min.push(ys.iter().copied().fold(f64::INFINITY, f64::min));
        agg.max.push(ys.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    Ok(agg)
}

/// Single curve over the concatenated (scores, labels) of every fold.
pub fn pooled_curve(kind: CurveKind, folds: &[(Vec<f64>, Vec<u8>)]) -> Result<Curve, EvalError> {
    let scores: Vec<f64> = folds.iter().flat_map(|f| f.0.iter().copied()).collect();
    let labels: Vec<u8> = folds.iter().flat_map(|f| f.1.iter().copied()).collect();
    match kind {
        CurveKind::Roc => roc_curve(&scores, &labels),
        CurveKind::Pr => pr_curve(&scores, &labels),
    }
}

/// Writes `kind,fold,threshold,x,y` rows for each labelled curve.
pub fn write_curves_csv<W: Write>(mut out: W, curves: &[(String, &Curve)]) -> Result<(), EvalError> {
    writeln!(out, "kind,fold,threshold,x,y")?;
    for (fold, curve) in curves {
        for p in &curve.points {
            writeln!(out, "{},{},{},{},{}", curve.kind, fold, p.threshold, p.x, p.y)?;
        }
    }
    Ok(())
}

/// Writes `kind,x,mean,min,max` rows of an aggregated curve.
pub fn write_aggregate_csv<W: Write>(mut out: W, agg: &AggregateCurve) -> Result<(), EvalError> {
    writeln!(out, "kind,x,mean,min,max")?;
    for i in 0..agg.grid.len() {
        writeln!(out, "{},{},{},{},{}", agg.kind, agg.grid[i], agg.mean[i], agg.min[i], agg.max[i])?;
    }
    Ok(())
}

/// Test-time summary used in the tuning tables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub auc: f64,
    pub bac: Option<f64>,
    pub brier: f64,
    pub f1: f64,
}

pub fn summarize(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Summary, EvalError> {
    let cm = confusion_at(scores, labels, threshold)?;
    let m = metrics(&cm);
    Ok(Summary {
        auc: roc_auc(scores, labels)?,
        bac: m.balanced_accuracy,
        brier: brier(scores, labels)?,
        f1: m.f1,
    })
}
