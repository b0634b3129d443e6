//! Grid-search tuning with holdout or k-fold evaluation.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, KvConfig};
use crate::dataset::{make_fold_plan, split_indices, DataError, DataTable};
use crate::eval::{summarize, EvalError, Summary};
use crate::model::{fit_model, ModelError, ModelFamily, ModelSpec};
use crate::trees::derive_seed;

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("the grid has no cells")]
    EmptyGrid,
    #[error("invalid protocol {0:?} (expected holdout:F or cv:K)")]
    Protocol(String),
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How each grid cell is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Protocol {
    /// Stratified split with this share of rows held out for testing.
    Holdout { test_fraction: f64 },
    /// Stratified k-fold cross-validation; metrics are fold means.
    CrossValidation { k: usize },
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol::Holdout { test_fraction: 0.25 }
    }
}

impl FromStr for Protocol {
    type Err = TuneError;

    fn from_str(s: &str) -> Result<Protocol, TuneError> {
        let bad = || TuneError::Protocol(s.to_string());
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "holdout" => {
                let f: f64 = arg.parse().map_err(|_| bad())?;
                if !(f > 0.0 && f < 1.0) {
                    return Err(bad());
                }
                Ok(Protocol::Holdout { test_fraction: f })
            }
            "cv" => {
                let k: usize = arg.parse().map_err(|_| bad())?;
                if k < 2 {
                    return Err(bad());
                }
                Ok(Protocol::CrossValidation { k })
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Protocol::Holdout { test_fraction } => write!(f, "holdout:{test_fraction}"),
            Protocol::CrossValidation { k } => write!(f, "cv:{k}"),
        }
    }
}

/// One grid cell: a family and its `key = value` assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpec {
    pub family: ModelFamily,
    pub params: Vec<(String, String)>,
}

impl TrialSpec {
    pub fn resolve(&self, seed: u64) -> Result<ModelSpec, ModelError> {
        ModelSpec::from_params(self.family, &self.params, seed).map(|(s, _)| s)
    }
}

impl fmt::Display for TrialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.family)?;
        for (k, v) in &self.params {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

/// Cartesian product of per-key value lists; the first key varies slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub family: ModelFamily,
    pub axes: Vec<(String, Vec<String>)>,
}

impl Grid {
    /// Reads `family = ...` plus one `key = v1, v2, ...` line per hyperparameter.
    pub fn from_config(mut cfg: KvConfig) -> Result<Grid, TuneError> {
        let family: ModelFamily = cfg
            .take_str("family")
            .ok_or_else(|| ConfigError::MissingKey("family".into()))?
            .parse()?;
        let axes = cfg
            .entries()
            .into_iter()
            .map(|(k, v)| (k, v.split(',').map(|s| s.trim().to_string()).collect()))
            .collect();
        Ok(Grid { family, axes })
    }

    pub fn keys(&self) -> Vec<&str> {
        self.axes.iter().map(|(k, _)| k.as_str()).collect()
    }

    pub fn cells(&self) -> Vec<TrialSpec> {
        let mut cells = vec![Vec::new()];
        for (key, values) in &self.axes {
            cells = cells
                .into_iter()
                .flat_map(|prefix: Vec<(String, String)>| {
                    values.iter().map(move |v| {
                        let mut c = prefix.clone();
                        c.push((key.clone(), v.clone()));
                        c
                    })
                })
                .collect();
        }
        if self.axes.iter().any(|(_, v)| v.is_empty()) {
            return Vec::new();
        }
        cells
            .into_iter()
            .map(|params| TrialSpec {
                family: self.family,
                params,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialMetrics {
    pub test: Summary,
    pub train: Summary,
}

impl TrialMetrics {
    /// Looks up `auc.te`, `bac.tr`, `br.te`, `f1.tr` and so on.
    pub fn get(&self, metric: &str) -> Option<f64> {
        let (name, part) = metric.split_once('.')?;
        let s = match part {
            "te" => &self.test,
            "tr" => &self.train,
            _ => return None,
        };
        match name {
            "auc" => Some(s.auc),
            "bac" => s.bac,
            "br" => Some(s.brier),
            "f1" => Some(s.f1),
            _ => None,
        }
    }
}

pub const METRIC_COLUMNS: [&str; 8] = ["auc.te", "auc.tr", "bac.te", "bac.tr", "br.te", "br.tr", "f1.te", "f1.tr"];

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub index: usize,
    pub spec: TrialSpec,
    /// Metrics, or the message of the error that stopped this cell.
    pub outcome: Result<TrialMetrics, String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOptions {
    pub protocol: Protocol,
    pub seed: u64,
    pub threshold: f64,
    /// Keep the class ratio in every split and fold.
    pub stratified: bool,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions {
            protocol: Protocol::default(),
            seed: 1,
            threshold: 0.5,
            stratified: true,
        }
    }
}

fn mean_summary(parts: &[Summary]) -> Summary {
    let k = parts.len() as f64;
    let bac = parts.iter().map(|s| s.bac).collect::<Option<Vec<f64>>>();
    Summary {
        auc: parts.iter().map(|s| s.auc).sum::<f64>() / k,
        bac: bac.map(|b| b.iter().sum::<f64>() / k),
        brier: parts.iter().map(|s| s.brier).sum::<f64>() / k,
        f1: parts.iter().map(|s| s.f1).sum::<f64>() / k,
    }
}

#[derive(Debug, Error)]
enum CellError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Resample(#[from] crate::resample::ResampleError),
}

/// Resamples `train`, fits, and scores the original training rows and `test`.
/// Test rows never enter resampling or fitting.
pub fn evaluate_split(
    spec: &TrialSpec,
    train: &DataTable,
    test: &DataTable,
    seed: u64,
    threshold: f64,
) -> Result<TrialMetrics, String> {
    let run = || -> Result<TrialMetrics, CellError> {
        let (model_spec, plan) = ModelSpec::from_params(spec.family, &spec.params, seed)?;
        let fitted = plan.apply(train)?;
        let model = fit_model(&model_spec, &fitted)?;
        let tr = summarize(&model.score(train)?, train.labels(), threshold)?;
        let te = summarize(&model.score(test)?, test.labels(), threshold)?;
        Ok(TrialMetrics { test: te, train: tr })
    };
    run().map_err(|e| e.to_string())
}

/// Evaluates every cell of `grid` under `options.protocol`. Partitions are
/// shared by all cells. Cells run in parallel on the current rayon pool and
/// come back in grid order; a failing cell is recorded and the rest continue.
pub fn grid_search(grid: &Grid, table: &DataTable, options: &TuneOptions) -> Result<Vec<TrialResult>, TuneError> {
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(TuneError::EmptyGrid);
    }
    // configuration errors stop the run before any fitting
    for c in &cells {
        c.resolve(options.seed)?;
    }
    table.require_both_classes()?;
    let labels = table.labels();
    let splits: Vec<(DataTable, DataTable)> = match options.protocol {
        Protocol::Holdout { test_fraction } => {
            let (tr, te) = split_indices(labels, test_fraction, options.stratified, options.seed)?;
            vec![(table.take(&tr), table.take(&te))]
        }
        Protocol::CrossValidation { k } => {
            let plan = make_fold_plan(labels, k, options.stratified, options.seed)?;
            (0..k)
                .map(|f| {
                    let (tr, te) = plan.split(f);
                    (table.take(&tr), table.take(&te))
                })
                .collect()
        }
    };
    let results = cells
        .into_par_iter()
        .enumerate()
        .map(|(index, spec)| {
            let start = Instant::now();
            let parts: Result<Vec<TrialMetrics>, String> = splits
                .iter()
                .enumerate()
                .map(|(f, (tr, te))| evaluate_split(&spec, tr, te, derive_seed(options.seed, f as u64), options.threshold))
                .collect();
            let outcome = parts.map(|p| TrialMetrics {
                test: mean_summary(&p.iter().map(|m| m.test).collect::<Vec<_>>()),
                train: mean_summary(&p.iter().map(|m| m.train).collect::<Vec<_>>()),
            });
            TrialResult {
                index,
                spec,
                outcome,
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect();
    Ok(results)
}

/// Best result by `metric` (`br.*` is minimized, everything else maximized).
/// Ties go to the smaller model: fewer trees, then shallower, then the larger
/// penalty, then the lexicographically smaller parameter list.
pub fn select_best<'a>(results: &'a [TrialResult], metric: &str, seed: u64) -> Result<Option<&'a TrialResult>, TuneError> {
    if !METRIC_COLUMNS.contains(&metric) {
        return Err(TuneError::UnknownMetric(metric.to_string()));
    }
    let lower_better = metric.starts_with("br.");
    let mut best: Option<(&TrialResult, f64, (usize, usize, f64))> = None;
    for r in results {
        let Some(v) = r.outcome.as_ref().ok().and_then(|m| m.get(metric)) else {
            continue;
        };
        let v = if lower_better { -v } else { v };
        let size = r.spec.resolve(seed)?.size_key();
        let better = match &best {
            None => true,
            Some((b, bv, bsize)) => {
                v > *bv
                    || (v == *bv
                        && (size.0, size.1)
                            .cmp(&(bsize.0, bsize.1))
                            .then(size.2.total_cmp(&bsize.2))
                            .then_with(|| r.spec.params.cmp(&b.spec.params))
                            .is_lt())
            }
        };
        if better {
            best = Some((r, v, size));
        }
    }
    Ok(best.map(|b| b.0))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("NA".to_string(), |v| v.to_string())
}

/// Writes one row per cell: grid parameters, then the metric columns.
pub fn write_results_csv<W: Write>(mut out: W, grid: &Grid, results: &[TrialResult]) -> std::io::Result<()> {
    let mut header: Vec<&str> = grid.keys();
    header.extend(METRIC_COLUMNS);
    writeln!(out, "{}", header.join(","))?;
    for r in results {
        let mut row: Vec<String> = r.spec.params.iter().map(|(_, v)| v.clone()).collect();
        for m in METRIC_COLUMNS {
            row.push(fmt_opt(r.outcome.as_ref().ok().and_then(|o| o.get(m))));
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
