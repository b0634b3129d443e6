//! Variable relevance: model importances scaled to sum to one over the
//! original features, so forests, boosted trees and elastic nets can be
//! compared side by side.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::dataset::ColumnOrigin;
use crate::linear::{Coding, LinearFit};
use crate::trees::{BoostModel, Forest, GiniImportance};

#[derive(Debug, Error)]
pub enum VarRelError {
    #[error("model has {model} columns but provenance covers {provenance}")]
    ProvenanceGap { model: usize, provenance: usize },
    #[error("elastic-net relevance needs a fit on standardized covariates")]
    NotStandardized,
    #[error("elastic-net relevance needs the full one-hot coding")]
    ReferenceCoding,
    #[error("no relevance measure defined for {0} models")]
    Unsupported(String),
    #[error("grouping line {line}: expected `feature,group`")]
    Grouping { line: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Rf,
    Xgb,
    Elanet,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Rf => "rf",
            Family::Xgb => "xgb",
            Family::Elanet => "elanet",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceReport {
    pub family: Family,
    pub dataset: String,
    /// Original feature → relevance, in feature order.
    pub relevance: Vec<(String, f64)>,
    /// Every raw importance was zero; relevances are all 0 instead of summing to 1.
    pub degenerate: bool,
}

impl RelevanceReport {
    fn normalized(family: Family, raw: Vec<(String, f64)>) -> RelevanceReport {
        let total: f64 = raw.iter().map(|(_, v)| v).sum();
        let degenerate = total <= 0.0;
        let relevance = raw
            .into_iter()
            .map(|(f, v)| (f, if degenerate { 0.0 } else { v / total }))
            .collect();
        RelevanceReport {
            family,
            dataset: String::new(),
            relevance,
            degenerate,
        }
    }

    pub fn with_dataset(mut self, dataset: &str) -> RelevanceReport {
        self.dataset = dataset.to_string();
        self
    }

    pub fn get(&self, feature: &str) -> Option<f64> {
        self.relevance.iter().find(|(f, _)| f == feature).map(|(_, v)| *v)
    }

    /// Features from most to least relevant (ties by feature order).
    pub fn ranking(&self) -> Vec<&str> {
        let mut idx: Vec<usize> = (0..self.relevance.len()).collect();
        idx.sort_by(|&a, &b| self.relevance[b].1.total_cmp(&self.relevance[a].1).then(a.cmp(&b)));
        idx.into_iter().map(|i| self.relevance[i].0.as_str()).collect()
    }
}

/// Design columns grouped by original feature, in order of first appearance.
fn blocks(provenance: &[ColumnOrigin]) -> Vec<(String, Vec<usize>)> {
    let mut out: Vec<(String, Vec<usize>)> = Vec::new();
    for (j, origin) in provenance.iter().enumerate() {
        match out.iter_mut().find(|(f, _)| *f == origin.feature) {
            Some((_, cols)) => cols.push(j),
            None => out.push((origin.feature.clone(), vec![j])),
        }
    }
    out
}

/// Forest Gini importance scaled to sum 1.
pub fn varrel_rf(forest: &Forest) -> RelevanceReport {
    let vi = forest.gini_importance();
    let raw = forest.layout.names.iter().cloned().zip(vi).collect();
    RelevanceReport::normalized(Family::Rf, raw)
}

/// Boosted-tree importance per design column; a factor takes the largest
/// importance among its dummies. Scaled to sum 1.
pub fn varrel_xgb(model: &BoostModel, provenance: &[ColumnOrigin]) -> Result<RelevanceReport, VarRelError> {
    let vi = model.gini_importance();
    if vi.len() != provenance.len() {
        return Err(VarRelError::ProvenanceGap {
            model: vi.len(),
            provenance: provenance.len(),
        });
    }
    Ok(RelevanceReport::normalized(Family::Xgb, max_over_dummies(&vi, provenance)))
}

/// Per original feature, the largest importance among its design columns.
pub fn max_over_dummies(vi: &[f64], provenance: &[ColumnOrigin]) -> Vec<(String, f64)> {
    blocks(provenance)
        .into_iter()
        .map(|(f, cols)| (f, cols.iter().map(|&j| vi[j]).fold(0.0, f64::max)))
        .collect()
}

/// Elastic-net relevance on standardized coefficients: `|β|` for a numeric
/// feature, `√l·‖β_block‖₂` for a factor with `l` dummies. Scaled to sum 1.
pub fn varrel_elanet(fit: &LinearFit) -> Result<RelevanceReport, VarRelError> {
    if !fit.is_standardized() {
        return Err(VarRelError::NotStandardized);
    }
    if fit.coding != Coding::FullOneHot {
        return Err(VarRelError::ReferenceCoding);
    }
    if fit.coefficients.len() != fit.provenance.len() {
        return Err(VarRelError::ProvenanceGap {
            model: fit.coefficients.len(),
            provenance: fit.provenance.len(),
        });
    }
    let raw = blocks(&fit.provenance)
        .into_iter()
        .map(|(f, cols)| {
            let factor = fit.provenance[cols[0]].level.is_some();
            let v = if factor {
                let ss: f64 = cols.iter().map(|&j| fit.coefficients[j].powi(2)).sum();
                (cols.len() as f64).sqrt() * ss.sqrt()
            } else {
                fit.coefficients[cols[0]].abs()
            };
            (f, v)
        })
        .collect();
    Ok(RelevanceReport::normalized(Family::Elanet, raw))
}

/// Feature → group labels for the relevance table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grouping {
    map: HashMap<String, String>,
}

impl Grouping {
    pub fn insert(&mut self, feature: &str, group: &str) {
        self.map.insert(feature.to_string(), group.to_string());
    }

    /// Reads `feature,group` lines; a `feature,group` header and `#` comments are skipped.
    pub fn read<R: BufRead>(reader: R) -> Result<Grouping, VarRelError> {
        let mut g = Grouping::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (i == 0 && line == "feature,group") {
                continue;
            }
            let (f, grp) = line.split_once(',').ok_or(VarRelError::Grouping { line: i + 1 })?;
            g.insert(f.trim(), grp.trim());
        }
        Ok(g)
    }

    /// Grouping of the synthetic portfolio's features into time-related,
    /// contract and collection-system information.
    pub fn portfolio_default() -> Grouping {
        let mut g = Grouping::default();
        for f in ["total_duration", "elapsed_duration", "remaining_duration", "insured_age"] {
            g.insert(f, "time");
        }
        for i in 1..=8 {
            g.insert(&format!("collection_{i}"), "collection");
        }
        g
    }

    /// Group of `feature`; ungrouped features count as contract information.
    pub fn group_of(&self, feature: &str) -> &str {
        self.map.get(feature).map_or("contract", String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceRow {
    pub dataset: String,
    pub family: Family,
    pub feature: String,
    pub group: String,
    pub relevance: f64,
}

/// Long format over the union of features (first-seen order); a feature a
/// report lacks gets relevance 0.
pub fn relevance_table(reports: &[RelevanceReport], grouping: &Grouping) -> Vec<RelevanceRow> {
    let mut features: Vec<&str> = Vec::new();
    for r in reports {
        for (f, _) in &r.relevance {
            if !features.contains(&f.as_str()) {
                features.push(f);
            }
        }
    }
    let mut rows = Vec::with_capacity(reports.len() * features.len());
    for r in reports {
        for &f in &features {
            rows.push(RelevanceRow {
                dataset: r.dataset.clone(),
                family: r.family,
                feature: f.to_string(),
                group: grouping.group_of(f).to_string(),
                relevance: r.get(f).unwrap_or(0.0),
            });
        }
    }
    rows
}

pub fn write_relevance_csv<W: Write>(mut out: W, rows: &[RelevanceRow]) -> std::io::Result<()> {
    writeln!(out, "dataset,family,feature,group,relevance")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.dataset, r.family, r.feature, r.group, r.relevance)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DesignEncoder, Standardization};
    use crate::linear::Convergence;

    fn origin(f: &str, l: Option<&str>) -> ColumnOrigin {
        ColumnOrigin {
            feature: f.into(),
            level: l.map(Into::into),
        }
    }

    fn enet(provenance: Vec<ColumnOrigin>, coefficients: Vec<f64>) -> LinearFit {
        let k = coefficients.len();
        LinearFit {
            intercept: 0.0,
            coefficients,
            provenance,
            penalty: None,
            coding: Coding::FullOneHot,
            convergence: Convergence {
                iterations: 1,
                objective: 0.0,
            },
            encoder: DesignEncoder {
                features: vec![],
                standardization: Some(Standardization {
                    mean: vec![0.0; k],
                    sd: vec![1.0; k],
                    constant: vec![false; k],
                }),
            },
        }
    }

    #[test]
    fn normalization_arithmetic() {
        let r = RelevanceReport::normalized(Family::Rf, vec![("x1".into(), 0.18), ("x2".into(), 0.04), ("x3".into(), 0.0)]);
        assert!((r.get("x1").unwrap() - 0.18 / 0.22).abs() < 1e-15);
        assert!((r.get("x1").unwrap() - 0.8182).abs() < 1e-4);
        assert!((r.get("x2").unwrap() - 0.1818).abs() < 1e-4);
        assert_eq!(r.get("x3"), Some(0.0));
        assert!(!r.degenerate);
        let d = RelevanceReport::normalized(Family::Rf, vec![("x".into(), 0.0)]);
        assert!(d.degenerate);
        assert_eq!(d.get("x"), Some(0.0));
    }

    #[test]
    fn elastic_net_group_norm() {
        let prov = vec![
            origin("age", None),
            origin("region", Some("a")),
            origin("region", Some("b")),
            origin("region", Some("c")),
            origin("region", Some("d")),
        ];
        let fit = enet(prov.clone(), vec![-0.3, 0.1, 0.2, 0.2, 0.0]);
        let r = varrel_elanet(&fit).unwrap();
        // preliminary values 0.3 and 2·√0.09 = 0.6
        assert!((r.get("age").unwrap() - 0.3 / 0.9).abs() < 1e-12);
        assert!((r.get("region").unwrap() - 0.6 / 0.9).abs() < 1e-12);
        // sign flips and dummy permutations change nothing
        let flipped = enet(prov, vec![0.3, 0.0, -0.2, 0.1, -0.2]);
        let r2 = varrel_elanet(&flipped).unwrap();
        for (a, b) in r.relevance.iter().zip(&r2.relevance) {
            assert!((a.1 - b.1).abs() < 1e-15);
        }
        let single = varrel_elanet(&enet(vec![origin("a", None), origin("b", None)], vec![0.0, 0.7])).unwrap();
        assert_eq!(single.get("b"), Some(1.0));
        let mut raw = enet(vec![origin("a", None)], vec![1.0]);
        raw.encoder.standardization = None;
        assert!(matches!(varrel_elanet(&raw), Err(VarRelError::NotStandardized)));
    }

    #[test]
    fn dummy_max_rule() {
        let prov = vec![
            origin("x", None),
            origin("f", Some("a")),
            origin("f", Some("b")),
            origin("f", Some("c")),
            origin("g", Some("a")),
            origin("g", Some("b")),
        ];
        let pre = max_over_dummies(&[0.3, 0.2, 0.5, 0.1, 0.0, 0.0], &prov);
        assert_eq!(pre, vec![("x".into(), 0.3), ("f".into(), 0.5), ("g".into(), 0.0)]);
    }

    #[test]
    fn table_fills_missing_features() {
        let a = RelevanceReport::normalized(Family::Rf, vec![("x".into(), 1.0), ("y".into(), 1.0)]).with_dataset("p");
        let b = RelevanceReport::normalized(Family::Elanet, vec![("x".into(), 1.0)]).with_dataset("p");
        let rows = relevance_table(&[a, b], &Grouping::default());
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[3].feature, "y");
        assert_eq!(rows[3].relevance, 0.0);
        let mut buf = Vec::new();
        write_relevance_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("dataset,family,feature,group,relevance\np,rf,x,contract,0.5\n"));
    }

    #[test]
    fn grouping_file() {
        let g = Grouping::read("feature,group\n# c\nage,time\nsum_insured , contract\n".as_bytes()).unwrap();
        assert_eq!(g.group_of("age"), "time");
        assert_eq!(g.group_of("sum_insured"), "contract");
        assert!(Grouping::read("age\n".as_bytes()).is_err());
    }
}
