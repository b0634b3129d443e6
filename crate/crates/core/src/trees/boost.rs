//! Gradient-boosted trees on the logistic loss with second-order leaf
//! weights and L1/L2/leaf-count regularization.

use super::cart::midpoint;
use super::{FeatureColumn, FeatureLayout, Features, GiniImportance, Node, Split, Tree, TreeError};
use crate::linear::sigmoid;

#[derive(Debug, Clone, PartialEq)]
pub struct BoostParams {
    /// Boosting rounds M.
    pub rounds: usize,
    /// Learning rate ν.
    pub eta: f64,
    pub max_depth: usize,
    /// L1 penalty on leaf weights.
    pub l1: f64,
    /// L2 penalty on leaf weights.
    pub l2: f64,
    /// Penalty per leaf, subtracted from every split gain.
    pub reg_leafcount: f64,
    /// Both children of a split need at least this hessian sum.
    pub min_child_hessian: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            rounds: 100,
            eta: 0.3,
            max_depth: 6,
            l1: 0.0,
            l2: 1.0,
            reg_leafcount: 0.0,
            min_child_hessian: 1.0,
        }
    }
}

impl BoostParams {
    fn validate(&self) -> Result<(), TreeError> {
        let bad = |m: &str| Err(TreeError::InvalidParams(m.into()));
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad("eta must lie in (0, 1]");
        }
        if self.l1 < 0.0 || self.l2 < 0.0 || self.reg_leafcount < 0.0 || self.min_child_hessian < 0.0 {
            return bad("penalties must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostModel {
    pub layout: FeatureLayout,
    pub params: BoostParams,
    /// Initial margin: logit of the training base rate.
    pub base_score: f64,
    pub trees: Vec<Tree>,
    /// Round at which the root could not be split, if training stopped early.
    pub stopped_early: Option<usize>,
}

fn soft_threshold(g: f64, l1: f64) -> f64 {
    g.signum() * (g.abs() - l1).max(0.0)
}

/// Optimal leaf weight `-T(G)/(H + l2)` with `T` the soft-threshold at `l1`.
pub fn leaf_weight(g: f64, h: f64, l1: f64, l2: f64) -> f64 {
    let t = soft_threshold(g, l1);
    if t == 0.0 {
        0.0
    } else {
        -t / (h + l2)
    }
}

fn structure_score(g: f64, h: f64, l1: f64, l2: f64) -> f64 {
    let t = soft_threshold(g, l1);
    if t == 0.0 {
        0.0
    } else {
        t * t / (h + l2)
    }
}

/// Loss reduction of a split before the leaf-count penalty.
fn raw_gain(gl: f64, hl: f64, gr: f64, hr: f64, p: &BoostParams) -> f64 {
    0.5 * (structure_score(gl, hl, p.l1, p.l2) + structure_score(gr, hr, p.l1, p.l2)
        - structure_score(gl + gr, hl + hr, p.l1, p.l2))
}

/// Split gain `½[T(G_L)²/(H_L+l2) + T(G_R)²/(H_R+l2) - T(G)²/(H+l2)] - reg_leafcount`.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, params: &BoostParams) -> f64 {
    raw_gain(gl, hl, gr, hr, params) - params.reg_leafcount
}

struct Found {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn best_boost_split(features: &Features, g: &[f64], h: &[f64], rows: &[usize], params: &BoostParams) -> Option<Found> {
    let gt: f64 = rows.iter().map(|&r| g[r]).sum();
    let ht: f64 = rows.iter().map(|&r| h[r]).sum();
    let mut best: Option<Found> = None;
    for f in 0..features.n_features() {
        let FeatureColumn::Numeric { ranks, distinct, .. } = features.column(f) else {
            continue;
        };
        // per-rank gradient and hessian sums, in rank order
        let mut buckets: Vec<(u32, f64, f64)> = if distinct.len() <= 2 * rows.len() {
            let mut gs = vec![0.0; distinct.len()];
            let mut hs = vec![0.0; distinct.len()];
            let mut seen = vec![false; distinct.len()];
            for &r in rows {
                let k = ranks[r] as usize;
                gs[k] += g[r];
                hs[k] += h[r];
                seen[k] = true;
            }
            (0..distinct.len())
                .filter(|&k| seen[k])
                .map(|k| (k as u32, gs[k], hs[k]))
                .collect()
        } else {
            let mut order: Vec<usize> = rows.to_vec();
            order.sort_by_key(|&r| (ranks[r], r));
            let mut out: Vec<(u32, f64, f64)> = Vec::new();
            for r in order {
                match out.last_mut() {
                    Some(last) if last.0 == ranks[r] => {
                        last.1 += g[r];
                        last.2 += h[r];
                    }
                    _ => out.push((ranks[r], g[r], h[r])),
                }
            }
            out
        };
        if buckets.len() < 2 {
            continue;
        }
        let (mut gl, mut hl) = (0.0, 0.0);
        let last = buckets.len() - 1;
        for w in 0..last {
            gl += buckets[w].1;
            hl += buckets[w].2;
            let (gr, hr) = (gt - gl, ht - hl);
            if hl < params.min_child_hessian || hr < params.min_child_hessian {
                continue;
            }
            let gain = split_gain(gl, hl, gr, hr, params);
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(Found {
                    feature: f,
                    threshold: midpoint(distinct[buckets[w].0 as usize], distinct[buckets[w + 1].0 as usize]),
                    gain,
                });
            }
        }
        buckets.clear();
    }
    best.filter(|b| b.gain > 0.0)
}

fn boost_node(id: usize, parent: Option<usize>, g: &[f64], h: &[f64], rows: &[usize], p: &BoostParams) -> Node {
    let gs: f64 = rows.iter().map(|&r| g[r]).sum();
    let hs: f64 = rows.iter().map(|&r| h[r]).sum();
    Node {
        id,
        parent,
        split: None,
        children: None,
        value: leaf_weight(gs, hs, p.l1, p.l2),
        n: rows.len(),
        cover: hs,
        impurity: if hs > 0.0 { -0.5 * structure_score(gs, hs, p.l1, p.l2) / hs } else { 0.0 },
        decrease: 0.0,
        grad: gs,
        hess: hs,
    }
}

fn grow(features: &Features, g: &[f64], h: &[f64], params: &BoostParams) -> Tree {
    let rows: Vec<usize> = (0..features.n_rows()).collect();
    let mut nodes = vec![boost_node(0, None, g, h, &rows, params)];
    let mut stack = vec![(0usize, rows, 0usize)];
    while let Some((id, rows, depth)) = stack.pop() {
        if depth >= params.max_depth || rows.len() < 2 {
            continue;
        }
        let Some(found) = best_boost_split(features, g, h, &rows, params) else {
            continue;
        };
        let split = Split::Numeric {
            feature: found.feature,
            threshold: found.threshold,
        };
        let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| split.goes_left(features, r));
        let (l, r) = (nodes.len(), nodes.len() + 1);
        nodes.push(boost_node(l, Some(id), g, h, &left, params));
        nodes.push(boost_node(r, Some(id), g, h, &right, params));
        let node = &mut nodes[id];
        node.decrease = (found.gain + params.reg_leafcount) / node.hess;
        node.split = Some(split);
        node.children = Some((l, r));
        stack.push((r, right, depth + 1));
        stack.push((l, left, depth + 1));
    }
    Tree { nodes }
}

/// Fits `params.rounds` trees on the logistic loss. Gradients are `p - y`
/// and hessians `p(1-p)` at the current margin. If a round's root cannot be
/// split, that single-leaf tree is kept and training stops.
pub fn fit_boost(features: &Features, labels: &[u8], params: &BoostParams) -> Result<BoostModel, TreeError> {
    params.validate()?;
    let n = features.n_rows();
    if labels.len() != n {
        return Err(TreeError::LengthMismatch { rows: n, labels: labels.len() });
    }
    if n == 0 {
        return Err(TreeError::EmptyNode);
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    if pos == 0 || pos == n {
        return Err(TreeError::InvalidParams("training labels contain a single class".into()));
    }
    let rate = pos as f64 / n as f64;
    let base_score = (rate / (1.0 - rate)).ln();
    let mut margin = vec![base_score; n];
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.rounds);
    let mut stopped_early = None;
    for round in 0..params.rounds {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            g[i] = p - labels[i] as f64;
            h[i] = p * (1.0 - p);
        }
        let tree = grow(features, &g, &h, params);
        for (i, m) in margin.iter_mut().enumerate() {
            *m += params.eta * tree.leaf_for(features, i).value;
        }
        let stump = tree.nodes.len() == 1;
        trees.push(tree);
        if stump {
            stopped_early = Some(round + 1);
            break;
        }
    }
    Ok(BoostModel {
        layout: features.layout().clone(),
        params: params.clone(),
        base_score,
        trees,
        stopped_early,
    })
}

impl BoostModel {
    pub fn predict_margin(&self, features: &Features) -> Vec<f64> {
        (0..features.n_rows())
            .map(|r| {
                self.base_score
                    + self.params.eta * self.trees.iter().map(|t| t.leaf_for(features, r).value).sum::<f64>()
            })
            .collect()
    }

    pub fn predict_proba(&self, features: &Features) -> Vec<f64> {
        self.predict_margin(features).into_iter().map(sigmoid).collect()
    }

    /// Probabilities after each round, starting with the base score.
    pub fn predict_staged(&self, features: &Features) -> Vec<Vec<f64>> {
        let mut margin = vec![self.base_score; features.n_rows()];
        let mut out = vec![margin.iter().map(|&m| sigmoid(m)).collect()];
        for t in &self.trees {
            for (r, m) in margin.iter_mut().enumerate() {
                *m += self.params.eta * t.leaf_for(features, r).value;
            }
            out.push(margin.iter().map(|&m| sigmoid(m)).collect());
        }
        out
    }
}

pub fn predict_boost(model: &BoostModel, features: &Features) -> Vec<f64> {
    model.predict_proba(features)
}

impl GiniImportance for BoostModel {
    /// Cover-weighted gain per feature averaged over rounds, i.e.
    /// `Σ p(t)·Δi(t)` with `p(t)` the hessian share and `Δi` the gain per unit hessian.
    fn gini_importance(&self) -> Vec<f64> {
        super::mean_importance(&self.trees, self.layout.len())
    }

    fn layout(&self) -> &FeatureLayout {
        &self.layout
    }
}
