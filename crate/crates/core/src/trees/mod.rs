//! Classification trees, random forests and second-order gradient boosting.
//!
//! CART and forests read raw features (numeric thresholds and categorical
//! level subsets); the booster reads the dummy-encoded design. All three
//! share the node representation below, which records the statistics needed
//! for impurity-based importance: `cover` (the node's row count, or hessian
//! sum for boosted trees) and `decrease` (the impurity decrease of the split).

mod boost;
mod cart;
mod forest;

pub use boost::{fit_boost, leaf_weight, predict_boost, split_gain, BoostModel, BoostParams};
pub use cart::{best_split, fit_cart, fit_cart_on_rows, gini_impurity, CartParams, SplitCandidate};
pub use forest::{fit_forest, predict_forest, Forest, ForestParams, VoteMode};

use thiserror::Error;

use crate::dataset::{Column, DataTable, DesignMatrix, Role};

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("row {row}, column {column}: missing value (impute first)")]
    MissingValue { column: String, row: usize },
    #[error("table has no column {0} required by the model")]
    MissingColumn(String),
    #[error("column {0} differs in kind or levels from the training data")]
    LayoutMismatch(String),
    #[error("{labels} labels for {rows} rows")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("empty node")]
    EmptyNode,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Independent stream seed for item `index` under a master `seed`, so
/// parallel work does not depend on scheduling order.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finaliser over the pair
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Kind of a tree feature, as recorded in fitted models.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureKind {
    Numeric,
    Categorical { levels: Vec<String> },
}

/// Names and kinds of the features a model was trained on.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureLayout {
    pub names: Vec<String>,
    pub kinds: Vec<FeatureKind>,
}

impl FeatureLayout {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Pulls these features out of `table` by name.
    pub fn extract(&self, table: &DataTable) -> Result<Features, TreeError> {
        let mut columns = Vec::with_capacity(self.len());
        for (name, kind) in self.names.iter().zip(&self.kinds) {
            let spec = table
                .schema()
                .get(name)
                .ok_or_else(|| TreeError::MissingColumn(name.clone()))?;
            let col = table.column(name).expect("schema entry has data");
            columns.push(match (kind, col) {
                (FeatureKind::Numeric, Column::Numeric(v)) => FeatureColumn::numeric(
                    v.iter()
                        .enumerate()
                        .map(|(row, x)| {
                            x.ok_or_else(|| TreeError::MissingValue {
                                column: name.clone(),
                                row: row + 1,
                            })
                        })
                        .collect::<Result<Vec<f64>, _>>()?,
                ),
                (FeatureKind::Categorical { levels }, Column::Categorical(v)) if &spec.levels == levels => {
                    FeatureColumn::Categorical {
                        levels: levels.len(),
                        codes: v
                            .iter()
                            .enumerate()
                            .map(|(row, c)| {
                                c.ok_or_else(|| TreeError::MissingValue {
                                    column: name.clone(),
                                    row: row + 1,
                                })
                            })
                            .collect::<Result<Vec<u32>, _>>()?,
                    }
                }
                _ => return Err(TreeError::LayoutMismatch(name.clone())),
            });
        }
        Ok(Features {
            layout: self.clone(),
            n_rows: table.n_rows(),
            columns,
        })
    }
}

/// One feature column prepared for split search.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureColumn {
    Numeric {
        values: Vec<f64>,
        /// Rank of each value among the sorted distinct values.
        ranks: Vec<u32>,
        /// Sorted distinct values.
        distinct: Vec<f64>,
    },
    Categorical {
        levels: usize,
        codes: Vec<u32>,
    },
}

impl FeatureColumn {
    pub fn numeric(values: Vec<f64>) -> FeatureColumn {
        let mut distinct = values.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let ranks = values
            .iter()
            .map(|v| distinct.partition_point(|d| d < v) as u32)
            .collect();
        FeatureColumn::Numeric {
            values,
            ranks,
            distinct,
        }
    }
}

/// Column-wise feature matrix for tree learners.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    layout: FeatureLayout,
    n_rows: usize,
    columns: Vec<FeatureColumn>,
}

impl Features {
    /// Every numeric and categorical column of `table`, in schema order.
    pub fn from_table(table: &DataTable) -> Result<Features, TreeError> {
        let mut names = Vec::new();
        let mut kinds = Vec::new();
        for c in table.schema().columns() {
            match c.role {
                Role::Numeric => kinds.push(FeatureKind::Numeric),
                Role::Categorical => kinds.push(FeatureKind::Categorical {
                    levels: c.levels.clone(),
                }),
                _ => continue,
            }
            names.push(c.name.clone());
        }
        FeatureLayout { names, kinds }.extract(table)
    }

    /// Every design column as a numeric feature, named by its provenance.
    pub fn from_design(design: &DesignMatrix) -> Features {
        let names = design.provenance().iter().map(|o| o.to_string()).collect();
        let kinds = vec![FeatureKind::Numeric; design.n_cols()];
        let columns = (0..design.n_cols())
            .map(|j| FeatureColumn::numeric(design.column(j).to_vec()))
            .collect();
        Features {
            layout: FeatureLayout { names, kinds },
            n_rows: design.n_rows(),
            columns,
        }
    }

    /// Numeric features from raw columns (mostly for tests).
    pub fn from_numeric(names: &[&str], columns: Vec<Vec<f64>>) -> Features {
        let n_rows = columns.first().map_or(0, Vec::len);
        Features {
            layout: FeatureLayout {
                names: names.iter().map(|s| s.to_string()).collect(),
                kinds: vec![FeatureKind::Numeric; names.len()],
            },
            n_rows,
            columns: columns.into_iter().map(FeatureColumn::numeric).collect(),
        }
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &FeatureColumn {
        &self.columns[j]
    }
}

/// How an internal node routes rows: left when the test holds.
#[derive(Debug, Clone, PartialEq)]
pub enum Split {
    /// `x <= threshold`
    Numeric { feature: usize, threshold: f64 },
    /// level code in `left_levels`
    Categorical { feature: usize, left_levels: Vec<u32> },
}

impl Split {
    pub fn feature(&self) -> usize {
        match self {
            Split::Numeric { feature, .. } | Split::Categorical { feature, .. } => *feature,
        }
    }

    pub fn goes_left(&self, features: &Features, row: usize) -> bool {
        match (self, features.column(self.feature())) {
            (Split::Numeric { threshold, .. }, FeatureColumn::Numeric { values, .. }) => values[row] <= *threshold,
            (Split::Categorical { left_levels, .. }, FeatureColumn::Categorical { codes, .. }) => {
                left_levels.contains(&codes[row])
            }
            _ => unreachable!("split kind matches feature kind"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: usize,
    pub parent: Option<usize>,
    pub split: Option<Split>,
    /// (left, right) child ids; `None` for leaves.
    pub children: Option<(usize, usize)>,
    /// Positive-class proportion (classification trees) or additive leaf
    /// weight (boosted trees). Kept for internal nodes too.
    pub value: f64,
    /// Rows reaching the node, counting bootstrap duplicates.
    pub n: usize,
    /// Weight used for p(t): `n` for classification trees, hessian sum for boosted trees.
    pub cover: f64,
    /// Gini impurity of the node (classification trees); structure score per
    /// unit of cover for boosted trees.
    pub impurity: f64,
    /// Impurity decrease Δi of the node's split; 0 for leaves.
    pub decrease: f64,
    /// Gradient sum (boosted trees only, 0 otherwise).
    pub grad: f64,
    /// Hessian sum (boosted trees only, 0 otherwise).
    pub hess: f64,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn leaf_for(&self, features: &Features, row: usize) -> &Node {
        let mut node = &self.nodes[0];
        while let (Some(split), Some((l, r))) = (&node.split, node.children) {
            node = &self.nodes[if split.goes_left(features, row) { l } else { r }];
        }
        node
    }

    pub fn predict(&self, features: &Features) -> Vec<f64> {
        (0..features.n_rows()).map(|r| self.leaf_for(features, r).value).collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, id: usize) -> usize {
            match t.nodes[id].children {
                None => 0,
                Some((l, r)) => 1 + walk(t, l).max(walk(t, r)),
            }
        }
        walk(self, 0)
    }

    /// Σ over split nodes of `p(t)·Δi(t)` per feature, `p(t) = cover / root cover`.
    pub fn importance(&self, n_features: usize) -> Vec<f64> {
        let mut vi = vec![0.0; n_features];
        let root = self.nodes[0].cover;
        if root <= 0.0 {
            return vi;
        }
        for node in &self.nodes {
            if let Some(split) = &node.split {
                vi[split.feature()] += node.cover / root * node.decrease;
            }
        }
        vi
    }
}

/// Per-feature impurity importance averaged over trees.
pub fn mean_importance<'a>(trees: impl IntoIterator<Item = &'a Tree>, n_features: usize) -> Vec<f64> {
    let mut total = vec![0.0; n_features];
    let mut count = 0usize;
    for t in trees {
        for (acc, v) in total.iter_mut().zip(t.importance(n_features)) {
            *acc += v;
        }
        count += 1;
    }
    if count > 0 {
        for v in &mut total {
            *v /= count as f64;
        }
    }
    total
}

/// Anything that exposes impurity-based feature importance.
pub trait GiniImportance {
    /// Importance per training feature, in layout order.
    fn gini_importance(&self) -> Vec<f64>;
    fn layout(&self) -> &FeatureLayout;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: usize, split: Option<(usize, f64)>, children: Option<(usize, usize)>, cover: f64, decrease: f64) -> Node {
        Node {
            id,
            parent: None,
            split: split.map(|(feature, threshold)| Split::Numeric { feature, threshold }),
            children,
            value: 0.0,
            n: cover as usize,
            cover,
            impurity: 0.0,
            decrease,
            grad: 0.0,
            hess: 0.0,
        }
    }

    #[test]
    fn hand_accumulated_importance() {
        // root on X1 (p = 1, Δi = 0.18); left child on X2 (p = 0.5, Δi = 0.08)
        let tree = Tree {
            nodes: vec![
                node(0, Some((0, 0.5)), Some((1, 2)), 100.0, 0.18),
                node(1, Some((1, 0.5)), Some((3, 4)), 50.0, 0.08),
                node(2, None, None, 50.0, 0.0),
                node(3, None, None, 25.0, 0.0),
                node(4, None, None, 25.0, 0.0),
            ],
        };
        let vi = tree.importance(3);
        assert!((vi[0] - 0.18).abs() < 1e-15);
        assert!((vi[1] - 0.04).abs() < 1e-15);
        assert_eq!(vi[2], 0.0);
        let twice = mean_importance([&tree, &tree], 3);
        assert_eq!(twice, vi);
    }

    #[test]
    fn ranks_follow_distinct_values() {
        let FeatureColumn::Numeric { ranks, distinct, .. } = FeatureColumn::numeric(vec![3.0, -1.0, 3.0, 0.5]) else {
            unreachable!()
        };
        assert_eq!(distinct, vec![-1.0, 0.5, 3.0]);
        assert_eq!(ranks, vec![2, 0, 2, 1]);
    }
}
