//! Random forests: bootstrap-aggregated CART trees with per-node feature
//! sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::cart::fit_cart_on_rows;
use super::{derive_seed, mean_importance, CartParams, FeatureLayout, Features, GiniImportance, Tree, TreeError};

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub ntree: usize,
    /// Features tried per node; `None` uses `floor(sqrt(p))`.
    pub ntry: Option<usize>,
    pub min_node_size: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
    /// Off means every tree sees the training rows once.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            ntree: 500,
            ntry: None,
            min_node_size: 1,
            max_depth: None,
            seed: 1,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn ntry_for(&self, p: usize) -> usize {
        self.ntry.unwrap_or_else(|| ((p as f64).sqrt().floor() as usize).max(1)).clamp(1, p.max(1))
    }
}

/// How tree outputs are combined into a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoteMode {
    /// Share of trees whose leaf predicts the positive class.
    Vote,
    /// Mean positive proportion of the reached leaves.
    Proportion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub layout: FeatureLayout,
    pub params: ForestParams,
    pub trees: Vec<Tree>,
}

/// Grows `params.ntree` trees in parallel on the current rayon pool. Output
/// is identical for any pool size.
pub fn fit_forest(features: &Features, labels: &[u8], params: &ForestParams) -> Result<Forest, TreeError> {
    if params.ntree == 0 {
        return Err(TreeError::InvalidParams("ntree must be positive".into()));
    }
    if labels.len() != features.n_rows() {
        return Err(TreeError::LengthMismatch {
            rows: features.n_rows(),
            labels: labels.len(),
        });
    }
    let n = features.n_rows();
    let cart = CartParams {
        min_node_size: params.min_node_size,
        max_depth: params.max_depth,
        ntry: Some(params.ntry_for(features.n_features())),
    };
    let trees = (0..params.ntree)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, t as u64));
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            fit_cart_on_rows(features, labels, rows, &cart, Some(&mut rng))
        })
        .collect::<Result<Vec<Tree>, TreeError>>()?;
    Ok(Forest {
        layout: features.layout().clone(),
        params: params.clone(),
        trees,
    })
}

impl Forest {
    pub fn predict(&self, features: &Features, mode: VoteMode) -> Vec<f64> {
        let k = self.trees.len() as f64;
        (0..features.n_rows())
            .into_par_iter()
            .map(|row| {
                let total: f64 = self
                    .trees
                    .iter()
                    .map(|t| {
                        let p = t.leaf_for(features, row).value;
                        match mode {
                            VoteMode::Vote => (p > 0.5) as u8 as f64,
                            VoteMode::Proportion => p,
                        }
                    })
                    .sum();
                total / k
            })
            .collect()
    }

    /// Majority vote; a tied vote goes to the negative class.
    pub fn predict_class(&self, features: &Features) -> Vec<u8> {
        self.predict(features, VoteMode::Vote)
            .into_iter()
            .map(|v| (v > 0.5) as u8)
            .collect()
    }
}

pub fn predict_forest(forest: &Forest, features: &Features, mode: VoteMode) -> Vec<f64> {
    forest.predict(features, mode)
}

impl GiniImportance for Forest {
    fn gini_importance(&self) -> Vec<f64> {
        mean_importance(&self.trees, self.layout.len())
    }

    fn layout(&self) -> &FeatureLayout {
        &self.layout
    }
}
