use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::table::DataTable;
use super::DataError;

/// Row partition for k-fold cross-validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold index of every row.
    pub assignment: Vec<usize>,
    pub stratified: bool,
}

impl FoldPlan {
    /// (training rows, held-out rows) for `fold`, both ascending.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (row, &f) in self.assignment.iter().enumerate() {
            if f == fold {
                test.push(row);
            } else {
                train.push(row);
            }
        }
        (train, test)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

fn class_indices(labels: &[u8]) -> (Vec<usize>, Vec<usize>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, &y) in labels.iter().enumerate() {
        if y == 1 {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }
    (pos, neg)
}

/// Partitions row indices into (train, test). With `stratified`, each class
/// contributes `round(fraction · class size)` rows to the test side.
pub fn split_indices(
    labels: &[u8],
    test_fraction: f64,
    stratified: bool,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::InvalidFraction(test_fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let groups = if stratified {
        let (pos, neg) = class_indices(labels);
        vec![pos, neg]
    } else {
        vec![(0..labels.len()).collect()]
    };
    for mut group in groups {
        group.shuffle(&mut rng);
        let n_test = (group.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&group[..n_test]);
        train.extend_from_slice(&group[n_test..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(DataError::InvalidFraction(test_fraction));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Stratified holdout split of a table into (train, test).
pub fn stratified_split(
    table: &DataTable,
    test_fraction: f64,
    seed: u64,
) -> Result<(DataTable, DataTable), DataError> {
    table.require_both_classes()?;
    let (train, test) = split_indices(table.labels(), test_fraction, true, seed)?;
    Ok((table.take(&train), table.take(&test)))
}

/// Assigns rows to `k` folds. Rows are dealt round-robin after shuffling;
/// under stratification positives are dealt first and negatives continue
/// from the next fold, so both total and per-class fold sizes differ by at
/// most one.
pub fn make_fold_plan(labels: &[u8], k: usize, stratified: bool, seed: u64) -> Result<FoldPlan, DataError> {
    let n = labels.len();
    if k < 2 || k > n {
        return Err(DataError::FoldCount { k, rows: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<usize> = if stratified {
        let (mut pos, mut neg) = class_indices(labels);
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        pos.into_iter().chain(neg).collect()
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        all
    };
    let mut assignment = vec![0; n];
    for (slot, row) in order.into_iter().enumerate() {
        assignment[row] = slot % k;
    }
    Ok(FoldPlan {
        k,
        assignment,
        stratified,
    })
}

pub fn make_folds(table: &DataTable, k: usize, stratified: bool, seed: u64) -> Result<FoldPlan, DataError> {
    make_fold_plan(table.labels(), k, stratified, seed)
}
