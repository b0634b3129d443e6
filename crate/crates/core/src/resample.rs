//! Minority-class oversampling for training tables.
//!
//! Every routine takes the training table only; there is no way to pass a
//! test partition through here.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::{Column, DataError, DataTable};

#[derive(Debug, Error)]
pub enum ResampleError {
    #[error("no positive observations")]
    NoPositives,
    #[error("oversampling rate {0} must be a finite value of at least 1")]
    InvalidRate(f64),
    #[error("SMOTE with k = {k} needs at least {} positives, found {positives}", k + 1)]
    TooFewPositives { k: usize, positives: usize },
    #[error("SMOTE needs k >= 1")]
    InvalidK,
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Majority-to-minority ratio N/P.
pub fn imbalance_rate(labels: &[u8]) -> Result<f64, ResampleError> {
    let p = labels.iter().filter(|&&y| y == 1).count();
    if p == 0 {
        return Err(ResampleError::NoPositives);
    }
    Ok((labels.len() - p) as f64 / p as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleMethod {
    None,
    RandomOversample,
    Smote,
}

impl ResampleMethod {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(ResampleMethod::None),
            "random_oversample" | "oversample" => Some(ResampleMethod::RandomOversample),
            "smote" => Some(ResampleMethod::Smote),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ResampleMethod::None => "none",
            ResampleMethod::RandomOversample => "random_oversample",
            ResampleMethod::Smote => "smote",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResamplePlan {
    pub method: ResampleMethod,
    /// Multiplier on the minority count; 1 leaves the table unchanged.
    pub rate: f64,
    pub k_neighbors: usize,
    pub seed: u64,
}

impl Default for ResamplePlan {
    fn default() -> Self {
        ResamplePlan {
            method: ResampleMethod::None,
            rate: 1.0,
            k_neighbors: 5,
            seed: 0,
        }
    }
}

impl fmt::Display for ResamplePlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.method {
            ResampleMethod::None => write!(f, "none"),
            ResampleMethod::RandomOversample => write!(f, "random_oversample(rate={})", self.rate),
            ResampleMethod::Smote => write!(f, "smote(rate={}, k={})", self.rate, self.k_neighbors),
        }
    }
}

impl ResamplePlan {
    pub fn apply(&self, train: &DataTable) -> Result<DataTable, ResampleError> {
        match self.method {
            ResampleMethod::None => Ok(train.clone()),
            ResampleMethod::RandomOversample => random_oversample(train, self.rate, self.seed),
            ResampleMethod::Smote => smote(train, self.rate, self.k_neighbors, self.seed),
        }
    }
}

fn check_rate(rate: f64) -> Result<(), ResampleError> {
    if rate.is_finite() && rate >= 1.0 {
        Ok(())
    } else {
        Err(ResampleError::InvalidRate(rate))
    }
}

fn positives(table: &DataTable) -> Vec<usize> {
    table
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, &y)| y == 1)
        .map(|(i, _)| i)
        .collect()
}

/// Number of extra minority rows needed to reach `round(rate · P)`.
fn extra_rows(rate: f64, p: usize) -> usize {
    ((rate * p as f64).round() as usize).saturating_sub(p)
}

/// Appends copies of randomly chosen positive rows (with replacement) until
/// the minority count is `round(rate · P)`.
pub fn random_oversample(table: &DataTable, rate: f64, seed: u64) -> Result<DataTable, ResampleError> {
    check_rate(rate)?;
    let pos = positives(table);
    if pos.is_empty() {
        return Err(ResampleError::NoPositives);
    }
    let extra = extra_rows(rate, pos.len());
    if extra == 0 {
        return Ok(table.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<usize> = (0..table.n_rows()).collect();
    rows.extend((0..extra).map(|_| pos[rng.random_range(0..pos.len())]));
    Ok(table.take(&rows))
}

/// A SMOTE result with the parents of every synthetic row.
#[derive(Debug, Clone)]
pub struct SmoteOutput {
    pub table: DataTable,
    /// For synthetic row `table.n_rows() - parents.len() + i`: (seed row, neighbour row)
    /// as indices into the input table.
    pub parents: Vec<(usize, usize)>,
}

/// SMOTE with categorical fields copied from the seed point.
pub fn smote(table: &DataTable, rate: f64, k: usize, seed: u64) -> Result<DataTable, ResampleError> {
    smote_with_parents(table, rate, k, seed).map(|o| o.table)
}

/// Synthetic positives `x + u·(x′ − x)`, `u ~ U[0, 1]`, where `x` is a random
/// positive and `x′` one of its `k` nearest positive neighbours under
/// Euclidean distance on standardized numeric columns. Identifier, date and
/// categorical fields are copied from `x`.
pub fn smote_with_parents(table: &DataTable, rate: f64, k: usize, seed: u64) -> Result<SmoteOutput, ResampleError> {
    check_rate(rate)?;
    if k == 0 {
        return Err(ResampleError::InvalidK);
    }
    let pos = positives(table);
    if pos.len() < k + 1 {
        return Err(ResampleError::TooFewPositives {
            k,
            positives: pos.len(),
        });
    }
    let extra = extra_rows(rate, pos.len());
    if extra == 0 {
        return Ok(SmoteOutput {
            table: table.clone(),
            parents: Vec::new(),
        });
    }

    // numeric columns of the positives, standardized over the whole table
    let numeric: Vec<(usize, &[Option<f64>])> = table
        .columns()
        .iter()
        .enumerate()
        .filter_map(|(j, c)| match c {
            Column::Numeric(v) => Some((j, v.as_slice())),
            _ => None,
        })
        .collect();
    let scaled: Vec<Vec<f64>> = numeric
        .iter()
        .map(|(_, v)| {
            let present: Vec<f64> = v.iter().flatten().copied().collect();
            let m = present.iter().sum::<f64>() / present.len().max(1) as f64;
            let var = present.iter().map(|x| (x - m).powi(2)).sum::<f64>() / present.len().max(1) as f64;
            let s = if var > 0.0 { var.sqrt() } else { 1.0 };
            pos.iter().map(|&r| v[r].map_or(0.0, |x| (x - m) / s)).collect()
        })
        .collect();

    let neighbours = nearest_neighbours(&scaled, pos.len(), k);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parents = Vec::with_capacity(extra);
    let mut weights = Vec::with_capacity(extra);
    for _ in 0..extra {
        let a = rng.random_range(0..pos.len());
        let b = neighbours[a][rng.random_range(0..k)];
        parents.push((pos[a], pos[b]));
        weights.push(rng.random::<f64>());
    }

    // synthetic rows start as copies of their seeds, numeric fields are then interpolated
    let seeds: Vec<usize> = parents.iter().map(|&(a, _)| a).collect();
    let copies = table.take(&seeds);
    let mut columns = copies.columns().to_vec();
    for &(j, source) in &numeric {
        let values = parents
            .iter()
            .zip(&weights)
            .map(|(&(a, b), &u)| match (source[a], source[b]) {
                (Some(x), Some(y)) => Some(x + u * (y - x)),
                _ => None,
            })
            .collect();
        columns[j] = Column::Numeric(values);
    }
    let synthetic = DataTable::new(table.schema().clone(), columns)?;
    Ok(SmoteOutput {
        table: table.concat(&synthetic)?,
        parents,
    })
}

/// Exhaustive k-nearest-neighbour search among `n` points stored column-wise.
/// Ties are broken by lower index; a point is never its own neighbour.
fn nearest_neighbours(columns: &[Vec<f64>], n: usize, k: usize) -> Vec<Vec<usize>> {
    (0..n)
        .map(|i| {
            let mut d: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let dist = columns.iter().map(|c| (c[i] - c[j]).powi(2)).sum::<f64>();
                    (dist, j)
                })
                .collect();
            d.select_nth_unstable_by(k - 1, |x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            let mut nearest: Vec<(f64, usize)> = d[..k].to_vec();
            nearest.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            nearest.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ColumnSpec, FeatureSchema};

    fn table(xs: &[(f64, f64, u32, u8)]) -> DataTable {
        let schema = FeatureSchema::new(vec![
            ColumnSpec::identifier("id"),
            ColumnSpec::numeric("a"),
            ColumnSpec::numeric("b"),
            ColumnSpec::categorical("c", &["u", "v", "w"]),
            ColumnSpec::target("y"),
        ])
        .unwrap();
        DataTable::new(
            schema,
            vec![
                Column::Identifier((0..xs.len()).map(|i| i.to_string()).collect()),
                Column::Numeric(xs.iter().map(|r| Some(r.0)).collect()),
                Column::Numeric(xs.iter().map(|r| Some(r.1)).collect()),
                Column::Categorical(xs.iter().map(|r| Some(r.2)).collect()),
                Column::Target(xs.iter().map(|r| r.3).collect()),
            ],
        )
        .unwrap()
    }

    fn mixed(p: usize, n: usize) -> DataTable {
        let rows: Vec<_> = (0..p + n)
            .map(|i| (i as f64, (i * i % 17) as f64, (i % 3) as u32, u8::from(i < p)))
            .collect();
        table(&rows)
    }

    #[test]
    fn imbalance_rate_formula() {
        let mut y = vec![0u8; 36_000];
        y.extend(vec![1u8; 1_000]);
        assert_eq!(imbalance_rate(&y).unwrap(), 36.0);
        assert_eq!(imbalance_rate(&[0, 1, 1, 0]).unwrap(), 1.0);
        assert!(matches!(imbalance_rate(&[0, 0]), Err(ResampleError::NoPositives)));
    }

    #[test]
    fn oversample_triples_minority_with_copies() {
        let t = mixed(100, 400);
        let o = random_oversample(&t, 3.0, 9).unwrap();
        assert_eq!(o.n_positive(), 300);
        assert_eq!(o.n_rows(), 700);
        // the original rows are untouched and lead the table
        assert_eq!(o.take(&(0..500).collect::<Vec<_>>()), t);
        let ids = o.identifiers("id").unwrap();
        let a = o.numeric("a").unwrap();
        for r in 500..700 {
            let src: usize = ids[r].parse().unwrap();
            assert!(src < 100);
            assert_eq!(a[r], Some(src as f64));
        }
    }

    #[test]
    fn rate_one_is_identity() {
        let t = mixed(10, 30);
        assert_eq!(random_oversample(&t, 1.0, 1).unwrap(), t);
        assert_eq!(smote(&t, 1.0, 3, 1).unwrap(), t);
    }

    #[test]
    fn oversample_to_the_imbalance_rate_balances() {
        let t = mixed(1_000, 36_000);
        let ir = imbalance_rate(t.labels()).unwrap();
        let o = random_oversample(&t, ir, 4).unwrap();
        assert_eq!(o.n_positive(), 36_000);
        assert!((imbalance_rate(o.labels()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_inputs() {
        let t = mixed(3, 10);
        assert!(matches!(random_oversample(&t, 0.5, 0), Err(ResampleError::InvalidRate(_))));
        assert!(matches!(smote(&t, 2.0, 3, 0), Err(ResampleError::TooFewPositives { .. })));
        assert!(random_oversample(&mixed(0, 5), 2.0, 0).is_err());
    }

    #[test]
    fn smote_points_are_convex_combinations() {
        let t = mixed(20, 50);
        let out = smote_with_parents(&t, 4.0, 5, 3).unwrap();
        assert_eq!(out.table.n_positive(), 80);
        let base = t.n_rows();
        for (i, &(p, q)) in out.parents.iter().enumerate() {
            for name in ["a", "b"] {
                let x = t.numeric(name).unwrap();
                let s = out.table.numeric(name).unwrap()[base + i].unwrap();
                let (lo, hi) = (x[p].unwrap().min(x[q].unwrap()), x[p].unwrap().max(x[q].unwrap()));
                assert!(lo <= s && s <= hi);
            }
            assert_eq!(out.table.categorical("c").unwrap()[base + i], t.categorical("c").unwrap()[p]);
            assert_eq!(out.table.labels()[base + i], 1);
        }
    }

    #[test]
    fn smote_on_identical_points_duplicates_them() {
        let t = table(&[(2.0, 5.0, 1, 1), (2.0, 5.0, 1, 1), (9.0, 1.0, 0, 0)]);
        let o = smote(&t, 3.0, 1, 0).unwrap();
        assert_eq!(o.n_positive(), 6);
        for r in 3..o.n_rows() {
            assert_eq!(o.numeric("a").unwrap()[r], Some(2.0));
            assert_eq!(o.numeric("b").unwrap()[r], Some(5.0));
        }
    }

    #[test]
    fn neighbours_exclude_self() {
        let cols = vec![vec![0.0, 1.0, 3.0, 10.0]];
        let nn = nearest_neighbours(&cols, 4, 2);
        assert_eq!(nn[0], vec![1, 2]);
        assert_eq!(nn[3], vec![2, 1]);
    }
}
