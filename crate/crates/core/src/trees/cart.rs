//! Gini-impurity classification trees.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{FeatureColumn, Features, Node, Split, Tree, TreeError};

/// Gini impurity `1 - p² - (1-p)²` of a node with the given class counts.
pub fn gini_impurity(positives: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = positives as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CartParams {
    /// A node is split only when it holds more than this many rows.
    pub min_node_size: usize,
    pub max_depth: Option<usize>,
    /// Features drawn per node; `None` tries all of them.
    pub ntry: Option<usize>,
}

impl Default for CartParams {
    fn default() -> Self {
        CartParams {
            min_node_size: 1,
            max_depth: None,
            ntry: None,
        }
    }
}

/// Best split found for a node.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate {
    pub split: Split,
    /// Gini decrease `i(t) - (n_L/n) i(L) - (n_R/n) i(R)`.
    pub decrease: f64,
    pub n_left: usize,
    pub n_right: usize,
}

/// Weighted child impurity up to a constant factor, kept as an exact ratio:
/// `pos_L·neg_L/n_L + pos_R·neg_R/n_R`.
#[derive(Clone, Copy)]
struct ChildScore {
    num: u128,
    den: u128,
}

impl ChildScore {
    fn new(pos_l: u64, n_l: u64, pos_r: u64, n_r: u64) -> ChildScore {
        let (pl, nl, pr, nr) = (pos_l as u128, n_l as u128, pos_r as u128, n_r as u128);
        ChildScore {
            num: pl * (nl - pl) * nr + pr * (nr - pr) * nl,
            den: nl * nr,
        }
    }

    fn less_than(&self, other: &ChildScore) -> bool {
        self.num * other.den < other.num * self.den
    }
}

struct Best {
    score: ChildScore,
    split: Split,
    n_left: usize,
}

/// Searches `candidates` (ascending feature indices) for the split with the
/// largest Gini decrease over `rows`. Ties go to the lowest feature index,
/// then the lowest threshold (or the first cut in the positive-rate order of
/// categorical levels). Returns `None` when no split decreases impurity.
pub fn best_split(features: &Features, labels: &[u8], rows: &[usize], candidates: &[usize]) -> Option<SplitCandidate> {
    let n = rows.len();
    if n < 2 {
        return None;
    }
    let pos = rows.iter().filter(|&&r| labels[r] == 1).count();
    if pos == 0 || pos == n {
        return None;
    }
    let mut best: Option<Best> = None;
    let mut consider = |score: ChildScore, make: &dyn Fn() -> Split, n_left: usize| {
        if best.as_ref().is_none_or(|b| score.less_than(&b.score)) {
            best = Some(Best {
                score,
                split: make(),
                n_left,
            });
        }
    };

    for &f in candidates {
        match features.column(f) {
            FeatureColumn::Numeric { ranks, distinct, .. } => {
                // (rows, positives) per distinct-value rank, in ascending order
                let buckets = rank_counts(ranks, distinct.len(), labels, rows);
                let (mut n_l, mut pos_l) = (0u64, 0u64);
                for w in 0..buckets.len().saturating_sub(1) {
                    let (rank, cnt, p) = buckets[w];
                    n_l += cnt;
                    pos_l += p;
                    let next = buckets[w + 1].0;
                    let score = ChildScore::new(pos_l, n_l, pos as u64 - pos_l, n as u64 - n_l);
                    let threshold = midpoint(distinct[rank as usize], distinct[next as usize]);
                    consider(score, &|| Split::Numeric { feature: f, threshold }, n_l as usize);
                }
            }
            FeatureColumn::Categorical { levels, codes } => {
                let mut counts = vec![(0u64, 0u64); *levels];
                for &r in rows {
                    let c = &mut counts[codes[r] as usize];
                    c.0 += 1;
                    c.1 += labels[r] as u64;
                }
                let mut present: Vec<u32> = (0..*levels as u32).filter(|&l| counts[l as usize].0 > 0).collect();
                // ascending positive rate, exact; ties by level code (stable sort)
                present.sort_by(|&a, &b| {
                    let (na, pa) = counts[a as usize];
                    let (nb, pb) = counts[b as usize];
                    (pa as u128 * nb as u128).cmp(&(pb as u128 * na as u128))
                });
                let (mut n_l, mut pos_l) = (0u64, 0u64);
                for cut in 1..present.len() {
                    let (cn, cp) = counts[present[cut - 1] as usize];
                    n_l += cn;
                    pos_l += cp;
                    let score = ChildScore::new(pos_l, n_l, pos as u64 - pos_l, n as u64 - n_l);
                    let prefix = &present[..cut];
                    consider(
                        score,
                        &|| {
                            let mut left_levels = prefix.to_vec();
                            left_levels.sort_unstable();
                            Split::Categorical { feature: f, left_levels }
                        },
                        n_l as usize,
                    );
                }
            }
        }
    }

    let best = best?;
    // strict decrease: S < pos·neg/n, compared exactly
    let parent = (pos as u128) * ((n - pos) as u128);
    if best.score.num * n as u128 >= parent * best.score.den {
        return None;
    }
    let weighted = 2.0 * (best.score.num as f64 / best.score.den as f64) / n as f64;
    Some(SplitCandidate {
        split: best.split,
        decrease: gini_impurity(pos, n) - weighted,
        n_left: best.n_left,
        n_right: n - best.n_left,
    })
}

/// Present ranks in ascending order with their row and positive counts.
fn rank_counts(ranks: &[u32], n_distinct: usize, labels: &[u8], rows: &[usize]) -> Vec<(u32, u64, u64)> {
    if n_distinct <= 2 * rows.len() {
        let mut cnt = vec![0u64; n_distinct];
        let mut pos = vec![0u64; n_distinct];
        for &r in rows {
            let k = ranks[r] as usize;
            cnt[k] += 1;
            pos[k] += labels[r] as u64;
        }
        (0..n_distinct)
            .filter(|&k| cnt[k] > 0)
            .map(|k| (k as u32, cnt[k], pos[k]))
            .collect()
    } else {
        let mut keys: Vec<u64> = rows
            .iter()
            .map(|&r| ((ranks[r] as u64) << 1) | labels[r] as u64)
            .collect();
        keys.sort_unstable();
        let mut out: Vec<(u32, u64, u64)> = Vec::new();
        for k in keys {
            let rank = (k >> 1) as u32;
            match out.last_mut() {
                Some(last) if last.0 == rank => {
                    last.1 += 1;
                    last.2 += k & 1;
                }
                _ => out.push((rank, 1, k & 1)),
            }
        }
        out
    }
}

/// Threshold between two adjacent distinct values; never equal to `hi`, so
/// `x <= threshold` keeps `lo` left and `hi` right.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi || m < lo {
        lo
    } else {
        m
    }
}

pub(crate) fn partition(features: &Features, split: &Split, rows: &[usize]) -> (Vec<usize>, Vec<usize>) {
    rows.iter().partition(|&&r| split.goes_left(features, r))
}

/// Draws `k` distinct features out of `p` and returns them in ascending order.
pub(crate) fn draw_features(rng: &mut ChaCha8Rng, p: usize, k: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..p).collect();
    let k = k.min(p);
    for i in 0..k {
        let j = rng.random_range(i..p);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool.sort_unstable();
    pool
}

/// Fits a tree on all rows.
pub fn fit_cart(features: &Features, labels: &[u8], params: &CartParams) -> Result<Tree, TreeError> {
    let rows: Vec<usize> = (0..features.n_rows()).collect();
    fit_cart_on_rows(features, labels, rows, params, None)
}

/// Fits a tree on `rows` (repeats allowed). With `ntry` set, features are
/// drawn per node from `rng`, which must then be supplied.
pub fn fit_cart_on_rows(
    features: &Features,
    labels: &[u8],
    rows: Vec<usize>,
    params: &CartParams,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Tree, TreeError> {
    if labels.len() != features.n_rows() {
        return Err(TreeError::LengthMismatch {
            rows: features.n_rows(),
            labels: labels.len(),
        });
    }
    if rows.is_empty() {
        return Err(TreeError::EmptyNode);
    }
    let p = features.n_features();
    let ntry = params.ntry.unwrap_or(p).clamp(1, p.max(1));
    if ntry < p && rng.is_none() {
        return Err(TreeError::InvalidParams("feature subsampling needs a random source".into()));
    }
    let all: Vec<usize> = (0..p).collect();

    let mut nodes = vec![leaf(0, None, labels, &rows)];
    let mut stack = vec![(0usize, rows, 0usize)];
    while let Some((id, rows, depth)) = stack.pop() {
        let n = rows.len();
        let splittable = n > params.min_node_size && n >= 2 && params.max_depth.is_none_or(|d| depth < d);
        if !splittable || nodes[id].impurity == 0.0 {
            continue;
        }
        let candidates = match rng.as_deref_mut() {
            Some(rng) if ntry < p => draw_features(rng, p, ntry),
            _ => all.clone(),
        };
        let Some(found) = best_split(features, labels, &rows, &candidates) else {
            continue;
        };
        let (left, right) = partition(features, &found.split, &rows);
        let (l, r) = (nodes.len(), nodes.len() + 1);
        nodes.push(leaf(l, Some(id), labels, &left));
        nodes.push(leaf(r, Some(id), labels, &right));
        let node = &mut nodes[id];
        node.split = Some(found.split);
        node.children = Some((l, r));
        node.decrease = found.decrease;
        stack.push((r, right, depth + 1));
        stack.push((l, left, depth + 1));
    }
    Ok(Tree { nodes })
}

fn leaf(id: usize, parent: Option<usize>, labels: &[u8], rows: &[usize]) -> Node {
    let n = rows.len();
    let pos = rows.iter().filter(|&&r| labels[r] == 1).count();
    Node {
        id,
        parent,
        split: None,
        children: None,
        value: if n == 0 { 0.0 } else { pos as f64 / n as f64 },
        n,
        cover: n as f64,
        impurity: gini_impurity(pos, n),
        decrease: 0.0,
        grad: 0.0,
        hess: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gini_examples() {
        assert_eq!(gini_impurity(5, 10), 0.5);
        assert_eq!(gini_impurity(0, 10), 0.0);
        assert_eq!(gini_impurity(10, 10), 0.0);
        assert!((gini_impurity(1, 4) - 0.375).abs() < 1e-15);
    }

    #[test]
    fn xor_needs_depth_two() {
        let x1 = vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0];
        let x2 = vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let y = vec![0, 1, 1, 0, 0, 1, 1, 0];
        let f = Features::from_numeric(&["x1", "x2"], vec![x1, x2]);
        // no single split helps on XOR
        let rows: Vec<usize> = (0..8).collect();
        assert!(best_split(&f, &y, &rows, &[0, 1]).is_none());
        let tree = fit_cart(&f, &y, &CartParams::default()).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        // one noisy row breaks the symmetry; depth 2 then separates
        let x1 = vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0];
        let x2 = vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let y = vec![0, 1, 1, 0, 0, 1, 1, 0, 0];
        let f = Features::from_numeric(&["x1", "x2"], vec![x1, x2]);
        let tree = fit_cart(
            &f,
            &y,
            &CartParams {
                max_depth: Some(2),
                ..CartParams::default()
            },
        )
        .unwrap();
        let pred = tree.predict(&f);
        let correct = pred
            .iter()
            .zip(&y)
            .filter(|(p, &y)| (**p > 0.5) == (y == 1))
            .count();
        assert_eq!(correct, y.len());
    }

    #[test]
    fn categorical_split_groups_levels_by_rate() {
        use crate::dataset::{ColumnSpec, DataTable, FeatureSchema};
        use crate::dataset::Column;
        let schema = FeatureSchema::new(vec![
            ColumnSpec::categorical("region", &["a", "b", "c", "d"]),
            ColumnSpec::target("y"),
        ])
        .unwrap();
        let codes = vec![0, 0, 1, 1, 2, 2, 3, 3];
        let y = vec![1u8, 1, 0, 0, 1, 1, 0, 0];
        let table = DataTable::new(
            schema,
            vec![
                Column::Categorical(codes.into_iter().map(Some).collect()),
                Column::Target(y.clone()),
            ],
        )
        .unwrap();
        let f = Features::from_table(&table).unwrap();
        let s = best_split(&f, &y, &(0..8).collect::<Vec<_>>(), &[0]).unwrap();
        assert_eq!(
            s.split,
            Split::Categorical {
                feature: 0,
                left_levels: vec![1, 3]
            }
        );
        assert!((s.decrease - 0.5).abs() < 1e-15);
    }

    #[test]
    fn node_size_limits_growth() {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let y: Vec<u8> = (0..40).map(|i| (i % 3 == 0) as u8).collect();
        let f = Features::from_numeric(&["x"], vec![x]);
        let tree = fit_cart(
            &f,
            &y,
            &CartParams {
                min_node_size: 10,
                ..CartParams::default()
            },
        )
        .unwrap();
        for node in &tree.nodes {
            if !node.is_leaf() {
                assert!(node.n > 10);
            }
        }
        // fully grown tree is pure
        let full = fit_cart(&f, &y, &CartParams::default()).unwrap();
        assert!(full.nodes.iter().filter(|n| n.is_leaf()).all(|n| n.impurity == 0.0));
    }

    /// Exhaustive reference: every feature, every midpoint, float arithmetic.
    fn oracle(x: &[Vec<f64>], y: &[u8]) -> Option<(usize, f64, f64)> {
        let n = y.len();
        let pos = y.iter().filter(|&&v| v == 1).count();
        let parent = gini_impurity(pos, n);
        let mut cands = Vec::new();
        for (f, col) in x.iter().enumerate() {
            let mut d = col.clone();
            d.sort_by(f64::total_cmp);
            d.dedup();
            for w in d.windows(2) {
                let t = midpoint(w[0], w[1]);
                let (mut nl, mut pl) = (0, 0);
                for i in 0..n {
                    if col[i] <= t {
                        nl += 1;
                        pl += y[i] as usize;
                    }
                }
                let (nr, pr) = (n - nl, pos - pl);
                let dec = parent
                    - nl as f64 / n as f64 * gini_impurity(pl, nl)
                    - nr as f64 / n as f64 * gini_impurity(pr, nr);
                cands.push((f, t, dec));
            }
        }
        let max = cands.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
        if max <= 1e-12 {
            return None;
        }
        cands.into_iter().find(|c| c.2 >= max - 1e-12)
    }

    proptest! {
        #[test]
        fn matches_exhaustive_oracle(
            data in (2usize..30).prop_flat_map(|n| (
                prop::collection::vec(prop::collection::vec(0u8..2, n), 1..4),
                prop::collection::vec(0u8..2, n),
            ))
        ) {
            let (bits, y) = data;
            let x: Vec<Vec<f64>> = bits.iter().map(|c| c.iter().map(|&b| b as f64).collect()).collect();
            let names: Vec<String> = (0..x.len()).map(|i| format!("x{i}")).collect();
            let names: Vec<&str> = names.iter().map(String::as_str).collect();
            let f = Features::from_numeric(&names, x.clone());
            let rows: Vec<usize> = (0..y.len()).collect();
            let cands: Vec<usize> = (0..x.len()).collect();
            let got = best_split(&f, &y, &rows, &cands);
            let want = oracle(&x, &y);
            match (got, want) {
                (None, None) => {}
                (Some(g), Some((feature, threshold, dec))) => {
                    prop_assert_eq!(g.split, Split::Numeric { feature, threshold });
                    prop_assert!((g.decrease - dec).abs() < 1e-12);
                }
                (g, w) => prop_assert!(false, "got {:?}, oracle {:?}", g, w),
            }
        }

        #[test]
        fn matches_oracle_on_continuous(
            data in (2usize..25).prop_flat_map(|n| (
                prop::collection::vec(prop::collection::vec(0u8..6, n), 1..3),
                prop::collection::vec(0u8..2, n),
            ))
        ) {
            let (vals, y) = data;
            let x: Vec<Vec<f64>> = vals.iter().map(|c| c.iter().map(|&b| b as f64 * 0.7).collect()).collect();
            let f = Features::from_numeric(&["a", "b"][..x.len()], x.clone());
            let rows: Vec<usize> = (0..y.len()).collect();
            let cands: Vec<usize> = (0..x.len()).collect();
            let got = best_split(&f, &y, &rows, &cands).map(|g| (g.split, g.decrease));
            let want = oracle(&x, &y);
            match (got, want) {
                (None, None) => {}
                (Some((s, d)), Some((feature, threshold, dec))) => {
                    prop_assert_eq!(s, Split::Numeric { feature, threshold });
                    prop_assert!((d - dec).abs() < 1e-12);
                }
                (g, w) => prop_assert!(false, "got {:?}, oracle {:?}", g, w),
            }
        }
    }
}
