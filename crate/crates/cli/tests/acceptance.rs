//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs without the libtest harness so the lines always show.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lapsekit::config::KvConfig;
use lapsekit::dataset::{encode_design, Column, DataTable, DesignEncoder, DesignMatrix, Standardization};
use lapsekit::eval::{auc, roc_auc, roc_curve, Curve};
use lapsekit::linear::{
    fit_elastic_net, log_likelihood_gradient, mean_nll_gradient, neg_log_likelihood, Coding, Convergence, LinearFit,
};
use lapsekit::model::{fit_model, ModelFamily, ModelSpec};
use lapsekit::resample::{random_oversample, smote_with_parents};
use lapsekit::synthgen::{generate_prepared, PortfolioConfig};
use lapsekit::trees::{
    best_split, fit_boost, fit_forest, gini_impurity, BoostParams, FeatureKind, FeatureLayout, Features, Forest,
    ForestParams, Node, Split, Tree,
};
use lapsekit::tuning::{grid_search, Grid, Protocol, TrialResult, TuneOptions};
use lapsekit::varrel::{max_over_dummies, varrel_elanet, varrel_rf, varrel_xgb, RelevanceReport};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Outcome + 'a>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, elapsed: Duration, res: Outcome) -> Outcome {
    let res = res.map(|d| format!("{d}; {:.1}s", elapsed.as_secs_f64()));
    match res {
        Ok(d) if elapsed > limit => Err(format!("{d}; over the {}s limit", limit.as_secs())),
        r => r,
    }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let res = f();
    match limit {
        Some(l) => within(l, start.elapsed(), res),
        None => res.map(|d| format!("{d}; {:.1}s", start.elapsed().as_secs_f64())),
    }
}

fn portfolio(settings: &str) -> DataTable {
    let mut cfg = KvConfig::parse(settings).expect("portfolio settings");
    let config = PortfolioConfig::from_kv(&mut cfg).expect("portfolio config");
    cfg.finish().expect("known portfolio keys");
    generate_prepared(&config).expect("portfolio").0.table
}

fn run_grid(text: &str, table: &DataTable, seed: u64) -> Vec<TrialResult> {
    let grid = Grid::from_config(KvConfig::parse(text).unwrap()).unwrap();
    let options = TuneOptions {
        protocol: Protocol::Holdout { test_fraction: 0.25 },
        seed,
        threshold: 0.5,
        stratified: true,
    };
    grid_search(&grid, table, &options).unwrap()
}

fn metric(r: &TrialResult, name: &str) -> f64 {
    r.outcome.as_ref().expect("cell failed").get(name).expect("metric")
}

// 1
fn auc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..=200);
        // coarse scores so ties are common
        let levels = rng.random_range(2..=50);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_bool(0.3) as u8).collect();
        labels[0] = 1;
        labels[1] = 0;
        let mut conc = 0.0;
        let mut pairs = 0.0;
        for i in 0..n {
            for j in 0..n {
                if labels[i] == 1 && labels[j] == 0 {
                    pairs += 1.0;
                    conc += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        let got = auc(&roc_curve(&scores, &labels).unwrap());
        worst = worst.max((got - conc / pairs).abs());
    }
    check(worst <= 1e-12, format!("1000 instances, max |trapezoid - concordance| = {worst:.2e}"))
}

// 2
fn split_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    let mut no_split = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..=30);
        let p = rng.random_range(1..=3);
        let x: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.random_range(0..2) as f64).collect()).collect();
        let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let names: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        let f = Features::from_numeric(&names, x.clone());
        let rows: Vec<usize> = (0..n).collect();
        let cands: Vec<usize> = (0..p).collect();

        // every feature value that separates rows defines one partition
        let pos = y.iter().filter(|&&v| v == 1).count();
        let parent = gini_impurity(pos, n);
        let mut best: Option<(usize, f64, Vec<bool>)> = None;
        for (j, col) in x.iter().enumerate() {
            let left: Vec<bool> = col.iter().map(|&v| v == 0.0).collect();
            let nl = left.iter().filter(|&&l| l).count();
            if nl == 0 || nl == n {
                continue;
            }
            let pl = (0..n).filter(|&i| left[i] && y[i] == 1).count();
            let dec = parent
                - nl as f64 / n as f64 * gini_impurity(pl, nl)
                - (n - nl) as f64 / n as f64 * gini_impurity(pos - pl, n - nl);
            if dec > 1e-12 && best.as_ref().is_none_or(|b| dec > b.1 + 1e-12) {
                best = Some((j, dec, left));
            }
        }
        let got = best_split(&f, &y, &rows, &cands);
        match (got, best) {
            (None, None) => no_split += 1,
            (Some(g), Some((j, dec, left))) => {
                let same_feature = matches!(g.split, Split::Numeric { feature, .. } if feature == j);
                let same_rows = (0..n).all(|i| g.split.goes_left(&f, i) == left[i]);
                if !(same_feature && same_rows && (g.decrease - dec).abs() < 1e-12) {
                    mismatches += 1;
                }
            }
            _ => mismatches += 1,
        }
    }
    check(
        mismatches == 0,
        format!("200 instances ({no_split} without a useful split), {mismatches} mismatches"),
    )
}

fn standardized_design(n: usize, q: usize, seed: u64) -> (DesignMatrix, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols: Vec<Vec<f64>> = (0..q).map(|_| (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect()).collect();
    let beta: Vec<f64> = (0..q).map(|j| if j < 4 { 1.0 - 0.5 * j as f64 } else { 0.0 }).collect();
    let y = (0..n)
        .map(|i| {
            let eta: f64 = -0.5 + (0..q).map(|j| beta[j] * cols[j][i]).sum::<f64>();
            rng.random_bool(1.0 / (1.0 + (-eta).exp())) as u8
        })
        .collect();
    let names: Vec<String> = (0..q).map(|j| format!("x{j}")).collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    (DesignMatrix::from_columns(&names, &cols).unwrap().standardized(), y)
}

// 3
fn kkt_suite() -> Outcome {
    let (design, y) = standardized_design(200, 10, 3);
    let n = design.n_rows() as f64;
    let mut worst = 0.0f64;
    for &lambda in &[0.002, 0.01, 0.03, 0.07, 0.15] {
        for &alpha in &[0.0, 0.25, 0.5, 0.75, 1.0] {
            let fit = fit_elastic_net(&design, &y, lambda, alpha).map_err(|e| e.to_string())?;
            let b = &fit.coefficients;
            let g = mean_nll_gradient(&design, &y, fit.intercept, b);
            let g0 = log_likelihood_gradient(&design, &y, fit.intercept, b)[0] / n;
            worst = worst.max(g0.abs());
            for j in 0..b.len() {
                let smooth = g[j] + lambda * (1.0 - alpha) * b[j];
                let v = if b[j] != 0.0 {
                    (smooth + lambda * alpha * b[j].signum()).abs()
                } else {
                    (smooth.abs() - lambda * alpha).max(0.0)
                };
                worst = worst.max(v);
            }
        }
    }
    check(worst <= 1e-6, format!("5x5 (lambda, alpha) grid on 200x10, max violation {worst:.2e}"))
}

// 4
fn gradient_check() -> Outcome {
    let (design, y) = standardized_design(150, 6, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let b0 = rng.random::<f64>() * 2.0 - 1.0;
        let beta: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let g = log_likelihood_gradient(&design, &y, b0, &beta);
        let ll = |b0: f64, beta: &[f64]| -neg_log_likelihood(&design, &y, b0, beta);
        let mut fd = vec![(ll(b0 + h, &beta) - ll(b0 - h, &beta)) / (2.0 * h)];
        for j in 0..beta.len() {
            let (mut up, mut down) = (beta.clone(), beta.clone());
            up[j] += h;
            down[j] -= h;
            fd.push((ll(b0, &up) - ll(b0, &down)) / (2.0 * h));
        }
        let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(1.0);
        worst = worst.max(diff / norm);
    }
    check(worst < 1e-6, format!("50 points, max relative error {worst:.2e}"))
}

// 5
fn boost_closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 400;
    let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
    let noisy: Vec<u8> = (0..n).map(|i| (cols[0][i] + 0.5 * cols[1][i] + 0.3 * rng.random::<f64>() > 0.9) as u8).collect();
    let separable: Vec<u8> = (0..n).map(|i| (cols[0][i] > 0.4) as u8).collect();
    let f = Features::from_numeric(&["a", "b", "c"], cols);

    let mut worst = 0.0f64;
    let mut leaves = 0;
    for (l1, l2, rounds) in [(0.0, 1.0, 20), (0.3, 2.0, 20), (1.0, 0.5, 20)] {
        let p = BoostParams {
            rounds,
            eta: 0.3,
            max_depth: 3,
            l1,
            l2,
            ..BoostParams::default()
        };
        let model = fit_boost(&f, &noisy, &p).map_err(|e| e.to_string())?;
        let staged = model.predict_staged(&f);
        for (m, tree) in model.trees.iter().enumerate() {
            // gradient statistics recomputed from the predictions before round m
            let mut g = vec![0.0; tree.nodes.len()];
            let mut h = vec![0.0; tree.nodes.len()];
            for r in 0..n {
                let prob = staged[m][r];
                let leaf = tree.leaf_for(&f, r).id;
                g[leaf] += prob - noisy[r] as f64;
                h[leaf] += prob * (1.0 - prob);
            }
            for node in tree.nodes.iter().filter(|n| n.is_leaf()) {
                let t = if g[node.id] > l1 {
                    g[node.id] - l1
                } else if g[node.id] < -l1 {
                    g[node.id] + l1
                } else {
                    0.0
                };
                let want = if t == 0.0 { 0.0 } else { -t / (h[node.id] + l2) };
                worst = worst.max((node.value - want).abs());
                leaves += 1;
            }
        }
    }

    let p = BoostParams {
        rounds: 15,
        eta: 0.3,
        max_depth: 2,
        l1: 0.0,
        l2: 0.0,
        reg_leafcount: 0.0,
        min_child_hessian: 0.0,
    };
    let model = fit_boost(&f, &separable, &p).map_err(|e| e.to_string())?;
    let losses: Vec<f64> = model
        .predict_staged(&f)
        .iter()
        .map(|probs| {
            probs
                .iter()
                .zip(&separable)
                .map(|(&q, &y)| if y == 1 { -q.ln() } else { -(1.0 - q).ln() })
                .sum::<f64>()
                / n as f64
        })
        .collect();
    let decreasing = losses.windows(2).all(|w| w[1] < w[0]);
    check(
        worst <= 1e-10 && decreasing && model.trees.len() == 15,
        format!(
            "{leaves} leaves, max |w - closed form| = {worst:.2e}; separable log-loss {:.4} -> {:.2e} over {} rounds, strictly decreasing: {decreasing}",
            losses[0],
            losses[losses.len() - 1],
            model.trees.len()
        ),
    )
}

// 6
fn table4_pattern() -> Outcome {
    let table = portfolio("n_contracts = 50000\nimbalance_rate = 36\nseed = 1\n");
    let base = table.n_positive() as f64 / table.n_rows() as f64;
    let results = run_grid(
        "family = rf\nntree = 50\nntry = 4\nnodesize = 2500\nosw.method = oversample\nosw.rate = 1, 18, 36, 54\n",
        &table,
        1,
    );
    let row = |i: usize| (metric(&results[i], "auc.te"), metric(&results[i], "f1.te"), metric(&results[i], "br.te"));
    let (auc1, f11, br1) = row(0);
    let (auc36, f136, _) = row(2);
    let base_brier = base * (1.0 - base);
    let ok = f11 == 0.0 && f136 > f11 && auc36 > auc1 && (br1 - 0.0263).abs() <= 0.004;
    let rows = results
        .iter()
        .map(|r| {
            format!(
                "rate {}: auc.te {:.4} f1.te {:.4} br.te {:.4}",
                r.spec.params.iter().find(|(k, _)| k == "osw.rate").unwrap().1,
                metric(r, "auc.te"),
                metric(r, "f1.te"),
                metric(r, "br.te")
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    check(
        ok,
        format!("n = {}, base-rate Brier {base_brier:.4}; {rows}", table.n_rows()),
    )
}

// 7
fn table3_pattern() -> Outcome {
    let mut sums = [0.0; 3];
    let seeds = 1..=5u64;
    for seed in seeds.clone() {
        let table = portfolio(&format!("n_contracts = 50000\nimbalance_rate = 36\nseed = {seed}\n"));
        let results = run_grid(
            "family = rf\nntree = 10, 50, 300\nntry = 4\nnodesize = 5000\nosw.method = oversample\nosw.rate = 36\n",
            &table,
            seed,
        );
        for (s, r) in sums.iter_mut().zip(&results) {
            *s += metric(r, "auc.te");
        }
    }
    let k = seeds.count() as f64;
    let [m10, m50, m300] = sums.map(|s| s / k);
    let ok = m50 >= m10 - 0.002 && m300 >= m50 - 0.002 && (m300 - m50) < (m50 - m10);
    check(
        ok,
        format!(
            "mean auc.te over 5 seeds: ntree 10 {m10:.4}, 50 {m50:.4}, 300 {m300:.4}; gains {:+.4} then {:+.4}",
            m50 - m10,
            m300 - m50
        ),
    )
}

// 8
fn table5_ordering() -> Outcome {
    let grids = [
        "family = logit\n",
        "family = rf\nntree = 200\nntry = 8\nnodesize = 300\n",
        "family = xgb\nrounds = 200\neta = 0.05\nmax_depth = 3\n",
    ];
    let mut sums = [0.0; 3];
    for seed in 11..=15u64 {
        let table = portfolio(&format!("n_contracts = 20000\neffect.interaction = 1.2\nseed = {seed}\n"));
        for (s, g) in sums.iter_mut().zip(grids) {
            *s += metric(&run_grid(g, &table, seed)[0], "auc.te");
        }
    }
    let [logit, rf, xgb] = sums.map(|s| s / 5.0);
    check(
        rf - logit >= 0.01 && xgb - logit >= 0.01,
        format!("mean auc.te over 5 seeds: logit {logit:.4}, rf {rf:.4} ({:+.4}), xgb {xgb:.4} ({:+.4})", rf - logit, xgb - logit),
    )
}

fn hand_examples() -> Result<(), String> {
    let origin = |f: &str, l: Option<&str>| lapsekit::dataset::ColumnOrigin {
        feature: f.into(),
        level: l.map(Into::into),
    };
    // one forest tree: root on x1 (p = 1, decrease 0.18), left child on x2 (p = 0.5, decrease 0.08)
    let node = |id: usize, split: Option<usize>, children: Option<(usize, usize)>, n: usize, decrease: f64| Node {
        id,
        parent: None,
        split: split.map(|feature| Split::Numeric { feature, threshold: 0.5 }),
        children,
        value: 0.0,
        n,
        cover: n as f64,
        impurity: 0.0,
        decrease,
        grad: 0.0,
        hess: 0.0,
    };
    let forest = Forest {
        layout: FeatureLayout {
            names: vec!["x1".into(), "x2".into(), "x3".into()],
            kinds: vec![FeatureKind::Numeric; 3],
        },
        params: ForestParams::default(),
        trees: vec![Tree {
            nodes: vec![
                node(0, Some(0), Some((1, 2)), 100, 0.18),
                node(1, Some(1), Some((3, 4)), 50, 0.08),
                node(2, None, None, 50, 0.0),
                node(3, None, None, 25, 0.0),
                node(4, None, None, 25, 0.0),
            ],
        }],
    };
    let rf = varrel_rf(&forest);
    let want = [0.18 / 0.22, 0.04 / 0.22, 0.0];
    if rf.relevance.iter().zip(want).any(|(a, b)| (a.1 - b).abs() > 1e-15) {
        return Err(format!("forest example gave {:?}", rf.relevance));
    }
    let prov = vec![
        origin("x", None),
        origin("f", Some("a")),
        origin("f", Some("b")),
        origin("f", Some("c")),
    ];
    if max_over_dummies(&[0.3, 0.2, 0.5, 0.1], &prov) != vec![("x".to_string(), 0.3), ("f".to_string(), 0.5)] {
        return Err("dummy max example".into());
    }
    let prov = vec![
        origin("age", None),
        origin("region", Some("a")),
        origin("region", Some("b")),
        origin("region", Some("c")),
        origin("region", Some("d")),
    ];
    let fit = LinearFit {
        intercept: 0.0,
        coefficients: vec![-0.3, 0.1, 0.2, 0.2, 0.0],
        provenance: prov,
        penalty: None,
        coding: Coding::FullOneHot,
        convergence: Convergence {
            iterations: 1,
            objective: 0.0,
        },
        encoder: DesignEncoder {
            features: vec![],
            standardization: Some(Standardization {
                mean: vec![0.0; 5],
                sd: vec![1.0; 5],
                constant: vec![false; 5],
            }),
        },
    };
    // |-0.3| = 0.3 and sqrt(4) * ||(0.1, 0.2, 0.2, 0)|| = 0.6
    let en = varrel_elanet(&fit).map_err(|e| e.to_string())?;
    if (en.get("age").unwrap() - 0.3 / 0.9).abs() > 1e-12 || (en.get("region").unwrap() - 0.6 / 0.9).abs() > 1e-12 {
        return Err(format!("elastic-net example gave {:?}", en.relevance));
    }
    Ok(())
}

// 9
fn varrel_suite() -> Outcome {
    hand_examples()?;
    let mut top3 = [0usize; 3];
    let mut worst_sum = 0.0f64;
    for seed in 21..=25u64 {
        let table = portfolio(&format!("n_contracts = 10000\nseed = {seed}\n"));
        let y = table.labels();
        let forest = fit_forest(
            &Features::from_table(&table).map_err(|e| e.to_string())?,
            y,
            &ForestParams {
                ntree: 100,
                min_node_size: 50,
                seed,
                ..ForestParams::default()
            },
        )
        .map_err(|e| e.to_string())?;
        let raw = encode_design(&table, false).map_err(|e| e.to_string())?;
        let boost = fit_boost(
            &Features::from_design(&raw),
            y,
            &BoostParams {
                rounds: 100,
                eta: 0.1,
                max_depth: 3,
                ..BoostParams::default()
            },
        )
        .map_err(|e| e.to_string())?;
        let spec = ModelSpec::from_params(
            ModelFamily::Elanet,
            &[("lambda".into(), "0.001".into()), ("alpha".into(), "0.5".into())],
            seed,
        )
        .map_err(|e| e.to_string())?
        .0;
        let lapsekit::model::Model::Linear(enet) = fit_model(&spec, &table).map_err(|e| e.to_string())? else {
            return Err("elastic net did not give a linear model".into());
        };
        let reports: [RelevanceReport; 3] = [
            varrel_rf(&forest),
            varrel_xgb(&boost, raw.provenance()).map_err(|e| e.to_string())?,
            varrel_elanet(&enet).map_err(|e| e.to_string())?,
        ];
        for (count, r) in top3.iter_mut().zip(&reports) {
            worst_sum = worst_sum.max((r.relevance.iter().map(|v| v.1).sum::<f64>() - 1.0).abs());
            if r.ranking().iter().take(3).any(|&f| f == "remaining_duration") {
                *count += 1;
            }
        }
    }
    check(
        worst_sum <= 1e-9 && top3.iter().all(|&c| c >= 3),
        format!(
            "hand examples exact; max |sum - 1| = {worst_sum:.1e}; remaining_duration in top 3 (of 5 seeds): rf {}, xgb {}, elanet {}",
            top3[0], top3[1], top3[2]
        ),
    )
}

fn lapse(args: &[&str]) -> i32 {
    lapsekit_cli::run(std::iter::once("lapse").chain(args.iter().copied()))
}

// 10
fn tune_determinism(dir: &Path) -> Outcome {
    let d = dir.to_str().unwrap();
    if lapse(&["synth", "--out", &format!("{d}/data"), "--seed", "10"]) != 0 {
        return Err("synth failed".into());
    }
    let grids = [
        ("rf", "family = rf\nntree = 20, 60\nnodesize = 10\nosw.method = smote\nosw.rate = 1, 20\n", "holdout:0.25"),
        ("xgb", "family = xgb\nrounds = 30\neta = 0.1, 0.3\nmax_depth = 3\nosw.method = oversample\nosw.rate = 10\n", "cv:3"),
    ];
    let mut notes = Vec::new();
    for (name, grid, protocol) in grids {
        let cfg = format!("{d}/{name}.cfg");
        fs::write(&cfg, grid).unwrap();
        let mut outputs = Vec::new();
        for threads in ["1", "3", "8"] {
            let out = format!("{d}/{name}_{threads}");
            let code = lapse(&[
                "tune",
                "--data",
                &format!("{d}/data/data.csv"),
                "--schema",
                &format!("{d}/data/schema.txt"),
                "--config",
                &cfg,
                "--protocol",
                protocol,
                "--seed",
                "7",
                "--threads",
                threads,
                "--out",
                &out,
            ]);
            if code != 0 {
                return Err(format!("{name} tune with {threads} threads exited {code}"));
            }
            outputs.push(fs::read(format!("{out}/results.csv")).unwrap());
        }
        if outputs.iter().any(|o| o != &outputs[0]) {
            return Err(format!("{name} results differ across --threads 1/3/8"));
        }
        notes.push(format!("{name} ({protocol}, {} bytes)", outputs[0].len()));
    }
    Ok(format!("results.csv byte-identical across --threads 1/3/8 for {}", notes.join(", ")))
}

fn row_key(table: &DataTable, row: usize) -> String {
    table
        .columns()
        .iter()
        .map(|c| match c {
            Column::Identifier(v) => v[row].clone(),
            Column::Numeric(v) => format!("{:?}", v[row].map(f64::to_bits)),
            Column::Categorical(v) => format!("{:?}", v[row]),
            Column::Date(v) => format!("{:?}", v[row]),
            Column::Target(v) => v[row].to_string(),
        })
        .collect::<Vec<_>>()
        .join("|")
}

// 11
fn smote_convexity() -> Outcome {
    let table = portfolio("n_contracts = 3000\nseed = 11\n");
    let out = smote_with_parents(&table, 5.0, 5, 11).map_err(|e| e.to_string())?;
    let first = out.table.n_rows() - out.parents.len();
    let mut outside = 0;
    let mut checked = 0;
    for (i, &(a, b)) in out.parents.iter().enumerate() {
        for (col, src) in out.table.columns().iter().zip(table.columns()) {
            if let (Column::Numeric(new), Column::Numeric(old)) = (col, src) {
                if let (Some(v), Some(x), Some(z)) = (new[first + i], old[a], old[b]) {
                    checked += 1;
                    if v < x.min(z) || v > x.max(z) {
                        outside += 1;
                    }
                }
            }
        }
    }
    let over = random_oversample(&table, 5.0, 11).map_err(|e| e.to_string())?;
    let positives: std::collections::HashSet<String> =
        (0..table.n_rows()).filter(|&r| table.labels()[r] == 1).map(|r| row_key(&table, r)).collect();
    let original_kept = (0..table.n_rows()).all(|r| row_key(&over, r) == row_key(&table, r));
    let copies = (table.n_rows()..over.n_rows()).all(|r| positives.contains(&row_key(&over, r)));
    check(
        outside == 0 && original_kept && copies && !out.parents.is_empty() && over.n_rows() > table.n_rows(),
        format!(
            "{} SMOTE rows, {checked} coordinates, {outside} outside their parents; {} oversampled rows, all exact positive copies: {copies}",
            out.parents.len(),
            over.n_rows() - table.n_rows()
        ),
    )
}

fn roc_well_formed(c: &Curve) -> bool {
    let p = &c.points;
    let (first, last) = (p[0], p[p.len() - 1]);
    (first.x, first.y) == (0.0, 0.0)
        && (last.x, last.y) == (1.0, 1.0)
        && p.windows(2).all(|w| w[1].x >= w[0].x && w[1].y >= w[0].y)
}

// 12
fn roc_structure(dir: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    let mut malformed = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..=150);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-40..40) as f64 / 8.0).collect();
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_bool(0.4) as u8).collect();
        labels[0] = 0;
        labels[1] = 1;
        let curve = roc_curve(&scores, &labels).unwrap();
        malformed += !roc_well_formed(&curve) as usize;
        let base = auc(&curve);
        let transforms: [fn(f64) -> f64; 3] = [|s| s.exp(), |s| s * s * s + 2.0 * s, |s| 1.0 / (1.0 + (-s).exp())];
        for t in transforms {
            let moved: Vec<f64> = scores.iter().map(|&s| t(s)).collect();
            worst = worst.max((roc_auc(&moved, &labels).unwrap() - base).abs());
        }
    }
    // the curves a CLI run emits
    let d = dir.to_str().unwrap();
    let cfg = format!("{d}/curves.cfg");
    fs::write(&cfg, "family = xgb\nrounds = 20\nmax_depth = 2\n").unwrap();
    let code = lapse(&[
        "curves",
        "--data",
        &format!("{d}/data/data.csv"),
        "--schema",
        &format!("{d}/data/schema.txt"),
        "--config",
        &cfg,
        "--folds",
        "5",
        "--out",
        &format!("{d}/curves"),
    ]);
    if code != 0 {
        return Err(format!("lapse curves exited {code}"));
    }
    let text = fs::read_to_string(format!("{d}/curves/curves.csv")).unwrap();
    let mut emitted: std::collections::BTreeMap<String, Vec<(f64, f64)>> = Default::default();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[0] == "roc" {
            emitted.entry(f[1].to_string()).or_default().push((f[3].parse().unwrap(), f[4].parse().unwrap()));
        }
    }
    let cli_ok = emitted.len() == 5
        && emitted.values().all(|p| {
            p[0] == (0.0, 0.0) && p[p.len() - 1] == (1.0, 1.0) && p.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1)
        });
    check(
        malformed == 0 && worst == 0.0 && cli_ok,
        format!(
            "200 instances, {malformed} malformed, max AUC change under 3 monotone transforms {worst:.1e}; {} CLI fold curves well formed: {cli_ok}",
            emitted.len()
        ),
    )
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let secs = Duration::from_secs;
    let criteria: Vec<Criterion> = vec![
        ("AUC oracle", Box::new(|| timed(Some(secs(10)), auc_oracle))),
        ("split oracle", Box::new(|| timed(Some(secs(10)), split_oracle))),
        ("elastic-net KKT", Box::new(|| timed(None, kkt_suite))),
        ("gradient check", Box::new(|| timed(None, gradient_check))),
        ("boost closed form", Box::new(|| timed(None, boost_closed_form))),
        ("osw.rate pattern", Box::new(|| timed(Some(secs(600)), table4_pattern))),
        ("ntree pattern", Box::new(|| timed(Some(secs(900)), table3_pattern))),
        ("family ordering", Box::new(|| timed(None, table5_ordering))),
        ("variable relevance", Box::new(|| timed(None, varrel_suite))),
        ("tune determinism", Box::new(|| timed(None, || tune_determinism(dir.path())))),
        ("resampling", Box::new(|| timed(None, smote_convexity))),
        ("ROC/PR structure", Box::new(|| timed(None, || roc_structure(dir.path())))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS criterion {:>2} ({name}): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {:>2} ({name}): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} of 12 criteria passed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
