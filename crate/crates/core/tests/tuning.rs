use lapsekit::config::KvConfig;
use lapsekit::dataset::DataTable;
use lapsekit::synthgen::{generate_prepared, PortfolioConfig};
use lapsekit::tuning::{grid_search, select_best, write_results_csv, Grid, Protocol, TuneError, TuneOptions};

fn table(seed: u64) -> DataTable {
    let mut kv = KvConfig::parse(&format!("n_contracts = 3000\nimbalance_rate = 12\nseed = {seed}\n")).unwrap();
    let cfg = PortfolioConfig::from_kv(&mut kv).unwrap();
    generate_prepared(&cfg).unwrap().0.table
}

fn grid(text: &str) -> Grid {
    Grid::from_config(KvConfig::parse(text).unwrap()).unwrap()
}

#[test]
fn holdout_grid_produces_one_row_per_cell() {
    let t = table(1);
    let g = grid("family = rf\nntree = 10, 30\nnodesize = 20\nosw.method = oversample\nosw.rate = 1, 12\n");
    let results = grid_search(&g, &t, &TuneOptions::default()).unwrap();
    assert_eq!(results.len(), 4);
    assert!(results.iter().enumerate().all(|(i, r)| r.index == i && r.outcome.is_ok()));
    let mut buf = Vec::new();
    write_results_csv(&mut buf, &g, &results).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.starts_with("ntree,nodesize,osw.method,osw.rate,auc.te,"));
    // ntree varies slowest
    assert!(text.lines().nth(1).unwrap().starts_with("10,20,oversample,1,"));
    assert!(text.lines().nth(2).unwrap().starts_with("10,20,oversample,12,"));
}

#[test]
fn cross_validation_and_reruns_agree() {
    let t = table(2);
    let g = grid("family = xgb\nrounds = 20\nmax_depth = 2, 4\n");
    let options = TuneOptions {
        protocol: Protocol::CrossValidation { k: 4 },
        seed: 9,
        threshold: 0.5,
        stratified: true,
    };
    let a = grid_search(&g, &t, &options).unwrap();
    let b = grid_search(&g, &t, &options).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.outcome, y.outcome);
    }
    let best = select_best(&a, "auc.te", 9).unwrap().unwrap();
    let best_auc = best.outcome.as_ref().unwrap().get("auc.te").unwrap();
    assert!(a.iter().all(|r| r.outcome.as_ref().unwrap().get("auc.te").unwrap() <= best_auc));
}

#[test]
fn failing_cells_are_recorded_and_the_rest_run() {
    let t = table(3);
    // SMOTE needs more positives than neighbours
    let g = grid("family = logit\nosw.method = smote\nosw.k = 5, 100000\nosw.rate = 2\n");
    let results = grid_search(&g, &t, &TuneOptions::default()).unwrap();
    assert!(results[0].outcome.is_ok());
    assert!(results[1].outcome.is_err());
    assert_eq!(select_best(&results, "auc.te", 1).unwrap().unwrap().index, 0);
}

#[test]
fn configuration_errors_stop_the_run() {
    let t = table(4);
    assert!(matches!(
        grid_search(&grid("family = rf\nntre = 10\n"), &t, &TuneOptions::default()),
        Err(TuneError::Model(_))
    ));
    assert!("cv:1".parse::<Protocol>().is_err());
    assert!("holdout:1.5".parse::<Protocol>().is_err());
    assert_eq!("cv:10".parse::<Protocol>().unwrap(), Protocol::CrossValidation { k: 10 });
}
