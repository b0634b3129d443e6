use anyhow::Context;
use rayon::prelude::*;

use lapsekit::dataset::{make_fold_plan, split_indices};
use lapsekit::eval::{
    aggregate_curves, pooled_curve, pr_curve, roc_auc, roc_curve, write_aggregate_csv, write_curves_csv, Curve,
    CurveKind,
};
use lapsekit::model::{fit_model, ModelSpec};
use lapsekit::trees::derive_seed;

use super::{load_table, out_dir, read_config, single_spec, write_output};
use crate::{AggregationArg, CurvesArgs, Manifest, UsageError};

struct FoldOutcome {
    scores: Vec<f64>,
    labels: Vec<u8>,
    roc: Curve,
    pr: Curve,
}

pub fn run(args: &CurvesArgs) -> anyhow::Result<()> {
    if args.folds < 2 {
        return Err(UsageError("--folds must be at least 2".into()).into());
    }
    if !(0.0..1.0).contains(&args.holdout) {
        return Err(UsageError("--holdout must be in [0, 1)".into()).into());
    }
    if args.grid < 2 {
        return Err(UsageError("--grid must be at least 2".into()).into());
    }
    let mut manifest = Manifest::new("curves");
    let cfg = read_config(&args.config)?;
    manifest.input(&args.config)?.config(&cfg.entries());
    let trial = single_spec(cfg)?;
    let seed = args.run.seed;
    // resolve once up front so config errors surface as usage errors
    ModelSpec::from_params(trial.family, &trial.params, seed)?;
    let all = load_table(&args.data, &mut manifest)?;
    all.require_both_classes()?;
    let stratified = !args.no_stratify;
    let table = if args.holdout > 0.0 {
        let (tr, _) = split_indices(all.labels(), args.holdout, stratified, seed)?;
        all.take(&tr)
    } else {
        all
    };
    manifest
        .entry("seed", seed)
        .entry("folds", args.folds)
        .entry("holdout", args.holdout)
        .entry("stratified", stratified)
        .entry("rows", table.n_rows())
        .entry("aggregation", format!("{:?}", args.aggregation).to_lowercase());

    let plan = make_fold_plan(table.labels(), args.folds, stratified, seed)?;
    let folds = (0..args.folds)
        .into_par_iter()
        .map(|f| -> anyhow::Result<FoldOutcome> {
            let (tr, te) = plan.split(f);
            let (train, test) = (table.take(&tr), table.take(&te));
            let (spec, resample) = ModelSpec::from_params(trial.family, &trial.params, derive_seed(seed, f as u64))?;
            let model = fit_model(&spec, &resample.apply(&train)?)?;
            let scores = model.score(&test)?;
            let labels = test.labels().to_vec();
            Ok(FoldOutcome {
                roc: roc_curve(&scores, &labels)?,
                pr: pr_curve(&scores, &labels)?,
                scores,
                labels,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()
        .context("fitting the folds")?;

    let dir = out_dir(&args.out)?;
    let mut tagged: Vec<(String, &Curve)> = Vec::new();
    for (f, o) in folds.iter().enumerate() {
        tagged.push((f.to_string(), &o.roc));
    }
    for (f, o) in folds.iter().enumerate() {
        tagged.push((f.to_string(), &o.pr));
    }
    write_output(&dir, "curves.csv", &mut manifest, |w| Ok(write_curves_csv(w, &tagged)?))?;
    write_output(&dir, "folds.csv", &mut manifest, |w| {
        writeln!(w, "fold,n,positives,auc")?;
        for (f, o) in folds.iter().enumerate() {
            let pos = o.labels.iter().filter(|&&y| y == 1).count();
            writeln!(w, "{f},{},{pos},{}", o.labels.len(), roc_auc(&o.scores, &o.labels)?)?;
        }
        Ok(())
    })?;

    match args.aggregation {
        AggregationArg::Vertical => {
            let rocs: Vec<Curve> = folds.iter().map(|o| o.roc.clone()).collect();
            let prs: Vec<Curve> = folds.iter().map(|o| o.pr.clone()).collect();
            let roc = aggregate_curves(&rocs, args.grid)?;
            let pr = aggregate_curves(&prs, args.grid)?;
            write_output(&dir, "roc_aggregate.csv", &mut manifest, |w| Ok(write_aggregate_csv(w, &roc)?))?;
            write_output(&dir, "pr_aggregate.csv", &mut manifest, |w| Ok(write_aggregate_csv(w, &pr)?))?;
        }
        AggregationArg::Pooled => {
            let parts: Vec<(Vec<f64>, Vec<u8>)> = folds.iter().map(|o| (o.scores.clone(), o.labels.clone())).collect();
            let roc = pooled_curve(CurveKind::Roc, &parts)?;
            let pr = pooled_curve(CurveKind::Pr, &parts)?;
            write_output(&dir, "roc_aggregate.csv", &mut manifest, |w| {
                Ok(write_curves_csv(w, &[("pooled".to_string(), &roc)])?)
            })?;
            write_output(&dir, "pr_aggregate.csv", &mut manifest, |w| {
                Ok(write_curves_csv(w, &[("pooled".to_string(), &pr)])?)
            })?;
        }
    }
    manifest.write(&dir)
}
