use anyhow::Context;

use lapsekit::eval::summarize;
use lapsekit::model::{fit_model, resample_params, Model, ModelSpec, TrainedModel};

use super::{load_table, out_dir, read_config, single_spec, write_output};
use crate::{Manifest, TrainArgs};

pub fn run(args: &TrainArgs) -> anyhow::Result<()> {
    let mut manifest = Manifest::new("train");
    let cfg = read_config(&args.config)?;
    manifest.input(&args.config)?.config(&cfg.entries());
    let trial = single_spec(cfg)?;
    let seed = args.run.seed;
    let (spec, plan) = ModelSpec::from_params(trial.family, &trial.params, seed)?;
    let table = load_table(&args.data, &mut manifest)?;
    manifest.entry("seed", seed).entry("threshold", args.run.threshold);

    let fitted = plan.apply(&table).context("resampling the training data")?;
    let model = fit_model(&spec, &fitted)?;
    // training metrics refer to the original rows, not the resampled ones
    let s = summarize(&model.score(&table)?, table.labels(), args.run.threshold)?;
    let mut metrics = vec![("auc.tr".to_string(), s.auc)];
    if let Some(bac) = s.bac {
        metrics.push(("bac.tr".to_string(), bac));
    }
    metrics.push(("br.tr".to_string(), s.brier));
    metrics.push(("f1.tr".to_string(), s.f1));

    let mut params = spec.to_params();
    params.extend(resample_params(&plan));
    let trained = TrainedModel {
        family: trial.family,
        params,
        seed,
        schema_digest: table.schema().digest(),
        metrics,
        model,
    };
    let dir = out_dir(&args.out)?;
    write_output(&dir, "model.txt", &mut manifest, |w| Ok(trained.write(w)?))?;
    if let Model::Linear(fit) = &trained.model {
        // fitted scale next to the scale of the raw covariates
        let (b0, original) = fit.destandardized();
        write_output(&dir, "coefficients.csv", &mut manifest, |w| {
            writeln!(w, "term,fitted,original")?;
            writeln!(w, "(intercept),{},{b0}", fit.intercept)?;
            for ((origin, b), o) in fit.provenance.iter().zip(&fit.coefficients).zip(&original) {
                writeln!(w, "{origin},{b},{o}")?;
            }
            Ok(())
        })?;
    }
    for (k, v) in &trained.metrics {
        println!("{k}\t{v}");
        manifest.entry("metric", format!("{k}\t{v}"));
    }
    manifest.write(&dir)
}
