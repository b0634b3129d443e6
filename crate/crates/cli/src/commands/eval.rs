use std::fs::File;
use std::io::BufReader;

use anyhow::Context;

use lapsekit::dataset::DataTable;
use lapsekit::eval::{pr_curve, roc_curve, summarize, write_curves_csv};
use lapsekit::model::TrainedModel;

use super::{fmt_opt, out_dir, write_output};
use crate::{EvalArgs, Manifest};

pub fn run(args: &EvalArgs) -> anyhow::Result<()> {
    let mut manifest = Manifest::new("eval");
    let file = File::open(&args.model).with_context(|| format!("opening {}", args.model.display()))?;
    let trained = TrainedModel::read(BufReader::new(file)).with_context(|| format!("reading {}", args.model.display()))?;
    manifest.input(&args.model)?;
    let table = DataTable::load(&args.data.data, &args.data.schema)
        .with_context(|| format!("loading {}", args.data.data.display()))?;
    manifest.input(&args.data.data)?.input(&args.data.schema)?;
    manifest
        .entry("family", trained.family)
        .entry("threshold", args.threshold)
        .entry("tag", &args.tag);

    let scores = trained.score(&table)?;
    let labels = table.labels();
    let s = summarize(&scores, labels, args.threshold)?;
    let roc = roc_curve(&scores, labels)?;
    let pr = pr_curve(&scores, labels)?;

    let dir = out_dir(&args.out)?;
    let t = &args.tag;
    write_output(&dir, "metrics.csv", &mut manifest, |w| {
        writeln!(w, "auc.{t},bac.{t},br.{t},f1.{t}")?;
        writeln!(w, "{},{},{},{}", s.auc, fmt_opt(s.bac), s.brier, s.f1)?;
        Ok(())
    })?;
    write_output(&dir, "roc.csv", &mut manifest, |w| {
        Ok(write_curves_csv(w, &[(t.clone(), &roc)])?)
    })?;
    write_output(&dir, "pr.csv", &mut manifest, |w| Ok(write_curves_csv(w, &[(t.clone(), &pr)])?))?;
    println!("auc.{t}\t{}\nbac.{t}\t{}\nbr.{t}\t{}\nf1.{t}\t{}", s.auc, fmt_opt(s.bac), s.brier, s.f1);
    manifest.write(&dir)
}
