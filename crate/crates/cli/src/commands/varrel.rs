use std::fs::File;
use std::io::BufReader;

use anyhow::Context;

use lapsekit::model::{Model, ModelFamily, TrainedModel};
use lapsekit::varrel::{
    relevance_table, varrel_elanet, varrel_rf, varrel_xgb, write_relevance_csv, Grouping, RelevanceReport,
    VarRelError,
};

use super::{out_dir, write_output};
use crate::{Manifest, VarrelArgs};

fn report(trained: &TrainedModel) -> Result<RelevanceReport, VarRelError> {
    match (&trained.family, &trained.model) {
        (ModelFamily::Rf, Model::Forest(forest)) => Ok(varrel_rf(forest)),
        (ModelFamily::Xgb, Model::Boost { model, encoder }) => varrel_xgb(model, &encoder.provenance()),
        (ModelFamily::Elanet, Model::Linear(fit)) => varrel_elanet(fit),
        (family, _) => Err(VarRelError::Unsupported(family.to_string())),
    }
}

pub fn run(args: &VarrelArgs) -> anyhow::Result<()> {
    let mut manifest = Manifest::new("varrel");
    manifest.entry("dataset", &args.dataset);
    let grouping = match &args.groups {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let g = Grouping::read(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
            manifest.input(path)?;
            g
        }
        None => Grouping::portfolio_default(),
    };
    let mut reports = Vec::new();
    for path in &args.models {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let trained = TrainedModel::read(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
        manifest.input(path)?;
        let r = report(&trained).with_context(|| format!("model {}", path.display()))?;
        if r.degenerate {
            eprintln!("warning: {} has no positive relevance on any feature", path.display());
        }
        reports.push(r.with_dataset(&args.dataset));
    }
    let rows = relevance_table(&reports, &grouping);
    let dir = out_dir(&args.out)?;
    write_output(&dir, "relevance.csv", &mut manifest, |w| Ok(write_relevance_csv(w, &rows)?))?;
    manifest.write(&dir)
}
