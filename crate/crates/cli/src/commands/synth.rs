use std::fs;

use anyhow::Context;

use lapsekit::config::KvConfig;
use lapsekit::synthgen::{generate, generate_prepared, raw_schema, PortfolioConfig};

use super::{out_dir, read_config, write_output};
use crate::{Manifest, SynthArgs};

pub fn run(args: &SynthArgs) -> anyhow::Result<()> {
    let mut manifest = Manifest::new("synth");
    let mut cfg = match &args.config {
        Some(path) => {
            manifest.input(path)?;
            read_config(path)?
        }
        None => KvConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.insert("seed", &seed.to_string())?;
    }
    manifest.config(&cfg.entries());
    let config = PortfolioConfig::from_kv(&mut cfg)?;
    cfg.finish()?;
    manifest.entry("seed", config.seed);

    let dir = out_dir(&args.out)?;
    let (prepared, truth) = generate_prepared(&config)?;
    let table = &prepared.table;
    write_output(&dir, "data.csv", &mut manifest, |w| Ok(table.write_csv(w)?))?;
    write_output(&dir, "schema.txt", &mut manifest, |w| {
        Ok(w.write_all(table.schema().to_text().as_bytes())?)
    })?;
    write_output(&dir, "truth.csv", &mut manifest, |w| Ok(truth.write_csv(w)?))?;
    if args.raw {
        let (raw, _) = generate(&config)?;
        write_output(&dir, "raw.csv", &mut manifest, |w| Ok(raw.write_csv(w)?))?;
        fs::write(dir.join("raw_schema.txt"), raw_schema().to_text()).context("writing raw_schema.txt")?;
        manifest.output(&dir.join("raw_schema.txt"))?;
    }
    manifest
        .entry("rows", table.n_rows())
        .entry("positives", table.n_positive())
        .entry("dropped_by_imputation", prepared.dropped_by_imputation)
        .entry("removed_by_selection", prepared.removed_by_selection);
    manifest.write(&dir)
}
