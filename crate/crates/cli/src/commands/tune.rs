use lapsekit::tuning::{grid_search, select_best, write_results_csv, Grid, TuneOptions};

use super::{load_table, out_dir, read_config, write_output};
use crate::{Manifest, TuneArgs};

pub fn run(args: &TuneArgs) -> anyhow::Result<()> {
    let mut manifest = Manifest::new("tune");
    let cfg = read_config(&args.config)?;
    manifest.input(&args.config)?.config(&cfg.entries());
    let grid = Grid::from_config(cfg)?;
    let table = load_table(&args.data, &mut manifest)?;
    let options = TuneOptions {
        protocol: args.protocol,
        seed: args.run.seed,
        threshold: args.run.threshold,
        stratified: !args.no_stratify,
    };
    manifest
        .entry("seed", options.seed)
        .entry("stratified", options.stratified)
        .entry("protocol", options.protocol)
        .entry("threshold", options.threshold)
        .entry("metric", &args.metric);
    // an unknown metric should fail before the grid runs
    select_best(&[], &args.metric, options.seed)?;

    let results = grid_search(&grid, &table, &options)?;
    let dir = out_dir(&args.out)?;
    write_output(&dir, "results.csv", &mut manifest, |w| Ok(write_results_csv(w, &grid, &results)?))?;
    for r in &results {
        manifest.entry("cell", format!("{}\t{}\t{:.3}s", r.index, r.spec, r.seconds));
        if let Err(e) = &r.outcome {
            eprintln!("cell {} ({}) failed: {e}", r.index, r.spec);
            manifest.entry("cell_error", format!("{}\t{e}", r.index));
        }
    }
    match select_best(&results, &args.metric, options.seed)? {
        Some(best) => {
            println!("best: {}", best.spec);
            manifest.entry("best", &best.spec);
        }
        None => {
            manifest.entry("best", "none");
        }
    }
    manifest.write(&dir)?;
    if results.iter().all(|r| r.outcome.is_err()) {
        anyhow::bail!("every grid cell failed");
    }
    Ok(())
}
