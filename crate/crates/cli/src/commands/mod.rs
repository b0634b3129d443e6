pub mod curves;
pub mod eval;
pub mod explore;
pub mod synth;
pub mod train;
pub mod tune;
pub mod varrel;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;

use lapsekit::config::KvConfig;
use lapsekit::dataset::DataTable;
use lapsekit::tuning::{Grid, TrialSpec};

use crate::{DataArgs, Manifest, UsageError};

pub(crate) fn read_config(path: &Path) -> anyhow::Result<KvConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    KvConfig::parse(&text).with_context(|| format!("in config {}", path.display()))
}

pub(crate) fn load_table(args: &DataArgs, manifest: &mut Manifest) -> anyhow::Result<DataTable> {
    let table = DataTable::load(&args.data, &args.schema)
        .with_context(|| format!("loading {} with schema {}", args.data.display(), args.schema.display()))?;
    manifest.input(&args.data)?.input(&args.schema)?;
    Ok(table)
}

pub(crate) fn out_dir(path: &Path) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(path.to_path_buf())
}

/// Creates `dir/name`, hands a buffered writer to `fill`, and records the
/// file's digest in the manifest.
pub(crate) fn write_output(
    dir: &Path,
    name: &str,
    manifest: &mut Manifest,
    fill: impl FnOnce(&mut dyn Write) -> anyhow::Result<()>,
) -> anyhow::Result<PathBuf> {
    let path = dir.join(name);
    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    fill(&mut w)?;
    w.flush()?;
    drop(w);
    manifest.output(&path)?;
    Ok(path)
}

/// A model config is a grid with exactly one cell.
pub(crate) fn single_spec(cfg: KvConfig) -> anyhow::Result<TrialSpec> {
    let grid = Grid::from_config(cfg)?;
    let mut cells = grid.cells();
    if cells.len() != 1 || grid.axes.iter().any(|(_, v)| v.len() != 1) {
        return Err(UsageError("a model config takes exactly one value per key".into()).into());
    }
    Ok(cells.remove(0))
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("NA".to_string(), |v| v.to_string())
}
