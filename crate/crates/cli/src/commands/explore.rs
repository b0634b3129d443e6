use lapsekit::dataset::{Column, DataTable};

use super::{load_table, out_dir, write_output};
use crate::{ExploreArgs, Manifest, UsageError};

/// One row of the binned report.
#[derive(Debug, Clone, PartialEq)]
pub struct Bin {
    pub label: String,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub count: usize,
    pub positives: usize,
}

impl Bin {
    /// Lapse rate, undefined for an empty bin.
    pub fn rate(&self) -> Option<f64> {
        (self.count > 0).then(|| self.positives as f64 / self.count as f64)
    }
}

/// Equal-width bins over the observed range; on the log10 scale when `log`.
/// Missing values are skipped. The last bin is closed on the right.
pub fn numeric_bins(values: &[Option<f64>], labels: &[u8], bins: usize, log: bool) -> Result<Vec<Bin>, UsageError> {
    let mut pairs = Vec::new();
    for (v, &y) in values.iter().zip(labels) {
        let Some(v) = *v else { continue };
        if log && v <= 0.0 {
            return Err(UsageError(format!("log binning needs positive values, found {v}")));
        }
        pairs.push((if log { v.log10() } else { v }, y));
    }
    if pairs.is_empty() {
        return Err(UsageError("feature has no observed values".into()));
    }
    let lo = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    // outer edges are the observed extremes, free of log round trips
    let observed = values.iter().flatten();
    let min = observed.clone().copied().fold(f64::INFINITY, f64::min);
    let max = observed.copied().fold(f64::NEG_INFINITY, f64::max);
    let edge = |i: usize| match i {
        0 => min,
        i if i == bins => max,
        i if log => 10f64.powf(lo + width * i as f64),
        i => lo + width * i as f64,
    };
    let mut out: Vec<Bin> = (0..bins)
        .map(|i| Bin {
            label: i.to_string(),
            lower: Some(edge(i)),
            upper: Some(edge(i + 1)),
            count: 0,
            positives: 0,
        })
        .collect();
    for (v, y) in pairs {
        let i = if width > 0.0 { (((v - lo) / width) as usize).min(bins - 1) } else { 0 };
        out[i].count += 1;
        out[i].positives += y as usize;
    }
    Ok(out)
}

/// One bin per declared level, in schema order.
pub fn level_bins(codes: &[Option<u32>], labels: &[u8], levels: &[String]) -> Vec<Bin> {
    let mut out: Vec<Bin> = levels
        .iter()
        .map(|l| Bin {
            label: l.clone(),
            lower: None,
            upper: None,
            count: 0,
            positives: 0,
        })
        .collect();
    for (c, &y) in codes.iter().zip(labels) {
        if let Some(c) = c {
            out[*c as usize].count += 1;
            out[*c as usize].positives += y as usize;
        }
    }
    out
}

fn bins_for(table: &DataTable, args: &ExploreArgs) -> anyhow::Result<Vec<Bin>> {
    let labels = table.labels();
    let spec = table
        .schema()
        .get(&args.feature)
        .ok_or_else(|| UsageError(format!("no column named `{}`", args.feature)))?;
    match table.column(&args.feature) {
        Some(Column::Numeric(values)) => Ok(numeric_bins(values, labels, args.bins, args.log)?),
        Some(Column::Categorical(codes)) => {
            if args.log {
                return Err(UsageError(format!("`{}` is categorical; --log does not apply", args.feature)).into());
            }
            Ok(level_bins(codes, labels, &spec.levels))
        }
        _ => Err(UsageError(format!("`{}` is neither numeric nor categorical", args.feature)).into()),
    }
}

fn fmt(v: Option<f64>) -> String {
    v.map_or("NA".to_string(), |v| v.to_string())
}

pub fn run(args: &ExploreArgs) -> anyhow::Result<()> {
    if args.bins == 0 {
        return Err(UsageError("--bins must be positive".into()).into());
    }
    let mut manifest = Manifest::new("explore");
    let table = load_table(&args.data, &mut manifest)?;
    manifest
        .entry("feature", &args.feature)
        .entry("bins", args.bins)
        .entry("log", args.log);
    let bins = bins_for(&table, args)?;
    let overall = table.n_positive() as f64 / table.n_rows() as f64;
    let dir = out_dir(&args.out)?;
    write_output(&dir, "explore.csv", &mut manifest, |w| {
        writeln!(w, "bin,lower,upper,count,positives,rate,overall_rate")?;
        for b in &bins {
            writeln!(
                w,
                "{},{},{},{},{},{},{overall}",
                b.label,
                fmt(b.lower),
                fmt(b.upper),
                b.count,
                b.positives,
                fmt(b.rate())
            )?;
        }
        Ok(())
    })?;
    manifest.write(&dir)
}
