//! Preparation steps applied to a raw portfolio: age and duration features,
//! imputation, and the contract selection rules.

use std::collections::HashMap;

use chrono::{Datelike, Months, NaiveDate};

use super::{columns as col, Product, SynthError, SUPPLEMENT_TYPES};
use crate::dataset::{Column, ColumnSpec, DataTable};

const DAYS_PER_YEAR: f64 = 365.25;

/// Columns removed by [`engineer_features`] unless the caller overrides the list.
/// The elapsed duration is nearly collinear with total and remaining duration.
pub const DEFAULT_DROP: &[&str] = &[col::ELAPSED_DURATION];

/// Bookkeeping columns removed once preparation is complete.
pub const HELPER_COLUMNS: &[&str] = &[
    col::PART_PRODUCT,
    col::BEGIN_DATE,
    col::END_DATE,
    col::INSURED_BIRTH_DATE,
    col::HOLDER_BIRTH_DATE,
    col::HOLDER_GENDER,
    col::BENEFIT_STATUS,
];

/// Year fraction between two dates on an actual/365.25 basis.
pub fn year_fraction(from: NaiveDate, to: NaiveDate) -> f64 {
    (to - from).num_days() as f64 / DAYS_PER_YEAR
}

fn add_months(d: NaiveDate, m: u32) -> NaiveDate {
    d.checked_add_months(Months::new(m)).expect("date within chrono range")
}

/// Age in calendar months: completed months plus the elapsed share of the
/// current month, divided by twelve.
pub fn fractional_age(birth: NaiveDate, reference: NaiveDate) -> Result<f64, SynthError> {
    if birth >= reference {
        return Err(SynthError::InvertedDates { birth, reference });
    }
    // completed months, found by stepping from an estimate
    let approx = (reference.year_ce().1 as i64 - birth.year_ce().1 as i64) * 12
        + reference.month0() as i64
        - birth.month0() as i64;
    let mut months = approx.max(0) as u32;
    while months > 0 && add_months(birth, months) > reference {
        months -= 1;
    }
    while add_months(birth, months + 1) <= reference {
        months += 1;
    }
    let start = add_months(birth, months);
    let end = add_months(birth, months + 1);
    let part = (reference - start).num_days() as f64 / (end - start).num_days() as f64;
    Ok((months as f64 + part) / 12.0)
}

/// Actuarial age at `reference`: the fractional age rounded half away from
/// zero, so a person counts as their birthday age from six months before to
/// six months after it.
pub fn semi_annual_age(birth: NaiveDate, reference: NaiveDate) -> Result<i64, SynthError> {
    Ok(fractional_age(birth, reference)?.round() as i64)
}

fn required_dates<'a>(table: &'a DataTable, name: &str) -> Result<&'a [Option<NaiveDate>], SynthError> {
    table
        .dates(name)
        .ok_or_else(|| SynthError::MissingColumn(name.to_string()))
}

fn required_numeric<'a>(table: &'a DataTable, name: &str) -> Result<&'a [Option<f64>], SynthError> {
    table
        .numeric(name)
        .ok_or_else(|| SynthError::MissingColumn(name.to_string()))
}

fn required_categorical<'a>(table: &'a DataTable, name: &str) -> Result<&'a [Option<u32>], SynthError> {
    table
        .categorical(name)
        .ok_or_else(|| SynthError::MissingColumn(name.to_string()))
}

/// Adds total, elapsed and remaining duration (years) and the insured's
/// semi-annual age, then removes the columns named in `drop`.
pub fn engineer_features(table: &DataTable, reference: NaiveDate, drop: &[&str]) -> Result<DataTable, SynthError> {
    let begin = required_dates(table, col::BEGIN_DATE)?;
    let end = required_dates(table, col::END_DATE)?;
    let birth = required_dates(table, col::INSURED_BIRTH_DATE)?;
    let n = table.n_rows();
    let mut total = Vec::with_capacity(n);
    let mut elapsed = Vec::with_capacity(n);
    let mut remaining = Vec::with_capacity(n);
    let mut age = Vec::with_capacity(n);
    for row in 0..n {
        let (b, e) = match (begin[row], end[row]) {
            (Some(b), Some(e)) if e > b => (b, e),
            _ => return Err(SynthError::InvalidContractDates { row: row + 1 }),
        };
        total.push(Some(year_fraction(b, e)));
        elapsed.push(Some(year_fraction(b, reference)));
        remaining.push(Some(year_fraction(reference, e)));
        age.push(match birth[row] {
            Some(d) => Some(semi_annual_age(d, reference)? as f64),
            None => None,
        });
    }
    let out = table
        .with_column(ColumnSpec::numeric(col::TOTAL_DURATION), Column::Numeric(total))?
        .with_column(ColumnSpec::numeric(col::ELAPSED_DURATION), Column::Numeric(elapsed))?
        .with_column(ColumnSpec::numeric(col::REMAINING_DURATION), Column::Numeric(remaining))?
        .with_column(ColumnSpec::numeric(col::INSURED_AGE), Column::Numeric(age))?;
    Ok(out.without_columns(drop)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Imputed {
    pub table: DataTable,
    /// Rows removed because insured gender or birth date stayed missing.
    pub dropped: usize,
}

/// Missing annual premium (single-premium contracts) becomes 0; missing
/// insured gender and birth date are copied from the policyholder. Rows that
/// still lack either are dropped and counted.
pub fn impute(table: &DataTable) -> Result<Imputed, SynthError> {
    let premium: Vec<Option<f64>> = required_numeric(table, col::ANNUAL_PREMIUM)?
        .iter()
        .map(|p| Some(p.unwrap_or(0.0)))
        .collect();
    let fill = |own: &[Option<u32>], other: &[Option<u32>]| -> Vec<Option<u32>> {
        own.iter().zip(other).map(|(a, b)| a.or(*b)).collect()
    };
    let gender = fill(
        required_categorical(table, col::INSURED_GENDER)?,
        required_categorical(table, col::HOLDER_GENDER)?,
    );
    let birth: Vec<Option<NaiveDate>> = required_dates(table, col::INSURED_BIRTH_DATE)?
        .iter()
        .zip(required_dates(table, col::HOLDER_BIRTH_DATE)?)
        .map(|(a, b)| a.or(*b))
        .collect();
    let keep: Vec<usize> = (0..table.n_rows())
        .filter(|&r| gender[r].is_some() && birth[r].is_some())
        .collect();
    let filled = table
        .replace_column(col::ANNUAL_PREMIUM, Column::Numeric(premium))?
        .replace_column(col::INSURED_GENDER, Column::Categorical(gender))?
        .replace_column(col::INSURED_BIRTH_DATE, Column::Date(birth))?;
    let dropped = table.n_rows() - keep.len();
    let table = if dropped == 0 { filled } else { filled.take(&keep) };
    Ok(Imputed { table, dropped })
}

/// Keeps main-insurance rows (part id 1) active at `reference`; pension rows
/// in benefit status are removed as well. Before the supplementary parts are
/// discarded, each one sets the matching `supp_*` indicator on its contract's
/// main row.
pub fn select_contracts(table: &DataTable, product: Product, reference: NaiveDate) -> Result<DataTable, SynthError> {
    let ids = table
        .identifiers(col::CONTRACT_ID)
        .ok_or_else(|| SynthError::MissingColumn(col::CONTRACT_ID.into()))?;
    let parts = table
        .identifiers(col::PART_ID)
        .ok_or_else(|| SynthError::MissingColumn(col::PART_ID.into()))?;
    let part_product = required_categorical(table, col::PART_PRODUCT)?;
    let end = required_dates(table, col::END_DATE)?;
    let benefit = required_numeric(table, col::BENEFIT_STATUS)?;
    let product_levels = &table
        .schema()
        .get(col::PART_PRODUCT)
        .expect("checked above")
        .levels;

    // contract id -> supplement types attached to it
    let mut attached: HashMap<&str, Vec<&str>> = HashMap::new();
    for row in 0..table.n_rows() {
        if parts[row] != "1" {
            if let Some(code) = part_product[row] {
                attached
                    .entry(ids[row].as_str())
                    .or_default()
                    .push(product_levels[code as usize].as_str());
            }
        }
    }

    let mut merged = table.clone();
    for supp in SUPPLEMENT_TYPES {
        let name = format!("supp_{supp}");
        let mut values = required_numeric(table, &name)?.to_vec();
        for row in 0..table.n_rows() {
            if parts[row] == "1" && attached.get(ids[row].as_str()).is_some_and(|v| v.contains(&supp)) {
                values[row] = Some(1.0);
            }
        }
        merged = merged.replace_column(&name, Column::Numeric(values))?;
    }

    let keep: Vec<usize> = (0..table.n_rows())
        .filter(|&r| parts[r] == "1")
        .filter(|&r| end[r].is_some_and(|e| e >= reference))
        .filter(|&r| product == Product::Endowment || benefit[r] != Some(1.0))
        .collect();
    Ok(merged.take(&keep))
}

/// Result of the full preparation pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub table: DataTable,
    pub dropped_by_imputation: usize,
    pub removed_by_selection: usize,
}

/// impute → engineer_features → select_contracts → drop helper columns.
/// Selection runs last because supplementary parts feed the main-row indicators.
pub fn prepare(raw: &DataTable, product: Product, reference: NaiveDate) -> Result<Prepared, SynthError> {
    let imputed = impute(raw)?;
    let engineered = engineer_features(&imputed.table, reference, DEFAULT_DROP)?;
    let selected = select_contracts(&engineered, product, reference)?;
    let removed = engineered.n_rows() - selected.n_rows();
    Ok(Prepared {
        table: selected.without_columns(HELPER_COLUMNS)?,
        dropped_by_imputation: imputed.dropped,
        removed_by_selection: removed,
    })
}
