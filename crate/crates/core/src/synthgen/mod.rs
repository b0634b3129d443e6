//! Synthetic endowment and pension portfolios with a planted lapse model.
//!
//! [`generate`] produces a raw portfolio in the shape of an inventory
//! extract: one row per contract part, calendar dates, missing values and
//! inactive contracts. [`prepare`] turns it into a model-ready table.
//!
//! The lapse probability of every active main contract is
//! `sigmoid(intercept + Σ effect · feature)` over the engineered features;
//! the intercept is found by bisection so that the mean probability equals
//! `1 / (1 + IR)`.

mod prep;

use std::collections::HashSet;
use std::io::Write;

use chrono::{Datelike, Months, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use thiserror::Error;

use crate::config::{ConfigError, KvConfig};
use crate::dataset::{Column, ColumnSpec, DataError, DataTable, FeatureSchema};

pub use prep::{
    engineer_features, fractional_age, impute, prepare, select_contracts, semi_annual_age, year_fraction,
    Imputed, Prepared, DEFAULT_DROP, HELPER_COLUMNS,
};

/// Column names of the raw and prepared portfolio tables.
pub mod columns {
    pub const CONTRACT_ID: &str = "contract_id";
    pub const PART_ID: &str = "part_id";
    pub const PART_PRODUCT: &str = "part_product";
    pub const BEGIN_DATE: &str = "begin_date";
    pub const END_DATE: &str = "end_date";
    pub const SUM_INSURED: &str = "sum_insured";
    pub const ANNUAL_PREMIUM: &str = "annual_premium";
    pub const INTEREST_RATE: &str = "interest_rate";
    pub const INSURED_BIRTH_DATE: &str = "insured_birth_date";
    pub const INSURED_GENDER: &str = "insured_gender";
    pub const HOLDER_BIRTH_DATE: &str = "holder_birth_date";
    pub const HOLDER_GENDER: &str = "holder_gender";
    pub const OCCUPATION: &str = "occupation";
    pub const SALES_REGION: &str = "sales_region";
    pub const REJECTED_DYNAMICS: &str = "rejected_dynamics";
    pub const BENEFIT_STATUS: &str = "benefit_status";
    pub const LAPSED: &str = "lapsed";
    pub const TOTAL_DURATION: &str = "total_duration";
    pub const ELAPSED_DURATION: &str = "elapsed_duration";
    pub const REMAINING_DURATION: &str = "remaining_duration";
    pub const INSURED_AGE: &str = "insured_age";
}

use columns as col;

pub const SUPPLEMENT_TYPES: [&str; 3] = ["disability", "accident", "dread_disease"];
pub const N_COLLECTION: usize = 8;
pub const N_OCCUPATION: usize = 8;
pub const N_REGION: usize = 6;

pub fn collection_column(i: usize) -> String {
    format!("collection_{}", i + 1)
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid portfolio config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("intercept calibration failed: target rate {target} outside reachable range [{low}, {high}]")]
    Calibration { target: f64, low: f64, high: f64 },
    #[error("birth date {birth} is not before reference date {reference}")]
    InvertedDates { birth: NaiveDate, reference: NaiveDate },
    #[error("row {row}: contract dates missing or end not after begin")]
    InvalidContractDates { row: usize },
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Product {
    Endowment,
    Pension,
}

impl Product {
    pub fn parse(s: &str) -> Option<Product> {
        match s {
            "endowment" => Some(Product::Endowment),
            "pension" => Some(Product::Pension),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Product::Endowment => "endowment",
            Product::Pension => "pension",
        }
    }
}

/// Planted coefficients of the lapse model, on the feature scales named.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectSizes {
    /// Per year of remaining contract term.
    pub remaining_duration: f64,
    /// Per unit of natural-log sum insured.
    pub log_sum_insured: f64,
    /// Per prior event, one per collection category.
    pub collection: [f64; N_COLLECTION],
    /// Additive offset per occupation level.
    pub occupation: [f64; N_OCCUPATION],
    /// Weight of the sign interaction `s_age · s_rem`, where `s_age = +1` for
    /// insured age below 45 and `s_rem = +1` for more than 12 years remaining
    /// (each −1 otherwise). Invisible to a main-effects logit.
    pub interaction: f64,
}

impl Default for EffectSizes {
    fn default() -> Self {
        EffectSizes {
            remaining_duration: 0.09,
            log_sum_insured: -0.45,
            collection: [0.45, 0.35, 0.3, 0.25, 0.2, 0.15, 0.1, 0.05],
            occupation: [0.0, 0.15, -0.1, 0.2, -0.15, 0.05, 0.1, -0.05],
            interaction: 0.0,
        }
    }
}

impl EffectSizes {
    pub fn zero() -> Self {
        EffectSizes {
            remaining_duration: 0.0,
            log_sum_insured: 0.0,
            collection: [0.0; N_COLLECTION],
            occupation: [0.0; N_OCCUPATION],
            interaction: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioConfig {
    /// Active main contracts generated (inactive contracts come on top).
    pub n_contracts: usize,
    pub product: Product,
    /// Target N/P among active main contracts.
    pub imbalance_rate: f64,
    pub seed: u64,
    pub reference_date: NaiveDate,
    pub effects: EffectSizes,
    pub sum_insured_log_mean: f64,
    pub sum_insured_log_sd: f64,
    /// Share of contracts paid by a single premium (annual premium missing).
    pub single_premium_rate: f64,
    /// Share of contracts with insured gender and birth date missing.
    pub missing_insured_rate: f64,
    /// Of those, the share whose policyholder fields are missing too.
    pub missing_holder_rate: f64,
    /// Share of contracts carrying one supplementary part.
    pub supplementary_rate: f64,
    /// Expired (and, for pensions, benefit-status) contracts, as a share of `n_contracts`.
    pub inactive_fraction: f64,
    /// Probability that a collection count is a structural zero.
    pub collection_zero_prob: f64,
    /// Poisson mean of the non-structural collection counts.
    pub collection_mean: f64,
}

impl Default for PortfolioConfig {
    fn default() -> Self {
        PortfolioConfig {
            n_contracts: 10_000,
            product: Product::Pension,
            imbalance_rate: 36.0,
            seed: 1,
            reference_date: NaiveDate::from_ymd_opt(2018, 1, 1).expect("valid date"),
            effects: EffectSizes::default(),
            sum_insured_log_mean: 10.1,
            sum_insured_log_sd: 0.7,
            single_premium_rate: 0.08,
            missing_insured_rate: 0.03,
            missing_holder_rate: 0.1,
            supplementary_rate: 0.25,
            inactive_fraction: 0.03,
            collection_zero_prob: 0.8,
            collection_mean: 1.2,
        }
    }
}

fn check_rate(name: &str, v: f64) -> Result<(), SynthError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(SynthError::InvalidConfig(format!("{name} = {v} must lie in [0, 1]")))
    }
}

impl PortfolioConfig {
    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_contracts < 100 {
            return Err(SynthError::InvalidConfig(format!(
                "n_contracts = {} is below 100",
                self.n_contracts
            )));
        }
        if !(self.imbalance_rate >= 1.0 && self.imbalance_rate.is_finite()) {
            return Err(SynthError::InvalidConfig(format!(
                "imbalance_rate = {} must be at least 1",
                self.imbalance_rate
            )));
        }
        if !(self.sum_insured_log_sd > 0.0) || !(self.collection_mean > 0.0) {
            return Err(SynthError::InvalidConfig("spreads and means must be positive".into()));
        }
        check_rate("single_premium_rate", self.single_premium_rate)?;
        check_rate("missing_insured_rate", self.missing_insured_rate)?;
        check_rate("missing_holder_rate", self.missing_holder_rate)?;
        check_rate("supplementary_rate", self.supplementary_rate)?;
        check_rate("collection_zero_prob", self.collection_zero_prob)?;
        if !(0.0..=10.0).contains(&self.inactive_fraction) {
            return Err(SynthError::InvalidConfig("inactive_fraction must lie in [0, 10]".into()));
        }
        Ok(())
    }

    /// Reads the portfolio keys from `cfg`, leaving unrelated keys in place.
    pub fn from_kv(cfg: &mut KvConfig) -> Result<PortfolioConfig, SynthError> {
        let d = PortfolioConfig::default();
        let product = match cfg.take_str("product") {
            None => d.product,
            Some(p) => Product::parse(&p).ok_or(ConfigError::InvalidValue {
                key: "product".into(),
                value: p,
            })?,
        };
        let reference_date = match cfg.take_str("reference_date") {
            None => d.reference_date,
            Some(s) => NaiveDate::parse_from_str(&s, "%Y-%m-%d").map_err(|_| ConfigError::InvalidValue {
                key: "reference_date".into(),
                value: s,
            })?,
        };
        let mut effects = d.effects.clone();
        effects.remaining_duration = cfg.take_or("effect.remaining_duration", effects.remaining_duration)?;
        effects.log_sum_insured = cfg.take_or("effect.log_sum_insured", effects.log_sum_insured)?;
        effects.interaction = cfg.take_or("effect.interaction", effects.interaction)?;
        if let Some(v) = cfg.take_list::<f64>("effect.collection")? {
            effects.collection = broadcast("effect.collection", &v)?;
        }
        if let Some(v) = cfg.take_list::<f64>("effect.occupation")? {
            effects.occupation = broadcast("effect.occupation", &v)?;
        }
        let out = PortfolioConfig {
            n_contracts: cfg.take_or("n_contracts", d.n_contracts)?,
            product,
            imbalance_rate: cfg.take_or("imbalance_rate", d.imbalance_rate)?,
            seed: cfg.take_or("seed", d.seed)?,
            reference_date,
            effects,
            sum_insured_log_mean: cfg.take_or("sum_insured.log_mean", d.sum_insured_log_mean)?,
            sum_insured_log_sd: cfg.take_or("sum_insured.log_sd", d.sum_insured_log_sd)?,
            single_premium_rate: cfg.take_or("single_premium_rate", d.single_premium_rate)?,
            missing_insured_rate: cfg.take_or("missing_insured_rate", d.missing_insured_rate)?,
            missing_holder_rate: cfg.take_or("missing_holder_rate", d.missing_holder_rate)?,
            supplementary_rate: cfg.take_or("supplementary_rate", d.supplementary_rate)?,
            inactive_fraction: cfg.take_or("inactive_fraction", d.inactive_fraction)?,
            collection_zero_prob: cfg.take_or("collection.zero_prob", d.collection_zero_prob)?,
            collection_mean: cfg.take_or("collection.mean", d.collection_mean)?,
        };
        out.validate()?;
        Ok(out)
    }
}

fn broadcast<const N: usize>(key: &str, v: &[f64]) -> Result<[f64; N], SynthError> {
    match v.len() {
        1 => Ok([v[0]; N]),
        n if n == N => Ok(std::array::from_fn(|i| v[i])),
        n => Err(SynthError::InvalidConfig(format!("{key} needs 1 or {N} values, got {n}"))),
    }
}

/// The planted model actually used for a generated portfolio.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub intercept: f64,
    /// (term, coefficient) pairs; terms name prepared-table features, with
    /// `feature=level` for occupation offsets.
    pub coefficients: Vec<(String, f64)>,
    /// Mean planted probability over active main contracts.
    pub expected_rate: f64,
    pub target_rate: f64,
}

impl GroundTruth {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "term,value")?;
        writeln!(w, "intercept,{}", self.intercept)?;
        for (t, v) in &self.coefficients {
            writeln!(w, "{t},{v}")?;
        }
        writeln!(w, "expected_rate,{}", self.expected_rate)?;
        writeln!(w, "target_rate,{}", self.target_rate)
    }

    pub fn coefficient(&self, term: &str) -> Option<f64> {
        self.coefficients.iter().find(|(t, _)| t == term).map(|&(_, v)| v)
    }
}

pub fn occupation_levels() -> Vec<String> {
    (1..=N_OCCUPATION).map(|i| format!("occ_{i}")).collect()
}

pub fn region_levels() -> Vec<String> {
    (1..=N_REGION).map(|i| format!("region_{i}")).collect()
}

/// Schema of the raw portfolio emitted by [`generate`].
pub fn raw_schema() -> FeatureSchema {
    let mut cols = vec![
        ColumnSpec::identifier(col::CONTRACT_ID),
        ColumnSpec::identifier(col::PART_ID),
        ColumnSpec::categorical(
            col::PART_PRODUCT,
            &["main", SUPPLEMENT_TYPES[0], SUPPLEMENT_TYPES[1], SUPPLEMENT_TYPES[2]],
        ),
        ColumnSpec::date(col::BEGIN_DATE),
        ColumnSpec::date(col::END_DATE),
        ColumnSpec::numeric(col::SUM_INSURED),
        ColumnSpec::numeric(col::ANNUAL_PREMIUM),
        ColumnSpec::numeric(col::INTEREST_RATE),
        ColumnSpec::date(col::INSURED_BIRTH_DATE),
        ColumnSpec::categorical(col::INSURED_GENDER, &["F", "M"]),
        ColumnSpec::date(col::HOLDER_BIRTH_DATE),
        ColumnSpec::categorical(col::HOLDER_GENDER, &["F", "M"]),
        ColumnSpec::categorical(col::OCCUPATION, &occupation_levels()),
        ColumnSpec::categorical(col::SALES_REGION, &region_levels()),
    ];
    for s in SUPPLEMENT_TYPES {
        cols.push(ColumnSpec::numeric(&format!("supp_{s}")));
    }
    cols.push(ColumnSpec::numeric(col::REJECTED_DYNAMICS));
    for i in 0..N_COLLECTION {
        cols.push(ColumnSpec::numeric(&collection_column(i)));
    }
    cols.push(ColumnSpec::numeric(col::BENEFIT_STATUS));
    cols.push(ColumnSpec::target(col::LAPSED));
    FeatureSchema::new(cols).expect("static schema is valid")
}

/// Guaranteed interest rate in force for new business starting in `year`.
fn guaranteed_rate(year: i32) -> f64 {
    match year {
        ..=1999 => 4.0,
        2000..=2003 => 3.25,
        2004..=2006 => 2.75,
        2007..=2011 => 2.25,
        2012..=2014 => 1.75,
        2015..=2016 => 1.25,
        _ => 0.9,
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

struct Person {
    birth: NaiveDate,
    gender: u32,
}

struct Contract {
    id: u32,
    begin: NaiveDate,
    end: NaiveDate,
    sum_insured: f64,
    premium: Option<f64>,
    insured: Person,
    insured_missing: bool,
    holder: Person,
    holder_missing: bool,
    occupation: u32,
    region: u32,
    supplement: Option<usize>,
    rejected_dynamics: f64,
    collection: [f64; N_COLLECTION],
    benefit: bool,
    active: bool,
    eta: f64,
    lapsed: u8,
}

fn random_day(rng: &mut ChaCha8Rng, from: NaiveDate, span_days: i64) -> NaiveDate {
    from + chrono::Duration::days(rng.random_range(0..span_days.max(1)))
}

/// Draws a raw portfolio and its planted lapse labels.
pub fn generate(config: &PortfolioConfig) -> Result<(DataTable, GroundTruth), SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let reference = config.reference_date;
    let n_active = config.n_contracts;
    let n_inactive = (n_active as f64 * config.inactive_fraction).round() as usize;
    let total = n_active + n_inactive;

    let si_dist = LogNormal::new(config.sum_insured_log_mean, config.sum_insured_log_sd)
        .map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    let coll_dist = Poisson::new(config.collection_mean).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    let dyn_dist = Poisson::new(0.6).expect("positive mean");
    let noise = Normal::<f64>::new(0.0, 0.15).expect("positive sd");
    let occ_weights = [0.2, 0.16, 0.14, 0.12, 0.12, 0.1, 0.09, 0.07];
    let region_weights = [0.22, 0.2, 0.18, 0.16, 0.14, 0.1];

    let mut used_ids = HashSet::with_capacity(total);
    let mut contracts = Vec::with_capacity(total);
    for i in 0..total {
        let active = i < n_active;
        let id = loop {
            let candidate = rng.random_range(1_000_000u32..10_000_000);
            if used_ids.insert(candidate) {
                break candidate;
            }
        };
        // contracts begin on the first of a month, up to 30 years back
        let months_back = if active { rng.random_range(0..360u32) } else { rng.random_range(13..360u32) };
        let ref_month = NaiveDate::from_ymd_opt(reference.year(), reference.month(), 1).expect("valid");
        let begin = ref_month.checked_sub_months(Months::new(months_back)).expect("in range");
        let elapsed_years = months_back / 12;
        let mut benefit = false;
        let end = if active {
            let min_term = (elapsed_years + 1).max(5);
            let term = rng.random_range(min_term..=min_term.max(45));
            begin.checked_add_months(Months::new(12 * term)).expect("in range")
        } else if config.product == Product::Pension && rng.random_bool(0.5) {
            benefit = true;
            let term = rng.random_range((elapsed_years + 1).max(5)..=50);
            begin.checked_add_months(Months::new(12 * term)).expect("in range")
        } else {
            // expired during the year before the reference date
            random_day(&mut rng, reference - chrono::Duration::days(365), 365)
        };
        let end = if end <= begin { begin + chrono::Duration::days(1) } else { end };

        let sum_insured = (si_dist.sample(&mut rng) / 10.0).round().max(100.0) * 10.0;
        let term_years = year_fraction(begin, end).max(1.0);
        let premium = if rng.random_bool(config.single_premium_rate) {
            None
        } else {
            let p = sum_insured / term_years * (1.0_f64 + noise.sample(&mut rng)).max(0.3);
            Some((p * 100.0).round() / 100.0)
        };
        let holder_age_days = rng.random_range((25 * 365)..(70 * 365));
        let holder = Person {
            birth: reference - chrono::Duration::days(holder_age_days),
            gender: rng.random_range(0..2),
        };
        let insured = if rng.random_bool(0.8) {
            Person {
                birth: holder.birth,
                gender: holder.gender,
            }
        } else {
            Person {
                birth: reference - chrono::Duration::days(rng.random_range((18 * 365)..(70 * 365))),
                gender: rng.random_range(0..2),
            }
        };
        let insured_missing = rng.random_bool(config.missing_insured_rate);
        let holder_missing = insured_missing && rng.random_bool(config.missing_holder_rate);
        let occupation = weighted_index(&mut rng, &occ_weights);
        let region = weighted_index(&mut rng, &region_weights);
        let supplement = rng
            .random_bool(config.supplementary_rate)
            .then(|| rng.random_range(0..SUPPLEMENT_TYPES.len()));
        let rejected_dynamics = dyn_dist.sample(&mut rng);
        let mut collection = [0.0; N_COLLECTION];
        for c in &mut collection {
            if !rng.random_bool(config.collection_zero_prob) {
                *c = coll_dist.sample(&mut rng);
            }
        }
        contracts.push(Contract {
            id,
            begin,
            end,
            sum_insured,
            premium,
            insured,
            insured_missing,
            holder,
            holder_missing,
            occupation,
            region,
            supplement,
            rejected_dynamics,
            collection,
            benefit,
            active,
            eta: 0.0,
            lapsed: 0,
        });
    }

    // planted linear predictor over the engineered features, without intercept
    let fx = &config.effects;
    for c in contracts.iter_mut().filter(|c| c.active) {
        let remaining = year_fraction(reference, c.end);
        let age = semi_annual_age(c.insured.birth, reference)? as f64;
        let s_age = if age < 45.0 { 1.0 } else { -1.0 };
        let s_rem = if remaining > 12.0 { 1.0 } else { -1.0 };
        c.eta = fx.remaining_duration * remaining
            + fx.log_sum_insured * c.sum_insured.ln()
            + fx.collection.iter().zip(&c.collection).map(|(b, x)| b * x).sum::<f64>()
            + fx.occupation[c.occupation as usize]
            + fx.interaction * s_age * s_rem;
    }
    let target_rate = 1.0 / (1.0 + config.imbalance_rate);
    let etas: Vec<f64> = contracts.iter().filter(|c| c.active).map(|c| c.eta).collect();
    let intercept = calibrate_intercept(&etas, target_rate)?;
    let expected_rate = etas.iter().map(|e| sigmoid(intercept + e)).sum::<f64>() / etas.len() as f64;
    for c in contracts.iter_mut().filter(|c| c.active) {
        c.lapsed = u8::from(rng.random_bool(sigmoid(intercept + c.eta)));
    }

    let mut coefficients = vec![
        (col::REMAINING_DURATION.to_string(), fx.remaining_duration),
        ("log_sum_insured".to_string(), fx.log_sum_insured),
    ];
    for (i, b) in fx.collection.iter().enumerate() {
        coefficients.push((collection_column(i), *b));
    }
    for (level, b) in occupation_levels().into_iter().zip(fx.occupation) {
        coefficients.push((format!("{}={level}", col::OCCUPATION), b));
    }
    coefficients.push(("interaction_age_remaining".to_string(), fx.interaction));

    let table = build_table(&contracts)?;
    Ok((
        table,
        GroundTruth {
            intercept,
            coefficients,
            expected_rate,
            target_rate,
        },
    ))
}

fn weighted_index(rng: &mut ChaCha8Rng, weights: &[f64]) -> u32 {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i as u32;
        }
        u -= w;
    }
    (weights.len() - 1) as u32
}

/// Bisection on the intercept so that the mean of `sigmoid(b + eta)` hits `target`.
pub fn calibrate_intercept(etas: &[f64], target: f64) -> Result<f64, SynthError> {
    let mean_rate = |b: f64| etas.iter().map(|e| sigmoid(b + e)).sum::<f64>() / etas.len() as f64;
    let (mut lo, mut hi) = (-60.0, 60.0);
    let (f_lo, f_hi) = (mean_rate(lo), mean_rate(hi));
    if !(f_lo < target && target < f_hi) {
        return Err(SynthError::Calibration {
            target,
            low: f_lo,
            high: f_hi,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_rate(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    let b = 0.5 * (lo + hi);
    let achieved = mean_rate(b);
    if (achieved - target).abs() > 0.05 * target {
        return Err(SynthError::Calibration {
            target,
            low: achieved,
            high: achieved,
        });
    }
    Ok(b)
}

fn build_table(contracts: &[Contract]) -> Result<DataTable, SynthError> {
    let n_rows = contracts.len() + contracts.iter().filter(|c| c.supplement.is_some()).count();
    let mut ids = Vec::with_capacity(n_rows);
    let mut parts = Vec::with_capacity(n_rows);
    let mut part_product = Vec::with_capacity(n_rows);
    let mut begin = Vec::with_capacity(n_rows);
    let mut end = Vec::with_capacity(n_rows);
    let mut si = Vec::with_capacity(n_rows);
    let mut premium = Vec::with_capacity(n_rows);
    let mut rate = Vec::with_capacity(n_rows);
    let mut ins_birth = Vec::with_capacity(n_rows);
    let mut ins_gender = Vec::with_capacity(n_rows);
    let mut hol_birth = Vec::with_capacity(n_rows);
    let mut hol_gender = Vec::with_capacity(n_rows);
    let mut occ = Vec::with_capacity(n_rows);
    let mut region = Vec::with_capacity(n_rows);
    let mut supp: Vec<Vec<Option<f64>>> = (0..SUPPLEMENT_TYPES.len()).map(|_| Vec::with_capacity(n_rows)).collect();
    let mut dynamics = Vec::with_capacity(n_rows);
    let mut coll: Vec<Vec<Option<f64>>> = (0..N_COLLECTION).map(|_| Vec::with_capacity(n_rows)).collect();
    let mut benefit = Vec::with_capacity(n_rows);
    let mut lapsed = Vec::with_capacity(n_rows);

    let mut push = |c: &Contract, part: usize| {
        let main = part == 1;
        ids.push(c.id.to_string());
        parts.push(part.to_string());
        part_product.push(Some(if main { 0 } else { c.supplement.expect("supplement row") as u32 + 1 }));
        begin.push(Some(c.begin));
        end.push(Some(c.end));
        // supplementary parts insure a fraction of the main benefit
        si.push(Some(if main { c.sum_insured } else { (c.sum_insured * 0.3).round() }));
        premium.push(if main { c.premium } else { c.premium.map(|p| (p * 0.1 * 100.0).round() / 100.0) });
        rate.push(Some(guaranteed_rate(c.begin.year())));
        ins_birth.push((!c.insured_missing).then_some(c.insured.birth));
        ins_gender.push((!c.insured_missing).then_some(c.insured.gender));
        hol_birth.push((!c.holder_missing).then_some(c.holder.birth));
        hol_gender.push((!c.holder_missing).then_some(c.holder.gender));
        occ.push(Some(c.occupation));
        region.push(Some(c.region));
        for s in supp.iter_mut() {
            s.push(Some(0.0));
        }
        dynamics.push(Some(c.rejected_dynamics));
        for (k, v) in coll.iter_mut().enumerate() {
            v.push(Some(c.collection[k]));
        }
        benefit.push(Some(if c.benefit { 1.0 } else { 0.0 }));
        lapsed.push(if main { c.lapsed } else { 0 });
    };
    for c in contracts {
        push(c, 1);
        if c.supplement.is_some() {
            push(c, 2);
        }
    }

    let mut columns = vec![
        Column::Identifier(ids),
        Column::Identifier(parts),
        Column::Categorical(part_product),
        Column::Date(begin),
        Column::Date(end),
        Column::Numeric(si),
        Column::Numeric(premium),
        Column::Numeric(rate),
        Column::Date(ins_birth),
        Column::Categorical(ins_gender),
        Column::Date(hol_birth),
        Column::Categorical(hol_gender),
        Column::Categorical(occ),
        Column::Categorical(region),
    ];
    columns.extend(supp.into_iter().map(Column::Numeric));
    columns.push(Column::Numeric(dynamics));
    columns.extend(coll.into_iter().map(Column::Numeric));
    columns.push(Column::Numeric(benefit));
    columns.push(Column::Target(lapsed));
    Ok(DataTable::new(raw_schema(), columns)?)
}

/// Generates and prepares a portfolio in one call.
pub fn generate_prepared(config: &PortfolioConfig) -> Result<(Prepared, GroundTruth), SynthError> {
    let (raw, truth) = generate(config)?;
    let prepared = prepare(&raw, config.product, config.reference_date)?;
    Ok((prepared, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> PortfolioConfig {
        PortfolioConfig {
            n_contracts: 2_000,
            seed,
            ..PortfolioConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        let mut c = small(1);
        c.n_contracts = 99;
        assert!(generate(&c).is_err());
        let mut c = small(1);
        c.imbalance_rate = 0.5;
        assert!(generate(&c).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let (a, ta) = generate(&small(5)).unwrap();
        let (b, tb) = generate(&small(5)).unwrap();
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ba).unwrap();
        b.write_csv(&mut bb).unwrap();
        assert_eq!(ba, bb);
        assert_eq!(ta, tb);
        let (c, _) = generate(&small(6)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn raw_rows_respect_record_invariants() {
        let (t, _) = generate(&small(2)).unwrap();
        let begin = t.dates(col::BEGIN_DATE).unwrap();
        let end = t.dates(col::END_DATE).unwrap();
        for r in 0..t.n_rows() {
            assert!(end[r].unwrap() > begin[r].unwrap());
        }
        for i in 0..N_COLLECTION {
            assert!(t.numeric(&collection_column(i)).unwrap().iter().all(|x| x.unwrap() >= 0.0));
        }
        let parts = t.identifiers(col::PART_ID).unwrap();
        assert!(parts.iter().any(|p| p == "2"));
        // only main rows can lapse
        for (part, &y) in parts.iter().zip(t.labels()) {
            if part != "1" {
                assert_eq!(y, 0);
            }
        }
    }

    #[test]
    fn calibration_hits_target() {
        let etas: Vec<f64> = (0..1000).map(|i| (i as f64 / 100.0).sin() * 2.0).collect();
        let b = calibrate_intercept(&etas, 1.0 / 37.0).unwrap();
        let rate = etas.iter().map(|e| sigmoid(b + e)).sum::<f64>() / 1000.0;
        assert!((rate - 1.0 / 37.0).abs() < 1e-10);
        assert!(calibrate_intercept(&[0.0], 1.0).is_err());
    }

    #[test]
    fn prepared_table_has_model_columns() {
        let (p, _) = generate_prepared(&small(3)).unwrap();
        let s = p.table.schema();
        for name in [col::REMAINING_DURATION, col::TOTAL_DURATION, col::INSURED_AGE, "supp_accident"] {
            assert!(s.get(name).is_some(), "{name}");
        }
        for name in HELPER_COLUMNS.iter().chain(DEFAULT_DROP) {
            assert!(s.get(name).is_none(), "{name}");
        }
        let n_expected = 2_000 - p.dropped_by_imputation;
        // inactive and supplementary rows are gone; dropped rows may be active or not
        assert!(p.table.n_rows() <= 2_000 && p.table.n_rows() + 10 >= n_expected);
        let remaining = p.table.numeric(col::REMAINING_DURATION).unwrap();
        assert!(remaining.iter().all(|r| r.unwrap() >= 0.0));
    }

    #[test]
    fn config_from_kv() {
        let mut kv = KvConfig::parse(
            "n_contracts = 500\nproduct = endowment\nimbalance_rate = 10\neffect.collection = 0.1\nreference_date = 2019-01-01\n",
        )
        .unwrap();
        let c = PortfolioConfig::from_kv(&mut kv).unwrap();
        kv.finish().unwrap();
        assert_eq!(c.n_contracts, 500);
        assert_eq!(c.product, Product::Endowment);
        assert_eq!(c.effects.collection, [0.1; 8]);
        let mut bad = KvConfig::parse("product = whole_life\n").unwrap();
        assert!(PortfolioConfig::from_kv(&mut bad).is_err());
    }
}
