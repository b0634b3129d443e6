use std::fmt;

use super::schema::Role;
use super::table::{Column, DataTable};
use super::DataError;

/// Where a design column came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ColumnOrigin {
    pub feature: String,
    /// `None` for a numeric feature, otherwise the one-hot level.
    pub level: Option<String>,
}

impl fmt::Display for ColumnOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.level {
            Some(l) => write!(f, "{}={}", self.feature, l),
            None => write!(f, "{}", self.feature),
        }
    }
}

/// A source feature as seen by the encoder.
#[derive(Debug, Clone, PartialEq)]
pub enum EncodedFeature {
    Numeric { name: String },
    Categorical { name: String, levels: Vec<String> },
}

impl EncodedFeature {
    pub fn name(&self) -> &str {
        match self {
            EncodedFeature::Numeric { name } | EncodedFeature::Categorical { name, .. } => name,
        }
    }

    pub fn width(&self) -> usize {
        match self {
            EncodedFeature::Numeric { .. } => 1,
            EncodedFeature::Categorical { levels, .. } => levels.len(),
        }
    }
}

/// Per-column centring and scaling. Columns with zero spread are only centred
/// and flagged as constant.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub constant: Vec<bool>,
}

/// Everything needed to encode another table exactly like the training table.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignEncoder {
    pub features: Vec<EncodedFeature>,
    pub standardization: Option<Standardization>,
}

impl DesignEncoder {
    pub fn width(&self) -> usize {
        self.features.iter().map(EncodedFeature::width).sum()
    }

    pub fn provenance(&self) -> Vec<ColumnOrigin> {
        let mut out = Vec::with_capacity(self.width());
        for f in &self.features {
            match f {
                EncodedFeature::Numeric { name } => out.push(ColumnOrigin {
                    feature: name.clone(),
                    level: None,
                }),
                EncodedFeature::Categorical { name, levels } => {
                    out.extend(levels.iter().map(|l| ColumnOrigin {
                        feature: name.clone(),
                        level: Some(l.clone()),
                    }))
                }
            }
        }
        out
    }

    /// Encodes `table` with this encoder's feature layout and stored
    /// standardization (no statistics are recomputed).
    pub fn apply(&self, table: &DataTable) -> Result<DesignMatrix, DataError> {
        let n = table.n_rows();
        let q = self.width();
        let mut values = vec![0.0; n * q];
        let mut col = 0;
        for f in &self.features {
            let spec = table
                .schema()
                .get(f.name())
                .ok_or_else(|| DataError::MissingColumn(f.name().to_string()))?;
            match (f, table.column(f.name()).expect("schema entry has data")) {
                (EncodedFeature::Numeric { name }, Column::Numeric(v)) => {
                    for (row, x) in v.iter().enumerate() {
                        values[col * n + row] = x.ok_or_else(|| DataError::MissingValues {
                            column: name.clone(),
                            row: row + 1,
                        })?;
                    }
                    col += 1;
                }
                (EncodedFeature::Categorical { name, levels }, Column::Categorical(v)) => {
                    if &spec.levels != levels {
                        return Err(DataError::Schema(format!(
                            "levels of {name} differ from the encoder's"
                        )));
                    }
                    for (row, c) in v.iter().enumerate() {
                        let c = c.ok_or_else(|| DataError::MissingValues {
                            column: name.clone(),
                            row: row + 1,
                        })?;
                        values[(col + c as usize) * n + row] = 1.0;
                    }
                    col += levels.len();
                }
                _ => {
                    return Err(DataError::Schema(format!(
                        "column {} changed kind since encoding",
                        f.name()
                    )))
                }
            }
        }
        if let Some(s) = &self.standardization {
            for j in 0..q {
                let column = &mut values[j * n..(j + 1) * n];
                let scale = if s.constant[j] { 1.0 } else { s.sd[j] };
                for x in column {
                    *x = (*x - s.mean[j]) / scale;
                }
            }
        }
        Ok(DesignMatrix {
            n_rows: n,
            values,
            provenance: self.provenance(),
            encoder: self.clone(),
        })
    }
}

/// Dense n×q numeric matrix, column-major, with per-column provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n_rows: usize,
    values: Vec<f64>,
    provenance: Vec<ColumnOrigin>,
    encoder: DesignEncoder,
}

impl DesignMatrix {
    /// Builds a design from raw columns; used by tests and by callers that
    /// already hold numeric data. All columns are treated as numeric features.
    pub fn from_columns(names: &[&str], columns: &[Vec<f64>]) -> Result<DesignMatrix, DataError> {
        if names.len() != columns.len() {
            return Err(DataError::Schema("one name per column required".into()));
        }
        let n = columns.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n * columns.len());
        for (name, c) in names.iter().zip(columns) {
            if c.len() != n {
                return Err(DataError::LengthMismatch {
                    column: name.to_string(),
                    expected: n,
                    found: c.len(),
                });
            }
            values.extend_from_slice(c);
        }
        let encoder = DesignEncoder {
            features: names
                .iter()
                .map(|n| EncodedFeature::Numeric { name: n.to_string() })
                .collect(),
            standardization: None,
        };
        Ok(DesignMatrix {
            n_rows: n,
            values,
            provenance: encoder.provenance(),
            encoder,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.provenance.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.values[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[col * self.n_rows + row]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        (0..self.n_cols()).map(|j| self.get(row, j)).collect()
    }

    pub fn provenance(&self) -> &[ColumnOrigin] {
        &self.provenance
    }

    pub fn encoder(&self) -> &DesignEncoder {
        &self.encoder
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.encoder.standardization.as_ref()
    }

    pub fn is_standardized(&self) -> bool {
        self.encoder.standardization.is_some()
    }

    /// Column indices belonging to each source feature, in encoder order.
    pub fn feature_blocks(&self) -> Vec<(String, Vec<usize>)> {
        let mut out: Vec<(String, Vec<usize>)> = Vec::new();
        for (j, origin) in self.provenance.iter().enumerate() {
            match out.last_mut() {
                Some((name, cols)) if *name == origin.feature => cols.push(j),
                _ => out.push((origin.feature.clone(), vec![j])),
            }
        }
        out
    }

    /// Standardizes every column in place of a copy, recording the transform.
    pub fn standardized(&self) -> DesignMatrix {
        let n = self.n_rows;
        let q = self.n_cols();
        let mut mean = vec![0.0; q];
        let mut sd = vec![0.0; q];
        let mut constant = vec![false; q];
        let mut values = self.values.clone();
        for j in 0..q {
            let column = &mut values[j * n..(j + 1) * n];
            let m = column.iter().sum::<f64>() / n as f64;
            let var = column.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
            let s = var.sqrt();
            mean[j] = m;
            sd[j] = s;
            constant[j] = s <= 1e-12 * (1.0 + m.abs());
            let scale = if constant[j] { 1.0 } else { s };
            for x in column.iter_mut() {
                *x = (*x - m) / scale;
            }
            if !constant[j] {
                // second pass removes the rounding residue of the first
                let m2 = column.iter().sum::<f64>() / n as f64;
                for x in column.iter_mut() {
                    *x -= m2;
                }
                mean[j] += m2 * s;
            }
        }
        let mut encoder = self.encoder.clone();
        encoder.standardization = Some(Standardization { mean, sd, constant });
        DesignMatrix {
            n_rows: n,
            values,
            provenance: self.provenance.clone(),
            encoder,
        }
    }

    /// Undoes the recorded standardization; identity for raw designs.
    pub fn destandardized(&self) -> DesignMatrix {
        let Some(s) = &self.encoder.standardization else {
            return self.clone();
        };
        let n = self.n_rows;
        let mut values = self.values.clone();
        for j in 0..self.n_cols() {
            let scale = if s.constant[j] { 1.0 } else { s.sd[j] };
            for x in &mut values[j * n..(j + 1) * n] {
                *x = *x * scale + s.mean[j];
            }
        }
        let mut encoder = self.encoder.clone();
        encoder.standardization = None;
        DesignMatrix {
            n_rows: n,
            values,
            provenance: self.provenance.clone(),
            encoder,
        }
    }
}

/// Dummy-encodes every numeric and categorical feature of `table`
/// (full one-hot, one column per declared level). Identifier, date and target
/// columns are skipped. Fails if any feature value is missing.
pub fn encode_design(table: &DataTable, standardize: bool) -> Result<DesignMatrix, DataError> {
    let features = table
        .schema()
        .columns()
        .iter()
        .filter_map(|c| match c.role {
            Role::Numeric => Some(EncodedFeature::Numeric { name: c.name.clone() }),
            Role::Categorical => Some(EncodedFeature::Categorical {
                name: c.name.clone(),
                levels: c.levels.clone(),
            }),
            _ => None,
        })
        .collect();
    let raw = DesignEncoder {
        features,
        standardization: None,
    }
    .apply(table)?;
    Ok(if standardize { raw.standardized() } else { raw })
}
