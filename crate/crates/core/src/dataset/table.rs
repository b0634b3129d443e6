use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use super::schema::{ColumnSpec, FeatureSchema, Role};
use super::DataError;

/// Column storage. `None` is the explicit missing marker.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Identifier(Vec<String>),
    Numeric(Vec<Option<f64>>),
    /// Level indices into the schema's declared level list.
    Categorical(Vec<Option<u32>>),
    Date(Vec<Option<NaiveDate>>),
    Target(Vec<u8>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Identifier(v) => v.len(),
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
            Column::Date(v) => v.len(),
            Column::Target(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn role(&self) -> Role {
        match self {
            Column::Identifier(_) => Role::Identifier,
            Column::Numeric(_) => Role::Numeric,
            Column::Categorical(_) => Role::Categorical,
            Column::Date(_) => Role::Date,
            Column::Target(_) => Role::Target,
        }
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            Column::Identifier(_) | Column::Target(_) => false,
            Column::Numeric(v) => v[row].is_none(),
            Column::Categorical(v) => v[row].is_none(),
            Column::Date(v) => v[row].is_none(),
        }
    }

    /// Gathers `rows` (repeats allowed) into a new column.
    pub fn take(&self, rows: &[usize]) -> Column {
        fn gather<T: Clone>(v: &[T], rows: &[usize]) -> Vec<T> {
            rows.iter().map(|&r| v[r].clone()).collect()
        }
        match self {
            Column::Identifier(v) => Column::Identifier(gather(v, rows)),
            Column::Numeric(v) => Column::Numeric(gather(v, rows)),
            Column::Categorical(v) => Column::Categorical(gather(v, rows)),
            Column::Date(v) => Column::Date(gather(v, rows)),
            Column::Target(v) => Column::Target(gather(v, rows)),
        }
    }

    fn append(&mut self, other: &Column) {
        match (self, other) {
            (Column::Identifier(a), Column::Identifier(b)) => a.extend_from_slice(b),
            (Column::Numeric(a), Column::Numeric(b)) => a.extend_from_slice(b),
            (Column::Categorical(a), Column::Categorical(b)) => a.extend_from_slice(b),
            (Column::Date(a), Column::Date(b)) => a.extend_from_slice(b),
            (Column::Target(a), Column::Target(b)) => a.extend_from_slice(b),
            _ => unreachable!("append across column kinds"),
        }
    }
}

/// Columnar dataset bound to a [`FeatureSchema`]. Immutable once built; the
/// transforming methods return new tables.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    schema: FeatureSchema,
    columns: Vec<Column>,
    n_rows: usize,
}

impl DataTable {
    pub fn new(schema: FeatureSchema, columns: Vec<Column>) -> Result<Self, DataError> {
        if columns.len() != schema.len() {
            return Err(DataError::Schema(format!(
                "{} columns supplied for a schema of {}",
                columns.len(),
                schema.len()
            )));
        }
        let n_rows = columns.first().map_or(0, Column::len);
        for (spec, col) in schema.columns().iter().zip(&columns) {
            if col.role() != spec.role {
                return Err(DataError::Schema(format!(
                    "column {} holds {} data but is declared {}",
                    spec.name,
                    col.role(),
                    spec.role
                )));
            }
            if col.len() != n_rows {
                return Err(DataError::LengthMismatch {
                    column: spec.name.clone(),
                    expected: n_rows,
                    found: col.len(),
                });
            }
            match col {
                Column::Categorical(v) => {
                    for (row, code) in v.iter().enumerate() {
                        if let Some(c) = code {
                            if *c as usize >= spec.levels.len() {
                                return Err(DataError::LevelViolation {
                                    row: row + 1,
                                    column: spec.name.clone(),
                                    value: format!("#{c}"),
                                });
                            }
                        }
                    }
                }
                Column::Target(v) => {
                    if let Some(row) = v.iter().position(|&y| y > 1) {
                        return Err(DataError::NonBinaryTarget {
                            row: row + 1,
                            value: v[row].to_string(),
                        });
                    }
                }
                Column::Numeric(v) => {
                    if let Some(row) = v.iter().position(|x| x.is_some_and(|x| !x.is_finite())) {
                        return Err(DataError::Parse {
                            row: row + 1,
                            column: spec.name.clone(),
                            value: "non-finite".into(),
                        });
                    }
                }
                _ => {}
            }
        }
        Ok(DataTable {
            schema,
            columns,
            n_rows,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.schema.index_of(name).map(|i| &self.columns[i])
    }

    pub fn labels(&self) -> &[u8] {
        match &self.columns[self.schema.target_index()] {
            Column::Target(v) => v,
            _ => unreachable!("schema target index points at a target column"),
        }
    }

    pub fn n_positive(&self) -> usize {
        self.labels().iter().filter(|&&y| y == 1).count()
    }

    pub fn numeric(&self, name: &str) -> Option<&[Option<f64>]> {
        match self.column(name)? {
            Column::Numeric(v) => Some(v),
            _ => None,
        }
    }

    pub fn categorical(&self, name: &str) -> Option<&[Option<u32>]> {
        match self.column(name)? {
            Column::Categorical(v) => Some(v),
            _ => None,
        }
    }

    pub fn dates(&self, name: &str) -> Option<&[Option<NaiveDate>]> {
        match self.column(name)? {
            Column::Date(v) => Some(v),
            _ => None,
        }
    }

    pub fn identifiers(&self, name: &str) -> Option<&[String]> {
        match self.column(name)? {
            Column::Identifier(v) => Some(v),
            _ => None,
        }
    }

    /// Fails unless both classes are present.
    pub fn require_both_classes(&self) -> Result<(), DataError> {
        let p = self.n_positive();
        if p == 0 || p == self.n_rows {
            return Err(DataError::SingleClass {
                positives: p,
                rows: self.n_rows,
            });
        }
        Ok(())
    }

    /// New table holding `rows` in the given order; repeated indices duplicate rows.
    pub fn take(&self, rows: &[usize]) -> DataTable {
        DataTable {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.take(rows)).collect(),
            n_rows: rows.len(),
        }
    }

    /// Rows of `self` followed by rows of `other`. Schemas must match.
    pub fn concat(&self, other: &DataTable) -> Result<DataTable, DataError> {
        if self.schema != other.schema {
            return Err(DataError::Schema("cannot concatenate tables with different schemas".into()));
        }
        let mut columns = self.columns.clone();
        for (a, b) in columns.iter_mut().zip(&other.columns) {
            a.append(b);
        }
        Ok(DataTable {
            schema: self.schema.clone(),
            columns,
            n_rows: self.n_rows + other.n_rows,
        })
    }

    /// Appends a column at the end of the schema.
    pub fn with_column(&self, spec: ColumnSpec, column: Column) -> Result<DataTable, DataError> {
        let mut specs = self.schema.columns().to_vec();
        specs.push(spec);
        let mut columns = self.columns.clone();
        columns.push(column);
        DataTable::new(FeatureSchema::new(specs)?, columns)
    }

    /// Replaces the data of an existing column, keeping its schema entry.
    pub fn replace_column(&self, name: &str, column: Column) -> Result<DataTable, DataError> {
        let idx = self
            .schema
            .index_of(name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))?;
        let mut columns = self.columns.clone();
        columns[idx] = column;
        DataTable::new(self.schema.clone(), columns)
    }

    /// Drops the named columns; names not present are ignored.
    pub fn without_columns(&self, names: &[&str]) -> Result<DataTable, DataError> {
        let keep: Vec<usize> = (0..self.schema.len())
            .filter(|&i| !names.contains(&self.schema.columns()[i].name.as_str()))
            .collect();
        let specs = keep.iter().map(|&i| self.schema.columns()[i].clone()).collect();
        let columns = keep.iter().map(|&i| self.columns[i].clone()).collect();
        DataTable::new(FeatureSchema::new(specs)?, columns)
    }

    /// Reads a CSV file and its schema sidecar.
    pub fn load(path: &Path, schema_path: &Path) -> Result<DataTable, DataError> {
        let schema = FeatureSchema::parse(&std::fs::read_to_string(schema_path)?)?;
        DataTable::read_csv(File::open(path)?, schema)
    }

    /// Parses CSV with a header row. Header names must cover every schema
    /// column; extra CSV columns are rejected. Empty fields and `NA` are missing.
    pub fn read_csv<R: Read>(reader: R, schema: FeatureSchema) -> Result<DataTable, DataError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        for h in headers.iter() {
            if schema.index_of(h).is_none() {
                return Err(DataError::Schema(format!("CSV column {h} is not in the schema")));
            }
        }
        let positions: Vec<usize> = schema
            .columns()
            .iter()
            .map(|c| {
                headers
                    .iter()
                    .position(|h| h == c.name)
                    .ok_or_else(|| DataError::MissingColumn(c.name.clone()))
            })
            .collect::<Result<_, _>>()?;

        let mut columns: Vec<Column> = schema
            .columns()
            .iter()
            .map(|c| match c.role {
                Role::Identifier => Column::Identifier(Vec::new()),
                Role::Numeric => Column::Numeric(Vec::new()),
                Role::Categorical => Column::Categorical(Vec::new()),
                Role::Date => Column::Date(Vec::new()),
                Role::Target => Column::Target(Vec::new()),
            })
            .collect();

        for (r, record) in rdr.records().enumerate() {
            let record = record?;
            let row = r + 1;
            if record.len() != headers.len() {
                return Err(DataError::LengthMismatch {
                    column: format!("row {row}"),
                    expected: headers.len(),
                    found: record.len(),
                });
            }
            for ((spec, col), &pos) in schema.columns().iter().zip(columns.iter_mut()).zip(&positions) {
                let field = record[pos].trim();
                let missing = field.is_empty() || field == "NA";
                let parse_err = || DataError::Parse {
                    row,
                    column: spec.name.clone(),
                    value: field.to_string(),
                };
                match col {
                    Column::Identifier(v) => v.push(field.to_string()),
                    Column::Numeric(v) => v.push(if missing {
                        None
                    } else {
                        let x: f64 = field.parse().map_err(|_| parse_err())?;
                        if !x.is_finite() {
                            return Err(parse_err());
                        }
                        Some(x)
                    }),
                    Column::Categorical(v) => v.push(if missing {
                        None
                    } else {
                        let idx = spec.level_index(field).ok_or_else(|| DataError::LevelViolation {
                            row,
                            column: spec.name.clone(),
                            value: field.to_string(),
                        })?;
                        Some(idx as u32)
                    }),
                    Column::Date(v) => v.push(if missing {
                        None
                    } else {
                        Some(NaiveDate::parse_from_str(field, "%Y-%m-%d").map_err(|_| parse_err())?)
                    }),
                    Column::Target(v) => match field {
                        "0" => v.push(0),
                        "1" => v.push(1),
                        _ => {
                            return Err(DataError::NonBinaryTarget {
                                row,
                                value: field.to_string(),
                            })
                        }
                    },
                }
            }
        }
        DataTable::new(schema, columns)
    }

    /// Writes the table as CSV (dot decimals, ISO dates, empty field for missing).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        wtr.write_record(self.schema.columns().iter().map(|c| c.name.as_str()))?;
        let mut record: Vec<String> = Vec::with_capacity(self.columns.len());
        for row in 0..self.n_rows {
            record.clear();
            for (spec, col) in self.schema.columns().iter().zip(&self.columns) {
                record.push(match col {
                    Column::Identifier(v) => v[row].clone(),
                    Column::Numeric(v) => v[row].map_or_else(String::new, |x| x.to_string()),
                    Column::Categorical(v) => {
                        v[row].map_or_else(String::new, |c| spec.levels[c as usize].clone())
                    }
                    Column::Date(v) => v[row].map_or_else(String::new, |d| d.format("%Y-%m-%d").to_string()),
                    Column::Target(v) => v[row].to_string(),
                });
            }
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> FeatureSchema {
        FeatureSchema::parse(
            "contract_id:identifier\ncontract_part_id:identifier\nsum_insured:numeric\nactuarial_interest_rate:numeric\nregion:categorical:north|south\nlapsed:target\n",
        )
        .unwrap()
    }

    const CSV: &str = "contract_id,contract_part_id,sum_insured,actuarial_interest_rate,region,lapsed
1678655,1,48250,3.25,north,1
1678655,2,37630,2.75,north,0
4789889,1,18470,1.25,south,0
4912002,1,16800,1.25,,0
5100200,1,4520,0.9,south,0
";

    #[test]
    fn reads_five_rows() {
        let t = DataTable::read_csv(CSV.as_bytes(), schema()).unwrap();
        assert_eq!(t.n_rows(), 5);
        assert_eq!(t.n_positive(), 1);
        assert_eq!(t.categorical("region").unwrap()[3], None);
        assert_eq!(t.numeric("actuarial_interest_rate").unwrap()[4], Some(0.9));
    }

    #[test]
    fn csv_round_trip() {
        let t = DataTable::read_csv(CSV.as_bytes(), schema()).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), CSV);
    }

    #[test]
    fn non_binary_target_rejected() {
        let bad = CSV.replace("4520,0.9,south,0", "4520,0.9,south,2");
        let err = DataTable::read_csv(bad.as_bytes(), schema()).unwrap_err();
        assert!(matches!(err, DataError::NonBinaryTarget { row: 5, .. }), "{err}");
        assert!(err.to_string().contains("non-binary target"));
    }

    #[test]
    fn unknown_level_names_row_and_level() {
        let bad = CSV.replace("18470,1.25,south", "18470,1.25,east");
        let err = DataTable::read_csv(bad.as_bytes(), schema()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 3") && msg.contains("east"), "{msg}");
    }

    #[test]
    fn missing_column_reported() {
        let bad = CSV.replace("region,", "regio,");
        assert!(DataTable::read_csv(bad.as_bytes(), schema()).is_err());
        let short = "contract_id,contract_part_id,sum_insured,actuarial_interest_rate,lapsed\n1,1,2,3,0\n";
        let err = DataTable::read_csv(short.as_bytes(), schema()).unwrap_err();
        assert!(matches!(err, DataError::MissingColumn(ref c) if c == "region"));
    }

    #[test]
    fn ragged_row_reported() {
        let bad = CSV.replace("4520,0.9,south,0", "4520,0.9,south");
        assert!(DataTable::read_csv(bad.as_bytes(), schema()).is_err());
    }

    #[test]
    fn take_and_concat() {
        let t = DataTable::read_csv(CSV.as_bytes(), schema()).unwrap();
        let a = t.take(&[0, 0, 2]);
        assert_eq!(a.n_rows(), 3);
        assert_eq!(a.labels(), &[1, 1, 0]);
        let b = a.concat(&t).unwrap();
        assert_eq!(b.n_rows(), 8);
        let dropped = t.without_columns(&["region"]).unwrap();
        assert_eq!(dropped.schema().len(), 5);
    }
}
