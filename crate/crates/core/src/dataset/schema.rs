use std::collections::HashSet;
use std::fmt;

use sha2::{Digest, Sha256};

use super::DataError;

/// How a column participates in modelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    /// Bookkeeping keys such as contract and part ids. Never modelled.
    Identifier,
    Numeric,
    Categorical,
    /// Calendar dates used during preparation. Never modelled directly.
    Date,
    Target,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Identifier => "identifier",
            Role::Numeric => "numeric",
            Role::Categorical => "categorical",
            Role::Date => "date",
            Role::Target => "target",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "identifier" => Some(Role::Identifier),
            "numeric" => Some(Role::Numeric),
            "categorical" => Some(Role::Categorical),
            "date" => Some(Role::Date),
            "target" => Some(Role::Target),
            _ => None,
        }
    }

    /// True for roles that end up in a design matrix or a tree feature set.
    pub fn is_feature(self) -> bool {
        matches!(self, Role::Numeric | Role::Categorical)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSpec {
    pub name: String,
    pub role: Role,
    /// Declared level list; only non-empty for categorical columns.
    pub levels: Vec<String>,
}

impl ColumnSpec {
    pub fn identifier(name: &str) -> Self {
        Self::plain(name, Role::Identifier)
    }

    pub fn numeric(name: &str) -> Self {
        Self::plain(name, Role::Numeric)
    }

    pub fn date(name: &str) -> Self {
        Self::plain(name, Role::Date)
    }

    pub fn target(name: &str) -> Self {
        Self::plain(name, Role::Target)
    }

    pub fn categorical<S: AsRef<str>>(name: &str, levels: &[S]) -> Self {
        ColumnSpec {
            name: name.to_string(),
            role: Role::Categorical,
            levels: levels.iter().map(|l| l.as_ref().to_string()).collect(),
        }
    }

    fn plain(name: &str, role: Role) -> Self {
        ColumnSpec {
            name: name.to_string(),
            role,
            levels: Vec::new(),
        }
    }

    pub fn level_index(&self, level: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == level)
    }
}

/// Ordered column descriptors with exactly one target column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    columns: Vec<ColumnSpec>,
    target: usize,
}

impl FeatureSchema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self, DataError> {
        let mut names = HashSet::new();
        let mut target = None;
        for (i, c) in columns.iter().enumerate() {
            if c.name.is_empty() || c.name.contains([':', '|', ',', '\n']) {
                return Err(DataError::Schema(format!("invalid column name {:?}", c.name)));
            }
            if !names.insert(c.name.as_str()) {
                return Err(DataError::Schema(format!("duplicate column {}", c.name)));
            }
            match c.role {
                Role::Categorical => {
                    if c.levels.is_empty() {
                        return Err(DataError::Schema(format!(
                            "categorical column {} declares no levels",
                            c.name
                        )));
                    }
                    let mut seen = HashSet::new();
                    for l in &c.levels {
                        if l.is_empty() || !seen.insert(l.as_str()) {
                            return Err(DataError::Schema(format!(
                                "categorical column {} has empty or duplicate level {:?}",
                                c.name, l
                            )));
                        }
                    }
                }
                _ if !c.levels.is_empty() => {
                    return Err(DataError::Schema(format!(
                        "{} column {} cannot declare levels",
                        c.role, c.name
                    )));
                }
                Role::Target if target.replace(i).is_some() => {
                    return Err(DataError::Schema("more than one target column".into()));
                }
                _ => {}
            }
        }
        let target = target.ok_or_else(|| DataError::Schema("no target column".into()))?;
        Ok(FeatureSchema { columns, target })
    }

    /// Parses the line-oriented `name:role[:level1|level2|...]` format.
    /// Blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut columns = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(3, ':');
            let name = parts.next().unwrap_or_default().trim();
            let role_text = parts.next().map(str::trim).ok_or_else(|| {
                DataError::Schema(format!("line {}: expected name:role", lineno + 1))
            })?;
            let role = Role::parse(role_text).ok_or_else(|| {
                DataError::Schema(format!("line {}: unknown role {:?}", lineno + 1, role_text))
            })?;
            let levels = match parts.next() {
                Some(l) => l.split('|').map(|s| s.trim().to_string()).collect(),
                None => Vec::new(),
            };
            columns.push(ColumnSpec {
                name: name.to_string(),
                role,
                levels,
            });
        }
        FeatureSchema::new(columns)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.columns {
            out.push_str(&c.name);
            out.push(':');
            out.push_str(c.role.as_str());
            if c.role == Role::Categorical {
                out.push(':');
                out.push_str(&c.levels.join("|"));
            }
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the canonical text form, hex encoded.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_text().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn target_index(&self) -> usize {
        self.target
    }

    pub fn target_name(&self) -> &str {
        &self.columns[self.target].name
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Names of the modelled features (numeric and categorical), in schema order.
    pub fn feature_names(&self) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|c| c.role.is_feature())
            .map(|c| c.name.as_str())
            .collect()
    }
}
