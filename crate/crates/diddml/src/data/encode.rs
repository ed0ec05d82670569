//! Deterministic design-matrix encoding.
//!
//! Two variants are produced from the same raw columns: full one-hot dummy
//! sets for tree learners, and drop-one dummy sets for least-squares designs
//! to avoid rank deficiency. Level order is fixed by the schema (sorted, the
//! missing level last), so encodings are stable and independent of row order.

use crate::data::{RawColumn, RepeatedCrossSection};
use crate::error::{Error, Result};

/// Encoded layout of a single raw column.
#[derive(Debug, Clone)]
pub enum EncodedColumn {
    Continuous {
        name: String,
        /// Standardization parameters; applied only when `standardized`.
        mean: f64,
        sd: f64,
        standardized: bool,
    },
    Categorical {
        name: String,
        levels: Vec<String>,
        /// Skip the first level (drop-one encoding for least squares).
        drop_first: bool,
    },
}

impl EncodedColumn {
    fn width(&self) -> usize {
        match self {
            EncodedColumn::Continuous { .. } => 1,
            EncodedColumn::Categorical { levels, drop_first, .. } => {
                levels.len().saturating_sub(usize::from(*drop_first))
            }
        }
    }
}

/// Encoding schema: the ordered encoded columns and their level maps.
#[derive(Debug, Clone)]
pub struct EncodingSchema {
    pub columns: Vec<EncodedColumn>,
}

impl EncodingSchema {
    /// Build a schema from a dataset's raw columns.
    pub fn from_data(data: &RepeatedCrossSection, drop_first: bool, standardize: bool) -> Self {
        let columns = data
            .columns()
            .iter()
            .map(|col| match col {
                RawColumn::Continuous { name, values } => {
                    let mean = if values.is_empty() {
                        0.0
                    } else {
                        values.iter().sum::<f64>() / values.len() as f64
                    };
                    let sd = if values.len() < 2 {
                        0.0
                    } else {
                        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                            / (values.len() as f64 - 1.0))
                            .sqrt()
                    };
                    EncodedColumn::Continuous {
                        name: name.clone(),
                        mean,
                        sd,
                        standardized: standardize,
                    }
                }
                RawColumn::Categorical { name, levels, .. } => EncodedColumn::Categorical {
                    name: name.clone(),
                    levels: levels.clone(),
                    drop_first,
                },
            })
            .collect();
        EncodingSchema { columns }
    }

    /// Total number of encoded columns.
    pub fn width(&self) -> usize {
        self.columns.iter().map(EncodedColumn::width).sum()
    }

    /// Names of the encoded columns, in layout order.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.width());
        for col in &self.columns {
            match col {
                EncodedColumn::Continuous { name, .. } => names.push(name.clone()),
                EncodedColumn::Categorical { name, levels, drop_first } => {
                    for level in levels.iter().skip(usize::from(*drop_first)) {
                        names.push(format!("{name}={level}"));
                    }
                }
            }
        }
        names
    }

    /// Encode a dataset against this schema. A level unseen by the schema is
    /// an error.
    pub fn encode(&self, data: &RepeatedCrossSection) -> Result<DesignMatrix> {
        let n = data.n();
        let p = self.width();
        let mut values = vec![0.0f64; n * p];
        let mut offset = 0usize;
        for col in &self.columns {
            match col {
                EncodedColumn::Continuous { name, mean, sd, standardized } => {
                    let raw = match data.column(name) {
                        Some(RawColumn::Continuous { values, .. }) => values,
                        _ => {
                            return Err(Error::invalid(format!(
                                "schema column '{name}' absent or not continuous"
                            )))
                        }
                    };
                    for (i, &v) in raw.iter().enumerate() {
                        let enc = if *standardized && *sd > 0.0 {
                            (v - mean) / sd
                        } else {
                            v
                        };
                        values[i * p + offset] = enc;
                    }
                    offset += 1;
                }
                EncodedColumn::Categorical { name, levels, drop_first } => {
                    let (data_levels, codes) = match data.column(name) {
                        Some(RawColumn::Categorical { levels, codes, .. }) => (levels, codes),
                        _ => {
                            return Err(Error::invalid(format!(
                                "schema column '{name}' absent or not categorical"
                            )))
                        }
                    };
                    // Map the dataset's own level codes into schema positions.
                    let mut remap = Vec::with_capacity(data_levels.len());
                    for level in data_levels {
                        let pos = levels.iter().position(|l| l == level).ok_or_else(|| {
                            Error::invalid(format!("unknown level '{level}' in column '{name}'"))
                        })?;
                        remap.push(pos);
                    }
                    let skip = usize::from(*drop_first);
                    for (i, &code) in codes.iter().enumerate() {
                        let pos = remap[code as usize];
                        if pos >= skip {
                            values[i * p + offset + pos - skip] = 1.0;
                        }
                    }
                    offset += col.width();
                }
            }
        }
        Ok(DesignMatrix {
            names: self.column_names(),
            values,
            n,
            p,
        })
    }
}

/// Dense row-major design matrix.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub names: Vec<String>,
    values: Vec<f64>,
    n: usize,
    p: usize,
}

impl DesignMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Copy of the rows at `idx`, preserving the given order.
    pub fn take_rows(&self, idx: &[usize]) -> DesignMatrix {
        let mut values = Vec::with_capacity(idx.len() * self.p);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        DesignMatrix {
            names: self.names.clone(),
            values,
            n: idx.len(),
            p: self.p,
        }
    }
}

/// One-hot encode with full dummy sets (tree-learner variant).
pub fn encode(data: &RepeatedCrossSection) -> Result<(DesignMatrix, EncodingSchema)> {
    let schema = EncodingSchema::from_data(data, false, false);
    let m = schema.encode(data)?;
    Ok((m, schema))
}

/// One-hot encode with drop-one dummy sets (least-squares variant).
pub fn encode_drop_one(data: &RepeatedCrossSection) -> Result<(DesignMatrix, EncodingSchema)> {
    let schema = EncodingSchema::from_data(data, true, false);
    let m = schema.encode(data)?;
    Ok((m, schema))
}

/// Decoded value of one raw column.
#[derive(Debug, Clone, PartialEq)]
pub enum DecodedValue {
    Continuous(f64),
    Level(String),
}

/// Map an encoded row back to raw column values under the schema.
///
/// Fails if a categorical block is not a valid indicator pattern (exactly one
/// hot dummy, or all zero under drop-one encoding meaning the dropped level).
pub fn decode_row(schema: &EncodingSchema, row: &[f64]) -> Result<Vec<(String, DecodedValue)>> {
    if row.len() != schema.width() {
        return Err(Error::invalid("row width does not match schema"));
    }
    let mut out = Vec::with_capacity(schema.columns.len());
    let mut offset = 0usize;
    for col in &schema.columns {
        match col {
            EncodedColumn::Continuous { name, mean, sd, standardized } => {
                let v = row[offset];
                let raw = if *standardized && *sd > 0.0 { v * sd + mean } else { v };
                out.push((name.clone(), DecodedValue::Continuous(raw)));
                offset += 1;
            }
            EncodedColumn::Categorical { name, levels, drop_first } => {
                let width = col.width();
                let block = &row[offset..offset + width];
                let hot: Vec<usize> = block
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(i, _)| i)
                    .collect();
                let level = match (hot.len(), drop_first) {
                    (1, _) => levels[hot[0] + usize::from(*drop_first)].clone(),
                    (0, true) => levels[0].clone(),
                    _ => {
                        return Err(Error::invalid(format!(
                            "invalid indicator pattern in column '{name}'"
                        )))
                    }
                };
                out.push((name.clone(), DecodedValue::Level(level)));
                offset += width;
            }
        }
    }
    Ok(out)
}
