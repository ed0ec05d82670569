//! CSV ingestion with a column-role mapping.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use crate::data::{categorical_from_strings, RawColumn, RepeatedCrossSection};
use crate::error::{Error, Result};

/// Maps CSV columns onto dataset roles.
///
/// `treatment` and `period` may be omitted for raw microdata whose labels are
/// installed later by a policy join; in that case a `year` column is required
/// by the join. Missing cells in the core columns (outcome, treatment,
/// period, cluster, year) cause the row to be dropped and counted in the
/// [`LoadReport`]. Blank categorical cells become the `(missing)` level;
/// blank continuous cells are an error — no imputation rule exists.
#[derive(Debug, Clone)]
pub struct ColumnRoles {
    pub outcome: String,
    pub treatment: Option<String>,
    pub period: Option<String>,
    pub cluster: String,
    pub year: Option<String>,
    pub continuous: Vec<String>,
    pub categorical: Vec<String>,
    /// Validate the outcome against {0, 1}. Default true.
    pub outcome_binary: bool,
    /// Field delimiter, default `,`.
    pub delimiter: u8,
}

impl ColumnRoles {
    pub fn new(outcome: &str, cluster: &str) -> Self {
        ColumnRoles {
            outcome: outcome.to_string(),
            treatment: None,
            period: None,
            cluster: cluster.to_string(),
            year: None,
            continuous: Vec::new(),
            categorical: Vec::new(),
            outcome_binary: true,
            delimiter: b',',
        }
    }

    pub fn treatment(mut self, col: &str) -> Self {
        self.treatment = Some(col.to_string());
        self
    }

    pub fn period(mut self, col: &str) -> Self {
        self.period = Some(col.to_string());
        self
    }

    pub fn year(mut self, col: &str) -> Self {
        self.year = Some(col.to_string());
        self
    }

    pub fn continuous(mut self, cols: &[&str]) -> Self {
        self.continuous = cols.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn categorical(mut self, cols: &[&str]) -> Self {
        self.categorical = cols.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn outcome_binary(mut self, flag: bool) -> Self {
        self.outcome_binary = flag;
        self
    }

    pub fn delimiter(mut self, delim: u8) -> Self {
        self.delimiter = delim;
        self
    }
}

/// Row accounting from a load.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub n_loaded: usize,
    pub dropped_missing_core: usize,
}

/// Load a dataset from a CSV file.
pub fn load_csv(path: impl AsRef<Path>, roles: &ColumnRoles) -> Result<(RepeatedCrossSection, LoadReport)> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| {
        Error::invalid(format!("unreadable file {}: {e}", path.as_ref().display()))
    })?;
    load_csv_from_reader(file, roles)
}

/// Load a dataset from any reader producing CSV with a header row.
pub fn load_csv_from_reader<R: Read>(
    reader: R,
    roles: &ColumnRoles,
) -> Result<(RepeatedCrossSection, LoadReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(roles.delimiter)
        .flexible(false)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    let col_index: HashMap<&str, usize> =
        headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let find = |name: &str| -> Result<usize> {
        col_index
            .get(name)
            .copied()
            .ok_or_else(|| Error::invalid(format!("unknown column '{name}'")))
    };

    let y_idx = find(&roles.outcome)?;
    let d_idx = roles.treatment.as_deref().map(find).transpose()?;
    let t_idx = roles.period.as_deref().map(find).transpose()?;
    let cluster_idx = find(&roles.cluster)?;
    let year_idx = roles.year.as_deref().map(find).transpose()?;
    let cont_idx: Vec<usize> = roles
        .continuous
        .iter()
        .map(|c| find(c))
        .collect::<Result<_>>()?;
    let cat_idx: Vec<usize> = roles
        .categorical
        .iter()
        .map(|c| find(c))
        .collect::<Result<_>>()?;

    let mut ids = Vec::new();
    let mut y = Vec::new();
    let mut d = Vec::new();
    let mut t = Vec::new();
    let mut cluster_codes = Vec::new();
    let mut cluster_names: Vec<String> = Vec::new();
    let mut cluster_lookup: HashMap<String, u32> = HashMap::new();
    let mut years: Vec<i32> = Vec::new();
    let mut cont: Vec<Vec<f64>> = vec![Vec::new(); cont_idx.len()];
    let mut cat: Vec<Vec<String>> = vec![Vec::new(); cat_idx.len()];
    let mut report = LoadReport::default();

    for (row_no, record) in rdr.records().enumerate() {
        let record = record?;
        let get = |idx: usize| record.get(idx).unwrap_or("").trim();

        // Core columns: a blank cell drops the row.
        let y_raw = get(y_idx);
        let cluster_raw = get(cluster_idx);
        let d_raw = d_idx.map(get);
        let t_raw = t_idx.map(get);
        let year_raw = year_idx.map(get);
        let core_missing = y_raw.is_empty()
            || cluster_raw.is_empty()
            || d_raw.is_some_and(str::is_empty)
            || t_raw.is_some_and(str::is_empty)
            || year_raw.is_some_and(str::is_empty);
        if core_missing {
            report.dropped_missing_core += 1;
            continue;
        }

        let y_val: f64 = y_raw
            .parse()
            .map_err(|_| Error::invalid(format!("row {row_no}: unparseable outcome '{y_raw}'")))?;
        if !y_val.is_finite() {
            return Err(Error::invalid(format!("row {row_no}: non-finite outcome")));
        }
        if roles.outcome_binary && y_val != 0.0 && y_val != 1.0 {
            return Err(Error::invalid(format!(
                "row {row_no}: outcome {y_val} not in {{0,1}} for binary outcome"
            )));
        }

        let d_val = match d_raw {
            Some(s) => parse_binary(s, "treatment", row_no)?,
            None => 0,
        };
        let t_val = match t_raw {
            Some(s) => parse_binary(s, "period", row_no)?,
            None => 0,
        };
        let year_val = match year_raw {
            Some(s) => Some(s.parse::<i32>().map_err(|_| {
                Error::invalid(format!("row {row_no}: unparseable year '{s}'"))
            })?),
            None => None,
        };

        for (slot, &idx) in cont.iter_mut().zip(&cont_idx) {
            let raw = get(idx);
            if raw.is_empty() {
                return Err(Error::invalid(format!(
                    "row {row_no}: missing continuous covariate '{}'",
                    headers.get(idx).unwrap_or("?")
                )));
            }
            let v: f64 = raw.parse().map_err(|_| {
                Error::invalid(format!(
                    "row {row_no}: unparseable continuous covariate '{raw}'"
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::invalid(format!(
                    "row {row_no}: non-finite continuous covariate"
                )));
            }
            slot.push(v);
        }
        for (slot, &idx) in cat.iter_mut().zip(&cat_idx) {
            slot.push(get(idx).to_string());
        }

        ids.push(row_no as u64);
        y.push(y_val);
        d.push(d_val);
        t.push(t_val);
        let code = match cluster_lookup.get(cluster_raw) {
            Some(&c) => c,
            None => {
                let c = cluster_names.len() as u32;
                cluster_names.push(cluster_raw.to_string());
                cluster_lookup.insert(cluster_raw.to_string(), c);
                c
            }
        };
        cluster_codes.push(code);
        if let Some(yv) = year_val {
            years.push(yv);
        }
    }

    let mut columns = Vec::with_capacity(cont.len() + cat.len());
    for (name, values) in roles.continuous.iter().zip(cont) {
        columns.push(RawColumn::Continuous {
            name: name.clone(),
            values,
        });
    }
    for (name, raw) in roles.categorical.iter().zip(cat) {
        columns.push(categorical_from_strings(name.clone(), raw));
    }

    let assigned = d_idx.is_some() && t_idx.is_some();
    let data = RepeatedCrossSection::from_parts(
        ids,
        y,
        d,
        t,
        cluster_codes,
        cluster_names,
        columns,
        year_idx.map(|_| years),
        assigned,
    )?;
    report.n_loaded = data.n();
    Ok((data, report))
}

fn parse_binary(raw: &str, what: &str, row_no: usize) -> Result<u8> {
    // Accept "0"/"1" and float spellings such as "0.0".
    let v: f64 = raw
        .parse()
        .map_err(|_| Error::invalid(format!("row {row_no}: unparseable {what} '{raw}'")))?;
    if v == 0.0 {
        Ok(0)
    } else if v == 1.0 {
        Ok(1)
    } else {
        Err(Error::invalid(format!("non-binary {what}: {raw}")))
    }
}
