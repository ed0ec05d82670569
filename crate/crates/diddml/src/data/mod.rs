//! Repeated cross-section microdata: validated storage, ingestion and
//! descriptive summaries.
//!
//! A [`RepeatedCrossSection`] holds one row per sampled individual with an
//! outcome `y`, binary treatment `d`, binary period `t`, an opaque cluster
//! identifier (country) and named raw covariates. Storage is columnar and
//! immutable after construction; every consumer iterates rows in a canonical
//! order keyed to stable row ids so that downstream estimates are invariant
//! to row permutations.

mod describe;
mod encode;
mod load;

pub use describe::{two_by_two_table, TwoByTwoTable};
pub use encode::{
    decode_row, encode, encode_drop_one, DecodedValue, DesignMatrix, EncodedColumn, EncodingSchema,
};
pub use load::{load_csv, load_csv_from_reader, ColumnRoles, LoadReport};

use crate::error::{Error, Result};

/// Number of (d, t) cells.
pub const N_CELLS: usize = 4;

/// Dense cell index for a (treatment, period) pair: `(0,0)→0, (0,1)→1,
/// (1,0)→2, (1,1)→3`. The treated post-treatment reference cell is index 3.
pub fn cell_index(d: u8, t: u8) -> usize {
    (d as usize) * 2 + t as usize
}

/// Cell index of the treated post-treatment reference group.
pub const TREATED_POST: usize = 3;

/// Level label used for missing categorical values.
pub const MISSING_LEVEL: &str = "(missing)";

/// One raw covariate column prior to encoding.
#[derive(Debug, Clone)]
pub enum RawColumn {
    Continuous {
        name: String,
        values: Vec<f64>,
    },
    /// `levels` are sorted lexicographically with the missing level, when
    /// present, placed last; `codes[i]` indexes into `levels`.
    Categorical {
        name: String,
        levels: Vec<String>,
        codes: Vec<u32>,
    },
}

impl RawColumn {
    pub fn name(&self) -> &str {
        match self {
            RawColumn::Continuous { name, .. } => name,
            RawColumn::Categorical { name, .. } => name,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            RawColumn::Continuous { values, .. } => values.len(),
            RawColumn::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn filtered(&self, keep: &[usize]) -> RawColumn {
        match self {
            RawColumn::Continuous { name, values } => RawColumn::Continuous {
                name: name.clone(),
                values: keep.iter().map(|&i| values[i]).collect(),
            },
            RawColumn::Categorical { name, levels, codes } => RawColumn::Categorical {
                name: name.clone(),
                levels: levels.clone(),
                codes: keep.iter().map(|&i| codes[i]).collect(),
            },
        }
    }
}

/// A single observation, borrowed from the columnar store.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub id: u64,
    pub y: f64,
    pub d: u8,
    pub t: u8,
    pub cluster: &'a str,
}

/// Validated repeated cross-section microdata.
#[derive(Debug, Clone)]
pub struct RepeatedCrossSection {
    ids: Vec<u64>,
    y: Vec<f64>,
    d: Vec<u8>,
    t: Vec<u8>,
    cluster_codes: Vec<u32>,
    cluster_names: Vec<String>,
    columns: Vec<RawColumn>,
    /// Optional calendar year per row, kept for policy joins and year fixed
    /// effects.
    years: Option<Vec<i32>>,
    /// Whether `d`/`t` carry meaningful treatment labels. False for raw
    /// microdata awaiting a policy join.
    assigned: bool,
}

impl RepeatedCrossSection {
    /// Assemble and validate a dataset from columnar parts.
    ///
    /// When `assigned` is true all four (d, t) cells must be non-empty.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        ids: Vec<u64>,
        y: Vec<f64>,
        d: Vec<u8>,
        t: Vec<u8>,
        cluster_codes: Vec<u32>,
        cluster_names: Vec<String>,
        columns: Vec<RawColumn>,
        years: Option<Vec<i32>>,
        assigned: bool,
    ) -> Result<Self> {
        let n = y.len();
        if ids.len() != n || d.len() != n || t.len() != n || cluster_codes.len() != n {
            return Err(Error::invalid("column lengths differ"));
        }
        if let Some(ys) = &years {
            if ys.len() != n {
                return Err(Error::invalid("year column length differs"));
            }
        }
        for col in &columns {
            if col.len() != n {
                return Err(Error::invalid(format!(
                    "covariate column '{}' length differs",
                    col.name()
                )));
            }
        }
        for (i, &v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::invalid(format!("non-finite outcome in row {i}")));
            }
        }
        for &v in &d {
            if v > 1 {
                return Err(Error::invalid("non-binary treatment"));
            }
        }
        for &v in &t {
            if v > 1 {
                return Err(Error::invalid("non-binary period"));
            }
        }
        for &c in &cluster_codes {
            if c as usize >= cluster_names.len() {
                return Err(Error::invalid("cluster code out of range"));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for &id in &ids {
            if !seen.insert(id) {
                return Err(Error::invalid(format!("duplicate row id {id}")));
            }
        }
        let data = RepeatedCrossSection {
            ids,
            y,
            d,
            t,
            cluster_codes,
            cluster_names,
            columns,
            years,
            assigned,
        };
        if assigned {
            data.check_cells_nonempty()?;
        }
        Ok(data)
    }

    pub(crate) fn check_cells_nonempty(&self) -> Result<()> {
        let mut counts = [0usize; N_CELLS];
        for i in 0..self.n() {
            counts[cell_index(self.d[i], self.t[i])] += 1;
        }
        for (cell, &c) in counts.iter().enumerate() {
            if c == 0 {
                let (d, t) = (cell / 2, cell % 2);
                return Err(Error::invalid(format!("empty (d,t) cell ({d},{t})")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn d(&self) -> &[u8] {
        &self.d
    }

    pub fn t(&self) -> &[u8] {
        &self.t
    }

    pub fn years(&self) -> Option<&[i32]> {
        self.years.as_deref()
    }

    /// Whether treatment/period labels have been assigned (directly or via a
    /// policy join).
    pub fn is_assigned(&self) -> bool {
        self.assigned
    }

    pub fn observation(&self, i: usize) -> Observation<'_> {
        Observation {
            id: self.ids[i],
            y: self.y[i],
            d: self.d[i],
            t: self.t[i],
            cluster: self.cluster_name(i),
        }
    }

    pub fn cell_of(&self, i: usize) -> usize {
        cell_index(self.d[i], self.t[i])
    }

    pub fn cluster_name(&self, i: usize) -> &str {
        &self.cluster_names[self.cluster_codes[i] as usize]
    }

    pub fn cluster_code(&self, i: usize) -> u32 {
        self.cluster_codes[i]
    }

    pub fn cluster_names(&self) -> &[String] {
        &self.cluster_names
    }

    pub fn columns(&self) -> &[RawColumn] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&RawColumn> {
        self.columns.iter().find(|c| c.name() == name)
    }

    /// Row indices sorted by stable id. All reductions in the crate iterate
    /// in this order so that results do not depend on physical row order.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.n()).collect();
        order.sort_by_key(|&i| self.ids[i]);
        order
    }

    /// Cell counts indexed by [`cell_index`].
    pub fn cell_counts(&self) -> [usize; N_CELLS] {
        let mut counts = [0usize; N_CELLS];
        for i in 0..self.n() {
            counts[self.cell_of(i)] += 1;
        }
        counts
    }

    /// Distinct cluster codes present, sorted by cluster name.
    pub fn clusters_present(&self) -> Vec<u32> {
        let mut present: Vec<u32> = self
            .cluster_codes
            .iter()
            .copied()
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        present.sort_by(|&a, &b| self.cluster_names[a as usize].cmp(&self.cluster_names[b as usize]));
        present
    }

    /// Copy retaining only rows whose index satisfies `keep`. Row ids travel
    /// with their rows. Cell non-emptiness is re-checked only when the source
    /// was assigned.
    pub fn filter_rows(&self, keep: impl Fn(usize) -> bool) -> Result<RepeatedCrossSection> {
        let idx: Vec<usize> = (0..self.n()).filter(|&i| keep(i)).collect();
        self.take_rows(&idx)
    }

    /// Copy containing exactly the given row indices, in the given order.
    pub fn take_rows(&self, idx: &[usize]) -> Result<RepeatedCrossSection> {
        RepeatedCrossSection::from_parts(
            idx.iter().map(|&i| self.ids[i]).collect(),
            idx.iter().map(|&i| self.y[i]).collect(),
            idx.iter().map(|&i| self.d[i]).collect(),
            idx.iter().map(|&i| self.t[i]).collect(),
            idx.iter().map(|&i| self.cluster_codes[i]).collect(),
            self.cluster_names.clone(),
            self.columns.iter().map(|c| c.filtered(idx)).collect(),
            self.years
                .as_ref()
                .map(|ys| idx.iter().map(|&i| ys[i]).collect()),
            self.assigned,
        )
    }

    /// Copy restricted to the named covariate columns (order preserved as
    /// given). Unknown names are an error.
    pub fn with_covariates(&self, names: &[String]) -> Result<RepeatedCrossSection> {
        let mut columns = Vec::with_capacity(names.len());
        for name in names {
            let col = self
                .column(name)
                .ok_or_else(|| Error::invalid(format!("unknown covariate column '{name}'")))?;
            columns.push(col.clone());
        }
        let mut out = self.clone();
        out.columns = columns;
        Ok(out)
    }

    /// Copy keeping only control rows, returned unassigned (the shape the
    /// placebo analysis consumes).
    pub fn controls_only(&self) -> Result<RepeatedCrossSection> {
        let idx: Vec<usize> = (0..self.n()).filter(|&i| self.d[i] == 0).collect();
        RepeatedCrossSection::from_parts(
            idx.iter().map(|&i| self.ids[i]).collect(),
            idx.iter().map(|&i| self.y[i]).collect(),
            vec![0; idx.len()],
            idx.iter().map(|&i| self.t[i]).collect(),
            idx.iter().map(|&i| self.cluster_codes[i]).collect(),
            self.cluster_names.clone(),
            self.columns.iter().map(|c| c.filtered(&idx)).collect(),
            self.years.as_ref().map(|ys| idx.iter().map(|&i| ys[i]).collect()),
            false,
        )
    }

    /// Copy with the treatment indicator replaced (used by placebo tests).
    /// The result is validated as an assigned dataset.
    pub fn with_treatment(&self, d: Vec<u8>) -> Result<RepeatedCrossSection> {
        if d.len() != self.n() {
            return Err(Error::invalid("replacement treatment length differs"));
        }
        RepeatedCrossSection::from_parts(
            self.ids.clone(),
            self.y.clone(),
            d,
            self.t.clone(),
            self.cluster_codes.clone(),
            self.cluster_names.clone(),
            self.columns.clone(),
            self.years.clone(),
            true,
        )
    }

    /// Copy with treatment/period labels installed by a policy join.
    pub(crate) fn with_labels(
        &self,
        keep: &[usize],
        d: Vec<u8>,
        t: Vec<u8>,
        extra_columns: Vec<RawColumn>,
    ) -> Result<RepeatedCrossSection> {
        let base = self.take_rows(keep)?;
        let mut columns = base.columns;
        columns.extend(extra_columns);
        RepeatedCrossSection::from_parts(
            base.ids,
            base.y,
            d,
            t,
            base.cluster_codes,
            base.cluster_names,
            columns,
            base.years,
            true,
        )
    }

    /// Write the dataset to CSV using the standard column layout
    /// (`id,y,d,t,cluster[,year],covariates...`).
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![
            "id".to_string(),
            "y".to_string(),
            "d".to_string(),
            "t".to_string(),
            "cluster".to_string(),
        ];
        if self.years.is_some() {
            header.push("year".to_string());
        }
        for col in &self.columns {
            header.push(col.name().to_string());
        }
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec = vec![
                self.ids[i].to_string(),
                format_float(self.y[i]),
                self.d[i].to_string(),
                self.t[i].to_string(),
                self.cluster_name(i).to_string(),
            ];
            if let Some(ys) = &self.years {
                rec.push(ys[i].to_string());
            }
            for col in &self.columns {
                match col {
                    RawColumn::Continuous { values, .. } => rec.push(format_float(values[i])),
                    RawColumn::Categorical { levels, codes, .. } => {
                        let level = &levels[codes[i] as usize];
                        // The missing level round-trips back to a blank cell.
                        if level == MISSING_LEVEL {
                            rec.push(String::new());
                        } else {
                            rec.push(level.clone());
                        }
                    }
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn format_float(v: f64) -> String {
    // f64 Display is the shortest round-trip representation; deterministic.
    format!("{v}")
}

/// Incremental builder used by the synthetic generator and tests.
#[derive(Debug, Default)]
pub struct DatasetBuilder {
    ids: Vec<u64>,
    y: Vec<f64>,
    d: Vec<u8>,
    t: Vec<u8>,
    cluster_codes: Vec<u32>,
    cluster_names: Vec<String>,
    cluster_lookup: std::collections::HashMap<String, u32>,
    years: Vec<i32>,
    has_years: bool,
    continuous: Vec<(String, Vec<f64>)>,
    categorical: Vec<(String, Vec<String>)>,
}

impl DatasetBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn continuous_column(mut self, name: &str) -> Self {
        self.continuous.push((name.to_string(), Vec::new()));
        self
    }

    pub fn categorical_column(mut self, name: &str) -> Self {
        self.categorical.push((name.to_string(), Vec::new()));
        self
    }

    pub fn with_years(mut self) -> Self {
        self.has_years = true;
        self
    }

    /// Append a row. `cont` and `cat` must match the declared column order.
    pub fn push_row(
        &mut self,
        id: u64,
        y: f64,
        d: u8,
        t: u8,
        cluster: &str,
        year: Option<i32>,
        cont: &[f64],
        cat: &[&str],
    ) {
        assert_eq!(cont.len(), self.continuous.len(), "continuous arity");
        assert_eq!(cat.len(), self.categorical.len(), "categorical arity");
        self.ids.push(id);
        self.y.push(y);
        self.d.push(d);
        self.t.push(t);
        let code = match self.cluster_lookup.get(cluster) {
            Some(&c) => c,
            None => {
                let c = self.cluster_names.len() as u32;
                self.cluster_names.push(cluster.to_string());
                self.cluster_lookup.insert(cluster.to_string(), c);
                c
            }
        };
        self.cluster_codes.push(code);
        if self.has_years {
            self.years.push(year.expect("year required"));
        }
        for (slot, v) in self.continuous.iter_mut().zip(cont) {
            slot.1.push(*v);
        }
        for (slot, v) in self.categorical.iter_mut().zip(cat) {
            slot.1.push(v.to_string());
        }
    }

    pub fn build(self, assigned: bool) -> Result<RepeatedCrossSection> {
        let mut columns = Vec::new();
        for (name, values) in self.continuous {
            columns.push(RawColumn::Continuous { name, values });
        }
        for (name, raw) in self.categorical {
            columns.push(categorical_from_strings(name, raw));
        }
        RepeatedCrossSection::from_parts(
            self.ids,
            self.y,
            self.d,
            self.t,
            self.cluster_codes,
            self.cluster_names,
            columns,
            if self.has_years { Some(self.years) } else { None },
            assigned,
        )
    }
}

/// Build a categorical column from raw strings: blank values map to the
/// missing level; levels are sorted with the missing level last.
pub(crate) fn categorical_from_strings(name: String, raw: Vec<String>) -> RawColumn {
    let mut levels: Vec<String> = raw
        .iter()
        .map(|s| {
            if s.is_empty() {
                MISSING_LEVEL.to_string()
            } else {
                s.clone()
            }
        })
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    levels.sort_by(|a, b| {
        // Missing level sorts last regardless of lexicographic position.
        let am = a == MISSING_LEVEL;
        let bm = b == MISSING_LEVEL;
        am.cmp(&bm).then_with(|| a.cmp(b))
    });
    let lookup: std::collections::HashMap<&str, u32> = levels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i as u32))
        .collect();
    let codes = raw
        .iter()
        .map(|s| {
            let key = if s.is_empty() { MISSING_LEVEL } else { s.as_str() };
            lookup[key]
        })
        .collect();
    RawColumn::Categorical { name, levels, codes }
}
