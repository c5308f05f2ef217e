//! Summarized genetic-association data.
//!
//! A [`SummaryDataset`] holds, for each of `p` independent variants, the
//! estimated association with the risk factor, with each of `k` candidate
//! pleiotropic covariates, and with the outcome, plus the standard error of
//! the outcome association. Only the outcome standard errors enter the
//! analysis, through the inverse-variance weights.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const COVARIATE_PREFIX: &str = "beta_w_";

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryDataset {
    variant_ids: Vec<String>,
    beta_x: DVector<f64>,
    beta_w: DMatrix<f64>,
    beta_y: DVector<f64>,
    se_y: DVector<f64>,
    covariate_names: Vec<String>,
}

/// Inverse-variance weights `1 / se_y^2`, one per variant.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(DVector<f64>);

impl WeightVector {
    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Elementwise square roots, i.e. the diagonal of `S^{1/2}`.
    pub fn sqrt(&self) -> DVector<f64> {
        self.0.map(f64::sqrt)
    }

    /// Unit weights.
    pub fn ones(p: usize) -> Self {
        WeightVector(DVector::from_element(p, 1.0))
    }

    pub fn from_vec(w: Vec<f64>) -> Result<Self> {
        if let Some(j) = w.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidData(format!(
                "weight {j} is {} (must be positive and finite)",
                w[j]
            )));
        }
        Ok(WeightVector(DVector::from_vec(w)))
    }
}

impl SummaryDataset {
    pub fn new(
        variant_ids: Vec<String>,
        beta_x: DVector<f64>,
        beta_w: DMatrix<f64>,
        beta_y: DVector<f64>,
        se_y: DVector<f64>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let p = variant_ids.len();
        if beta_x.len() != p || beta_y.len() != p || se_y.len() != p || beta_w.nrows() != p {
            return Err(Error::InvalidData(format!(
                "inconsistent variant counts: ids {p}, beta_x {}, beta_w rows {}, beta_y {}, se_y {}",
                beta_x.len(),
                beta_w.nrows(),
                beta_y.len(),
                se_y.len()
            )));
        }
        if beta_w.ncols() != covariate_names.len() {
            return Err(Error::InvalidData(format!(
                "beta_w has {} columns but {} covariate names",
                beta_w.ncols(),
                covariate_names.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &covariate_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidData(format!("duplicate covariate `{name}`")));
            }
        }
        for j in 0..p {
            if !(se_y[j].is_finite() && se_y[j] > 0.0) {
                return Err(Error::InvalidData(format!(
                    "se_y of variant {j} ({}) is {} (must be positive and finite)",
                    variant_ids[j], se_y[j]
                )));
            }
            if !beta_x[j].is_finite() || !beta_y[j].is_finite() {
                return Err(Error::InvalidData(format!(
                    "non-finite association for variant {j} ({})",
                    variant_ids[j]
                )));
            }
        }
        if beta_w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite covariate association".into()));
        }
        Ok(SummaryDataset {
            variant_ids,
            beta_x,
            beta_w,
            beta_y,
            se_y,
            covariate_names,
        })
    }

    /// Builds a dataset with generated ids `v1..vp` and names `w1..wk`.
    pub fn from_parts(
        beta_x: DVector<f64>,
        beta_w: DMatrix<f64>,
        beta_y: DVector<f64>,
        se_y: DVector<f64>,
    ) -> Result<Self> {
        let ids = (1..=beta_x.len()).map(|i| format!("v{i}")).collect();
        let names = (1..=beta_w.ncols()).map(|j| format!("w{j}")).collect();
        Self::new(ids, beta_x, beta_w, beta_y, se_y, names)
    }

    /// Number of variants `p`.
    pub fn n_variants(&self) -> usize {
        self.variant_ids.len()
    }

    /// Number of covariates `k`.
    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn variant_ids(&self) -> &[String] {
        &self.variant_ids
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn beta_x(&self) -> &DVector<f64> {
        &self.beta_x
    }

    pub fn beta_w(&self) -> &DMatrix<f64> {
        &self.beta_w
    }

    pub fn beta_y(&self) -> &DVector<f64> {
        &self.beta_y
    }

    pub fn se_y(&self) -> &DVector<f64> {
        &self.se_y
    }

    pub fn weights(&self) -> WeightVector {
        WeightVector(self.se_y.map(|s| 1.0 / (s * s)))
    }

    pub fn covariate_index(&self, name: &str) -> Result<usize> {
        self.covariate_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownCovariate(name.to_string()))
    }

    /// Resolves names to column indices, sorted in dataset order.
    pub fn covariate_indices<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>> {
        let mut idx = names
            .iter()
            .map(|n| self.covariate_index(n.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        idx.sort_unstable();
        idx.dedup();
        Ok(idx)
    }

    pub fn subset_variants(&self, indices: &[usize]) -> Result<SummaryDataset> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("empty variant index set".into()));
        }
        let p = self.n_variants();
        if let Some(&bad) = indices.iter().find(|&&i| i >= p) {
            return Err(Error::InvalidArgument(format!(
                "variant index {bad} out of range for {p} variants"
            )));
        }
        Ok(SummaryDataset {
            variant_ids: indices.iter().map(|&i| self.variant_ids[i].clone()).collect(),
            beta_x: self.beta_x.select_rows(indices),
            beta_w: self.beta_w.select_rows(indices),
            beta_y: self.beta_y.select_rows(indices),
            se_y: self.se_y.select_rows(indices),
            covariate_names: self.covariate_names.clone(),
        })
    }

    /// Restricts to the named covariates, keeping the dataset's column order.
    pub fn subset_covariates<S: AsRef<str>>(&self, names: &[S]) -> Result<SummaryDataset> {
        let idx = self.covariate_indices(names)?;
        Ok(self.subset_covariate_indices(&idx))
    }

    pub(crate) fn subset_covariate_indices(&self, idx: &[usize]) -> SummaryDataset {
        SummaryDataset {
            variant_ids: self.variant_ids.clone(),
            beta_x: self.beta_x.clone(),
            beta_w: self.beta_w.select_columns(idx),
            beta_y: self.beta_y.clone(),
            se_y: self.se_y.clone(),
            covariate_names: idx.iter().map(|&j| self.covariate_names[j].clone()).collect(),
        }
    }

    /// Combines exposure-side associations from `self` with the outcome
    /// associations of `outcome`, as in a two-sample design.
    pub fn with_outcome(&self, outcome: &SummaryDataset) -> Result<SummaryDataset> {
        if self.variant_ids != outcome.variant_ids {
            return Err(Error::InvalidData(
                "exposure and outcome datasets list different variants".into(),
            ));
        }
        Ok(SummaryDataset {
            beta_y: outcome.beta_y.clone(),
            se_y: outcome.se_y.clone(),
            ..self.clone()
        })
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<SummaryDataset> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        read_csv(file, path)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(file).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::WriterBuilder::new().from_writer(out);
        let mut header = vec!["variant_id".to_string(), "beta_x".to_string()];
        header.extend(self.covariate_names.iter().map(|n| format!("{COVARIATE_PREFIX}{n}")));
        header.push("beta_y".into());
        header.push("se_y".into());
        w.write_record(&header)?;
        for i in 0..self.n_variants() {
            let mut row = vec![self.variant_ids[i].clone(), self.beta_x[i].to_string()];
            row.extend((0..self.n_covariates()).map(|j| self.beta_w[(i, j)].to_string()));
            row.push(self.beta_y[i].to_string());
            row.push(self.se_y[i].to_string());
            w.write_record(&row)?;
        }
        w.flush()
    }
}

enum Column {
    Id,
    BetaX,
    Covariate(usize),
    BetaY,
    SeY,
    Ignored,
}

/// Parses the CSV layout
/// `variant_id,beta_x,beta_w_<name>...,beta_y,se_y`.
///
/// Columns are located by name. Extra `se_*` columns (standard errors of
/// the exposure-side associations) are ignored; any other unknown column is
/// an error. Rows are reported 1-based counting data rows only.
pub fn read_csv<R: Read>(input: R, path: &Path) -> Result<SummaryDataset> {
    let header_err = |message: String| Error::CsvHeader {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| header_err(format!("cannot read header: {e}")))?
        .clone();

    let mut layout = Vec::with_capacity(headers.len());
    let mut names: Vec<String> = Vec::new();
    let mut seen = HashSet::new();
    for h in headers.iter() {
        if !seen.insert(h.to_string()) {
            return Err(header_err(format!("duplicate column `{h}`")));
        }
        let col = match h {
            "variant_id" => Column::Id,
            "beta_x" => Column::BetaX,
            "beta_y" => Column::BetaY,
            "se_y" => Column::SeY,
            _ if h.starts_with(COVARIATE_PREFIX) && h.len() > COVARIATE_PREFIX.len() => {
                names.push(h[COVARIATE_PREFIX.len()..].to_string());
                Column::Covariate(names.len() - 1)
            }
            _ if h.starts_with("se_") => Column::Ignored,
            _ => return Err(header_err(format!("unexpected column `{h}`"))),
        };
        layout.push(col);
    }
    for required in ["variant_id", "beta_x", "beta_y", "se_y"] {
        if !seen.contains(required) {
            return Err(header_err(format!("missing column `{required}`")));
        }
    }

    let k = names.len();
    let mut ids = Vec::new();
    let (mut bx, mut by, mut se) = (Vec::new(), Vec::new(), Vec::new());
    let mut bw: Vec<Vec<f64>> = Vec::new();

    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            row,
            column: "-".into(),
            message: e.to_string(),
        })?;
        let cell_err = |column: &str, message: String| Error::Csv {
            path: path.to_path_buf(),
            row,
            column: column.to_string(),
            message,
        };
        let mut w_row = vec![0.0; k];
        for ((col, field), name) in layout.iter().zip(record.iter()).zip(headers.iter()) {
            if matches!(col, Column::Ignored) {
                continue;
            }
            if field.is_empty() {
                return Err(cell_err(name, "empty cell".into()));
            }
            if let Column::Id = col {
                ids.push(field.to_string());
                continue;
            }
            let value: f64 = field
                .parse()
                .map_err(|_| cell_err(name, format!("`{field}` is not a number")))?;
            if !value.is_finite() {
                return Err(cell_err(name, format!("`{field}` is not finite")));
            }
            match col {
                Column::BetaX => bx.push(value),
                Column::BetaY => by.push(value),
                Column::SeY => {
                    if value <= 0.0 {
                        return Err(cell_err(name, format!("standard error {value} is not positive")));
                    }
                    se.push(value)
                }
                Column::Covariate(j) => w_row[*j] = value,
                Column::Id | Column::Ignored => unreachable!(),
            }
        }
        bw.push(w_row);
    }

    let p = ids.len();
    if p < 2 {
        return Err(header_err(format!("{p} data rows; at least 2 variants are required")));
    }
    let beta_w = DMatrix::from_fn(p, k, |i, j| bw[i][j]);
    SummaryDataset::new(
        ids,
        DVector::from_vec(bx),
        beta_w,
        DVector::from_vec(by),
        DVector::from_vec(se),
        names,
    )
    .map_err(|e| header_err(e.to_string()))
}

/// Path helper used in error messages when reading from memory.
pub fn in_memory() -> PathBuf {
    PathBuf::from("<memory>")
}
