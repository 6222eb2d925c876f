//! Column-typed dataset, CSV ingestion, standardization, noise mixing, and
//! resampling. Everything downstream (forests, trends, importance, harness)
//! consumes the [`Dataset`] produced here.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample as index_sample;
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::rng::SeededRng;
use crate::Result;

/// Immutable feature matrix (column-major) plus target vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    target_name: String,
    columns: Vec<Vec<f64>>,
    target: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset, enforcing the shape invariants: at least one row and
    /// one feature, equal column lengths, finite values, unique feature names.
    pub fn new(
        feature_names: Vec<String>,
        columns: Vec<Vec<f64>>,
        target_name: String,
        target: Vec<f64>,
    ) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidDataset("no feature columns".into()));
        }
        if feature_names.len() != columns.len() {
            return Err(Error::InvalidDataset(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                columns.len()
            )));
        }
        let n = target.len();
        if n == 0 {
            return Err(Error::InvalidDataset("no rows".into()));
        }
        for (name, col) in feature_names.iter().zip(&columns) {
            if col.len() != n {
                return Err(Error::InvalidDataset(format!(
                    "column {name:?} has {} rows, target has {n}",
                    col.len()
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidDataset(format!(
                    "duplicate feature name {name:?}"
                )));
            }
        }
        for col in columns.iter().chain(std::iter::once(&target)) {
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset("non-finite value".into()));
            }
        }
        Ok(Self {
            feature_names,
            target_name,
            columns,
            target,
        })
    }

    pub fn n(&self) -> usize {
        self.target.len()
    }

    pub fn d(&self) -> usize {
        self.columns.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    /// Copies row `i` into a feature vector.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// New dataset containing the given rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let columns = self
            .columns
            .iter()
            .map(|c| rows.iter().map(|&i| c[i]).collect())
            .collect();
        let target = rows.iter().map(|&i| self.target[i]).collect();
        Self::new(
            self.feature_names.clone(),
            columns,
            self.target_name.clone(),
            target,
        )
    }

    /// New dataset with feature column `j` replaced.
    pub fn with_column(&self, j: usize, column: Vec<f64>) -> Result<Self> {
        let mut columns = self.columns.clone();
        columns[j] = column;
        Self::new(
            self.feature_names.clone(),
            columns,
            self.target_name.clone(),
            self.target.clone(),
        )
    }

    /// New dataset over the same rows with the given feature columns.
    pub fn with_features(&self, names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(names, columns, self.target_name.clone(), self.target.clone())
    }

    /// SHA-256 over names and raw value bit patterns; identifies the exact
    /// dataset in experiment provenance records.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for name in &self.feature_names {
            h.update(name.as_bytes());
            h.update([0]);
        }
        h.update(self.target_name.as_bytes());
        h.update([0]);
        for col in self.columns.iter().chain(std::iter::once(&self.target)) {
            for v in col {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        let out = h.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Writes the dataset as RFC-4180 CSV (header row, '.' decimal separator).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = self.feature_names.iter().map(|s| s.as_str()).collect();
        header.push(&self.target_name);
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.columns.iter().map(|c| c[i].to_string()).collect();
            rec.push(self.target[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Result of CSV ingestion: the dataset plus the number of rows dropped for
/// unparseable or missing values.
#[derive(Debug, Clone)]
pub struct LoadedCsv {
    pub dataset: Dataset,
    pub rows_dropped: usize,
}

/// Maps category strings to ordinal ranks, per column.
pub type OrdinalMaps = BTreeMap<String, BTreeMap<String, f64>>;

/// Loads a CSV file. `target_column` names the dependent variable;
/// `feature_columns`, when given, restricts the features (otherwise every
/// non-target column is used). Columns listed in `ordinal_maps` are mapped
/// from strings to their ranks. Rows with values that neither parse as a
/// number nor appear in the column's ordinal map are dropped and counted.
pub fn load_csv(
    path: &Path,
    target_column: &str,
    feature_columns: Option<&[String]>,
    ordinal_maps: &OrdinalMaps,
) -> Result<LoadedCsv> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|s| s.trim().to_string()).collect();

    let target_idx = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::MissingColumn {
            column: target_column.to_string(),
        })?;

    let feature_idx: Vec<usize> = match feature_columns {
        Some(wanted) => wanted
            .iter()
            .map(|name| {
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::MissingColumn {
                        column: name.clone(),
                    })
            })
            .collect::<Result<_>>()?,
        None => (0..headers.len()).filter(|&i| i != target_idx).collect(),
    };
    if feature_idx.is_empty() {
        return Err(Error::InvalidDataset("no feature columns".into()));
    }

    let feature_names: Vec<String> = feature_idx.iter().map(|&i| headers[i].clone()).collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); feature_idx.len()];
    let mut target: Vec<f64> = Vec::new();
    let mut dropped = 0usize;
    // Track cells that failed per column so a fully unparseable column can be
    // reported as such instead of as "zero rows survived".
    let mut fail_count: Vec<usize> = vec![0; feature_idx.len() + 1];
    let mut first_failure: Vec<Option<(usize, String)>> = vec![None; feature_idx.len() + 1];
    let mut total_rows = 0usize;

    for (row_no, record) in reader.records().enumerate() {
        let record = record?;
        total_rows += 1;
        let mut values: Vec<f64> = Vec::with_capacity(feature_idx.len() + 1);
        let mut ok = true;
        for (slot, &col_idx) in feature_idx.iter().chain(std::iter::once(&target_idx)).enumerate() {
            let name = &headers[col_idx];
            let raw = record.get(col_idx).unwrap_or("").trim();
            let parsed = match ordinal_maps.get(name) {
                Some(map) => map.get(raw).copied(),
                None => raw.parse::<f64>().ok().filter(|v| v.is_finite()),
            };
            match parsed {
                Some(v) => values.push(v),
                None => {
                    fail_count[slot] += 1;
                    if first_failure[slot].is_none() {
                        first_failure[slot] = Some((row_no, raw.to_string()));
                    }
                    ok = false;
                }
            }
        }
        if ok {
            for (col, v) in columns.iter_mut().zip(&values) {
                col.push(*v);
            }
            target.push(values[feature_idx.len()]);
        } else {
            dropped += 1;
        }
    }

    if target.is_empty() {
        // A column that failed on every row is the more useful diagnosis.
        for (slot, &count) in fail_count.iter().enumerate() {
            if count == total_rows && total_rows > 0 {
                let column = if slot < feature_idx.len() {
                    headers[feature_idx[slot]].clone()
                } else {
                    headers[target_idx].clone()
                };
                let (row, value) = first_failure[slot].clone().unwrap();
                return Err(Error::UnmappableColumn { column, row, value });
            }
        }
        return Err(Error::EmptyAfterLoad { dropped });
    }

    let dataset = Dataset::new(
        feature_names,
        columns,
        headers[target_idx].clone(),
        target,
    )?;
    Ok(LoadedCsv {
        dataset,
        rows_dropped: dropped,
    })
}

/// Per-column means and population standard deviations, features first, then
/// the target. Constant columns carry the sentinel std 1 and are flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationParams {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub constant: Vec<bool>,
}

impl StandardizationParams {
    /// Undoes `standardize`: x_orig = x_std * std + mean.
    pub fn invert(&self, ds: &Dataset) -> Result<Dataset> {
        if self.means.len() != ds.d() + 1 {
            return Err(Error::ShapeMismatch(format!(
                "params cover {} columns, dataset has {}",
                self.means.len(),
                ds.d() + 1
            )));
        }
        let columns = ds
            .columns()
            .iter()
            .enumerate()
            .map(|(j, col)| col.iter().map(|v| v * self.stds[j] + self.means[j]).collect())
            .collect();
        let target = ds
            .target()
            .iter()
            .map(|v| v * self.stds[ds.d()] + self.means[ds.d()])
            .collect();
        Dataset::new(
            ds.feature_names().to_vec(),
            columns,
            ds.target_name().to_string(),
            target,
        )
    }
}

fn column_moments(col: &[f64]) -> (f64, f64) {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Centers every column (features and target) and scales to unit population
/// variance. Constant columns are centered only, with std sentinel 1.
pub fn standardize(ds: &Dataset) -> Result<(Dataset, StandardizationParams)> {
    if ds.n() < 2 {
        return Err(Error::InvalidArgument(
            "standardize requires at least 2 rows".into(),
        ));
    }
    let mut means = Vec::with_capacity(ds.d() + 1);
    let mut stds = Vec::with_capacity(ds.d() + 1);
    let mut constant = Vec::with_capacity(ds.d() + 1);
    let mut out_cols = Vec::with_capacity(ds.d());

    let mut scale = |col: &[f64]| -> Vec<f64> {
        let (mean, var) = column_moments(col);
        let is_const = var < 1e-30;
        let std = if is_const { 1.0 } else { var.sqrt() };
        means.push(mean);
        stds.push(std);
        constant.push(is_const);
        col.iter().map(|v| (v - mean) / std).collect()
    };

    for col in ds.columns() {
        out_cols.push(scale(col));
    }
    let out_target = scale(ds.target());

    let out = Dataset::new(
        ds.feature_names().to_vec(),
        out_cols,
        ds.target_name().to_string(),
        out_target,
    )?;
    Ok((
        out,
        StandardizationParams {
            means,
            stds,
            constant,
        },
    ))
}

/// Convex mixture `(1-w)*base + w*noise`, elementwise over every feature
/// column and the target. Both datasets must have the same shape and feature
/// names; callers are expected to standardize both beforehand.
pub fn mix_noise(base: &Dataset, noise: &Dataset, w: f64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::InvalidArgument(format!("w = {w} outside [0, 1]")));
    }
    if base.n() != noise.n() || base.d() != noise.d() {
        return Err(Error::ShapeMismatch(format!(
            "base is {}x{}, noise is {}x{}",
            base.n(),
            base.d(),
            noise.n(),
            noise.d()
        )));
    }
    if base.feature_names() != noise.feature_names() {
        return Err(Error::ShapeMismatch("feature names differ".into()));
    }
    let mix = |b: &[f64], nz: &[f64]| -> Vec<f64> {
        b.iter()
            .zip(nz)
            .map(|(&bv, &nv)| (1.0 - w) * bv + w * nv)
            .collect()
    };
    let columns = base
        .columns()
        .iter()
        .zip(noise.columns())
        .map(|(b, nz)| mix(b, nz))
        .collect();
    let target = mix(base.target(), noise.target());
    Dataset::new(
        base.feature_names().to_vec(),
        columns,
        base.target_name().to_string(),
        target,
    )
}

/// Samples `floor(fraction * n)` rows uniformly without replacement.
pub fn bootstrap_subset(ds: &Dataset, fraction: f64, rng: &mut SeededRng) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fraction = {fraction} outside (0, 1]"
        )));
    }
    let k = (fraction * ds.n() as f64).floor() as usize;
    if k == 0 {
        return Err(Error::InvalidArgument(format!(
            "fraction {fraction} of {} rows selects 0 rows",
            ds.n()
        )));
    }
    let rows: Vec<usize> = index_sample(rng, ds.n(), k).into_vec();
    ds.select_rows(&rows)
}
