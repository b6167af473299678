use serde::{Deserialize, Serialize};

use crate::dist::Transform;
use crate::error::{Error, Result};

/// Name and sampling transform of one draw column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub transform: Transform,
}

impl ColumnMeta {
    pub fn new(name: impl Into<String>, transform: Transform) -> Self {
        ColumnMeta { name: name.into(), transform }
    }
}

/// Posterior draws of a named parameter vector, stored column-major on the
/// constrained scale.
///
/// Rows are grouped by chain: rows `c * per_chain .. (c + 1) * per_chain`
/// belong to chain `c`. Every entry is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawMatrix {
    columns: Vec<ColumnMeta>,
    values: Vec<Vec<f64>>,
    n_chains: usize,
}

impl DrawMatrix {
    pub fn new(columns: Vec<ColumnMeta>, values: Vec<Vec<f64>>, n_chains: usize) -> Result<Self> {
        if columns.len() != values.len() {
            return Err(Error::invalid("draw matrix", "column metadata and value count differ"));
        }
        if columns.is_empty() {
            return Err(Error::invalid("draw matrix", "no columns"));
        }
        let n_rows = values[0].len();
        if values.iter().any(|v| v.len() != n_rows) {
            return Err(Error::invalid("draw matrix", "ragged columns"));
        }
        if n_chains == 0 || n_rows % n_chains != 0 {
            return Err(Error::invalid("draw matrix", format!("{n_rows} rows cannot be split into {n_chains} chains")));
        }
        for (i, a) in columns.iter().enumerate() {
            if columns[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::invalid("draw matrix", format!("duplicate column `{}`", a.name)));
            }
        }
        for (meta, col) in columns.iter().zip(&values) {
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteDraw { column: meta.name.clone(), row });
            }
        }
        Ok(DrawMatrix { columns, values, n_chains })
    }

    /// Builds from row-major data.
    pub fn from_rows(columns: Vec<ColumnMeta>, rows: &[Vec<f64>], n_chains: usize) -> Result<Self> {
        let mut values = vec![Vec::with_capacity(rows.len()); columns.len()];
        for row in rows {
            if row.len() != columns.len() {
                return Err(Error::invalid("draw matrix", "row width does not match columns"));
            }
            for (col, v) in values.iter_mut().zip(row) {
                col.push(*v);
            }
        }
        DrawMatrix::new(columns, values, n_chains)
    }

    /// Single identity-transformed column, one chain.
    pub fn single(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        DrawMatrix::new(vec![ColumnMeta::new(name, Transform::Identity)], vec![values], 1)
    }

    pub fn n_rows(&self) -> usize {
        self.values[0].len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn n_chains(&self) -> usize {
        self.n_chains
    }

    pub fn draws_per_chain(&self) -> usize {
        self.n_rows() / self.n_chains
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns.iter().position(|c| c.name == name).ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.values[self.column_index(name)?])
    }

    pub fn column_at(&self, idx: usize) -> &[f64] {
        &self.values[idx]
    }

    /// The draws of column `idx` belonging to chain `chain`.
    pub fn chain_slice(&self, idx: usize, chain: usize) -> &[f64] {
        let per = self.draws_per_chain();
        &self.values[idx][chain * per..(chain + 1) * per]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|c| c[i]).collect()
    }

    /// Appends a column computed elementwise from an existing one.
    pub fn with_derived(mut self, name: &str, source: &str, f: impl Fn(f64) -> f64) -> Result<Self> {
        let derived = self.derive(name, source, f)?;
        if self.column_index(name).is_ok() {
            return Err(Error::invalid("draw matrix", format!("duplicate column `{name}`")));
        }
        if let Some(row) = derived.values[0].iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteDraw { column: name.to_string(), row });
        }
        self.columns.push(derived.columns[0].clone());
        self.values.push(derived.values.into_iter().next().unwrap());
        Ok(self)
    }

    /// Single-column matrix computed elementwise from `source`.
    pub fn derive(&self, name: &str, source: &str, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = self.column(source)?.iter().map(|&v| f(v)).collect();
        DrawMatrix::new(vec![ColumnMeta::new(name, Transform::Identity)], vec![values], self.n_chains)
    }

    /// Rows picked by index, treated as one chain.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let values = self.values.iter().map(|c| rows.iter().map(|&r| c[r]).collect()).collect();
        DrawMatrix::new(self.columns.clone(), values, 1)
    }
}
