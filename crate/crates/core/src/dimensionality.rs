//! Cross-index correlation matrix and principal components of the
//! correlation matrix.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, Matrix};
use crate::panel::IndexTable;
use crate::reliability::pearson;
use crate::scalar::Scalar;
use crate::stats::standardize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    PairwiseComplete,
    Listwise,
}

/// Symmetric correlation matrix; `None` marks a pair with fewer than three
/// complete observations or a constant series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix<T> {
    pub names: Vec<String>,
    pub policy: MissingPolicy,
    pub entries: Vec<Vec<Option<T>>>,
    pub n_obs: Vec<Vec<usize>>,
}

impl<T: Scalar> CorrelationMatrix<T> {
    pub fn get(&self, a: &str, b: &str) -> Option<T> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        self.entries[i][j]
    }

    /// The other index with the largest correlation with `target`.
    pub fn strongest_correlate(&self, target: &str) -> Option<(String, T)> {
        let i = self.names.iter().position(|n| n == target)?;
        self.entries[i]
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .filter_map(|(j, r)| r.map(|r| (j, r)))
            .fold(None, |best: Option<(usize, T)>, (j, r)| match best {
                Some((_, b)) if b >= r => best,
                _ => Some((j, r)),
            })
            .map(|(j, r)| (self.names[j].clone(), r))
    }
}

fn complete_rows<T: Scalar>(columns: &[&[Option<T>]]) -> Vec<usize> {
    let n = columns.first().map_or(0, |c| c.len());
    (0..n)
        .filter(|&r| columns.iter().all(|c| c[r].is_some()))
        .collect()
}

fn gather<T: Scalar>(column: &[Option<T>], rows: &[usize]) -> Vec<T> {
    rows.iter()
        .map(|&r| column[r].expect("complete row"))
        .collect()
}

/// Pearson correlations between columns with missing cells.
pub fn correlation_matrix_columns<T: Scalar>(
    names: &[String],
    columns: &[Vec<Option<T>>],
    policy: MissingPolicy,
) -> Result<CorrelationMatrix<T>> {
    let k = columns.len();
    let mut entries = vec![vec![None; k]; k];
    let mut n_obs = vec![vec![0; k]; k];
    let listwise_rows = match policy {
        MissingPolicy::Listwise => {
            let refs: Vec<&[Option<T>]> = columns.iter().map(|c| c.as_slice()).collect();
            let rows = complete_rows(&refs);
            if rows.len() < 3 {
                return Err(Error::InsufficientData(format!(
                    "listwise deletion leaves {} complete rows (need 3)",
                    rows.len()
                )));
            }
            Some(rows)
        }
        MissingPolicy::PairwiseComplete => None,
    };
    for i in 0..k {
        for j in i..k {
            let rows = match &listwise_rows {
                Some(rows) => rows.clone(),
                None => complete_rows(&[&columns[i], &columns[j]]),
            };
            n_obs[i][j] = rows.len();
            n_obs[j][i] = rows.len();
            if rows.len() < 3 {
                continue;
            }
            let (x, y) = (gather(&columns[i], &rows), gather(&columns[j], &rows));
            let r = if i == j {
                pearson(&x, &y).ok().map(|_| T::one())
            } else {
                pearson(&x, &y).ok()
            };
            if r.is_none() && policy == MissingPolicy::Listwise {
                return Err(Error::UndefinedCorrelation(format!(
                    "columns `{}` and `{}`",
                    names[i], names[j]
                )));
            }
            entries[i][j] = r;
            entries[j][i] = r;
        }
    }
    Ok(CorrelationMatrix {
        names: names.to_vec(),
        policy,
        entries,
        n_obs,
    })
}

pub fn correlation_matrix(
    table: &IndexTable,
    policy: MissingPolicy,
) -> Result<CorrelationMatrix<f64>> {
    let names: Vec<String> = table.columns().iter().map(|c| c.name.clone()).collect();
    let columns: Vec<Vec<Option<f64>>> = table.columns().iter().map(|c| c.values.clone()).collect();
    correlation_matrix_columns(&names, &columns, policy)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct PcaResult<T> {
    pub names: Vec<String>,
    /// Descending.
    pub eigenvalues: Vec<T>,
    pub variance_shares: Vec<T>,
    /// Index-by-component matrix of unit eigenvectors; within each component
    /// the loading of largest magnitude is positive.
    #[serde(serialize_with = "serialize_rows")]
    pub loadings: Matrix<T>,
    pub correlation: Vec<Vec<T>>,
    pub n_obs_used: usize,
    pub n_obs_dropped: usize,
    pub jacobi_sweeps: usize,
}

fn serialize_rows<T: Scalar, S: serde::Serializer>(
    m: &Matrix<T>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<T>> = (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| m[(i, j)]).collect())
        .collect();
    rows.serialize(s)
}

impl<T: Scalar> PcaResult<T> {
    /// `L diag(lambda) L'`, which reproduces the correlation matrix.
    pub fn reconstruct(&self) -> Matrix<T> {
        let k = self.eigenvalues.len();
        let mut scaled = self.loadings.clone();
        for j in 0..k {
            for v in scaled.column_mut(j) {
                *v = *v * self.eigenvalues[j];
            }
        }
        scaled.matmul(&self.loadings.transpose())
    }
}

/// PCA of the correlation matrix of fully observed columns (`n x k`).
pub fn pca_matrix<T: Scalar>(names: &[String], data: &Matrix<T>) -> Result<PcaResult<T>> {
    let (n, k) = (data.rows(), data.cols());
    if k == 0 {
        return Err(Error::InsufficientData(
            "pca needs at least one column".into(),
        ));
    }
    if n <= k {
        return Err(Error::InsufficientData(format!(
            "pca needs more observations than indices ({n} <= {k})"
        )));
    }
    let mut z = Vec::with_capacity(k);
    for (j, name) in names.iter().enumerate().take(k) {
        z.push(standardize(data.column(j)).map_err(|e| match e {
            Error::ZeroVariance(_) => Error::ZeroVariance(format!("index `{name}` is constant")),
            other => other,
        })?);
    }
    let nf = T::from_usize_lossy(n);
    let mut corr = Matrix::zeros(k, k);
    for i in 0..k {
        corr[(i, i)] = T::one();
        for j in (i + 1)..k {
            let r = crate::linalg::dot(&z[i], &z[j]) / nf;
            let r = r.max(-T::one()).min(T::one());
            corr[(i, j)] = r;
            corr[(j, i)] = r;
        }
    }

    let eig = symmetric_eigen(&corr);
    let mut loadings = eig.vectors;
    for j in 0..k {
        let col = loadings.column_mut(j);
        let lead = col.iter().enumerate().fold(
            0,
            |best, (i, v)| if v.abs() > col[best].abs() { i } else { best },
        );
        if col[lead] < T::zero() {
            for v in col.iter_mut() {
                *v = -*v;
            }
        }
    }
    let positive: Vec<T> = eig.values.iter().map(|&v| v.max(T::zero())).collect();
    let total: T = positive.iter().copied().sum();
    let variance_shares = positive.iter().map(|&v| v / total).collect();
    let correlation = (0..k)
        .map(|i| (0..k).map(|j| corr[(i, j)]).collect())
        .collect();

    Ok(PcaResult {
        names: names.to_vec(),
        eigenvalues: eig.values,
        variance_shares,
        loadings,
        correlation,
        n_obs_used: n,
        n_obs_dropped: 0,
        jacobi_sweeps: eig.sweeps,
    })
}

/// PCA on the listwise-complete rows of an index table.
pub fn pca(table: &IndexTable) -> Result<PcaResult<f64>> {
    let refs: Vec<&[Option<f64>]> = table
        .columns()
        .iter()
        .map(|c| c.values.as_slice())
        .collect();
    let rows = complete_rows(&refs);
    let columns: Vec<Vec<f64>> = refs.iter().map(|c| gather(c, &rows)).collect();
    let names: Vec<String> = table.columns().iter().map(|c| c.name.clone()).collect();
    let mut result = pca_matrix(&names, &Matrix::from_columns(&columns))?;
    result.n_obs_dropped = table.n_rows() - rows.len();
    Ok(result)
}

/// Loadings as CSV (`index,PC1,PC2,...`) for external biplot tooling.
pub fn write_loadings_csv<T: Scalar>(result: &PcaResult<T>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let k = result.eigenvalues.len();
    let mut header = vec!["index".to_string()];
    header.extend((1..=k).map(|c| format!("PC{c}")));
    w.write_record(&header)
        .map_err(|e| Error::format(path, e.to_string()))?;
    for (i, name) in result.names.iter().enumerate() {
        let mut row = vec![name.clone()];
        row.extend((0..k).map(|j| format!("{:.6}", result.loadings[(i, j)].to_f64_lossy())));
        w.write_record(&row)
            .map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
