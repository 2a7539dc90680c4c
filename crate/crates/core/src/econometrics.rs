//! OLS, 2SLS and stacked ORIV regressions, attenuation estimation and the
//! progressive R-squared horse race.

use std::collections::HashMap;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix, Qr};
use crate::scalar::Scalar;
use crate::stats::{sum_sq_dev, variance_sample};

/// Name given to the intercept column.
pub const INTERCEPT: &str = "const";
/// First-stage F below this marks the instrument as weak.
pub const WEAK_INSTRUMENT_F: f64 = 10.0;

/// Named numeric columns of equal length plus an optional cluster label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    names: Vec<String>,
    columns: Vec<Vec<T>>,
    cluster: Option<Vec<String>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(columns: Vec<(String, Vec<T>)>) -> Result<Self> {
        let Some(n) = columns.first().map(|c| c.1.len()) else {
            return Err(Error::Validation("dataset has no columns".into()));
        };
        let mut names = Vec::with_capacity(columns.len());
        let mut data = Vec::with_capacity(columns.len());
        for (name, values) in columns {
            if names.contains(&name) {
                return Err(Error::Validation(format!("duplicate column `{name}`")));
            }
            if name == INTERCEPT {
                return Err(Error::Validation(format!(
                    "column name `{INTERCEPT}` is reserved"
                )));
            }
            if values.len() != n {
                return Err(Error::Validation(format!(
                    "column `{name}` has {} rows, expected {n}",
                    values.len()
                )));
            }
            if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "column `{name}` row {i}: missing or non-finite value"
                )));
            }
            names.push(name);
            data.push(values);
        }
        Ok(Self {
            names,
            columns: data,
            cluster: None,
        })
    }

    pub fn with_cluster(mut self, cluster: Vec<String>) -> Result<Self> {
        if cluster.len() != self.n_obs() {
            return Err(Error::Validation(format!(
                "cluster ids have {} rows, expected {}",
                cluster.len(),
                self.n_obs()
            )));
        }
        self.cluster = Some(cluster);
        Ok(self)
    }

    pub fn n_obs(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn cluster(&self) -> Option<&[String]> {
        self.cluster.as_deref()
    }

    pub fn column(&self, name: &str) -> Result<&[T]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::Validation(format!("unknown column `{name}`")))
    }

    /// Replaces (or appends) a column.
    pub fn set_column(&mut self, name: &str, values: Vec<T>) -> Result<()> {
        if values.len() != self.n_obs() {
            return Err(Error::Validation(format!(
                "column `{name}` has the wrong length"
            )));
        }
        match self.names.iter().position(|n| n == name) {
            Some(i) => self.columns[i] = values,
            None => {
                self.names.push(name.to_string());
                self.columns.push(values);
            }
        }
        Ok(())
    }

    fn named(&self, names: &[String]) -> Result<Vec<(String, Vec<T>)>> {
        names
            .iter()
            .map(|n| Ok((n.clone(), self.column(n)?.to_vec())))
            .collect()
    }

    fn cluster_index(&self) -> Option<Vec<usize>> {
        let ids = self.cluster.as_ref()?;
        let mut seen: HashMap<&str, usize> = HashMap::new();
        Some(
            ids.iter()
                .map(|id| {
                    let next = seen.len();
                    *seen.entry(id.as_str()).or_insert(next)
                })
                .collect(),
        )
    }
}

impl Dataset<f64> {
    /// Reads a numeric CSV. `cluster_column`, when given, is read as opaque
    /// labels instead of numbers.
    pub fn from_csv(path: &Path, cluster_column: Option<&str>) -> Result<Self> {
        let mut reader =
            csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| Error::format(path, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if let Some(c) = cluster_column {
            if !headers.iter().any(|h| h == c) {
                return Err(Error::format(
                    path,
                    format!("cluster column `{c}` not found"),
                ));
            }
        }
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
        let mut cluster = Vec::new();
        for (i, row) in reader.records().enumerate() {
            let row = row.map_err(|e| Error::format(path, e.to_string()))?;
            for (j, cell) in row.iter().enumerate() {
                if Some(headers[j].as_str()) == cluster_column {
                    cluster.push(cell.to_string());
                    continue;
                }
                let v: f64 = cell.trim().parse().map_err(|_| {
                    Error::format(
                        path,
                        format!(
                            "row {}: column `{}` value `{cell}` is not numeric",
                            i + 2,
                            headers[j]
                        ),
                    )
                })?;
                columns[j].push(v);
            }
        }
        let named = headers
            .into_iter()
            .zip(columns)
            .filter(|(h, _)| Some(h.as_str()) != cluster_column)
            .collect();
        let data = Self::new(named)?;
        match cluster_column {
            Some(_) => data.with_cluster(cluster),
            None => Ok(data),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
        let csv_err = |e: csv::Error| Error::format(path, e.to_string());
        w.write_record(&self.names).map_err(csv_err)?;
        for i in 0..self.n_obs() {
            w.write_record(self.columns.iter().map(|c| c[i].to_string()))
                .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Ols,
    Tsls,
    Oriv,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Term<T> {
    pub name: String,
    pub estimate: T,
    pub std_error: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct RegressionResult<T> {
    pub estimator: Estimator,
    pub coefficients: Vec<Term<T>>,
    pub r_squared: T,
    pub first_stage_f: Option<T>,
    pub weak_instrument: bool,
    pub n_obs: usize,
    /// Number of clusters when standard errors are cluster-robust.
    pub n_clusters: Option<usize>,
}

impl<T: Scalar> RegressionResult<T> {
    pub fn term(&self, name: &str) -> Option<&Term<T>> {
        self.coefficients.iter().find(|t| t.name == name)
    }

    /// Point estimate for `name`; panics when the term is absent.
    pub fn coef(&self, name: &str) -> T {
        self.term(name)
            .unwrap_or_else(|| panic!("no term `{name}`"))
            .estimate
    }

    pub fn std_error(&self, name: &str) -> T {
        self.term(name)
            .unwrap_or_else(|| panic!("no term `{name}`"))
            .std_error
    }
}

type Columns<T> = Vec<(String, Vec<T>)>;

fn design<T: Scalar>(cols: &[(String, Vec<T>)]) -> Matrix<T> {
    let refs: Vec<&[T]> = cols.iter().map(|c| c.1.as_slice()).collect();
    Matrix::from_columns(&refs)
}

fn factor<T: Scalar>(cols: &[(String, Vec<T>)], step: &str) -> Result<Qr<T>> {
    Qr::new(&design(cols)).map_err(|j| Error::RankDeficient {
        column: cols.get(j).map_or_else(|| "?".into(), |c| c.0.clone()),
        step: step.to_string(),
    })
}

fn residuals<T: Scalar>(x: &Matrix<T>, b: &[T], y: &[T]) -> Vec<T> {
    let fitted = x.mul_vec(b);
    y.iter().zip(fitted).map(|(&y, f)| y - f).collect()
}

fn ssr_of<T: Scalar>(qr: &Qr<T>, x: &Matrix<T>, y: &[T]) -> T {
    let b = qr.solve(y);
    let u = residuals(x, &b, y);
    dot(&u, &u)
}

/// Shared 2SLS core. With no endogenous columns this is OLS on `exog`.
fn fit<T: Scalar>(
    estimator: Estimator,
    y: &[T],
    exog: Columns<T>,
    endog: Columns<T>,
    instruments: Columns<T>,
    clusters: Option<&[usize]>,
    step: &str,
) -> Result<RegressionResult<T>> {
    let n = y.len();
    let k = exog.len() + endog.len();
    if n <= k {
        return Err(Error::InsufficientData(format!(
            "{n} observations for {k} coefficients"
        )));
    }
    if instruments.len() < endog.len() {
        return Err(Error::Validation(format!(
            "{} excluded instrument(s) for {} endogenous regressor(s)",
            instruments.len(),
            endog.len()
        )));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation(format!(
            "outcome row {i} is missing or non-finite"
        )));
    }

    let x_actual: Columns<T> = exog.iter().chain(&endog).cloned().collect();
    let (x_second, first_stage_f) = if endog.is_empty() {
        (x_actual.clone(), None)
    } else {
        let z: Columns<T> = exog.iter().chain(&instruments).cloned().collect();
        let z_mat = design(&z);
        let z_qr = factor(&z, step)?;
        let exog_mat = design(&exog);
        let exog_qr = if exog.is_empty() {
            None
        } else {
            Some(factor(&exog, step)?)
        };
        let q = T::from_usize_lossy(instruments.len());
        let dof = T::from_usize_lossy(n - z.len());
        let mut f_min = T::infinity();
        let mut hat = exog.clone();
        for (name, x) in &endog {
            let b = z_qr.solve(x);
            let fitted = z_mat.mul_vec(&b);
            let ssr_u: T = x
                .iter()
                .zip(&fitted)
                .map(|(&a, &f)| (a - f) * (a - f))
                .sum();
            let ssr_r = match &exog_qr {
                Some(qr) => ssr_of(qr, &exog_mat, x),
                None => dot(x, x),
            };
            let f = ((ssr_r - ssr_u).max(T::zero()) / q) / (ssr_u / dof);
            f_min = f_min.min(f);
            hat.push((name.clone(), fitted));
        }
        (hat, Some(f_min))
    };

    let x_mat = design(&x_second);
    let qr = factor(&x_second, step)?;
    let b = qr.solve(y);
    let u = residuals(&design(&x_actual), &b, y);
    let ssr = dot(&u, &u);
    let sst = sum_sq_dev(y);
    let r_squared = if k == 1 && exog.len() == 1 && exog[0].0 == INTERCEPT {
        T::zero()
    } else if sst == T::zero() {
        T::nan()
    } else {
        let r2 = T::one() - ssr / sst;
        if estimator == Estimator::Ols {
            r2.max(T::zero()).min(T::one())
        } else {
            r2
        }
    };

    let bread = qr.xtx_inverse();
    let nf = T::from_usize_lossy(n);
    let kf = T::from_usize_lossy(k);
    let (cov, n_clusters) = match clusters {
        None => {
            let s2 = ssr / (nf - kf);
            let mut c = bread.clone();
            for j in 0..k {
                for v in c.column_mut(j) {
                    *v = *v * s2;
                }
            }
            (c, None)
        }
        Some(ids) => {
            let g = ids.iter().copied().max().map_or(0, |m| m + 1);
            let mut scores = Matrix::zeros(g, k);
            for j in 0..k {
                let xj = x_mat.column(j);
                let col = scores.column_mut(j);
                for i in 0..n {
                    col[ids[i]] = col[ids[i]] + xj[i] * u[i];
                }
            }
            let meat = scores.transpose().matmul(&scores);
            let gf = T::from_usize_lossy(g);
            let scale = if g > 1 {
                gf / (gf - T::one()) * (nf - T::one()) / (nf - kf)
            } else {
                T::nan()
            };
            let mut c = bread.matmul(&meat).matmul(&bread);
            for j in 0..k {
                for v in c.column_mut(j) {
                    *v = *v * scale;
                }
            }
            (c, Some(g))
        }
    };

    let coefficients = x_second
        .iter()
        .zip(&b)
        .enumerate()
        .map(|(j, ((name, _), &est))| Term {
            name: name.clone(),
            estimate: est,
            std_error: cov[(j, j)].max(T::zero()).sqrt(),
        })
        .collect();
    let weak_instrument = first_stage_f.is_some_and(|f| f < T::lit(WEAK_INSTRUMENT_F));
    if weak_instrument {
        log::warn!(
            "weak instrument: first-stage F = {}",
            first_stage_f.unwrap_or_else(T::nan)
        );
    }
    Ok(RegressionResult {
        estimator,
        coefficients,
        r_squared,
        first_stage_f,
        weak_instrument,
        n_obs: n,
        n_clusters,
    })
}

fn with_intercept<T: Scalar>(n: usize, mut cols: Columns<T>) -> Columns<T> {
    cols.insert(0, (INTERCEPT.to_string(), vec![T::one(); n]));
    cols
}

/// OLS of `outcome` on an intercept plus `regressors`. Standard errors are
/// cluster-robust when the dataset carries cluster ids.
pub fn ols<T: Scalar>(
    data: &Dataset<T>,
    outcome: &str,
    regressors: &[String],
) -> Result<RegressionResult<T>> {
    ols_step(data, outcome, regressors, "")
}

fn ols_step<T: Scalar>(
    data: &Dataset<T>,
    outcome: &str,
    regressors: &[String],
    step: &str,
) -> Result<RegressionResult<T>> {
    let y = data.column(outcome)?;
    let exog = with_intercept(data.n_obs(), data.named(regressors)?);
    let clusters = data.cluster_index();
    fit(
        Estimator::Ols,
        y,
        exog,
        Vec::new(),
        Vec::new(),
        clusters.as_deref(),
        step,
    )
}

/// Two-stage least squares. `exogenous` excludes the intercept, which is
/// always added.
pub fn tsls<T: Scalar>(
    data: &Dataset<T>,
    outcome: &str,
    endogenous: &[String],
    instruments: &[String],
    exogenous: &[String],
) -> Result<RegressionResult<T>> {
    let y = data.column(outcome)?;
    let exog = with_intercept(data.n_obs(), data.named(exogenous)?);
    let clusters = data.cluster_index();
    fit(
        Estimator::Tsls,
        y,
        exog,
        data.named(endogenous)?,
        data.named(instruments)?,
        clusters.as_deref(),
        "",
    )
}

/// Stacked ORIV: each row appears twice, once with `measure_a` as the
/// regressor instrumented by `measure_b` and once the other way round.
/// Copies get their own intercepts (`const_a`, `const_b`); standard errors are
/// clustered on the original row. The slope is reported under `measure_a`.
pub fn oriv<T: Scalar>(
    data: &Dataset<T>,
    outcome: &str,
    measure_a: &str,
    measure_b: &str,
    exogenous: &[String],
) -> Result<RegressionResult<T>> {
    let n = data.n_obs();
    let y = data.column(outcome)?;
    let a = data.column(measure_a)?;
    let b = data.column(measure_b)?;
    let stack = |top: &[T], bottom: &[T]| -> Vec<T> { top.iter().chain(bottom).copied().collect() };
    let ones = vec![T::one(); n];
    let zeros = vec![T::zero(); n];

    let mut exog = vec![
        ("const_a".to_string(), stack(&ones, &zeros)),
        ("const_b".to_string(), stack(&zeros, &ones)),
    ];
    for (name, col) in data.named(exogenous)? {
        exog.push((name, stack(&col, &col)));
    }
    let endog = vec![(measure_a.to_string(), stack(a, b))];
    let instruments = vec![(format!("{measure_b}_instrument"), stack(b, a))];
    let clusters: Vec<usize> = (0..n).chain(0..n).collect();
    fit(
        Estimator::Oriv,
        &stack(y, y),
        exog,
        endog,
        instruments,
        Some(&clusters),
        "",
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct AttenuationEstimate<T> {
    pub lambda_hat: T,
    pub var_diff: T,
    pub var_primary: T,
    /// `1 / lambda_hat`, the factor by which OLS slopes are shrunk.
    pub correction: T,
    pub n: usize,
}

/// `lambda = 1 - Var(A - B) / (2 Var(A))`, valid when the two measurement
/// errors are independent.
pub fn attenuation_factor<T: Scalar>(a: &[T], b: &[T]) -> Result<AttenuationEstimate<T>> {
    if a.len() != b.len() {
        return Err(Error::Validation(format!(
            "paired series differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "attenuation needs n >= 3, got {}",
            a.len()
        )));
    }
    let var_primary = variance_sample(a);
    if var_primary.is_nan() || var_primary <= T::zero() {
        return Err(Error::ZeroVariance("primary measure is constant".into()));
    }
    let diff: Vec<T> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    let var_diff = variance_sample(&diff);
    let lambda_hat = T::one() - var_diff / (T::lit(2.0) * var_primary);
    if lambda_hat.is_nan() || lambda_hat <= T::zero() {
        return Err(Error::NoiseDominates(lambda_hat.to_f64_lossy()));
    }
    Ok(AttenuationEstimate {
        lambda_hat,
        var_diff,
        var_primary,
        correction: T::one() / lambda_hat,
        n: a.len(),
    })
}

/// A named set of regressors added as one step of a horse race.
#[derive(Debug, Clone, PartialEq, serde::Deserialize, Serialize)]
pub struct Block {
    pub label: String,
    pub regressors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct HorseRaceRow<T> {
    pub label: String,
    pub regressors: Vec<String>,
    /// R-squared of controls plus every block up to this one.
    pub r_squared: T,
    pub delta_r_squared: T,
    /// Gain from this block alone over the controls. Zero for the controls row.
    pub delta_r_squared_alone: T,
}

pub const CONTROLS_LABEL: &str = "controls";

/// Fits controls only, then adds `blocks` cumulatively. Each row reports its
/// gain over the controls-only model, cumulatively and for the block alone.
pub fn horse_race<T: Scalar>(
    data: &Dataset<T>,
    outcome: &str,
    controls: &[String],
    blocks: &[Block],
) -> Result<Vec<HorseRaceRow<T>>> {
    let base = ols_step(
        data,
        outcome,
        controls,
        &format!(" at step `{CONTROLS_LABEL}`"),
    )?;
    let mut rows = vec![HorseRaceRow {
        label: CONTROLS_LABEL.to_string(),
        regressors: controls.to_vec(),
        r_squared: base.r_squared,
        delta_r_squared: T::zero(),
        delta_r_squared_alone: T::zero(),
    }];
    let mut cumulative = controls.to_vec();
    for block in blocks {
        let step = format!(" at step `{}`", block.label);
        cumulative.extend(block.regressors.iter().cloned());
        let joint = ols_step(data, outcome, &cumulative, &step)?;
        let alone_regs: Vec<String> = controls.iter().chain(&block.regressors).cloned().collect();
        let alone = ols_step(data, outcome, &alone_regs, &step)?;
        rows.push(HorseRaceRow {
            label: block.label.clone(),
            regressors: cumulative.clone(),
            r_squared: joint.r_squared,
            delta_r_squared: joint.r_squared - base.r_squared,
            delta_r_squared_alone: alone.r_squared - base.r_squared,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(cols: &[(&str, Vec<f64>)]) -> Dataset<f64> {
        Dataset::new(
            cols.iter()
                .map(|(n, v)| (n.to_string(), v.clone()))
                .collect(),
        )
        .unwrap()
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let d = data(&[("x", x), ("y", y)]);
        let r = ols(&d, "y", &names(&["x"])).unwrap();
        assert!((r.coef("x") - 2.0).abs() < 1e-12);
        assert!(r.coef(INTERCEPT).abs() < 1e-12);
        assert_eq!(r.r_squared, 1.0);
        assert_eq!(r.first_stage_f, None);
    }

    #[test]
    fn intercept_only_gives_mean() {
        let d = data(&[("y", vec![1.0, 2.0, 6.0, 7.0])]);
        let r = ols(&d, "y", &[]).unwrap();
        assert!((r.coef(INTERCEPT) - 4.0).abs() < 1e-12);
        assert_eq!(r.r_squared, 0.0);
        // sample sd / sqrt(n)
        let se = (26.0f64 / 3.0).sqrt() / 2.0;
        assert!((r.std_error(INTERCEPT) - se).abs() < 1e-12);
    }

    #[test]
    fn collinear_column_is_named() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let z: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
        let d = data(&[("x", x.clone()), ("z", z), ("y", x)]);
        match ols(&d, "y", &names(&["x", "z"])) {
            Err(Error::RankDeficient { column, .. }) => assert_eq!(column, "z"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tsls_with_self_instrument_matches_ols() {
        let x: Vec<f64> = (0..30).map(|i| ((i * 7) % 11) as f64).collect();
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| 0.5 * v + (i % 3) as f64)
            .collect();
        let d = data(&[("x", x.clone()), ("z", x), ("y", y)]);
        let o = ols(&d, "y", &names(&["x"])).unwrap();
        let t = tsls(&d, "y", &names(&["x"]), &names(&["z"]), &[]).unwrap();
        assert!((o.coef("x") - t.coef("x")).abs() < 1e-10);
        assert!(t.first_stage_f.unwrap() > 1e10);
        assert!(!t.weak_instrument);
    }

    #[test]
    fn too_few_instruments_rejected() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let d = data(&[
            ("x", x.clone()),
            ("w", x.iter().map(|v| v * v).collect()),
            ("y", x),
        ]);
        assert!(tsls(&d, "y", &names(&["x", "w"]), &[], &[]).is_err());
    }

    #[test]
    fn attenuation_identity_and_errors() {
        let a = [1.0, 2.0, 4.0, 8.0];
        let est = attenuation_factor(&a, &a).unwrap();
        assert_eq!(est.lambda_hat, 1.0);
        assert_eq!(est.correction, 1.0);
        let b = [8.0, 4.0, 2.0, 1.0];
        assert!(matches!(
            attenuation_factor(&a, &b),
            Err(Error::NoiseDominates(_))
        ));
        assert!(attenuation_factor(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(attenuation_factor(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn cluster_robust_with_singleton_clusters_is_hc1() {
        // every row its own cluster: CR1 collapses to HC1 = n/(n-k) * sandwich
        let x = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let y = vec![0.1, 0.9, 2.3, 2.8, 4.4, 4.9];
        let d = data(&[("x", x.clone()), ("y", y.clone())]);
        let ids: Vec<String> = (0..6).map(|i| i.to_string()).collect();
        let r = ols(&d.clone().with_cluster(ids).unwrap(), "y", &names(&["x"])).unwrap();
        // hand sandwich for simple regression slope
        let mx = 2.5;
        let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
        let b = r.coef("x");
        let a = r.coef(INTERCEPT);
        let meat: f64 = x
            .iter()
            .zip(&y)
            .map(|(xi, yi)| ((xi - mx) * (yi - a - b * xi)).powi(2))
            .sum();
        let hc1 = (6.0 / 4.0) * meat / (sxx * sxx);
        assert!((r.std_error("x") - hc1.sqrt()).abs() < 1e-12);
        assert_eq!(r.n_clusters, Some(6));
    }

    #[test]
    fn oriv_symmetric_in_measures() {
        let a: Vec<f64> = (0..40).map(|i| ((i * 13) % 17) as f64).collect();
        let b: Vec<f64> = a
            .iter()
            .enumerate()
            .map(|(i, v)| v + ((i * 5) % 7) as f64 - 3.0)
            .collect();
        let y: Vec<f64> = a
            .iter()
            .enumerate()
            .map(|(i, v)| 0.3 * v + ((i * 3) % 5) as f64)
            .collect();
        let d = data(&[("a", a), ("b", b), ("y", y)]);
        let ab = oriv(&d, "y", "a", "b", &[]).unwrap();
        let ba = oriv(&d, "y", "b", "a", &[]).unwrap();
        assert!((ab.coef("a") - ba.coef("b")).abs() < 1e-9);
        assert_eq!(ab.n_obs, 80);
        assert_eq!(ab.n_clusters, Some(40));
        assert!(ab.first_stage_f.is_some());
    }

    #[test]
    fn horse_race_rows() {
        let x1: Vec<f64> = (0..50).map(|i| ((i * 7) % 13) as f64).collect();
        let x2: Vec<f64> = (0..50).map(|i| ((i * 11) % 5) as f64).collect();
        let y: Vec<f64> = x1
            .iter()
            .zip(&x2)
            .enumerate()
            .map(|(i, (a, b))| a + b + (i % 2) as f64)
            .collect();
        let d = data(&[("x1", x1), ("x2", x2), ("y", y)]);
        let blocks = vec![
            Block {
                label: "one".into(),
                regressors: names(&["x1"]),
            },
            Block {
                label: "two".into(),
                regressors: names(&["x2"]),
            },
        ];
        let rows = horse_race(&d, "y", &[], &blocks).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].r_squared, 0.0);
        assert!(rows[2].r_squared >= rows[1].r_squared);
        assert!(rows[2].delta_r_squared > rows[2].delta_r_squared_alone);
        let bad = vec![Block {
            label: "dup".into(),
            regressors: names(&["x1", "x1"]),
        }];
        let err = horse_race(&d, "y", &[], &bad).unwrap_err().to_string();
        assert!(err.contains("dup"), "{err}");
    }

    #[test]
    fn works_in_f32() {
        let x: Vec<f32> = (0..10).map(|i| i as f32).collect();
        let y: Vec<f32> = x.iter().map(|v| 3.0 * v + 1.0).collect();
        let d = Dataset::new(vec![("x".into(), x), ("y".into(), y)]).unwrap();
        let r = ols(&d, "y", &names(&["x"])).unwrap();
        assert!((r.coef("x") - 3.0).abs() < 1e-4);
    }
}
