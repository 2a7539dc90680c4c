//! Descriptive statistics shared across modules.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn mean<T: Scalar>(x: &[T]) -> T {
    if x.is_empty() {
        return T::nan();
    }
    x.iter().copied().sum::<T>() / T::from_usize_lossy(x.len())
}

/// Sum of squared deviations from the mean.
pub fn sum_sq_dev<T: Scalar>(x: &[T]) -> T {
    let m = mean(x);
    x.iter().map(|&v| (v - m) * (v - m)).sum()
}

/// Population (1/n) variance.
pub fn variance_population<T: Scalar>(x: &[T]) -> T {
    sum_sq_dev(x) / T::from_usize_lossy(x.len())
}

/// Sample (1/(n-1)) variance.
pub fn variance_sample<T: Scalar>(x: &[T]) -> T {
    sum_sq_dev(x) / T::from_usize_lossy(x.len().saturating_sub(1))
}

pub fn covariance_sample<T: Scalar>(x: &[T], y: &[T]) -> T {
    let (mx, my) = (mean(x), mean(y));
    let s: T = x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    s / T::from_usize_lossy(x.len().saturating_sub(1))
}

pub(crate) fn total_cmp<T: Scalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// 1-based ranks with ties assigned their average rank.
pub fn average_ranks<T: Scalar>(x: &[T]) -> Vec<T> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| total_cmp(&x[i], &x[j]));
    let mut ranks = vec![T::zero(); x.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && x[idx[end]] == x[idx[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = T::from_usize_lossy(start + 1 + end) / T::lit(2.0);
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Z-scores using the population standard deviation, so the output has mean
/// 0 and variance exactly 1 under the 1/n convention.
pub fn standardize<T: Scalar>(x: &[T]) -> Result<Vec<T>> {
    if x.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "standardize needs at least 2 values, got {}",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("standardize: non-finite input".into()));
    }
    let m = mean(x);
    let sd = variance_population(x).sqrt();
    let scale = x.iter().fold(T::zero(), |a, &v| a.max(v.abs()));
    if sd <= T::epsilon() * scale || sd == T::zero() {
        return Err(Error::ZeroVariance("standardize: input is constant".into()));
    }
    Ok(x.iter().map(|&v| (v - m) / sd).collect())
}

pub(crate) fn median<T: Scalar>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / T::lit(2.0)
    })
}
