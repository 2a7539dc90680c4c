//! Shared builders and brute-force reference implementations.
#![allow(dead_code)]

use std::collections::BTreeMap;

use latent_gauge::panel::{ScorePanel, ScoreRecord};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn record(
    task: &str,
    occ: &str,
    rater: &str,
    prompt: &str,
    score: f64,
    weight: f64,
) -> ScoreRecord {
    ScoreRecord {
        task_id: task.into(),
        occupation_code: occ.into(),
        rater_id: rater.into(),
        prompt_id: prompt.into(),
        augmentation: score,
        substitution: Some(100.0 - score),
        weight,
    }
}

pub fn panel(records: Vec<ScoreRecord>) -> ScorePanel {
    ScorePanel::new(records, BTreeMap::new()).unwrap()
}

/// Panel with one rater and one column of scores per prompt, task `i` in
/// occupation `i / 5`.
pub fn prompt_panel(rater: &str, prompts: &[(&str, Vec<f64>)]) -> ScorePanel {
    let mut recs = Vec::new();
    for (p, scores) in prompts {
        for (i, &s) in scores.iter().enumerate() {
            recs.push(record(
                &format!("t{i:05}"),
                &format!("o{:04}", i / 5),
                rater,
                p,
                s,
                1.0,
            ));
        }
    }
    panel(recs)
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

/// Textbook Pearson from raw sums.
pub fn pearson_sums(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (sa, sb) = (a.iter().sum::<f64>(), b.iter().sum::<f64>());
    let saa: f64 = a.iter().map(|x| x * x).sum();
    let sbb: f64 = b.iter().map(|x| x * x).sum();
    let sab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (n * sab - sa * sb) / ((n * saa - sa * sa).sqrt() * (n * sbb - sb * sb).sqrt())
}

/// Rank of each value: 1 + count below + half the other ties.
pub fn brute_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let below = x.iter().filter(|&&w| w < v).count() as f64;
            let ties = x
                .iter()
                .enumerate()
                .filter(|&(j, &w)| j != i && w == v)
                .count() as f64;
            1.0 + below + ties / 2.0
        })
        .collect()
}

/// Kendall tau-b by enumerating every pair.
pub fn brute_kendall(a: &[f64], b: &[f64]) -> f64 {
    let (mut conc, mut disc, mut tie_a, mut tie_b) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let da = a[i] - a[j];
            let db = b[i] - b[j];
            if da == 0.0 && db == 0.0 {
                continue;
            } else if da == 0.0 {
                tie_a += 1;
            } else if db == 0.0 {
                tie_b += 1;
            } else if (da > 0.0) == (db > 0.0) {
                conc += 1;
            } else {
                disc += 1;
            }
        }
    }
    let denom = (((conc + disc + tie_a) * (conc + disc + tie_b)) as f64).sqrt();
    (conc - disc) as f64 / denom
}

/// Interval alpha for two raters: observed disagreement over units against
/// expected disagreement over all ordered pairs of pooled values.
pub fn brute_alpha(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let d_o: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let big_n = pooled.len() as f64;
    let mut total = 0.0;
    for (i, x) in pooled.iter().enumerate() {
        for (j, y) in pooled.iter().enumerate() {
            if i != j {
                total += (x - y).powi(2);
            }
        }
    }
    let d_e = total / (big_n * (big_n - 1.0));
    1.0 - d_o / d_e
}

/// Least squares through the normal equations, solved by Gaussian
/// elimination with partial pivoting. Columns exclude the intercept.
pub fn normal_equations(y: &[f64], cols: &[Vec<f64>]) -> Vec<f64> {
    let n = y.len();
    let mut x: Vec<Vec<f64>> = vec![vec![1.0; n]];
    x.extend(cols.iter().cloned());
    let k = x.len();
    let mut m = vec![vec![0.0; k + 1]; k];
    for i in 0..k {
        for j in 0..k {
            m[i][j] = (0..n).map(|r| x[i][r] * x[j][r]).sum();
        }
        m[i][k] = (0..n).map(|r| x[i][r] * y[r]).sum();
    }
    for c in 0..k {
        let p = (c..k)
            .max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))
            .unwrap();
        m.swap(c, p);
        #[allow(clippy::needless_range_loop)]
        for r in 0..k {
            if r != c {
                let f = m[r][c] / m[c][c];
                for j in c..=k {
                    m[r][j] -= f * m[c][j];
                }
            }
        }
    }
    (0..k).map(|i| m[i][k] / m[i][i]).collect()
}
