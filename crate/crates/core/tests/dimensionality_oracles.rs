mod common;

use approx::assert_abs_diff_eq;
use common::*;
use latent_gauge::dimensionality::{correlation_matrix, pca, MissingPolicy};
use latent_gauge::panel::{IndexColumn, IndexTable};

fn table(cols: Vec<(&str, Vec<f64>)>) -> IndexTable {
    let n = cols[0].1.len();
    let codes = (0..n).map(|i| format!("{i:06}")).collect();
    let columns = cols
        .into_iter()
        .map(|(name, v)| IndexColumn {
            name: name.into(),
            values: v.into_iter().map(Some).collect(),
        })
        .collect();
    IndexTable::new(codes, columns).unwrap()
}

/// Eigenvalues of a symmetric 3x3 matrix by the trigonometric solution of
/// its characteristic cubic, descending.
fn eigen3(m: [[f64; 3]; 3]) -> [f64; 3] {
    let p1 = m[0][1].powi(2) + m[0][2].powi(2) + m[1][2].powi(2);
    let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = m;
    for (i, row) in b.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (m[i][j] - if i == j { q } else { 0.0 }) / p;
        }
    }
    let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
        - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    [e1, 3.0 * q - e1 - e3, e3]
}

#[test]
fn two_factor_eigenvalues_match_cubic_oracle() {
    let mut r = rng(1);
    let n = 2000;
    let f1 = normals(&mut r, n);
    let f2 = normals(&mut r, n);
    let mk = |w1: f64, w2: f64, e: Vec<f64>| -> Vec<f64> {
        (0..n)
            .map(|i| w1 * f1[i] + w2 * f2[i] + 0.3 * e[i])
            .collect()
    };
    let a = mk(1.0, 0.0, normals(&mut r, n));
    let b = mk(0.9, 0.2, normals(&mut r, n));
    let c = mk(0.1, 1.0, normals(&mut r, n));
    let r_ab = pearson_sums(&a, &b);
    let r_ac = pearson_sums(&a, &c);
    let r_bc = pearson_sums(&b, &c);
    let expect = eigen3([[1.0, r_ab, r_ac], [r_ab, 1.0, r_bc], [r_ac, r_bc, 1.0]]);
    let res = pca(&table(vec![("a", a), ("b", b), ("c", c)])).unwrap();
    for (got, want) in res.eigenvalues.iter().zip(expect) {
        assert_abs_diff_eq!(*got, want, epsilon = 1e-8);
    }
    assert!(
        res.eigenvalues[2] < 0.2,
        "two factors dominate: {:?}",
        res.eigenvalues
    );
}

#[test]
fn duplicated_column_correlates_perfectly() {
    let mut r = rng(2);
    let a = normals(&mut r, 100);
    let m = correlation_matrix(
        &table(vec![
            ("a", a.clone()),
            ("b", normals(&mut r, 100)),
            ("a2", a),
        ]),
        MissingPolicy::PairwiseComplete,
    )
    .unwrap();
    assert_abs_diff_eq!(m.get("a", "a2").unwrap(), 1.0, epsilon = 1e-12);
}

#[test]
fn independent_columns_uncorrelated() {
    let mut r = rng(3);
    let m = correlation_matrix(
        &table(vec![
            ("a", normals(&mut r, 10_000)),
            ("b", normals(&mut r, 10_000)),
        ]),
        MissingPolicy::PairwiseComplete,
    )
    .unwrap();
    assert!(m.get("a", "b").unwrap().abs() < 0.05);
}

#[test]
fn perfectly_correlated_pair_has_one_component() {
    let mut r = rng(4);
    let a = normals(&mut r, 200);
    let b: Vec<f64> = a.iter().map(|v| 3.0 * v - 1.0).collect();
    let res = pca(&table(vec![("a", a), ("b", b)])).unwrap();
    assert_abs_diff_eq!(res.variance_shares[0], 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(res.variance_shares[1], 0.0, epsilon = 1e-12);
}

#[test]
fn strongest_correlate_identified() {
    let mut r = rng(5);
    let n = 500;
    let target = normals(&mut r, n);
    let close: Vec<f64> = target
        .iter()
        .zip(normals(&mut r, n))
        .map(|(t, e)| t + 0.4 * e)
        .collect();
    let far: Vec<f64> = target
        .iter()
        .zip(normals(&mut r, n))
        .map(|(t, e)| t + 2.0 * e)
        .collect();
    let m = correlation_matrix(
        &table(vec![("ours", target), ("far", far), ("close", close)]),
        MissingPolicy::PairwiseComplete,
    )
    .unwrap();
    assert_eq!(m.strongest_correlate("ours").unwrap().0, "close");
}
