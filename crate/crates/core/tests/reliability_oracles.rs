mod common;

use approx::assert_abs_diff_eq;
use common::*;
use latent_gauge::panel::ScoreField;
use latent_gauge::reliability::{
    bland_altman, kendall_tau_b, krippendorff_alpha, pearson, reliability_matrix, spearman,
    top_bottom_overlap, AlphaVariant, Level,
};
use rand::Rng;

#[test]
fn pearson_matches_raw_sum_formula() {
    let (a, b) = ([1.0, 2.0, 3.0, 4.0], [2.0, 1.0, 4.0, 3.0]);
    assert_abs_diff_eq!(
        pearson(&a, &b).unwrap(),
        pearson_sums(&a, &b),
        epsilon = 1e-12
    );
    assert_abs_diff_eq!(pearson(&a, &b).unwrap(), 0.6, epsilon = 1e-12);
}

#[test]
fn pearson_identity_and_reversal() {
    let a = [1.0, 2.0, 3.0];
    assert_abs_diff_eq!(pearson(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(
        pearson(&a, &[3.0, 2.0, 1.0]).unwrap(),
        -1.0,
        epsilon = 1e-12
    );
}

#[test]
fn spearman_with_ties_matches_rank_average_oracle() {
    let (a, b) = ([1.0, 1.0, 2.0], [1.0, 2.0, 3.0]);
    let expect = pearson_sums(&brute_ranks(&a), &brute_ranks(&b));
    assert_abs_diff_eq!(spearman(&a, &b).unwrap(), expect, epsilon = 1e-12);
    assert_abs_diff_eq!(expect, 0.866_025_403_784_438_6, epsilon = 1e-12);
}

#[test]
fn spearman_monotone_transform_and_reversal() {
    let a: Vec<f64> = (1..=20).map(f64::from).collect();
    let cubed: Vec<f64> = a.iter().map(|x| x.powi(3) - 7.0).collect();
    let rev: Vec<f64> = a.iter().rev().copied().collect();
    assert_abs_diff_eq!(spearman(&a, &cubed).unwrap(), 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(spearman(&a, &rev).unwrap(), -1.0, epsilon = 1e-12);
}

#[test]
fn kendall_four_points_one_tie() {
    let (a, b) = ([1.0, 2.0, 2.0, 4.0], [1.0, 3.0, 2.0, 4.0]);
    let expect = brute_kendall(&a, &b);
    // 5 concordant, 0 discordant, one tie in a: 5 / sqrt(5 * 6)
    assert_abs_diff_eq!(expect, 5.0 / 30f64.sqrt(), epsilon = 1e-12);
    assert_abs_diff_eq!(kendall_tau_b(&a, &b).unwrap(), expect, epsilon = 1e-12);
    let c = [1.0, 2.0, 3.0, 4.0];
    assert_abs_diff_eq!(kendall_tau_b(&c, &c).unwrap(), 1.0, epsilon = 1e-12);
}

#[test]
fn kendall_independent_large_sample_near_zero() {
    let mut r = rng(11);
    let n = 4000;
    let a = normals(&mut r, n);
    let b = normals(&mut r, n);
    let tau = kendall_tau_b(&a, &b).unwrap();
    assert!(tau.abs() < 3.0 / (n as f64).sqrt(), "tau {tau}");
}

#[test]
fn alpha_identical_series() {
    let a = [10.0, 20.0, 35.0, 50.0];
    for v in [AlphaVariant::Raw, AlphaVariant::MeanAdjusted] {
        assert_abs_diff_eq!(
            krippendorff_alpha(&a, &a, v).unwrap().alpha,
            1.0,
            epsilon = 1e-12
        );
    }
}

#[test]
fn alpha_toy_panel_matches_pairwise_oracle() {
    let (a, b) = ([1.0, 2.0, 3.0, 4.0], [1.0, 3.0, 3.0, 5.0]);
    let got = krippendorff_alpha(&a, &b, AlphaVariant::Raw).unwrap().alpha;
    assert_abs_diff_eq!(got, brute_alpha(&a, &b), epsilon = 1e-12);
}

#[test]
fn alpha_level_offset_pattern() {
    let mut r = rng(5);
    let a: Vec<f64> = (0..200).map(|_| r.random_range(10.0..80.0)).collect();
    let b: Vec<f64> = a.iter().map(|x| x + 8.6).collect();
    let adj = krippendorff_alpha(&a, &b, AlphaVariant::MeanAdjusted)
        .unwrap()
        .alpha;
    let raw = krippendorff_alpha(&a, &b, AlphaVariant::Raw).unwrap().alpha;
    assert_eq!(adj, 1.0);
    assert!(raw < 1.0);
}

#[test]
fn bland_altman_direct_formula() {
    let a = [0.0; 4];
    let same = bland_altman(&a, &a).unwrap();
    assert_eq!(
        (same.mean_bias, same.loa_low, same.loa_high),
        (0.0, 0.0, 0.0)
    );
    // d = b - a = {1, 2, 3}: mean 2, sample sd 1
    let ba = bland_altman(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]).unwrap();
    assert_abs_diff_eq!(ba.mean_bias, 2.0, epsilon = 1e-12);
    assert_abs_diff_eq!(ba.loa_low, 0.04, epsilon = 1e-12);
    assert_abs_diff_eq!(ba.loa_high, 3.96, epsilon = 1e-12);
}

#[test]
fn bland_altman_half_width_for_mock_noise() {
    // rater noise sd 17.9 on the difference gives 1.96 * 17.9 = 35.1
    let mut r = rng(8);
    let n = 20_000;
    let a: Vec<f64> = normals(&mut r, n).iter().map(|z| 50.0 + 15.0 * z).collect();
    let b: Vec<f64> = a
        .iter()
        .zip(normals(&mut r, n))
        .map(|(x, e)| x + 8.6 + 17.9 * e)
        .collect();
    let ba = bland_altman(&a, &b).unwrap();
    let half = (ba.loa_high - ba.loa_low) / 2.0;
    assert_abs_diff_eq!(half, 35.0, epsilon = 1.0);
    assert_abs_diff_eq!(ba.mean_bias, 8.6, epsilon = 0.5);
}

#[test]
fn three_offset_raters_pairwise_bias() {
    let mut r = rng(21);
    let n = 3000;
    let latent: Vec<f64> = normals(&mut r, n).iter().map(|z| 50.0 + 12.0 * z).collect();
    let offsets = [("r1", 0.0), ("r2", 5.0), ("r3", 12.0)];
    let mut recs = Vec::new();
    for (rater, off) in offsets {
        let noise = normals(&mut r, n);
        for i in 0..n {
            let s = (latent[i] + off + 4.0 * noise[i]).clamp(0.0, 100.0);
            recs.push(record(
                &format!("t{i}"),
                &format!("o{}", i / 10),
                rater,
                "A",
                s,
                1.0,
            ));
        }
    }
    let m = reliability_matrix(&panel(recs), Level::Task, ScoreField::Augmentation, 0.7);
    assert_eq!(m.pairs.len(), 3);
    for p in &m.pairs {
        let off = |id: &str| offsets.iter().find(|o| o.0 == id).unwrap().1;
        let expect = off(&p.rater_b) - off(&p.rater_a);
        assert_abs_diff_eq!(p.report.mean_bias, expect, epsilon = 0.4);
        assert!(p.invariance_pass);
    }
}

#[test]
fn identical_raters_correlate_perfectly() {
    let scores: Vec<f64> = (0..30).map(|i| f64::from(i * 3 % 97)).collect();
    let mut recs = Vec::new();
    for rater in ["x", "y"] {
        for (i, &s) in scores.iter().enumerate() {
            recs.push(record(&format!("t{i}"), "o1", rater, "A", s, 1.0));
        }
    }
    let m = reliability_matrix(&panel(recs), Level::Task, ScoreField::Augmentation, 0.7);
    let rep = &m.pairs[0].report;
    for v in [
        rep.pearson_r,
        rep.spearman_rho,
        rep.kendall_tau_b,
        rep.alpha_raw,
        rep.alpha_mean_adjusted,
    ] {
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
    }
}

#[test]
fn within_family_pair_beats_cross_family() {
    // two raters share a family-level distortion the third lacks
    let mut r = rng(34);
    let n = 2000;
    let latent = normals(&mut r, n);
    let family = normals(&mut r, n);
    let mut recs = Vec::new();
    for (rater, fam_w) in [("fam_small", 1.0), ("fam_large", 1.0), ("other", 0.0)] {
        let noise = normals(&mut r, n);
        for i in 0..n {
            let s = 50.0 + 10.0 * (latent[i] + 0.8 * fam_w * family[i] + 0.4 * noise[i]);
            recs.push(record(
                &format!("t{i}"),
                "o",
                rater,
                "A",
                s.clamp(0.0, 100.0),
                1.0,
            ));
        }
    }
    let m = reliability_matrix(&panel(recs), Level::Task, ScoreField::Augmentation, 0.7);
    let rho = |a: &str, b: &str| {
        m.pairs
            .iter()
            .find(|p| (p.rater_a == a && p.rater_b == b) || (p.rater_a == b && p.rater_b == a))
            .unwrap()
            .report
            .spearman_rho
    };
    let within = rho("fam_large", "fam_small");
    assert!(within > rho("fam_large", "other") && within > rho("fam_small", "other"));
}

fn brute_overlap(a: &[(String, f64)], b: &[(String, f64)], k: usize) -> (f64, f64) {
    let order = |x: &[(String, f64)]| {
        let mut v = x.to_vec();
        v.sort_by(|p, q| q.1.total_cmp(&p.1).then(p.0.cmp(&q.0)));
        v.into_iter().map(|p| p.0).collect::<Vec<_>>()
    };
    let (oa, ob) = (order(a), order(b));
    let n = oa.len();
    let share = |xa: &[String], xb: &[String]| {
        xa.iter().filter(|x| xb.contains(x)).count() as f64 / k as f64
    };
    (share(&oa[..k], &ob[..k]), share(&oa[n - k..], &ob[n - k..]))
}

#[test]
fn overlap_cases() {
    let ids: Vec<(String, f64)> = (0..30)
        .map(|i| (format!("e{i:02}"), f64::from(i)))
        .collect();
    let o = top_bottom_overlap(&ids, &ids, 10).unwrap();
    assert_eq!((o.top_overlap, o.bottom_overlap), (1.0, 1.0));
    let rev: Vec<(String, f64)> = ids.iter().map(|(c, v)| (c.clone(), -v)).collect();
    let o = top_bottom_overlap(&ids, &rev, 10).unwrap();
    assert_eq!((o.top_overlap, o.bottom_overlap), (0.0, 0.0));
    let mut r = rng(2);
    let pert: Vec<(String, f64)> = ids
        .iter()
        .map(|(c, v)| (c.clone(), v + r.random_range(-6.0..6.0)))
        .collect();
    let o = top_bottom_overlap(&ids, &pert, 10).unwrap();
    let (top, bottom) = brute_overlap(&ids, &pert, 10);
    assert_abs_diff_eq!(o.top_overlap, top, epsilon = 1e-12);
    assert_abs_diff_eq!(o.bottom_overlap, bottom, epsilon = 1e-12);
}
