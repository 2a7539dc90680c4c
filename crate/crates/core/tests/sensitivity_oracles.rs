mod common;

use approx::assert_abs_diff_eq;
use common::*;
use latent_gauge::linalg::Matrix;
use latent_gauge::panel::ScoreField;
use latent_gauge::sensitivity::{
    decompose_grid, detect_and_invert, prompt_rank_matrix, variance_decomposition,
};
use latent_gauge::simulate::{simulate_prompt_grid, PromptGridConfig};

const F: ScoreField = ScoreField::Augmentation;

fn latent_scores(seed: u64, n: usize) -> Vec<f64> {
    let mut r = rng(seed);
    normals(&mut r, n)
        .iter()
        .map(|z| (50.0 + 15.0 * z).clamp(0.0, 100.0))
        .collect()
}

fn noisy(base: &[f64], seed: u64, sd: f64) -> Vec<f64> {
    let mut r = rng(seed);
    base.iter()
        .zip(normals(&mut r, base.len()))
        .map(|(b, e)| (b + sd * e).clamp(0.0, 100.0))
        .collect()
}

#[test]
fn duplicated_prompt_correlates_perfectly() {
    let a = latent_scores(1, 100);
    let p = prompt_panel("m", &[("A", a.clone()), ("B", a)]);
    let m = prompt_rank_matrix(&p, "m", F).unwrap();
    assert_abs_diff_eq!(m.get("A", "B").unwrap(), 1.0, epsilon = 1e-12);
}

#[test]
fn inverse_prompt_strongly_negative_then_flipped() {
    let base = latent_scores(2, 1000);
    let a = noisy(&base, 3, 9.0);
    let d: Vec<f64> = noisy(&base, 4, 9.0).iter().map(|x| 100.0 - x).collect();
    let p = prompt_panel("m", &[("A", a), ("B", noisy(&base, 5, 9.0)), ("D", d)]);
    let m = prompt_rank_matrix(&p, "m", F).unwrap();
    let before = m.get("A", "D").unwrap();
    assert!(before < -0.6, "rho(A,D) {before}");
    let inv = detect_and_invert(&m, &p, &[], F).unwrap();
    assert_eq!(inv.inverted, ["D"]);
    assert_abs_diff_eq!(
        inv.matrix_after.get("A", "D").unwrap(),
        -before,
        epsilon = 1e-12
    );
}

#[test]
fn independent_prompts_near_zero() {
    let p = prompt_panel(
        "m",
        &[("A", latent_scores(6, 3000)), ("B", latent_scores(7, 3000))],
    );
    let rho = prompt_rank_matrix(&p, "m", F)
        .unwrap()
        .get("A", "B")
        .unwrap();
    assert!(rho.abs() < 3.0 / 3000f64.sqrt(), "{rho}");
}

#[test]
fn positive_prompts_left_alone() {
    let base = latent_scores(8, 200);
    let p = prompt_panel(
        "m",
        &[("A", noisy(&base, 9, 5.0)), ("B", noisy(&base, 10, 5.0))],
    );
    let m = prompt_rank_matrix(&p, "m", F).unwrap();
    let inv = detect_and_invert(&m, &p, &[], F).unwrap();
    assert!(inv.inverted.is_empty());
    assert_eq!(inv.panel, p);
}

#[test]
fn two_negative_prompts_invert_later_id() {
    let a = latent_scores(11, 100);
    let b: Vec<f64> = a.iter().map(|x| 100.0 - x).collect();
    let p = prompt_panel("m", &[("P1", a), ("P2", b)]);
    let m = prompt_rank_matrix(&p, "m", F).unwrap();
    assert_eq!(detect_and_invert(&m, &p, &[], F).unwrap().inverted, ["P2"]);
}

#[test]
fn constant_within_task_grid() {
    let rows: Vec<[f64; 4]> = (0..50).map(|i| [f64::from(i); 4]).collect();
    let d = decompose_grid(&Matrix::from_rows(&rows)).unwrap();
    assert_eq!(
        (d.share_task, d.share_prompt, d.share_residual),
        (1.0, 0.0, 0.0)
    );
}

#[test]
fn pure_noise_grid() {
    let mut r = rng(12);
    let rows: Vec<Vec<f64>> = (0..1000).map(|_| normals(&mut r, 4)).collect();
    let d = decompose_grid(&Matrix::from_rows(&rows)).unwrap();
    assert!(
        d.share_task < 0.02 + 1e-12 && d.share_prompt < 0.02 + 1e-12,
        "{d:?}"
    );
}

#[test]
fn planted_shares_recovered() {
    let grid = simulate_prompt_grid(&PromptGridConfig {
        seed: 13,
        ..PromptGridConfig::default()
    })
    .unwrap();
    let d = variance_decomposition(&grid.panel, "sim", F).unwrap();
    assert_abs_diff_eq!(d.share_task, 0.14, epsilon = 0.03);
    assert_abs_diff_eq!(d.share_prompt, 0.22, epsilon = 0.03);
    assert_abs_diff_eq!(d.share_residual, 0.64, epsilon = 0.03);
}

#[test]
fn heavily_missing_grid_rejected() {
    let base = latent_scores(14, 100);
    let mut recs = Vec::new();
    for p in ["A", "B", "C", "D"] {
        for (i, &s) in base.iter().enumerate() {
            if p == "D" && i % 5 == 0 {
                continue;
            }
            recs.push(record(&format!("t{i}"), "o", "m", p, s, 1.0));
        }
    }
    // 20 of 400 cells missing is exactly 5%; one more tips it over
    let ok = panel(recs.clone());
    assert!(variance_decomposition(&ok, "m", F).unwrap().imputed_cells == 20);
    recs.retain(|r| !(r.prompt_id == "C" && r.task_id == "t1"));
    assert!(variance_decomposition(&panel(recs), "m", F).is_err());
}
