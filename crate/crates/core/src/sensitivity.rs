//! Prompt-variant sensitivity: rank agreement between prompt framings,
//! detection and inversion of reverse-keyed prompts, and a two-way
//! variance-components decomposition of the task x prompt grid.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::panel::{ScoreField, ScorePanel, SCORE_MAX, SCORE_MIN};
use crate::reliability::spearman;
use crate::scalar::Scalar;
use crate::stats::{mean, median};

/// Spearman correlations between prompt variants over shared tasks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromptRankMatrix {
    pub prompts: Vec<String>,
    pub entries: Vec<Vec<Option<f64>>>,
    pub shared_tasks: Vec<Vec<usize>>,
}

impl PromptRankMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.prompts.iter().position(|p| p == a)?;
        let j = self.prompts.iter().position(|p| p == b)?;
        self.entries[i][j]
    }

    pub fn is_complete(&self) -> bool {
        self.entries
            .iter()
            .all(|row| row.iter().all(Option::is_some))
    }

    /// Median correlation of each prompt with the others.
    pub fn medians(&self) -> Vec<Option<f64>> {
        (0..self.prompts.len())
            .map(|i| {
                let others: Vec<f64> = self.entries[i]
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .filter_map(|(_, r)| *r)
                    .collect();
                median(&others)
            })
            .collect()
    }

    /// The matrix after reversing the listed prompts: entries between an
    /// inverted and a non-inverted prompt change sign.
    pub fn with_inverted(&self, inverted: &BTreeSet<String>) -> Self {
        let flip: Vec<bool> = self.prompts.iter().map(|p| inverted.contains(p)).collect();
        let entries = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, r)| r.map(|r| if flip[i] != flip[j] { -r } else { r }))
                    .collect()
            })
            .collect();
        Self {
            prompts: self.prompts.clone(),
            entries,
            shared_tasks: self.shared_tasks.clone(),
        }
    }
}

fn task_scores(
    panel: &ScorePanel,
    rater_id: &str,
    field: ScoreField,
) -> BTreeMap<String, BTreeMap<String, f64>> {
    let mut by_prompt: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for r in panel.records().iter().filter(|r| r.rater_id == rater_id) {
        if let Some(x) = r.score(field) {
            by_prompt
                .entry(r.prompt_id.clone())
                .or_default()
                .insert(r.task_id.clone(), x);
        }
    }
    by_prompt
}

/// Spearman matrix over the prompt ids used by one rater. Pairs sharing
/// fewer than three tasks (or with a constant series) are left missing.
pub fn prompt_rank_matrix(
    panel: &ScorePanel,
    rater_id: &str,
    field: ScoreField,
) -> Result<PromptRankMatrix> {
    let by_prompt = task_scores(panel, rater_id, field);
    if by_prompt.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "rater `{rater_id}` has {} prompt variant(s); need at least 2",
            by_prompt.len()
        )));
    }
    let prompts: Vec<String> = by_prompt.keys().cloned().collect();
    let k = prompts.len();
    let mut entries = vec![vec![None; k]; k];
    let mut shared_tasks = vec![vec![0; k]; k];
    for i in 0..k {
        for j in i..k {
            let (pi, pj) = (&by_prompt[&prompts[i]], &by_prompt[&prompts[j]]);
            let (a, b): (Vec<f64>, Vec<f64>) = pi
                .iter()
                .filter_map(|(t, &x)| pj.get(t).map(|&y| (x, y)))
                .unzip();
            shared_tasks[i][j] = a.len();
            shared_tasks[j][i] = a.len();
            let r = if i == j {
                spearman(&a, &b).ok().map(|_| 1.0)
            } else {
                spearman(&a, &b).ok()
            };
            entries[i][j] = r;
            entries[j][i] = r;
        }
    }
    let any_pair = (0..k).any(|i| (0..k).any(|j| i != j && entries[i][j].is_some()));
    if !any_pair {
        return Err(Error::InsufficientData(
            "no pair of prompts shares at least 3 tasks".into(),
        ));
    }
    Ok(PromptRankMatrix {
        prompts,
        entries,
        shared_tasks,
    })
}

/// Maps `x -> 100 - x` on the chosen field for every record of the listed
/// prompts.
pub fn invert_prompts(
    panel: &ScorePanel,
    prompt_ids: &[String],
    field: ScoreField,
) -> Result<ScorePanel> {
    let (mut records, metadata) = panel.clone().into_parts();
    for r in records
        .iter_mut()
        .filter(|r| prompt_ids.contains(&r.prompt_id))
    {
        if let Some(x) = r.score_mut(field) {
            *x = SCORE_MAX + SCORE_MIN - *x;
        }
    }
    ScorePanel::new(records, metadata)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Inversion {
    #[serde(skip)]
    pub panel: ScorePanel,
    pub inverted: Vec<String>,
    pub medians_before: Vec<Option<f64>>,
    pub medians_after: Vec<Option<f64>>,
    pub matrix_after: PromptRankMatrix,
}

/// Reverses prompts that measure the negated construct.
///
/// Prompts listed in `flagged_inverse` are reversed unconditionally. Then,
/// repeatedly, the not-yet-reversed prompt with the most negative median
/// correlation is reversed (ties go to the lexicographically later id)
/// until no median is negative. A candidate that is negatively correlated
/// with another candidate while each agrees positively with at least half
/// of the set cannot be resolved from the data and is reported as ambiguous.
pub fn detect_and_invert(
    matrix: &PromptRankMatrix,
    panel: &ScorePanel,
    flagged_inverse: &[String],
    field: ScoreField,
) -> Result<Inversion> {
    if !matrix.is_complete() {
        return Err(Error::InsufficientData(
            "prompt rank matrix has missing entries; cannot infer polarity".into(),
        ));
    }
    let mut inverted: BTreeSet<String> = flagged_inverse
        .iter()
        .filter(|p| matrix.prompts.contains(p))
        .cloned()
        .collect();
    let k = matrix.prompts.len();
    for _ in 0..k {
        let eff = matrix.with_inverted(&inverted);
        let medians = eff.medians();
        let mut candidates: Vec<(usize, f64)> = medians
            .iter()
            .enumerate()
            .filter(|(i, _)| !inverted.contains(&matrix.prompts[*i]))
            .filter_map(|(i, m)| m.filter(|m| *m < 0.0).map(|m| (i, m)))
            .collect();
        if candidates.is_empty() {
            break;
        }
        candidates.sort_by(|a, b| {
            a.1.partial_cmp(&b.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| matrix.prompts[b.0].cmp(&matrix.prompts[a.0]))
        });
        let pick = candidates[0].0;

        let agrees_with_half = |i: usize| {
            let others: Vec<f64> = (0..k)
                .filter(|&j| j != i)
                .filter_map(|j| eff.entries[i][j])
                .collect();
            2 * others.iter().filter(|r| **r > 0.0).count() >= others.len()
        };
        for &(other, _) in &candidates[1..] {
            if eff.entries[pick][other].is_some_and(|r| r < 0.0)
                && agrees_with_half(pick)
                && agrees_with_half(other)
            {
                return Err(Error::AmbiguousPolarity(format!(
                    "prompts `{}` and `{}` disagree with each other but each agrees with half the set; \
                     flag polarity explicitly",
                    matrix.prompts[pick], matrix.prompts[other]
                )));
            }
        }
        inverted.insert(matrix.prompts[pick].clone());
    }

    let after = matrix.with_inverted(&inverted);
    let medians_after = after.medians();
    if let Some(i) = medians_after
        .iter()
        .position(|m| m.is_some_and(|m| m < 0.0))
    {
        return Err(Error::AmbiguousPolarity(format!(
            "prompt `{}` still has negative median correlation after inversion",
            matrix.prompts[i]
        )));
    }
    let inverted: Vec<String> = inverted.into_iter().collect();
    let panel = if inverted.is_empty() {
        panel.clone()
    } else {
        invert_prompts(panel, &inverted, field)?
    };
    Ok(Inversion {
        panel,
        inverted,
        medians_before: matrix.medians(),
        medians_after,
        matrix_after: after,
    })
}

/// Two-way crossed random-effects decomposition, one observation per cell,
/// estimated by the method of moments on mean squares:
///
/// * `sigma2_residual = MS_res`
/// * `sigma2_task = (MS_task - MS_res) / n_prompts`
/// * `sigma2_prompt = (MS_prompt - MS_res) / n_tasks`
///
/// Negative component estimates are truncated at zero and listed in
/// `truncated`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceDecomposition<T> {
    pub design: &'static str,
    pub share_task: T,
    pub share_prompt: T,
    pub share_residual: T,
    pub sigma2_task: T,
    pub sigma2_prompt: T,
    pub sigma2_residual: T,
    pub ms_task: T,
    pub ms_prompt: T,
    pub ms_residual: T,
    pub n_tasks: usize,
    pub n_prompts: usize,
    pub imputed_cells: usize,
    pub truncated: Vec<&'static str>,
}

pub const DESIGN: &str = "two-way crossed random effects (task x prompt), one score per cell; residual = interaction + error";

/// Largest share of missing cells filled by additive mean imputation.
pub const MAX_MISSING_SHARE: f64 = 0.05;

/// Decomposes a complete `tasks x prompts` grid.
pub fn decompose_grid<T: Scalar>(grid: &Matrix<T>) -> Result<VarianceDecomposition<T>> {
    let (t, p) = (grid.rows(), grid.cols());
    if p < 2 {
        return Err(Error::InsufficientData(
            "variance decomposition needs at least 2 prompts".into(),
        ));
    }
    if t < 2 {
        return Err(Error::InsufficientData(
            "variance decomposition needs at least 2 tasks".into(),
        ));
    }
    let (tf, pf) = (T::from_usize_lossy(t), T::from_usize_lossy(p));

    let row_means: Vec<T> = (0..t)
        .map(|i| (0..p).map(|j| grid[(i, j)]).sum::<T>() / pf)
        .collect();
    let grand = mean(&row_means);
    let ss_task: T = row_means
        .iter()
        .map(|&m| (m - grand) * (m - grand))
        .sum::<T>()
        * pf;

    // Prompt and residual sums are invariant to per-row shifts; working on
    // deviations from each row's first cell keeps exact zeros exact.
    let mut dev = Matrix::zeros(t, p);
    for i in 0..t {
        for j in 0..p {
            dev[(i, j)] = grid[(i, j)] - grid[(i, 0)];
        }
    }
    let dev_row: Vec<T> = (0..t)
        .map(|i| (0..p).map(|j| dev[(i, j)]).sum::<T>() / pf)
        .collect();
    let dev_col: Vec<T> = (0..p)
        .map(|j| dev.column(j).iter().copied().sum::<T>() / tf)
        .collect();
    let dev_grand = mean(&dev_col);
    let ss_prompt: T = dev_col
        .iter()
        .map(|&m| (m - dev_grand) * (m - dev_grand))
        .sum::<T>()
        * tf;
    let mut ss_res = T::zero();
    for i in 0..t {
        for j in 0..p {
            let e = dev[(i, j)] - dev_row[i] - dev_col[j] + dev_grand;
            ss_res = ss_res + e * e;
        }
    }

    let ms_task = ss_task / (tf - T::one());
    let ms_prompt = ss_prompt / (pf - T::one());
    let ms_residual = ss_res / ((tf - T::one()) * (pf - T::one()));

    let mut truncated = Vec::new();
    let mut component = |ms: T, divisor: T, name: &'static str| {
        let v = (ms - ms_residual) / divisor;
        if v < T::zero() {
            truncated.push(name);
            T::zero()
        } else {
            v
        }
    };
    let sigma2_task = component(ms_task, pf, "task");
    let sigma2_prompt = component(ms_prompt, tf, "prompt");
    let sigma2_residual = ms_residual;
    let total = sigma2_task + sigma2_prompt + sigma2_residual;
    if total <= T::zero() {
        return Err(Error::ZeroVariance("task x prompt grid is constant".into()));
    }
    Ok(VarianceDecomposition {
        design: DESIGN,
        share_task: sigma2_task / total,
        share_prompt: sigma2_prompt / total,
        share_residual: sigma2_residual / total,
        sigma2_task,
        sigma2_prompt,
        sigma2_residual,
        ms_task,
        ms_prompt,
        ms_residual,
        n_tasks: t,
        n_prompts: p,
        imputed_cells: 0,
        truncated,
    })
}

/// Builds the task x prompt grid for one rater and decomposes it. Up to 5%
/// missing cells are filled with `row mean + column mean - grand mean`.
pub fn variance_decomposition(
    panel: &ScorePanel,
    rater_id: &str,
    field: ScoreField,
) -> Result<VarianceDecomposition<f64>> {
    let by_prompt = task_scores(panel, rater_id, field);
    let prompts: Vec<&String> = by_prompt.keys().collect();
    if prompts.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "rater `{rater_id}` has {} prompt variant(s); share_prompt is undefined",
            prompts.len()
        )));
    }
    let tasks: Vec<&String> = by_prompt
        .values()
        .flat_map(|m| m.keys())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let (t, p) = (tasks.len(), prompts.len());
    let cells: Vec<Vec<Option<f64>>> = tasks
        .iter()
        .map(|task| {
            prompts
                .iter()
                .map(|pr| by_prompt[*pr].get(*task).copied())
                .collect()
        })
        .collect();
    let missing = cells.iter().flatten().filter(|c| c.is_none()).count();
    if missing as f64 > MAX_MISSING_SHARE * (t * p) as f64 {
        return Err(Error::InsufficientData(format!(
            "{missing} of {} task x prompt cells are missing (limit {:.0}%)",
            t * p,
            MAX_MISSING_SHARE * 100.0
        )));
    }
    let avg = |v: Vec<f64>| if v.is_empty() { None } else { Some(mean(&v)) };
    let row_mean: Vec<Option<f64>> = cells
        .iter()
        .map(|r| avg(r.iter().flatten().copied().collect()))
        .collect();
    let col_mean: Vec<Option<f64>> = (0..p)
        .map(|j| avg(cells.iter().filter_map(|r| r[j]).collect()))
        .collect();
    let grand = mean(
        &cells
            .iter()
            .flatten()
            .flatten()
            .copied()
            .collect::<Vec<_>>(),
    );

    let mut grid = Matrix::zeros(t, p);
    for i in 0..t {
        for j in 0..p {
            grid[(i, j)] = match cells[i][j] {
                Some(v) => v,
                None => row_mean[i].unwrap_or(grand) + col_mean[j].unwrap_or(grand) - grand,
            };
        }
    }
    let mut d = decompose_grid(&grid)?;
    d.imputed_cells = missing;
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::ScoreRecord;

    fn grid_panel(rows: &[&[f64]], prompts: &[&str]) -> ScorePanel {
        let mut records = Vec::new();
        for (t, row) in rows.iter().enumerate() {
            for (p, &v) in row.iter().enumerate() {
                records.push(ScoreRecord {
                    task_id: format!("t{t:03}"),
                    occupation_code: "o".into(),
                    rater_id: "r".into(),
                    prompt_id: prompts[p].into(),
                    augmentation: v,
                    substitution: None,
                    weight: 1.0,
                });
            }
        }
        ScorePanel::new(records, Default::default()).unwrap()
    }

    #[test]
    fn constant_within_task_is_all_task_variance() {
        let rows: Vec<Vec<f64>> = (0..7).map(|i| vec![10.0 + 7.3 * i as f64; 3]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let d = variance_decomposition(
            &grid_panel(&refs, &["A", "B", "C"]),
            "r",
            ScoreField::Augmentation,
        )
        .unwrap();
        assert_eq!(
            (d.share_task, d.share_prompt, d.share_residual),
            (1.0, 0.0, 0.0)
        );
    }

    #[test]
    fn single_prompt_is_rejected() {
        let p = grid_panel(&[&[1.0], &[2.0], &[3.0]], &["A"]);
        assert!(variance_decomposition(&p, "r", ScoreField::Augmentation).is_err());
    }

    #[test]
    fn textbook_two_way_mean_squares() {
        // 3 tasks x 2 prompts
        let g: Matrix<f64> = Matrix::from_rows(&[[1.0, 3.0], [2.0, 6.0], [3.0, 6.0]]);
        let d = decompose_grid(&g).unwrap();
        // grand 3.5; row means 2, 4, 4.5; col means 2, 5
        // SS_task = 2 * (2.25 + 0.25 + 1) = 7; SS_prompt = 3 * (2.25 + 2.25) = 13.5
        // SS_total = 17.5 -> SS_res = 1
        assert!((d.ms_task - 3.5).abs() < 1e-12);
        assert!((d.ms_prompt - 13.5).abs() < 1e-12);
        assert!((d.ms_residual - 0.5).abs() < 1e-12);
        assert!((d.sigma2_task - 1.5).abs() < 1e-12);
        assert!((d.sigma2_prompt - 13.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn negative_components_are_truncated() {
        let g: Matrix<f64> = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0], [1.0, 2.0], [2.0, 1.0]]);
        let d = decompose_grid(&g).unwrap();
        assert!(d.truncated.contains(&"task"));
        assert!(d.truncated.contains(&"prompt"));
        assert_eq!(d.share_residual, 1.0);
    }

    #[test]
    fn sparse_grid_imputes_or_refuses() {
        let mut rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![i as f64, i as f64 + 1.0, i as f64 + 3.0])
            .collect();
        rows[5][1] = f64::NAN;
        let build = |rows: &[Vec<f64>]| {
            let mut records = Vec::new();
            for (t, row) in rows.iter().enumerate() {
                for (p, &v) in row.iter().enumerate() {
                    if v.is_nan() {
                        continue;
                    }
                    records.push(ScoreRecord {
                        task_id: format!("t{t:03}"),
                        occupation_code: "o".into(),
                        rater_id: "r".into(),
                        prompt_id: ["A", "B", "C"][p].into(),
                        augmentation: v,
                        substitution: None,
                        weight: 1.0,
                    });
                }
            }
            ScorePanel::new(records, Default::default()).unwrap()
        };
        let d = variance_decomposition(&build(&rows), "r", ScoreField::Augmentation).unwrap();
        assert_eq!(d.imputed_cells, 1);
        for r in rows.iter_mut().take(10) {
            r[2] = f64::NAN;
        }
        assert!(variance_decomposition(&build(&rows), "r", ScoreField::Augmentation).is_err());
    }

    fn matrix(prompts: &[&str], entries: Vec<Vec<f64>>) -> PromptRankMatrix {
        let k = prompts.len();
        PromptRankMatrix {
            prompts: prompts.iter().map(|s| s.to_string()).collect(),
            entries: entries
                .into_iter()
                .map(|r| r.into_iter().map(Some).collect())
                .collect(),
            shared_tasks: vec![vec![10; k]; k],
        }
    }

    #[test]
    fn two_mutually_negative_prompts_invert_the_later_id() {
        let panel = grid_panel(&[&[10.0, 90.0], &[20.0, 80.0], &[30.0, 70.0]], &["A", "B"]);
        let m = prompt_rank_matrix(&panel, "r", ScoreField::Augmentation).unwrap();
        assert!((m.get("A", "B").unwrap() + 1.0).abs() < 1e-12);
        let inv = detect_and_invert(&m, &panel, &[], ScoreField::Augmentation).unwrap();
        assert_eq!(inv.inverted, vec!["B".to_string()]);
        assert_eq!(inv.matrix_after.get("A", "B"), m.get("A", "B").map(|r| -r));
        let recomputed = prompt_rank_matrix(&inv.panel, "r", ScoreField::Augmentation).unwrap();
        assert_eq!(recomputed.get("A", "B"), inv.matrix_after.get("A", "B"));
    }

    #[test]
    fn no_negative_prompts_is_identity() {
        let panel = grid_panel(&[&[10.0, 15.0], &[20.0, 22.0], &[30.0, 41.0]], &["A", "B"]);
        let m = prompt_rank_matrix(&panel, "r", ScoreField::Augmentation).unwrap();
        let inv = detect_and_invert(&m, &panel, &[], ScoreField::Augmentation).unwrap();
        assert!(inv.inverted.is_empty());
        assert_eq!(inv.panel, panel);
    }

    #[test]
    fn flagged_prompt_inverted_unconditionally() {
        let panel = grid_panel(&[&[10.0, 15.0], &[20.0, 22.0], &[30.0, 41.0]], &["A", "B"]);
        let m = prompt_rank_matrix(&panel, "r", ScoreField::Augmentation).unwrap();
        // B is reversed on the flag alone; A then opposes it and follows
        let inv = detect_and_invert(&m, &panel, &["B".into()], ScoreField::Augmentation).unwrap();
        assert_eq!(inv.inverted, vec!["A".to_string(), "B".to_string()]);
        assert!(inv.medians_after.iter().all(|m| m.unwrap() >= 0.0));
    }

    #[test]
    fn ambiguous_split_is_an_error() {
        let m = matrix(
            &["A", "B", "C", "D", "E"],
            vec![
                vec![1.0, -0.9, 0.6, 0.5, -0.5],
                vec![-0.9, 1.0, -0.6, -0.5, 0.5],
                vec![0.6, -0.6, 1.0, 0.7, 0.1],
                vec![0.5, -0.5, 0.7, 1.0, 0.1],
                vec![-0.5, 0.5, 0.1, 0.1, 1.0],
            ],
        );
        let panel = grid_panel(&[&[1.0, 2.0, 3.0, 4.0, 5.0]], &["A", "B", "C", "D", "E"]);
        let r = detect_and_invert(&m, &panel, &[], ScoreField::Augmentation);
        assert_eq!(r.unwrap().inverted, vec!["B".to_string(), "E".to_string()]);

        // A and B oppose each other, tie on median, and each agrees with two
        // of their four partners
        let m = matrix(
            &["A", "B", "C", "D", "E"],
            vec![
                vec![1.0, -0.8, 0.4, 0.3, -0.5],
                vec![-0.8, 1.0, -0.5, 0.4, 0.3],
                vec![0.4, -0.5, 1.0, 0.2, 0.2],
                vec![0.3, 0.4, 0.2, 1.0, 0.2],
                vec![-0.5, 0.3, 0.2, 0.2, 1.0],
            ],
        );
        assert!(matches!(
            detect_and_invert(&m, &panel, &[], ScoreField::Augmentation),
            Err(Error::AmbiguousPolarity(_))
        ));
    }

    #[test]
    fn generic_grid_in_f32() {
        let g: Matrix<f32> = Matrix::from_rows(&[[1.0, 3.0], [2.0, 6.0], [3.0, 6.0]]);
        let d = decompose_grid(&g).unwrap();
        assert!((d.share_task + d.share_prompt + d.share_residual - 1.0).abs() < 1e-6);
    }
}
