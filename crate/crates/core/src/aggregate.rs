//! Task-to-occupation importance-weighted aggregation and standardization.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::panel::{ScoreField, ScorePanel};

pub use crate::stats::standardize;

/// Weighted occupation-level score for one (rater, prompt) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupationIndex {
    pub occupation_code: String,
    pub rater_id: String,
    pub prompt_id: String,
    pub value_raw: f64,
    /// Z-score across occupations within the same (rater, prompt). `None`
    /// when the group has fewer than two occupations or no variance.
    pub value_std: Option<f64>,
    pub n_tasks: usize,
    pub weight_sum: f64,
    /// Fewer contributing tasks than the configured minimum.
    pub sparse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcludedOccupation {
    pub occupation_code: String,
    pub rater_id: String,
    pub prompt_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregation {
    pub field: ScoreField,
    pub indices: Vec<OccupationIndex>,
    pub excluded: Vec<ExcludedOccupation>,
    /// (rater, prompt) groups that could not be standardized.
    pub unstandardized_groups: Vec<(String, String)>,
}

impl Aggregation {
    /// Indices for one (rater, prompt), ordered by occupation code.
    pub fn group(&self, rater_id: &str, prompt_id: &str) -> Vec<&OccupationIndex> {
        self.indices
            .iter()
            .filter(|i| i.rater_id == rater_id && i.prompt_id == prompt_id)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateOptions {
    pub min_tasks: usize,
}

impl Default for AggregateOptions {
    fn default() -> Self {
        Self { min_tasks: 1 }
    }
}

/// `sum_k w_k x_k / sum_k w_k` per (occupation, rater, prompt).
///
/// Records lacking the requested field are skipped. Occupations whose
/// weights sum to zero are excluded and listed.
pub fn aggregate_occupations(
    panel: &ScorePanel,
    field: ScoreField,
    options: AggregateOptions,
) -> Aggregation {
    #[derive(Default)]
    struct Acc {
        weighted: f64,
        weight: f64,
        n: usize,
        lo: f64,
        hi: f64,
    }
    let mut groups: BTreeMap<(&str, &str, &str), Acc> = BTreeMap::new();
    for r in panel.records() {
        let Some(x) = r.score(field) else { continue };
        let acc = groups
            .entry((&r.rater_id, &r.prompt_id, &r.occupation_code))
            .or_insert_with(|| Acc {
                lo: f64::INFINITY,
                hi: f64::NEG_INFINITY,
                ..Acc::default()
            });
        acc.weighted += r.weight * x;
        acc.weight += r.weight;
        acc.n += 1;
        if r.weight > 0.0 {
            acc.lo = acc.lo.min(x);
            acc.hi = acc.hi.max(x);
        }
    }

    let mut indices = Vec::new();
    let mut excluded = Vec::new();
    for ((rater, prompt, occ), acc) in groups {
        if acc.weight <= 0.0 {
            excluded.push(ExcludedOccupation {
                occupation_code: occ.to_string(),
                rater_id: rater.to_string(),
                prompt_id: prompt.to_string(),
                reason: "all task weights are zero".into(),
            });
            continue;
        }
        // rounding can push the ratio a hair outside the contributing range
        let value_raw = (acc.weighted / acc.weight).clamp(acc.lo, acc.hi);
        indices.push(OccupationIndex {
            occupation_code: occ.to_string(),
            rater_id: rater.to_string(),
            prompt_id: prompt.to_string(),
            value_raw,
            value_std: None,
            n_tasks: acc.n,
            weight_sum: acc.weight,
            sparse: acc.n < options.min_tasks,
        });
    }

    let mut unstandardized_groups = Vec::new();
    let mut start = 0;
    while start < indices.len() {
        let key = (
            indices[start].rater_id.clone(),
            indices[start].prompt_id.clone(),
        );
        let mut end = start;
        while end < indices.len()
            && indices[end].rater_id == key.0
            && indices[end].prompt_id == key.1
        {
            end += 1;
        }
        let raw: Vec<f64> = indices[start..end].iter().map(|i| i.value_raw).collect();
        match standardize(&raw) {
            Ok(z) => {
                for (idx, v) in indices[start..end].iter_mut().zip(z) {
                    idx.value_std = Some(v);
                }
            }
            Err(_) => unstandardized_groups.push(key),
        }
        start = end;
    }

    Aggregation {
        field,
        indices,
        excluded,
        unstandardized_groups,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityCheck {
    pub groups_checked: usize,
    pub negative_weights: usize,
    pub violations: Vec<String>,
}

impl MonotonicityCheck {
    pub fn passed(&self) -> bool {
        self.negative_weights == 0 && self.violations.is_empty()
    }
}

/// Probes each (rater, prompt, occupation) group by raising one task score
/// and confirming the aggregate does not fall.
type GroupKey<'a> = (&'a str, &'a str, &'a str);

pub fn check_monotonicity(panel: &ScorePanel, field: ScoreField) -> MonotonicityCheck {
    let mut groups: BTreeMap<GroupKey<'_>, Vec<(f64, f64)>> = BTreeMap::new();
    let mut negative_weights = 0;
    for r in panel.records() {
        if r.weight < 0.0 {
            negative_weights += 1;
        }
        if let Some(x) = r.score(field) {
            groups
                .entry((&r.rater_id, &r.prompt_id, &r.occupation_code))
                .or_default()
                .push((r.weight, x));
        }
    }
    let weighted = |items: &[(f64, f64)]| {
        let w: f64 = items.iter().map(|p| p.0).sum();
        items.iter().map(|p| p.0 * p.1).sum::<f64>() / w
    };
    let mut violations = Vec::new();
    let mut groups_checked = 0;
    for ((rater, prompt, occ), mut items) in groups {
        if items.iter().map(|p| p.0).sum::<f64>() <= 0.0 {
            continue;
        }
        groups_checked += 1;
        let before = weighted(&items);
        let (_, x) = &mut items[0];
        let step = if *x <= 99.0 { 1.0 } else { -1.0 };
        *x += step;
        let after = weighted(&items);
        if (after - before) * step < 0.0 {
            violations.push(format!("{rater}/{prompt}/{occ}"));
        }
    }
    MonotonicityCheck {
        groups_checked,
        negative_weights,
        violations,
    }
}
