//! Pairwise inter-rater agreement: product-moment, rank and tau-b
//! correlations, interval Krippendorff's alpha, Bland-Altman limits, and the
//! rater-by-rater matrix built from a score panel.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::aggregate::{aggregate_occupations, AggregateOptions};
use crate::error::{Error, Result};
use crate::panel::{ScoreField, ScorePanel};
use crate::scalar::Scalar;
use crate::stats::{average_ranks, mean, total_cmp, variance_sample};

/// One unit scored by both raters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedScores<T> {
    pub unit_id: String,
    pub a: T,
    pub b: T,
}

/// Splits pairs into the two rater series.
pub fn unzip_pairs<T: Scalar>(pairs: &[PairedScores<T>]) -> (Vec<T>, Vec<T>) {
    pairs.iter().map(|p| (p.a, p.b)).unzip()
}

fn check_pairs<T: Scalar>(a: &[T], b: &[T], min: usize, what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Validation(format!(
            "{what}: series lengths differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < min {
        return Err(Error::InsufficientData(format!(
            "{what} needs at least {min} pairs, got {}",
            a.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("{what}: non-finite score")));
    }
    Ok(())
}

/// Product-moment correlation (two-pass, centred).
pub fn pearson<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    check_pairs(a, b, 3, "pearson")?;
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab = sab + dx * dy;
        saa = saa + dx * dx;
        sbb = sbb + dy * dy;
    }
    if saa == T::zero() || sbb == T::zero() {
        return Err(Error::UndefinedCorrelation("a series is constant".into()));
    }
    let r = sab / (saa.sqrt() * sbb.sqrt());
    Ok(r.max(-T::one()).min(T::one()))
}

/// Pearson correlation of average ranks.
pub fn spearman<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    check_pairs(a, b, 3, "spearman")?;
    pearson(&average_ranks(a), &average_ranks(b))
}

fn tied_pairs(run: u64) -> u64 {
    run * run.saturating_sub(1) / 2
}

/// Sum of `t(t-1)/2` over runs of equal consecutive keys.
fn count_ties<K>(items: &[K], eq: impl Fn(&K, &K) -> bool) -> u64 {
    let mut total = 0;
    let mut run = 1u64;
    for w in items.windows(2) {
        if eq(&w[0], &w[1]) {
            run += 1;
        } else {
            total += tied_pairs(run);
            run = 1;
        }
    }
    total + tied_pairs(run)
}

/// Stable merge sort on `v` that returns the number of strict inversions.
fn sort_counting_swaps<T: Scalar>(v: &mut [T], buf: &mut [T]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (left, right) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        sort_counting_swaps(left, bl) + sort_counting_swaps(right, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    while i < mid {
        buf[k] = v[i];
        i += 1;
        k += 1;
    }
    while j < n {
        buf[k] = v[j];
        j += 1;
        k += 1;
    }
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Tie-corrected Kendall tau-b in O(n log n) (Knight's algorithm).
///
/// `tau_b = (n0 - n1 - n2 + n3 - 2 S) / sqrt((n0 - n1)(n0 - n2))` where `S`
/// counts strict inversions of `b` after sorting on `(a, b)`.
pub fn kendall_tau_b<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    check_pairs(a, b, 3, "kendall_tau_b")?;
    let n = a.len() as u64;
    let mut pairs: Vec<(T, T)> = a.iter().copied().zip(b.iter().copied()).collect();
    pairs.sort_by(|p, q| total_cmp(&p.0, &q.0).then_with(|| total_cmp(&p.1, &q.1)));

    let n0 = n * (n - 1) / 2;
    let n1 = count_ties(&pairs, |p, q| p.0 == q.0);
    let n3 = count_ties(&pairs, |p, q| p.0 == q.0 && p.1 == q.1);

    let mut ys: Vec<T> = pairs.iter().map(|p| p.1).collect();
    let mut buf = ys.clone();
    let swaps = sort_counting_swaps(&mut ys, &mut buf);
    let n2 = count_ties(&ys, |p, q| p == q);

    if n1 == n0 || n2 == n0 {
        return Err(Error::UndefinedCorrelation(
            "kendall_tau_b: every pair is tied on one side".into(),
        ));
    }
    let numerator = n0 as i128 - n1 as i128 - n2 as i128 + n3 as i128 - 2 * swaps as i128;
    let denom = ((n0 - n1) as f64).sqrt() * ((n0 - n2) as f64).sqrt();
    let tau = numerator as f64 / denom;
    Ok(T::lit(tau.clamp(-1.0, 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaVariant {
    Raw,
    /// Each rater's own mean is subtracted first, removing level bias.
    MeanAdjusted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaEstimate<T> {
    pub alpha: T,
    pub observed_disagreement: T,
    pub expected_disagreement: T,
    /// Expected disagreement was zero; alpha is reported as 1 by convention.
    pub degenerate: bool,
}

fn value_key<T: Scalar>(v: T) -> u64 {
    // -0.0 and 0.0 are the same coded value
    (v.to_f64_lossy() + 0.0).to_bits()
}

/// Krippendorff's alpha for two raters on interval data, `1 - D_o / D_e`,
/// computed from the coincidence matrix of pairable values.
pub fn krippendorff_alpha<T: Scalar>(
    a: &[T],
    b: &[T],
    variant: AlphaVariant,
) -> Result<AlphaEstimate<T>> {
    check_pairs(a, b, 2, "krippendorff_alpha")?;
    let (a, b): (Vec<T>, Vec<T>) = match variant {
        AlphaVariant::Raw => (a.to_vec(), b.to_vec()),
        AlphaVariant::MeanAdjusted => {
            let (ma, mb) = (mean(a), mean(b));
            (
                a.iter().map(|&v| v - ma).collect(),
                b.iter().map(|&v| v - mb).collect(),
            )
        }
    };

    // Coincidences: each two-value unit contributes o(a,b) and o(b,a) with
    // weight 1 / (m_u - 1) = 1.
    let mut values: HashMap<u64, T> = HashMap::new();
    let mut coincidence: BTreeMap<(u64, u64), u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(&b) {
        let (kx, ky) = (value_key(x), value_key(y));
        values.insert(kx, x);
        values.insert(ky, y);
        *coincidence.entry((kx, ky)).or_default() += 1;
        *coincidence.entry((ky, kx)).or_default() += 1;
    }
    let mut marginals: BTreeMap<u64, u64> = BTreeMap::new();
    for (&(c, _), &count) in &coincidence {
        *marginals.entry(c).or_default() += count;
    }
    let n_total: u64 = marginals.values().sum();
    let n = T::from_u64(n_total).expect("count fits scalar");

    let delta = |c: T, k: T| (c - k) * (c - k);
    let mut observed = T::zero();
    for (&(c, k), &count) in &coincidence {
        if c != k {
            observed = observed + T::from_u64(count).unwrap() * delta(values[&c], values[&k]);
        }
    }
    observed = observed / n;

    // sum_c sum_k n_c n_k (c - k)^2 = 2 (n sum n_c c^2 - (sum n_c c)^2),
    // evaluated on values centred at the pooled mean
    let pooled: T = marginals
        .iter()
        .map(|(c, &m)| T::from_u64(m).unwrap() * values[c])
        .sum::<T>()
        / n;
    let (mut s1, mut s2) = (T::zero(), T::zero());
    for (c, &m) in &marginals {
        let w = T::from_u64(m).unwrap();
        let d = values[c] - pooled;
        s1 = s1 + w * d;
        s2 = s2 + w * d * d;
    }
    let pair_sum = T::lit(2.0) * (n * s2 - s1 * s1);
    let expected = pair_sum / (n * (n - T::one()));

    if expected <= T::zero() {
        return Ok(AlphaEstimate {
            alpha: T::one(),
            observed_disagreement: observed,
            expected_disagreement: T::zero(),
            degenerate: true,
        });
    }
    Ok(AlphaEstimate {
        alpha: T::one() - observed / expected,
        observed_disagreement: observed,
        expected_disagreement: expected,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlandAltman<T> {
    pub mean_bias: T,
    pub sd_diff: T,
    pub loa_low: T,
    pub loa_high: T,
}

/// Limits of agreement on `d = b - a`: `mean(d) +/- 1.96 sd(d)` with the
/// sample (n - 1) standard deviation.
pub fn bland_altman<T: Scalar>(a: &[T], b: &[T]) -> Result<BlandAltman<T>> {
    check_pairs(a, b, 3, "bland_altman")?;
    let d: Vec<T> = a.iter().zip(b).map(|(&x, &y)| y - x).collect();
    let mean_bias = mean(&d);
    let sd_diff = variance_sample(&d).sqrt();
    let half = T::lit(1.96) * sd_diff;
    Ok(BlandAltman {
        mean_bias,
        sd_diff,
        loa_low: mean_bias - half,
        loa_high: mean_bias + half,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReliabilityReport<T> {
    pub pearson_r: T,
    pub spearman_rho: T,
    pub kendall_tau_b: T,
    pub alpha_raw: T,
    pub alpha_mean_adjusted: T,
    pub alpha_degenerate: bool,
    pub mean_abs_diff: T,
    pub mean_bias: T,
    pub loa_low: T,
    pub loa_high: T,
    pub n_pairs: usize,
}

impl<T: Scalar> ReliabilityReport<T> {
    pub fn from_series(a: &[T], b: &[T]) -> Result<Self> {
        let raw = krippendorff_alpha(a, b, AlphaVariant::Raw)?;
        let adjusted = krippendorff_alpha(a, b, AlphaVariant::MeanAdjusted)?;
        let ba = bland_altman(a, b)?;
        let mad =
            a.iter().zip(b).map(|(&x, &y)| (y - x).abs()).sum::<T>() / T::from_usize_lossy(a.len());
        Ok(Self {
            pearson_r: pearson(a, b)?,
            spearman_rho: spearman(a, b)?,
            kendall_tau_b: kendall_tau_b(a, b)?,
            alpha_raw: raw.alpha,
            alpha_mean_adjusted: adjusted.alpha,
            alpha_degenerate: raw.degenerate || adjusted.degenerate,
            mean_abs_diff: mad,
            mean_bias: ba.mean_bias,
            loa_low: ba.loa_low,
            loa_high: ba.loa_high,
            n_pairs: a.len(),
        })
    }

    pub fn from_pairs(pairs: &[PairedScores<T>]) -> Result<Self> {
        let (a, b) = unzip_pairs(pairs);
        Self::from_series(&a, &b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Task,
    Occupation,
}

impl std::str::FromStr for Level {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "task" => Ok(Self::Task),
            "occupation" => Ok(Self::Occupation),
            other => Err(Error::Validation(format!("unknown level `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RaterPairReport {
    pub rater_a: String,
    pub rater_b: String,
    pub level: Level,
    pub report: ReliabilityReport<f64>,
    /// Rank agreement meets the model-invariance threshold.
    pub invariance_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReliabilityMatrix {
    pub level: Level,
    pub field: ScoreField,
    pub invariance_threshold: f64,
    pub pairs: Vec<RaterPairReport>,
    pub notes: Vec<String>,
}

pub const DEFAULT_INVARIANCE_THRESHOLD: f64 = 0.7;

/// Paired scores for two raters on shared units. At task level a unit is a
/// `(task_id, prompt_id)`; at occupation level it is an
/// `(occupation_code, prompt_id)` after weighted aggregation of each rater's
/// records.
pub fn paired_units(
    panel: &ScorePanel,
    rater_a: &str,
    rater_b: &str,
    level: Level,
    field: ScoreField,
) -> Vec<PairedScores<f64>> {
    let series = |rater: &str| -> BTreeMap<(String, String), f64> {
        match level {
            Level::Task => panel
                .records()
                .iter()
                .filter(|r| r.rater_id == rater)
                .filter_map(|r| Some(((r.task_id.clone(), r.prompt_id.clone()), r.score(field)?)))
                .collect(),
            Level::Occupation => {
                let Ok(sub) = panel.for_rater(rater) else {
                    return BTreeMap::new();
                };
                aggregate_occupations(&sub, field, AggregateOptions::default())
                    .indices
                    .into_iter()
                    .map(|i| ((i.occupation_code, i.prompt_id), i.value_raw))
                    .collect()
            }
        }
    };
    let (sa, sb) = (series(rater_a), series(rater_b));
    sa.into_iter()
        .filter_map(|(key, a)| {
            let b = *sb.get(&key)?;
            Some(PairedScores {
                unit_id: format!("{}|{}", key.0, key.1),
                a,
                b,
            })
        })
        .collect()
}

/// All pairwise reports between raters in the panel (raters in sorted
/// order). Pairs with fewer than three shared units, or degenerate series,
/// are skipped with a note.
pub fn reliability_matrix(
    panel: &ScorePanel,
    level: Level,
    field: ScoreField,
    invariance_threshold: f64,
) -> ReliabilityMatrix {
    let raters = panel.raters();
    let mut pairs = Vec::new();
    let mut notes = Vec::new();
    if raters.len() < 2 {
        notes.push(format!(
            "only {} rater(s) present; no pairs to compare",
            raters.len()
        ));
    }
    for (i, ra) in raters.iter().enumerate() {
        for rb in &raters[i + 1..] {
            let units = paired_units(panel, ra, rb, level, field);
            if units.len() < 3 {
                notes.push(format!(
                    "{ra} vs {rb}: {} shared unit(s), skipped",
                    units.len()
                ));
                continue;
            }
            match ReliabilityReport::from_pairs(&units) {
                Ok(report) => pairs.push(RaterPairReport {
                    rater_a: ra.clone(),
                    rater_b: rb.clone(),
                    level,
                    invariance_pass: report.spearman_rho >= invariance_threshold,
                    report,
                }),
                Err(e) => notes.push(format!("{ra} vs {rb}: {e}")),
            }
        }
    }
    ReliabilityMatrix {
        level,
        field,
        invariance_threshold,
        pairs,
        notes,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Overlap {
    pub top_overlap: f64,
    pub bottom_overlap: f64,
    pub k: usize,
}

fn ranked(index: &[(String, f64)]) -> Vec<&str> {
    let mut v: Vec<&(String, f64)> = index.iter().collect();
    v.sort_by(|p, q| total_cmp(&q.1, &p.1).then_with(|| p.0.cmp(&q.0)));
    v.into_iter().map(|p| p.0.as_str()).collect()
}

/// Share of the k highest (and k lowest) entities common to both indices.
/// Ties in value are broken by entity id.
pub fn top_bottom_overlap(
    index_a: &[(String, f64)],
    index_b: &[(String, f64)],
    k: usize,
) -> Result<Overlap> {
    if k == 0 {
        return Err(Error::Validation(
            "top_bottom_overlap: k must be positive".into(),
        ));
    }
    let mut ids_a: Vec<&str> = index_a.iter().map(|p| p.0.as_str()).collect();
    let mut ids_b: Vec<&str> = index_b.iter().map(|p| p.0.as_str()).collect();
    ids_a.sort_unstable();
    ids_b.sort_unstable();
    if ids_a != ids_b {
        return Err(Error::Validation(
            "top_bottom_overlap: indices cover different entities".into(),
        ));
    }
    if 2 * k >= index_a.len() {
        return Err(Error::Validation(format!(
            "top_bottom_overlap: k = {k} must be below n/2 = {}",
            index_a.len() as f64 / 2.0
        )));
    }
    let (ra, rb) = (ranked(index_a), ranked(index_b));
    let n = ra.len();
    let share =
        |x: &[&str], y: &[&str]| x.iter().filter(|id| y.contains(id)).count() as f64 / k as f64;
    Ok(Overlap {
        top_overlap: share(&ra[..k], &rb[..k]),
        bottom_overlap: share(&ra[n - k..], &rb[n - k..]),
        k,
    })
}
