//! Synthetic data with a known measurement structure.
//!
//! Every generator draws from `ChaCha8Rng::seed_from_u64(seed)` with a fixed
//! stream id per column (see the `STREAM_*` constants), so each column is
//! reproducible on its own and adding a column never perturbs the others.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::econometrics::Dataset;
use crate::error::{Error, Result};
use crate::panel::{ScorePanel, ScoreRecord, SCORE_MAX, SCORE_MIN};
use crate::stats::{mean, sum_sq_dev, variance_sample};

pub const STREAM_LATENT: u64 = 0;
pub const STREAM_OUTCOME: u64 = 1;
pub const STREAM_COMMON_NOISE: u64 = 2;
pub const STREAM_CONTROL: u64 = 3;
pub const STREAM_WEIGHT: u64 = 4;
pub const STREAM_SUBSTITUTION: u64 = 5;
pub const STREAM_PROMPT_SHIFT: u64 = 6;
/// Per-measure (or per rater/prompt cell) noise streams start here.
pub const STREAM_MEASURE_BASE: u64 = 16;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn normals(seed: u64, stream: u64, n: usize) -> Vec<f64> {
    let mut r = rng(seed, stream);
    (0..n).map(|_| r.sample(StandardNormal)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseFamily {
    #[default]
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub beta: f64,
    pub lambda_true: f64,
    pub noise_family: NoiseFamily,
    /// One entry per measure: name and constant level offset.
    pub level_offsets: Vec<(String, f64)>,
    pub seed: u64,
    /// Correlation between the measurement errors of different measures.
    pub noise_correlation: f64,
    pub outcome_noise_sd: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            beta: 0.1,
            lambda_true: 0.8,
            noise_family: NoiseFamily::Gaussian,
            level_offsets: vec![("measure_a".into(), 0.0), ("measure_b".into(), 0.0)],
            seed: 0,
            noise_correlation: 0.0,
            outcome_noise_sd: 0.25,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n < 10 {
            problems.push(format!("n must be at least 10, got {}", self.n));
        }
        if !(self.lambda_true > 0.0 && self.lambda_true <= 1.0) {
            problems.push(format!(
                "lambda_true must lie in (0, 1], got {}",
                self.lambda_true
            ));
        }
        if !(0.0..1.0).contains(&self.noise_correlation) {
            problems.push(format!(
                "noise_correlation must lie in [0, 1), got {}",
                self.noise_correlation
            ));
        }
        if !(self.outcome_noise_sd >= 0.0 && self.outcome_noise_sd.is_finite()) {
            problems.push("outcome_noise_sd must be finite and non-negative".into());
        }
        if !self.beta.is_finite() {
            problems.push("beta must be finite".into());
        }
        if self.level_offsets.is_empty() {
            problems.push("at least one measure is required".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Measurement-error variance giving the configured reliability for a
    /// unit-variance latent.
    pub fn noise_variance(&self) -> f64 {
        (1.0 - self.lambda_true) / self.lambda_true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimPanel {
    pub latent: Vec<f64>,
    pub measures: Vec<(String, Vec<f64>)>,
    pub outcome: Vec<f64>,
    /// Sample `Var(latent) / Var(measure)` for each measure.
    pub realized_lambda: Vec<(String, f64)>,
}

impl SimPanel {
    pub fn measure(&self, name: &str) -> Option<&[f64]> {
        self.measures
            .iter()
            .find(|m| m.0 == name)
            .map(|m| m.1.as_slice())
    }

    /// Columns `latent`, `y`, then one per measure.
    pub fn to_dataset(&self) -> Result<Dataset<f64>> {
        let mut cols = vec![
            ("latent".to_string(), self.latent.clone()),
            ("y".to_string(), self.outcome.clone()),
        ];
        cols.extend(self.measures.iter().cloned());
        Dataset::new(cols)
    }
}

/// Draws `H* ~ N(0,1)`, measures `H* + eta_j + offset_j` and outcome
/// `beta H* + eps`.
pub fn simulate_measurement(config: &SimConfig) -> Result<SimPanel> {
    config.validate()?;
    let n = config.n;
    let latent = normals(config.seed, STREAM_LATENT, n);
    let eps = normals(config.seed, STREAM_OUTCOME, n);
    let outcome = latent
        .iter()
        .zip(&eps)
        .map(|(h, e)| config.beta * h + config.outcome_noise_sd * e)
        .collect();

    let sd = config.noise_variance().sqrt();
    let rho = config.noise_correlation;
    let common = if rho > 0.0 {
        normals(config.seed, STREAM_COMMON_NOISE, n)
    } else {
        vec![0.0; n]
    };
    let var_latent = variance_sample(&latent);
    let mut measures = Vec::new();
    let mut realized_lambda = Vec::new();
    for (j, (name, offset)) in config.level_offsets.iter().enumerate() {
        let values: Vec<f64> = if sd == 0.0 {
            latent.iter().map(|h| h + offset).collect()
        } else {
            let own = normals(config.seed, STREAM_MEASURE_BASE + j as u64, n);
            latent
                .iter()
                .zip(own.iter().zip(&common))
                .map(|(h, (z, c))| h + sd * ((1.0 - rho).sqrt() * z + rho.sqrt() * c) + offset)
                .collect()
        };
        realized_lambda.push((name.clone(), var_latent / variance_sample(&values)));
        measures.push((name.clone(), values));
    }
    Ok(SimPanel {
        latent,
        measures,
        outcome,
        realized_lambda,
    })
}

/// Planted variance shares for a task-by-prompt grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptGridConfig {
    pub n_tasks: usize,
    pub n_prompts: usize,
    /// (task, prompt, residual); must sum to one.
    pub shares: (f64, f64, f64),
    pub mean: f64,
    pub sd: f64,
    pub seed: u64,
    pub rater_id: String,
}

impl Default for PromptGridConfig {
    fn default() -> Self {
        Self {
            n_tasks: 1000,
            n_prompts: 4,
            shares: (0.14, 0.22, 0.64),
            mean: 50.0,
            sd: 15.0,
            seed: 0,
            rater_id: "sim".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptGrid {
    pub panel: ScorePanel,
    pub clipped_cells: usize,
    pub clip_rate: f64,
    /// Set when more than 1% of cells were clipped.
    pub warning: Option<String>,
}

pub const CLIP_WARNING_RATE: f64 = 0.01;

/// Prompt labels `A`, `B`, ..., `Z`, `P26`, `P27`, ...
pub fn prompt_label(i: usize) -> String {
    if i < 26 {
        char::from(b'A' + i as u8).to_string()
    } else {
        format!("P{i}")
    }
}

/// Rescales `x` to mean zero and sample variance `target`.
fn rescale(x: &mut [f64], target: f64) {
    let m = mean(x);
    let v = sum_sq_dev(x) / (x.len() as f64 - 1.0);
    let k = if v > 0.0 { (target / v).sqrt() } else { 0.0 };
    for xi in x.iter_mut() {
        *xi = (*xi - m) * k;
    }
}

/// `score = mean + sd (u_t + v_p + e_tp)`, clipped to the score range.
///
/// Task and prompt effects are rescaled so their sample variances equal the
/// planted shares exactly; the residual is drawn at its planted variance.
pub fn simulate_prompt_grid(config: &PromptGridConfig) -> Result<PromptGrid> {
    let (st, sp, se) = config.shares;
    let mut problems = Vec::new();
    if [st, sp, se].iter().any(|s| !(s.is_finite() && *s >= 0.0))
        || ((st + sp + se) - 1.0).abs() > 1e-9
    {
        problems.push(format!(
            "shares must be non-negative and sum to 1, got ({st}, {sp}, {se})"
        ));
    }
    if config.n_tasks < 2 || config.n_prompts < 2 {
        problems.push("grid needs at least 2 tasks and 2 prompts".into());
    }
    if config.sd.is_nan() || config.sd <= 0.0 {
        problems.push("sd must be positive".into());
    }
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let (t, p) = (config.n_tasks, config.n_prompts);
    let mut u = normals(config.seed, STREAM_LATENT, t);
    rescale(&mut u, st);
    let mut v = normals(config.seed, STREAM_COMMON_NOISE, p);
    rescale(&mut v, sp);
    let e = normals(config.seed, STREAM_MEASURE_BASE, t * p);
    let e_sd = se.sqrt();

    let mut records = Vec::with_capacity(t * p);
    let mut clipped_cells = 0;
    for ti in 0..t {
        for pi in 0..p {
            let raw = config.mean + config.sd * (u[ti] + v[pi] + e_sd * e[ti * p + pi]);
            let score = raw.clamp(SCORE_MIN, SCORE_MAX);
            if score != raw {
                clipped_cells += 1;
            }
            records.push(ScoreRecord {
                task_id: format!("t{ti:05}"),
                occupation_code: format!("occ{:04}", ti / 10),
                rater_id: config.rater_id.clone(),
                prompt_id: prompt_label(pi),
                augmentation: score,
                substitution: None,
                weight: 1.0,
            });
        }
    }
    let clip_rate = clipped_cells as f64 / (t * p) as f64;
    let warning = (clip_rate > CLIP_WARNING_RATE).then(|| {
        let msg = format!(
            "{:.2}% of grid cells were clipped to the score range",
            100.0 * clip_rate
        );
        log::warn!("{msg}");
        msg
    });
    let mut metadata = BTreeMap::new();
    metadata.insert("source".into(), "simulate_prompt_grid".into());
    metadata.insert("seed".into(), config.seed.to_string());
    Ok(PromptGrid {
        panel: ScorePanel::new(records, metadata)?,
        clipped_cells,
        clip_rate,
        warning,
    })
}

/// A full synthetic study: task-level scores from several raters and prompt
/// variants plus an occupation-level outcome table.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub n_occupations: usize,
    pub tasks_per_occupation: usize,
    /// Rater ids with their level offsets in score points.
    pub raters: Vec<(String, f64)>,
    pub prompts: Vec<String>,
    /// Prompts that score the reversed construct (reported as `100 - x`).
    pub inverse_prompts: Vec<String>,
    /// Independent noise per (rater, prompt, task) score, in points.
    pub noise_sd: f64,
    /// Spread of the per-prompt level shifts, in points.
    pub prompt_shift_sd: f64,
    /// Latent spread in points.
    pub signal_sd: f64,
    /// Share of latent variance that is common to an occupation's tasks.
    pub occupation_share: f64,
    /// Outcome slope on the standardized occupation latent.
    pub beta: f64,
    pub outcome_noise_sd: f64,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            n_occupations: 200,
            tasks_per_occupation: 8,
            raters: vec![("rater_a".into(), 0.0), ("rater_b".into(), 8.6)],
            prompts: ["A", "B", "C", "D"].map(String::from).to_vec(),
            inverse_prompts: vec!["D".into()],
            noise_sd: 8.7,
            prompt_shift_sd: 3.0,
            signal_sd: 15.0,
            occupation_share: 0.6,
            beta: 0.1,
            outcome_noise_sd: 0.25,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    pub panel: ScorePanel,
    pub outcomes: Vec<OutcomeRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeRow {
    pub occupation_code: String,
    pub y: f64,
    pub control: f64,
    pub latent: f64,
}

pub fn simulate_study(config: &StudyConfig) -> Result<Study> {
    let mut problems = Vec::new();
    if config.n_occupations < 10 {
        problems.push("n_occupations must be at least 10".into());
    }
    if config.tasks_per_occupation == 0 {
        problems.push("tasks_per_occupation must be positive".into());
    }
    if config.raters.is_empty() || config.prompts.is_empty() {
        problems.push("at least one rater and one prompt are required".into());
    }
    if !(0.0..=1.0).contains(&config.occupation_share) {
        problems.push("occupation_share must lie in [0, 1]".into());
    }
    for p in &config.inverse_prompts {
        if !config.prompts.contains(p) {
            problems.push(format!("inverse prompt `{p}` is not among the prompts"));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }

    let (n_occ, per) = (config.n_occupations, config.tasks_per_occupation);
    let n_tasks = n_occ * per;
    let occ_effect = normals(config.seed, STREAM_LATENT, n_occ);
    let task_dev = normals(config.seed, STREAM_OUTCOME, n_tasks);
    let sub_dev = normals(config.seed, STREAM_SUBSTITUTION, n_tasks);
    let mut weight_rng = rng(config.seed, STREAM_WEIGHT);
    let weights: Vec<f64> = (0..n_tasks)
        .map(|_| (weight_rng.random_range(1.0..5.0) * 100.0_f64).round() / 100.0)
        .collect();
    let (a, b) = (
        config.occupation_share.sqrt(),
        (1.0 - config.occupation_share).sqrt(),
    );
    let latent: Vec<f64> = (0..n_tasks)
        .map(|t| a * occ_effect[t / per] + b * task_dev[t])
        .collect();

    let prompt_shift = normals(config.seed, STREAM_PROMPT_SHIFT, config.prompts.len());
    let occ_code = |o: usize| format!("{:02}-{:04}", 11 + o / 1000, o % 1000);
    let mut records = Vec::with_capacity(n_tasks * config.raters.len() * config.prompts.len());
    let mut stream = STREAM_MEASURE_BASE;
    for (rater, offset) in &config.raters {
        for (pi, prompt) in config.prompts.iter().enumerate() {
            let shift = config.prompt_shift_sd * prompt_shift[pi];
            let noise = normals(config.seed, stream, 2 * n_tasks);
            stream += 1;
            let inverse = config.inverse_prompts.contains(prompt);
            // rater level offset goes on last, after any reversal
            let finish = |x: f64| {
                let x = x.clamp(SCORE_MIN, SCORE_MAX);
                let x = if inverse { SCORE_MAX - x } else { x };
                ((x + offset).clamp(SCORE_MIN, SCORE_MAX) * 10.0).round() / 10.0
            };
            for t in 0..n_tasks {
                let aug = finish(
                    50.0 + config.signal_sd * latent[t] + shift + config.noise_sd * noise[2 * t],
                );
                let sub_latent = -0.3 * latent[t] + (0.91f64).sqrt() * sub_dev[t];
                let sub = finish(
                    50.0 + config.signal_sd * sub_latent
                        + shift
                        + config.noise_sd * noise[2 * t + 1],
                );
                records.push(ScoreRecord {
                    task_id: format!("task{t:06}"),
                    occupation_code: occ_code(t / per),
                    rater_id: rater.clone(),
                    prompt_id: prompt.clone(),
                    augmentation: aug,
                    substitution: Some(sub),
                    weight: weights[t],
                });
            }
        }
    }

    let occ_latent: Vec<f64> = (0..n_occ)
        .map(|o| {
            let range = o * per..(o + 1) * per;
            let w: f64 = weights[range.clone()].iter().sum();
            range.map(|t| weights[t] * latent[t]).sum::<f64>() / w
        })
        .collect();
    let z = crate::stats::standardize(&occ_latent)?;
    let control = normals(config.seed, STREAM_CONTROL, n_occ);
    let eps = normals(config.seed, STREAM_COMMON_NOISE, n_occ);
    let outcomes = (0..n_occ)
        .map(|o| OutcomeRow {
            occupation_code: occ_code(o),
            y: config.beta * z[o] + 0.05 * control[o] + config.outcome_noise_sd * eps[o],
            control: control[o],
            latent: occ_latent[o],
        })
        .collect();

    let mut metadata = BTreeMap::new();
    metadata.insert("source".into(), "simulate_study".into());
    metadata.insert("seed".into(), config.seed.to_string());
    Ok(Study {
        panel: ScorePanel::new(records, metadata)?,
        outcomes,
    })
}
