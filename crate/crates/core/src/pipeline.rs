//! End-to-end validity run driven by a flat `key = value` config file.
//!
//! Stages run in order: ingest, lint, aggregate, reliability, pca,
//! sensitivity, econometrics. An I/O or format failure in any stage halts
//! the run with the stage name; analyses that cannot be evaluated on the
//! given data are marked as such in the report instead.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::aggregate::{
    aggregate_occupations, check_monotonicity, AggregateOptions, Aggregation, MonotonicityCheck,
};
use crate::dimensionality::{correlation_matrix, pca, MissingPolicy, PcaResult};
use crate::econometrics::{
    attenuation_factor, ols, oriv, AttenuationEstimate, Dataset, RegressionResult,
};
use crate::error::{Error, Result};
use crate::harness::{builtin_templates, load_templates, PromptTemplate};
use crate::panel::{
    load_index_table, load_panel, IndexColumn, IndexTable, PanelFormat, ScoreField,
};
use crate::reliability::{paired_units, top_bottom_overlap, Level, Overlap, ReliabilityReport};
use crate::sensitivity::{
    detect_and_invert, prompt_rank_matrix, variance_decomposition, PromptRankMatrix,
    VarianceDecomposition,
};

pub const REPORT_SCHEMA_VERSION: &str = "1";

/// Every key the config file accepts.
pub const CONFIG_KEYS: [&str; 17] = [
    "panel",
    "panel_format",
    "field",
    "primary_rater",
    "secondary_rater",
    "baseline_prompt",
    "inverse_prompts",
    "templates",
    "outcome_data",
    "outcome",
    "controls",
    "external_indices",
    "alpha_threshold",
    "rho_threshold",
    "weak_iv_f",
    "convergent_threshold",
    "min_tasks",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub panel: PathBuf,
    pub panel_format: PanelFormat,
    pub field: ScoreField,
    pub primary_rater: Option<String>,
    pub secondary_rater: Option<String>,
    pub baseline_prompt: String,
    pub inverse_prompts: Vec<String>,
    pub templates: Option<PathBuf>,
    pub outcome_data: Option<PathBuf>,
    pub outcome: Option<String>,
    pub controls: Vec<String>,
    pub external_indices: Option<PathBuf>,
    pub alpha_threshold: f64,
    pub rho_threshold: f64,
    pub weak_iv_f: f64,
    pub convergent_threshold: f64,
    pub min_tasks: usize,
    /// Settings as written in the file, echoed into the report.
    pub raw: BTreeMap<String, String>,
}

fn list(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text, resolving relative paths against `base`. All
    /// problems are collected and returned together.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut problems = Vec::new();
        let mut raw = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                problems.push(format!("line {}: expected `key = value`", i + 1));
                continue;
            };
            let (k, v) = (k.trim(), v.trim());
            if !CONFIG_KEYS.contains(&k) {
                problems.push(format!("line {}: unknown key `{k}`", i + 1));
            } else if raw.insert(k.to_string(), v.to_string()).is_some() {
                problems.push(format!("line {}: key `{k}` given more than once", i + 1));
            }
        }

        let get = |k: &str| raw.get(k).map(String::as_str).filter(|v| !v.is_empty());
        let path_of = |k: &str, required: bool, problems: &mut Vec<String>| -> Option<PathBuf> {
            match get(k) {
                Some(v) => {
                    let p = base.join(v);
                    if !p.is_file() {
                        problems.push(format!("`{k}`: file `{}` not found", p.display()));
                    }
                    Some(p)
                }
                None => {
                    if required {
                        problems.push(format!("`{k}` is required"));
                    }
                    None
                }
            }
        };
        let panel = path_of("panel", true, &mut problems);
        let templates = path_of("templates", false, &mut problems);
        let outcome_data = path_of("outcome_data", false, &mut problems);
        let external_indices = path_of("external_indices", false, &mut problems);

        let number = |k: &str, default: f64, problems: &mut Vec<String>| match get(k) {
            None => default,
            Some(v) => match v.parse::<f64>() {
                Ok(x) if x.is_finite() => x,
                _ => {
                    problems.push(format!("`{k}`: `{v}` is not a number"));
                    default
                }
            },
        };
        let alpha_threshold = number("alpha_threshold", 0.7, &mut problems);
        let rho_threshold = number("rho_threshold", 0.7, &mut problems);
        let weak_iv_f = number("weak_iv_f", 10.0, &mut problems);
        let convergent_threshold = number("convergent_threshold", 0.5, &mut problems);
        let min_tasks = match get("min_tasks") {
            None => 1,
            Some(v) => v.parse().unwrap_or_else(|_| {
                problems.push(format!("`min_tasks`: `{v}` is not a non-negative integer"));
                1
            }),
        };

        let field = match get("field").map(str::parse::<ScoreField>) {
            None => ScoreField::Augmentation,
            Some(Ok(f)) => f,
            Some(Err(e)) => {
                problems.push(format!("`field`: {e}"));
                ScoreField::Augmentation
            }
        };
        let panel_format = match get("panel_format") {
            Some(v) => v.parse().unwrap_or_else(|e: Error| {
                problems.push(format!("`panel_format`: {e}"));
                PanelFormat::Csv
            }),
            None => panel
                .as_deref()
                .map_or(PanelFormat::Csv, PanelFormat::from_path),
        };
        let primary_rater = get("primary_rater").map(String::from);
        let secondary_rater = get("secondary_rater").map(String::from);
        if primary_rater.is_some() && primary_rater == secondary_rater {
            problems.push("`secondary_rater` must differ from `primary_rater`".into());
        }
        let outcome = get("outcome").map(String::from);
        if outcome_data.is_some() != outcome.is_some() {
            problems.push("`outcome_data` and `outcome` must be given together".into());
        }
        let controls = get("controls").map(list).unwrap_or_default();
        if !controls.is_empty() && outcome.is_none() {
            problems.push("`controls` given without `outcome`".into());
        }

        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        Ok(Self {
            panel: panel.expect("checked above"),
            panel_format,
            field,
            primary_rater,
            secondary_rater,
            baseline_prompt: get("baseline_prompt").unwrap_or("A").to_string(),
            inverse_prompts: get("inverse_prompts").map(list).unwrap_or_default(),
            templates,
            outcome_data,
            outcome,
            controls,
            external_indices,
            alpha_threshold,
            rho_threshold,
            weak_iv_f,
            convergent_threshold,
            min_tasks,
            raw,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Warn,
    Fail,
    NotEvaluable,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChecklistItem {
    pub item: u8,
    pub key: &'static str,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelSummary {
    pub n_records: usize,
    pub n_tasks: usize,
    pub n_occupations: usize,
    pub raters: Vec<String>,
    pub prompts: Vec<String>,
    pub degenerate_occupations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemplateLint {
    pub prompt_id: String,
    pub terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LintSection {
    pub status: Status,
    pub templates_checked: Vec<String>,
    pub offending: Vec<TemplateLint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergentSection {
    pub status: Status,
    pub target: String,
    pub strongest_correlate: Option<String>,
    pub r: Option<f64>,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicitySection {
    pub status: Status,
    pub check: MonotonicityCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceSection {
    pub status: Status,
    pub level: Level,
    pub rater_a: String,
    pub rater_b: Option<String>,
    pub spearman_rho: Option<f64>,
    pub alpha_mean_adjusted: Option<f64>,
    pub alpha_raw: Option<f64>,
    pub rho_threshold: f64,
    pub alpha_threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReliabilitySection {
    pub prompt: String,
    pub task: Option<ReliabilityReport<f64>>,
    pub occupation: Option<ReliabilityReport<f64>>,
    /// Shared share of the top and bottom deciles of occupations.
    pub overlap: Option<Overlap>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcaSection {
    pub result: Option<PcaResult<f64>>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivitySection {
    pub rater: String,
    pub matrix_before: Option<PromptRankMatrix>,
    pub inverted: Vec<String>,
    pub matrix_after: Option<PromptRankMatrix>,
    pub all_positive_after: Option<bool>,
    pub decomposition: Option<VarianceDecomposition<f64>>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EconometricsSection {
    pub attenuation: Option<AttenuationEstimate<f64>>,
    pub ols: Option<RegressionResult<f64>>,
    pub oriv: Option<RegressionResult<f64>>,
    /// ORIV slope over OLS slope. Reported next to `attenuation.correction`;
    /// the two need not agree.
    pub oriv_ols_ratio: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidityReport {
    pub schema_version: &'static str,
    pub config: BTreeMap<String, String>,
    pub field: ScoreField,
    pub panel: PanelSummary,
    pub condition1_lint: LintSection,
    pub condition2_convergent: ConvergentSection,
    pub condition3_monotonicity: MonotonicitySection,
    pub condition4_invariance: InvarianceSection,
    pub aggregation: AggregationSummary,
    pub reliability: ReliabilitySection,
    pub pca: PcaSection,
    pub sensitivity: SensitivitySection,
    pub econometrics: EconometricsSection,
    pub checklist: Vec<ChecklistItem>,
    pub overall: Status,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregationSummary {
    pub n_indices: usize,
    pub excluded: usize,
    pub sparse: usize,
    pub unstandardized_groups: Vec<(String, String)>,
}

impl ValidityReport {
    /// Statuses of every condition section and checklist item.
    pub fn statuses(&self) -> Vec<Status> {
        let mut s = vec![
            self.condition1_lint.status,
            self.condition2_convergent.status,
            self.condition3_monotonicity.status,
            self.condition4_invariance.status,
        ];
        s.extend(self.checklist.iter().map(|c| c.status));
        s
    }

    pub fn has_failure(&self) -> bool {
        self.statuses().contains(&Status::Fail)
    }

    /// 0 when nothing failed, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.has_failure() {
            2
        } else {
            0
        }
    }
}

fn stage(name: &'static str) -> impl Fn(Error) -> Error {
    move |e| Error::Stage {
        stage: name,
        source: Box::new(e),
    }
}

/// Standardized occupation index for one (rater, prompt).
fn index_of(agg: &Aggregation, rater: &str, prompt: &str) -> Vec<(String, f64)> {
    agg.group(rater, prompt)
        .into_iter()
        .filter_map(|i| Some((i.occupation_code.clone(), i.value_std?)))
        .collect()
}

fn column_from(codes: &[String], name: String, index: &[(String, f64)]) -> IndexColumn {
    let map: BTreeMap<&str, f64> = index.iter().map(|(c, v)| (c.as_str(), *v)).collect();
    IndexColumn {
        name,
        values: codes.iter().map(|c| map.get(c.as_str()).copied()).collect(),
    }
}

pub fn run_pipeline(config_path: &Path) -> Result<ValidityReport> {
    let config = PipelineConfig::load(config_path)?;
    run_with_config(&config)
}

pub fn run_with_config(cfg: &PipelineConfig) -> Result<ValidityReport> {
    let mut warnings = Vec::new();

    // ingest
    let ingest = stage("ingest");
    let panel = load_panel(&cfg.panel, cfg.panel_format).map_err(&ingest)?;
    let templates: Vec<PromptTemplate> = match &cfg.templates {
        Some(p) => load_templates(p).map_err(&ingest)?,
        None => builtin_templates(),
    };
    let external = cfg
        .external_indices
        .as_deref()
        .map(load_index_table)
        .transpose()
        .map_err(&ingest)?;
    let outcome_table = cfg
        .outcome_data
        .as_deref()
        .map(load_index_table)
        .transpose()
        .map_err(&ingest)?;
    let raters = panel.raters();
    let prompts = panel.prompts();
    let primary = cfg
        .primary_rater
        .clone()
        .unwrap_or_else(|| raters[0].clone());
    let mut missing = Vec::new();
    if !raters.contains(&primary) {
        missing.push(format!("primary rater `{primary}` not in panel"));
    }
    if let Some(s) = &cfg.secondary_rater {
        if !raters.contains(s) {
            missing.push(format!("secondary rater `{s}` not in panel"));
        }
    }
    if !prompts.contains(&cfg.baseline_prompt) {
        missing.push(format!(
            "baseline prompt `{}` not in panel",
            cfg.baseline_prompt
        ));
    }
    if !missing.is_empty() {
        return Err(ingest(Error::Validation(missing.join("; "))));
    }
    let secondary = cfg.secondary_rater.clone();
    let field = cfg.field;
    let degenerate = panel.degenerate_occupations();
    if !degenerate.is_empty() {
        warnings.push(format!(
            "{} occupation(s) have no positive task weight",
            degenerate.len()
        ));
    }
    let panel_summary = PanelSummary {
        n_records: panel.len(),
        n_tasks: panel
            .records()
            .iter()
            .map(|r| &r.task_id)
            .collect::<BTreeSet<_>>()
            .len(),
        n_occupations: panel.occupations().len(),
        raters: raters.clone(),
        prompts: prompts.clone(),
        degenerate_occupations: degenerate,
    };

    // condition 1
    let offending: Vec<TemplateLint> = templates
        .iter()
        .filter_map(|t| {
            let terms = t.lint();
            (!terms.is_empty()).then(|| TemplateLint {
                prompt_id: t.prompt_id.clone(),
                terms,
            })
        })
        .collect();
    let lint = LintSection {
        status: if offending.is_empty() {
            Status::Pass
        } else {
            Status::Warn
        },
        templates_checked: templates.iter().map(|t| t.prompt_id.clone()).collect(),
        offending,
    };

    // aggregate
    let options = AggregateOptions {
        min_tasks: cfg.min_tasks,
    };
    let agg = aggregate_occupations(&panel, field, options);
    let other_field = match field {
        ScoreField::Augmentation => ScoreField::Substitution,
        ScoreField::Substitution => ScoreField::Augmentation,
    };
    let agg_other = aggregate_occupations(&panel, other_field, options);
    let mono = check_monotonicity(&panel, field);
    let aggregation = AggregationSummary {
        n_indices: agg.indices.len(),
        excluded: agg.excluded.len(),
        sparse: agg.indices.iter().filter(|i| i.sparse).count(),
        unstandardized_groups: agg.unstandardized_groups.clone(),
    };
    let monotonicity = MonotonicitySection {
        status: if mono.passed() {
            Status::Pass
        } else {
            Status::Fail
        },
        check: mono,
    };

    // reliability on the baseline prompt
    let baseline = cfg.baseline_prompt.as_str();
    let mut reliability = ReliabilitySection {
        prompt: baseline.to_string(),
        task: None,
        occupation: None,
        overlap: None,
        notes: Vec::new(),
    };
    let primary_index = index_of(&agg, &primary, baseline);
    let secondary_index = secondary.as_deref().map(|s| index_of(&agg, s, baseline));
    if let Some(sec) = &secondary {
        let base_panel = panel
            .filter(|r| r.prompt_id == baseline)
            .map_err(stage("reliability"))?;
        for level in [Level::Task, Level::Occupation] {
            let units = paired_units(&base_panel, &primary, sec, level, field);
            match ReliabilityReport::from_pairs(&units) {
                Ok(r) => match level {
                    Level::Task => reliability.task = Some(r),
                    Level::Occupation => reliability.occupation = Some(r),
                },
                Err(e) => reliability.notes.push(format!("{level:?} level: {e}")),
            }
        }
        let (a, b) = (&primary_index, secondary_index.as_deref().unwrap_or(&[]));
        let shared: BTreeSet<&str> = b.iter().map(|p| p.0.as_str()).collect();
        let a: Vec<(String, f64)> = a
            .iter()
            .filter(|p| shared.contains(p.0.as_str()))
            .cloned()
            .collect();
        let in_a: BTreeSet<&str> = a.iter().map(|p| p.0.as_str()).collect();
        let b: Vec<(String, f64)> = b
            .iter()
            .filter(|p| in_a.contains(p.0.as_str()))
            .cloned()
            .collect();
        match top_bottom_overlap(&a, &b, (a.len() / 10).max(1)) {
            Ok(o) => reliability.overlap = Some(o),
            Err(e) => reliability.notes.push(format!("overlap: {e}")),
        }
    } else {
        reliability
            .notes
            .push("no secondary rater configured".into());
    }

    let invariance = {
        let occ = reliability.occupation.as_ref();
        let (status, detail) = match (&secondary, occ) {
            (None, _) => (
                Status::NotEvaluable,
                "second rater not configured".to_string(),
            ),
            (Some(_), None) => (
                Status::NotEvaluable,
                "no shared occupations between raters".to_string(),
            ),
            (Some(_), Some(r)) => {
                let alpha_ok = r.alpha_mean_adjusted >= cfg.alpha_threshold;
                let rho_ok = r.spearman_rho >= cfg.rho_threshold;
                let status = match (alpha_ok, rho_ok) {
                    (true, true) => Status::Pass,
                    (true, false) => Status::Warn,
                    (false, _) => Status::Fail,
                };
                (
                    status,
                    format!(
                        "mean-adjusted alpha {:.3} vs {}, spearman rho {:.3} vs {}",
                        r.alpha_mean_adjusted,
                        cfg.alpha_threshold,
                        r.spearman_rho,
                        cfg.rho_threshold
                    ),
                )
            }
        };
        InvarianceSection {
            status,
            level: Level::Occupation,
            rater_a: primary.clone(),
            rater_b: secondary.clone(),
            spearman_rho: occ.map(|r| r.spearman_rho),
            alpha_mean_adjusted: occ.map(|r| r.alpha_mean_adjusted),
            alpha_raw: occ.map(|r| r.alpha_raw),
            rho_threshold: cfg.rho_threshold,
            alpha_threshold: cfg.alpha_threshold,
            detail,
        }
    };

    // pca over the baseline indices of each rater and field, plus externals
    let target = format!("{primary}_{field}");
    let codes = panel.occupations();
    let mut own_columns = Vec::new();
    for rater in std::iter::once(&primary).chain(secondary.as_ref()) {
        for (f, a) in [(field, &agg), (other_field, &agg_other)] {
            let idx = index_of(a, rater, baseline);
            if !idx.is_empty() {
                own_columns.push(column_from(&codes, format!("{rater}_{f}"), &idx));
            }
        }
    }
    let own_table = IndexTable::new(codes.clone(), own_columns).map_err(stage("pca"))?;
    let joined = match &external {
        Some(ext) => own_table.join(ext).map_err(stage("pca"))?,
        None => own_table,
    };
    let mut pca_section = PcaSection {
        result: None,
        notes: Vec::new(),
    };
    if joined.columns().len() < 2 {
        pca_section
            .notes
            .push("fewer than two index columns".into());
    } else {
        match pca(&joined) {
            Ok(r) => pca_section.result = Some(r),
            Err(e) => pca_section.notes.push(e.to_string()),
        }
    }

    // condition 2: strongest external correlate of the primary index
    let convergent = match &external {
        None => ConvergentSection {
            status: Status::Skipped,
            target: target.clone(),
            strongest_correlate: None,
            r: None,
            threshold: cfg.convergent_threshold,
            detail: "no external index provided".into(),
        },
        Some(ext) => {
            let corr = correlation_matrix(&joined, MissingPolicy::PairwiseComplete)
                .map_err(stage("pca"))?;
            let best = ext
                .columns()
                .iter()
                .filter_map(|c| Some((c.name.clone(), corr.get(&target, &c.name)?)))
                .fold(None::<(String, f64)>, |best, (n, r)| match best {
                    Some((_, b)) if b >= r => best,
                    _ => Some((n, r)),
                });
            let (status, detail) = match &best {
                None => (
                    Status::NotEvaluable,
                    "no external column overlaps the primary index".into(),
                ),
                Some((n, r)) if *r >= cfg.convergent_threshold => {
                    (Status::Pass, format!("r = {r:.3} with {n}"))
                }
                Some((n, r)) => (
                    Status::Warn,
                    format!("r = {r:.3} with {n} is below {}", cfg.convergent_threshold),
                ),
            };
            ConvergentSection {
                status,
                target: target.clone(),
                strongest_correlate: best.as_ref().map(|b| b.0.clone()),
                r: best.map(|b| b.1),
                threshold: cfg.convergent_threshold,
                detail,
            }
        }
    };

    // sensitivity for the primary rater
    let mut sensitivity = SensitivitySection {
        rater: primary.clone(),
        matrix_before: None,
        inverted: Vec::new(),
        matrix_after: None,
        all_positive_after: None,
        decomposition: None,
        notes: Vec::new(),
    };
    let mut ambiguous = None;
    let n_prompts = panel
        .for_rater(&primary)
        .map(|p| p.prompts().len())
        .unwrap_or(0);
    if n_prompts >= 2 {
        match prompt_rank_matrix(&panel, &primary, field) {
            Ok(m) => {
                match detect_and_invert(&m, &panel, &cfg.inverse_prompts, field) {
                    Ok(inv) => {
                        let entries = inv.matrix_after.entries.iter().flatten().flatten();
                        sensitivity.all_positive_after = Some(entries.clone().all(|r| *r > 0.0));
                        match variance_decomposition(&inv.panel, &primary, field) {
                            Ok(d) => sensitivity.decomposition = Some(d),
                            Err(e) => sensitivity.notes.push(format!("decomposition: {e}")),
                        }
                        sensitivity.inverted = inv.inverted;
                        sensitivity.matrix_after = Some(inv.matrix_after);
                    }
                    Err(e @ Error::AmbiguousPolarity(_)) => ambiguous = Some(e.to_string()),
                    Err(e) => sensitivity.notes.push(format!("inversion: {e}")),
                }
                sensitivity.matrix_before = Some(m);
            }
            Err(e) => sensitivity.notes.push(format!("rank matrix: {e}")),
        }
    } else {
        sensitivity.notes.push(format!(
            "rater `{primary}` has {n_prompts} prompt variant(s)"
        ));
    }
    if let Some(a) = &ambiguous {
        sensitivity.notes.push(a.clone());
    }

    // econometrics
    let mut econ = EconometricsSection {
        attenuation: None,
        ols: None,
        oriv: None,
        oriv_ols_ratio: None,
        notes: Vec::new(),
    };
    let secondary_name = secondary.as_ref().map(|s| format!("{s}_{field}"));
    if let Some(sec_idx) = &secondary_index {
        let map: BTreeMap<&str, f64> = sec_idx.iter().map(|(c, v)| (c.as_str(), *v)).collect();
        let (a, b): (Vec<f64>, Vec<f64>) = primary_index
            .iter()
            .filter_map(|(c, v)| Some((*v, *map.get(c.as_str())?)))
            .unzip();
        match attenuation_factor(&a, &b) {
            Ok(est) => econ.attenuation = Some(est),
            Err(e) => econ.notes.push(format!("attenuation: {e}")),
        }
    }
    match (&outcome_table, &cfg.outcome) {
        (Some(table), Some(outcome)) => {
            let mut columns = vec![column_from(
                table.occupation_codes(),
                target.clone(),
                &primary_index,
            )];
            if let (Some(name), Some(idx)) = (&secondary_name, &secondary_index) {
                columns.push(column_from(table.occupation_codes(), name.clone(), idx));
            }
            let mut needed = vec![outcome.clone()];
            needed.extend(cfg.controls.iter().cloned());
            for n in &needed {
                let col = table
                    .column(n)
                    .ok_or_else(|| Error::Validation(format!("outcome data has no column `{n}`")))
                    .map_err(stage("econometrics"))?;
                columns.push(col.clone());
            }
            let rows: Vec<usize> = (0..table.n_rows())
                .filter(|&i| columns.iter().all(|c| c.values[i].is_some()))
                .collect();
            let dropped = table.n_rows() - rows.len();
            if dropped > 0 {
                econ.notes.push(format!(
                    "{dropped} occupation(s) dropped for missing values"
                ));
            }
            let data = Dataset::new(
                columns
                    .iter()
                    .map(|c| {
                        (
                            c.name.clone(),
                            rows.iter()
                                .map(|&i| c.values[i].expect("complete row"))
                                .collect(),
                        )
                    })
                    .collect(),
            )
            .map_err(stage("econometrics"))?;
            let mut regressors = vec![target.clone()];
            regressors.extend(cfg.controls.iter().cloned());
            match ols(&data, outcome, &regressors) {
                Ok(r) => econ.ols = Some(r),
                Err(e) => econ.notes.push(format!("ols: {e}")),
            }
            if let Some(name) = &secondary_name {
                match oriv(&data, outcome, &target, name, &cfg.controls) {
                    Ok(r) => {
                        if let Some(o) = &econ.ols {
                            econ.oriv_ols_ratio = Some(r.coef(&target) / o.coef(&target));
                        }
                        econ.oriv = Some(r);
                    }
                    Err(e) => econ.notes.push(format!("oriv: {e}")),
                }
            }
        }
        _ => econ.notes.push("no outcome data configured".into()),
    }

    // checklist
    let two_raters = secondary.is_some();
    let mut checklist = Vec::new();
    let mut item = |n: u8, key: &'static str, status: Status, detail: String| {
        checklist.push(ChecklistItem {
            item: n,
            key,
            status,
            detail,
        })
    };
    item(
        1,
        "semantic_prompts",
        lint.status,
        if lint.offending.is_empty() {
            format!(
                "{} template(s) free of outcome terms",
                lint.templates_checked.len()
            )
        } else {
            let ids: Vec<&str> = lint
                .offending
                .iter()
                .map(|o| o.prompt_id.as_str())
                .collect();
            format!("outcome terms in template(s) {}", ids.join(", "))
        },
    );
    item(
        2,
        "multiple_raters",
        if two_raters {
            Status::Pass
        } else {
            Status::Warn
        },
        match &secondary {
            Some(s) => format!("{primary} and {s}"),
            None => "only one rater configured; invariance cannot be assessed".into(),
        },
    );
    item(
        3,
        "cross_rater_reliability",
        invariance.status,
        invariance.detail.clone(),
    );
    let unstandardized = agg.unstandardized_groups.len();
    item(
        4,
        "standardized_indices",
        if unstandardized == 0 {
            Status::Pass
        } else {
            Status::Warn
        },
        match (unstandardized, &reliability.occupation) {
            (0, Some(r)) => format!(
                "indices z-scored per rater and prompt; level bias of {:.2} points removed",
                r.mean_bias
            ),
            (0, None) => "indices z-scored per rater and prompt".into(),
            (n, _) => format!("{n} rater/prompt group(s) could not be standardized"),
        },
    );
    let oriv_status = match (&econ.oriv, two_raters, &econ.ols) {
        (_, false, _) => (Status::NotEvaluable, "needs a second rater".to_string()),
        (None, true, None) if outcome_table.is_none() => {
            (Status::Skipped, "no outcome data configured".into())
        }
        (None, true, _) => (Status::Fail, econ.notes.join("; ")),
        (Some(r), true, _) => {
            let f = r.first_stage_f.unwrap_or(f64::NAN);
            if f < cfg.weak_iv_f {
                (
                    Status::Warn,
                    format!("first-stage F = {f:.1} below {}", cfg.weak_iv_f),
                )
            } else {
                (Status::Pass, format!("first-stage F = {f:.1}"))
            }
        }
    };
    item(5, "oriv", oriv_status.0, oriv_status.1);
    let sens_status = if ambiguous.is_some() {
        (Status::Fail, "prompt polarity is ambiguous".to_string())
    } else if n_prompts < 2 {
        (
            Status::NotEvaluable,
            format!("{n_prompts} prompt variant(s)"),
        )
    } else {
        match (&sensitivity.decomposition, sensitivity.all_positive_after) {
            (Some(d), Some(true)) if n_prompts >= 3 => (
                Status::Pass,
                format!(
                    "{n_prompts} variants; shares task {:.3}, prompt {:.3}, residual {:.3}",
                    d.share_task, d.share_prompt, d.share_residual
                ),
            ),
            (Some(_), Some(true)) => (Status::Warn, "only 2 prompt variants".into()),
            (_, Some(false)) => (
                Status::Warn,
                "negative prompt correlations remain after inversion".into(),
            ),
            _ => (Status::NotEvaluable, sensitivity.notes.join("; ")),
        }
    };
    item(6, "prompt_sensitivity", sens_status.0, sens_status.1);
    item(
        7,
        "external_validation",
        convergent.status,
        match convergent.status {
            Status::Skipped => "skipped: no external index provided".into(),
            _ => convergent.detail.clone(),
        },
    );

    let mut all = vec![
        lint.status,
        convergent.status,
        monotonicity.status,
        invariance.status,
    ];
    all.extend(checklist.iter().map(|c| c.status));
    let overall = if all.contains(&Status::Fail) {
        Status::Fail
    } else if all.contains(&Status::Warn) {
        Status::Warn
    } else {
        Status::Pass
    };

    Ok(ValidityReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: cfg.raw.clone(),
        field,
        panel: panel_summary,
        condition1_lint: lint,
        condition2_convergent: convergent,
        condition3_monotonicity: monotonicity,
        condition4_invariance: invariance,
        aggregation,
        reliability,
        pca: pca_section,
        sensitivity,
        econometrics: econ,
        checklist,
        overall,
        warnings,
    })
}

/// Writes a synthetic study (panel, outcome table, config) into `dir` and
/// returns the config path.
pub fn write_study_bundle(study: &crate::simulate::Study, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    crate::panel::write_panel(&study.panel, &dir.join("panel.csv"), PanelFormat::Csv)?;
    let outcomes = dir.join("outcomes.csv");
    let mut w =
        csv::Writer::from_path(&outcomes).map_err(|e| Error::format(&outcomes, e.to_string()))?;
    for row in &study.outcomes {
        w.serialize(row)
            .map_err(|e| Error::format(&outcomes, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(&outcomes, e))?;
    let raters = study.panel.raters();
    let mut text = String::from("# synthetic study\npanel = panel.csv\nfield = augmentation\n");
    text.push_str(&format!("primary_rater = {}\n", raters[0]));
    if let Some(s) = raters.get(1) {
        text.push_str(&format!("secondary_rater = {s}\n"));
    }
    text.push_str(
        "baseline_prompt = A\noutcome_data = outcomes.csv\noutcome = y\ncontrols = control\n",
    );
    let config = dir.join("pipeline.conf");
    fs::write(&config, text).map_err(|e| Error::io(&config, e))?;
    Ok(config)
}
