use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use latent_gauge::aggregate::{aggregate_occupations, check_monotonicity, AggregateOptions};
use latent_gauge::dimensionality::{correlation_matrix, pca, write_loadings_csv, MissingPolicy};
use latent_gauge::econometrics::{attenuation_factor, horse_race, ols, oriv, Block, Dataset};
use latent_gauge::harness::{
    builtin_templates, load_tasks, load_templates, score_tasks, HttpProvider, MockProvider,
    Provider, ProviderConfig,
};
use latent_gauge::panel::{
    load_index_table, load_panel, write_panel, IndexColumn, IndexTable, PanelFormat, ScoreField,
    ScorePanel,
};
use latent_gauge::pipeline::{run_pipeline, write_study_bundle};
use latent_gauge::reliability::{paired_units, reliability_matrix, Level};
use latent_gauge::report::{render, to_report_value, ReportFormat};
use latent_gauge::sensitivity::{detect_and_invert, prompt_rank_matrix, variance_decomposition};
use latent_gauge::simulate::{
    simulate_measurement, simulate_prompt_grid, simulate_study, PromptGridConfig, SimConfig,
    StudyConfig,
};
use serde::Serialize;
use serde_json::json;

use crate::{
    AggregateArgs, Cli, Command, Format, HorseraceArgs, OrivArgs, PcaArgs, PromptsArgs,
    ReliabilityArgs, ReportArgs, ScoreArgs, SimKind, SimulateArgs,
};

pub fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Score(a) => score(cli, a),
        Command::Aggregate(a) => aggregate(cli, a),
        Command::Reliability(a) => reliability(cli, a),
        Command::Pca(a) => principal_components(cli, a),
        Command::Prompts(a) => prompts(cli, a),
        Command::Oriv(a) => oriv_cmd(cli, a),
        Command::Horserace(a) => horserace(cli, a),
        Command::Simulate(a) => simulate(cli, a),
        Command::Report(a) => report(cli, a),
    }
}

fn report_format(cli: &Cli) -> ReportFormat {
    match cli.format {
        Format::Json => ReportFormat::Json,
        Format::Markdown => ReportFormat::Markdown,
    }
}

/// Renders `value` to `dest`, or stdout when `dest` is `None`.
fn emit<S: Serialize>(cli: &Cli, value: &S, dest: Option<&Path>) -> Result<()> {
    let text = render(&to_report_value(value)?, report_format(cli));
    match dest {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn field(s: &str) -> Result<ScoreField> {
    Ok(s.parse()?)
}

fn read_panel(path: &Path) -> Result<ScorePanel> {
    load_panel(path, PanelFormat::from_path(path))
        .with_context(|| format!("loading panel {}", path.display()))
}

fn required_out(cli: &Cli, what: &str) -> Result<PathBuf> {
    cli.out
        .clone()
        .ok_or_else(|| anyhow!("--out is required for {what}"))
}

fn score(cli: &Cli, a: &ScoreArgs) -> Result<u8> {
    let out = required_out(cli, "score (panel destination)")?;
    let tasks = load_tasks(&a.tasks)?;
    let templates = match &a.templates {
        Some(path) => load_templates(path)?,
        None => builtin_templates(),
    };
    let config = ProviderConfig {
        provider_name: if a.mock {
            "mock".into()
        } else {
            a.provider.clone()
        },
        model_name: a.model.clone(),
        endpoint: a.endpoint.clone().unwrap_or_default(),
        max_parallel: a.parallel,
        max_retries: a.retries,
        cache_dir: a.cache.clone(),
        backoff_base: Duration::from_millis(a.backoff_ms),
        temperature: 0.0,
    };
    let provider: Box<dyn Provider> = if a.mock {
        let mut mock = MockProvider::new(cli.seed).with_offset(&a.model, a.offset);
        mock.noise_sd = a.noise_sd;
        Box::new(mock)
    } else {
        Box::new(HttpProvider::new(&config)?)
    };

    let (mut records, metadata) = match &a.merge {
        Some(path) => read_panel(path)?.into_parts(),
        None => (Vec::new(), BTreeMap::new()),
    };
    let mut failures = Vec::new();
    let (mut cache_hits, mut provider_calls) = (0, 0);
    for id in &a.template {
        let template = templates
            .iter()
            .find(|t| &t.prompt_id == id)
            .ok_or_else(|| anyhow!("no template with prompt_id `{id}`"))?;
        let run = score_tasks(&tasks, template, &config, provider.as_ref())?;
        cache_hits += run.cache_hits;
        provider_calls += run.provider_calls;
        records.extend(run.records);
        failures.extend(run.failures);
    }
    let scored = records.len();
    let panel = ScorePanel::new(records, metadata)?;
    write_panel(&panel, &out, PanelFormat::from_path(&out))?;

    let manifest = if failures.is_empty() {
        None
    } else {
        let path = a.manifest.clone().unwrap_or_else(|| {
            let mut p = out.clone().into_os_string();
            p.push(".failures.json");
            PathBuf::from(p)
        });
        fs::write(&path, serde_json::to_string_pretty(&failures)?)?;
        Some(path)
    };
    emit(
        cli,
        &json!({
            "panel": out,
            "records": scored,
            "tasks": tasks.len(),
            "templates": a.template,
            "cache_hits": cache_hits,
            "provider_calls": provider_calls,
            "failures": failures.len(),
            "failure_manifest": manifest,
        }),
        None,
    )?;
    Ok(0)
}

fn aggregate(cli: &Cli, a: &AggregateArgs) -> Result<u8> {
    let panel = read_panel(&a.panel)?;
    let f = field(&a.field)?;
    let agg = aggregate_occupations(
        &panel,
        f,
        AggregateOptions {
            min_tasks: a.min_tasks,
        },
    );
    if let Some(path) = &a.wide {
        let codes: Vec<String> = agg
            .indices
            .iter()
            .map(|i| i.occupation_code.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut groups: BTreeMap<String, BTreeMap<&str, f64>> = BTreeMap::new();
        for i in &agg.indices {
            let col = groups
                .entry(format!("{}_{}", i.rater_id, i.prompt_id))
                .or_default();
            if let Some(v) = i.value_std {
                col.insert(&i.occupation_code, v);
            }
        }
        let columns = groups
            .into_iter()
            .map(|(name, vals)| IndexColumn {
                name,
                values: codes
                    .iter()
                    .map(|c| vals.get(c.as_str()).copied())
                    .collect(),
            })
            .collect();
        IndexTable::new(codes, columns)?.write_csv(path)?;
    }
    let monotonicity = check_monotonicity(&panel, f);
    emit(
        cli,
        &json!({ "aggregation": agg, "monotonicity": monotonicity }),
        cli.out.as_deref(),
    )?;
    Ok(0)
}

fn reliability(cli: &Cli, a: &ReliabilityArgs) -> Result<u8> {
    let mut panel = read_panel(&a.panel)?;
    if let Some(p) = &a.prompt {
        panel = panel.filter(|r| &r.prompt_id == p)?;
    }
    let level: Level = a.level.parse()?;
    let f = field(&a.field)?;
    let matrix = reliability_matrix(&panel, level, f, a.threshold);
    if let Some(path) = &a.pairs_csv {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["rater_a", "rater_b", "unit_id", "a", "b", "mean", "diff"])?;
        for pair in &matrix.pairs {
            for u in paired_units(&panel, &pair.rater_a, &pair.rater_b, level, f) {
                w.write_record([
                    pair.rater_a.clone(),
                    pair.rater_b.clone(),
                    u.unit_id,
                    u.a.to_string(),
                    u.b.to_string(),
                    ((u.a + u.b) / 2.0).to_string(),
                    (u.a - u.b).to_string(),
                ])?;
            }
        }
        w.flush()?;
    }
    emit(cli, &matrix, cli.out.as_deref())?;
    Ok(0)
}

fn principal_components(cli: &Cli, a: &PcaArgs) -> Result<u8> {
    let table = load_index_table(&a.indices)?;
    let corr = correlation_matrix(&table, MissingPolicy::PairwiseComplete)?;
    let result = pca(&table)?;
    if let Some(path) = &a.loadings {
        write_loadings_csv(&result, path)?;
    }
    emit(
        cli,
        &json!({ "correlation": corr, "pca": result }),
        cli.out.as_deref(),
    )?;
    Ok(0)
}

fn prompts(cli: &Cli, a: &PromptsArgs) -> Result<u8> {
    let panel = read_panel(&a.panel)?;
    let f = field(&a.field)?;
    let matrix = prompt_rank_matrix(&panel, &a.rater, f)?;
    let inversion = detect_and_invert(&matrix, &panel, &a.inverse, f)?;
    let (decomposition, note) = match variance_decomposition(&inversion.panel, &a.rater, f) {
        Ok(d) => (Some(d), None),
        Err(e) => (None, Some(e.to_string())),
    };
    emit(
        cli,
        &json!({
            "rater": a.rater,
            "field": f,
            "rank_matrix": matrix,
            "inversion": inversion,
            "variance_decomposition": decomposition,
            "decomposition_error": note,
        }),
        cli.out.as_deref(),
    )?;
    Ok(0)
}

fn oriv_cmd(cli: &Cli, a: &OrivArgs) -> Result<u8> {
    let data = Dataset::from_csv(&a.data, a.cluster.as_deref())?;
    let mut regressors = vec![a.measure_a.clone()];
    regressors.extend(a.controls.iter().cloned());
    let naive = ols(&data, &a.outcome, &regressors)?;
    let stacked = oriv(&data, &a.outcome, &a.measure_a, &a.measure_b, &a.controls)?;
    let atten = attenuation_factor(data.column(&a.measure_a)?, data.column(&a.measure_b)?).ok();
    let ratio = stacked.coef(&a.measure_a) / naive.coef(&a.measure_a);
    emit(
        cli,
        &json!({
            "ols": naive,
            "oriv": stacked,
            "attenuation": atten,
            "oriv_ols_ratio": ratio,
        }),
        cli.out.as_deref(),
    )?;
    Ok(0)
}

fn horserace(cli: &Cli, a: &HorseraceArgs) -> Result<u8> {
    let data = Dataset::from_csv(&a.data, None)?;
    let text =
        fs::read_to_string(&a.blocks).with_context(|| format!("reading {}", a.blocks.display()))?;
    let blocks: Vec<Block> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", a.blocks.display()))?;
    let rows = horse_race(&data, &a.outcome, &a.controls, &blocks)?;
    emit(
        cli,
        &json!({ "outcome": a.outcome, "rows": rows }),
        cli.out.as_deref(),
    )?;
    Ok(0)
}

fn parse_offsets(items: &[String]) -> Result<Vec<(String, f64)>> {
    items
        .iter()
        .map(|s| {
            let (name, v) = s.split_once('=').unwrap_or((s.as_str(), "0"));
            let v: f64 = v
                .trim()
                .parse()
                .with_context(|| format!("bad offset in `{s}`"))?;
            Ok((name.trim().to_string(), v))
        })
        .collect()
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<u8> {
    let out = required_out(cli, "simulate")?;
    let summary = match a.kind {
        SimKind::Measurement => {
            let cfg = SimConfig {
                n: a.n,
                beta: a.beta,
                lambda_true: a.lambda,
                level_offsets: parse_offsets(&a.offsets)?,
                seed: cli.seed,
                noise_correlation: a.noise_corr,
                outcome_noise_sd: a.outcome_sd,
                ..SimConfig::default()
            };
            let sim = simulate_measurement(&cfg)?;
            sim.to_dataset()?.write_csv(&out)?;
            json!({
                "kind": "measurement",
                "data": out,
                "n": cfg.n,
                "beta": cfg.beta,
                "lambda_true": cfg.lambda_true,
                "realized_lambda": sim.realized_lambda.iter().cloned().collect::<BTreeMap<_, _>>(),
            })
        }
        SimKind::Grid => {
            let [task, prompt, residual] = a.shares[..] else {
                bail!("--shares needs three values (task, prompt, residual)");
            };
            let cfg = PromptGridConfig {
                n_tasks: a.n,
                n_prompts: a.prompts,
                shares: (task, prompt, residual),
                seed: cli.seed,
                ..PromptGridConfig::default()
            };
            let grid = simulate_prompt_grid(&cfg)?;
            write_panel(&grid.panel, &out, PanelFormat::from_path(&out))?;
            json!({
                "kind": "grid",
                "panel": out,
                "n_tasks": cfg.n_tasks,
                "n_prompts": cfg.n_prompts,
                "shares": [task, prompt, residual],
                "clipped_cells": grid.clipped_cells,
                "clip_rate": grid.clip_rate,
                "warning": grid.warning,
            })
        }
        SimKind::Study => {
            let defaults = StudyConfig::default();
            let mut raters = defaults.raters.clone();
            if let Some(second) = raters.get_mut(1) {
                second.1 = a.rater_offset;
            }
            let cfg = StudyConfig {
                n_occupations: a.occupations,
                tasks_per_occupation: a.tasks_per_occupation,
                raters,
                beta: a.beta,
                outcome_noise_sd: a.outcome_sd,
                seed: cli.seed,
                ..defaults
            };
            let study = simulate_study(&cfg)?;
            let config = write_study_bundle(&study, &out)?;
            json!({
                "kind": "study",
                "dir": out,
                "config": config,
                "records": study.panel.len(),
                "occupations": study.outcomes.len(),
                "raters": cfg.raters,
            })
        }
    };
    emit(cli, &summary, None)?;
    Ok(0)
}

fn report(cli: &Cli, a: &ReportArgs) -> Result<u8> {
    let report = run_pipeline(&a.config)?;
    emit(cli, &report, cli.out.as_deref())?;
    Ok(report.exit_code() as u8)
}
