//! Prompt rendering, response parsing, caching and batched scoring against a
//! model provider. [`MockProvider`] gives deterministic scores for tests.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::panel::{ScorePanel, ScoreRecord, SCORE_MAX, SCORE_MIN};

pub const PLACEHOLDER: &str = "{{task}}";
pub const API_KEY_ENV: &str = "LATENT_GAUGE_API_KEY";
/// Outcome terms a scoring template must not mention.
pub const OUTCOME_WORDLIST: [&str; 4] = ["wage", "salary", "employment", "earnings"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    #[default]
    Direct,
    Inverse,
}

/// A score a template asks for. `Single` is stored as the record's
/// augmentation score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchemaField {
    #[serde(rename = "augmentation_0_100")]
    Augmentation,
    #[serde(rename = "substitution_0_100")]
    Substitution,
    #[serde(rename = "single_0_100")]
    Single,
}

impl SchemaField {
    /// JSON key expected in the model's answer.
    pub fn key(self) -> &'static str {
        match self {
            SchemaField::Augmentation => "augmentation",
            SchemaField::Substitution => "substitution",
            SchemaField::Single => "score",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub prompt_id: String,
    pub template_text: String,
    #[serde(default)]
    pub polarity: Polarity,
    pub response_schema: Vec<SchemaField>,
}

impl PromptTemplate {
    pub fn new(
        prompt_id: impl Into<String>,
        template_text: impl Into<String>,
        polarity: Polarity,
        response_schema: Vec<SchemaField>,
    ) -> Result<Self> {
        let t = Self {
            prompt_id: prompt_id.into(),
            template_text: template_text.into(),
            polarity,
            response_schema,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let count = self.template_text.matches(PLACEHOLDER).count();
        if count != 1 {
            return Err(Error::Template(format!(
                "template `{}` must contain exactly one {PLACEHOLDER} placeholder, found {count}",
                self.prompt_id
            )));
        }
        let fields: BTreeSet<_> = self.response_schema.iter().collect();
        if fields.len() != self.response_schema.len() {
            return Err(Error::Template(format!(
                "template `{}` repeats a schema field",
                self.prompt_id
            )));
        }
        let primary = fields.contains(&SchemaField::Augmentation) as u8
            + fields.contains(&SchemaField::Single) as u8;
        if primary != 1 {
            return Err(Error::Template(format!(
                "template `{}` must request exactly one of augmentation_0_100 or single_0_100",
                self.prompt_id
            )));
        }
        Ok(())
    }

    /// Outcome words found in the template text (case-insensitive).
    pub fn lint(&self) -> Vec<String> {
        lint_text(&self.template_text)
    }
}

pub fn lint_text(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    OUTCOME_WORDLIST
        .iter()
        .filter(|w| lower.contains(*w))
        .map(|w| w.to_string())
        .collect()
}

const PAIR_REPLY: &str =
    "Answer only with JSON of the form {\"augmentation\": <0-100>, \"substitution\": <0-100>}.";

/// The four shipped prompt variants. `D` asks for the reversed construct.
pub fn builtin_templates() -> Vec<PromptTemplate> {
    let pair = vec![SchemaField::Augmentation, SchemaField::Substitution];
    let make = |id: &str, body: &str, polarity| PromptTemplate {
        prompt_id: id.into(),
        template_text: format!("{body}\n\nTask: {PLACEHOLDER}\n\n{PAIR_REPLY}"),
        polarity,
        response_schema: pair.clone(),
    };
    vec![
        make(
            "A",
            "Rate the task below on two 0-100 scales. augmentation: how much an AI assistant could help a \
             person carry out the task better or faster. substitution: how much of the task an AI system \
             could carry out with no person involved.",
            Polarity::Direct,
        ),
        make(
            "B",
            "You are an analyst of work activities. For the task below, score augmentation (0-100) as the \
             potential for AI tools to extend what the worker can do, and substitution (0-100) as the share \
             of the activity AI could complete unaided.",
            Polarity::Direct,
        ),
        make(
            "C",
            "Read the task statement below. Judge the cognitive content of the activity. Give augmentation \
             (0-100) for how strongly AI complements the human doing it and substitution (0-100) for how \
             fully AI could replace the human effort.",
            Polarity::Direct,
        ),
        make(
            "D",
            "Rate how resistant the task below is to AI. augmentation: 0-100, where 100 means AI tools offer \
             the person no help at all. substitution: 0-100, where 100 means the task cannot be done \
             without a person.",
            Polarity::Inverse,
        ),
    ]
}

/// Reads a JSON array of templates, validating each.
pub fn load_templates(path: &Path) -> Result<Vec<PromptTemplate>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let templates: Vec<PromptTemplate> =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    for t in &templates {
        t.validate()?;
    }
    Ok(templates)
}

pub fn render_prompt(template: &PromptTemplate, task_text: &str) -> Result<String> {
    template.validate()?;
    if task_text.trim().is_empty() {
        return Err(Error::Template("task text is empty".into()));
    }
    Ok(template.template_text.replacen(PLACEHOLDER, task_text, 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParsedScores {
    pub augmentation: f64,
    pub substitution: Option<f64>,
}

/// Finds the first JSON object in `body` carrying every key of `schema` and
/// checks each value lies in [0, 100].
pub fn parse_response(body: &str, schema: &[SchemaField]) -> Result<ParsedScores> {
    let mut saw_object = false;
    for (i, _) in body.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&body[i..]).into_iter::<Value>();
        let Some(Ok(Value::Object(map))) = stream.next() else {
            continue;
        };
        saw_object = true;
        if !schema.iter().all(|f| map.contains_key(f.key())) {
            continue;
        }
        let mut out = ParsedScores {
            augmentation: f64::NAN,
            substitution: None,
        };
        for f in schema {
            let v = map[f.key()]
                .as_f64()
                .ok_or_else(|| Error::Parse(format!("`{}` is not a number", f.key())))?;
            if !(SCORE_MIN..=SCORE_MAX).contains(&v) {
                return Err(Error::Parse(format!(
                    "`{}` = {v} is outside [{SCORE_MIN}, {SCORE_MAX}]",
                    f.key()
                )));
            }
            match f {
                SchemaField::Augmentation | SchemaField::Single => out.augmentation = v,
                SchemaField::Substitution => out.substitution = Some(v),
            }
        }
        return Ok(out);
    }
    let keys: Vec<_> = schema.iter().map(|f| f.key()).collect();
    if saw_object {
        Err(Error::Parse(format!("no JSON object with keys {keys:?}")))
    } else {
        Err(Error::Parse("no JSON object found".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub provider_name: String,
    pub model_name: String,
    pub endpoint: String,
    pub max_parallel: usize,
    pub max_retries: u32,
    pub cache_dir: Option<PathBuf>,
    /// First retry delay; later retries double it and add up to 100% jitter.
    #[serde(with = "millis")]
    pub backoff_base: Duration,
    pub temperature: f64,
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

impl ProviderConfig {
    pub fn mock(model_name: impl Into<String>) -> Self {
        Self {
            provider_name: "mock".into(),
            model_name: model_name.into(),
            endpoint: String::new(),
            max_parallel: 4,
            max_retries: 3,
            cache_dir: None,
            backoff_base: Duration::ZERO,
            temperature: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_parallel == 0 {
            return Err(Error::Validation("max_parallel must be at least 1".into()));
        }
        Ok(())
    }
}

/// One request handed to a provider.
#[derive(Debug, Clone, Copy)]
pub struct Request<'a> {
    pub task_id: &'a str,
    pub model_name: &'a str,
    pub template: &'a PromptTemplate,
    pub prompt: &'a str,
    pub attempt: u32,
}

pub trait Provider: Sync {
    fn complete(&self, request: &Request<'_>) -> Result<String>;

    /// Requests issued so far.
    fn calls(&self) -> usize;
}

/// Deterministic stand-in for a model.
///
/// Each task gets a base score from a hash of `(seed, task_id)`, shared by
/// every model and prompt. A second hash of `(seed, task_id, prompt_id,
/// model)` adds Gaussian noise with sd `noise_sd`. Inverse prompts report
/// `100 - x`; the model's level offset is added last and the result clamped.
#[derive(Debug, Default)]
pub struct MockProvider {
    pub seed: u64,
    pub offsets: BTreeMap<String, f64>,
    pub noise_sd: f64,
    /// Tasks for which the mock answers with unparseable text.
    pub garbage_tasks: BTreeSet<String>,
    calls: AtomicUsize,
}

impl MockProvider {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            noise_sd: 8.0,
            ..Self::default()
        }
    }

    pub fn with_offset(mut self, model_name: &str, offset: f64) -> Self {
        self.offsets.insert(model_name.to_string(), offset);
        self
    }
}

/// Uniform in [0, 1) from the first 8 bytes of a SHA-256 digest.
fn hash_unit(parts: &[&str]) -> f64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    let d = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&d[..8]);
    (u64::from_le_bytes(bytes) >> 11) as f64 / (1u64 << 53) as f64
}

/// Deterministic mock answer for one request.
pub fn mock_response(
    task_id: &str,
    template: &PromptTemplate,
    model_name: &str,
    seed: u64,
    offset: f64,
    noise_sd: f64,
) -> String {
    let seed = seed.to_string();
    let score = |construct: &str| {
        let base = 5.0 + 80.0 * hash_unit(&[&seed, task_id, construct]);
        // Box-Muller from two independent hash uniforms
        let u1 = hash_unit(&[
            &seed,
            task_id,
            construct,
            &template.prompt_id,
            model_name,
            "u1",
        ])
        .max(1e-300);
        let u2 = hash_unit(&[
            &seed,
            task_id,
            construct,
            &template.prompt_id,
            model_name,
            "u2",
        ]);
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        let mut x = (base + noise_sd * z).clamp(SCORE_MIN, SCORE_MAX);
        if template.polarity == Polarity::Inverse {
            x = SCORE_MAX - x;
        }
        ((x + offset).clamp(SCORE_MIN, SCORE_MAX) * 10.0).round() / 10.0
    };
    let fields: Vec<String> = template
        .response_schema
        .iter()
        .map(|f| {
            let construct = if *f == SchemaField::Substitution {
                "substitution"
            } else {
                "augmentation"
            };
            format!("\"{}\": {}", f.key(), score(construct))
        })
        .collect();
    format!("{{{}}}", fields.join(", "))
}

impl Provider for MockProvider {
    fn complete(&self, request: &Request<'_>) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.garbage_tasks.contains(request.task_id) {
            return Ok("I am unable to rate this task.".into());
        }
        let offset = self.offsets.get(request.model_name).copied().unwrap_or(0.0);
        Ok(mock_response(
            request.task_id,
            request.template,
            request.model_name,
            self.seed,
            offset,
            self.noise_sd,
        ))
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

/// Sends `{"model", "prompt", "temperature"}` as JSON to a configured
/// endpoint. The reply's `output` string is used when present, otherwise the
/// whole body.
pub struct HttpProvider {
    endpoint: String,
    api_key: Option<String>,
    temperature: f64,
    agent: ureq::Agent,
    calls: AtomicUsize,
}

impl HttpProvider {
    pub fn new(config: &ProviderConfig) -> Result<Self> {
        if config.endpoint.is_empty() {
            return Err(Error::Validation("http provider needs an endpoint".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .new_agent();
        Ok(Self {
            endpoint: config.endpoint.clone(),
            api_key: std::env::var(API_KEY_ENV).ok(),
            temperature: config.temperature,
            agent,
            calls: AtomicUsize::new(0),
        })
    }
}

impl Provider for HttpProvider {
    fn complete(&self, request: &Request<'_>) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let payload = serde_json::json!({
            "model": request.model_name,
            "prompt": request.prompt,
            "temperature": self.temperature,
        });
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&payload)
            .map_err(|e| Error::Provider(e.to_string()))?;
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Provider(e.to_string()))?;
        match serde_json::from_str::<Value>(&body) {
            Ok(Value::Object(map)) => match map.get("output") {
                Some(Value::String(s)) => Ok(s.clone()),
                _ => Ok(body),
            },
            _ => Ok(body),
        }
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

/// A task statement to score, with the fields the panel needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub occupation_code: String,
    pub weight: f64,
    pub task_text: String,
}

/// Reads a CSV with columns `task_id, occupation_code, weight, task_text`.
pub fn load_tasks(path: &Path) -> Result<Vec<Task>> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let mut tasks = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, row) in reader.deserialize::<Task>().enumerate() {
        let task = row.map_err(|e| Error::format(path, format!("row {}: {e}", i + 2)))?;
        if !ids.insert(task.task_id.clone()) {
            return Err(Error::format(
                path,
                format!("row {}: duplicate task_id `{}`", i + 2, task.task_id),
            ));
        }
        tasks.push(task);
    }
    Ok(tasks)
}

/// Cache key: SHA-256 over model, prompt id, task id and template text.
pub fn cache_key(model_name: &str, prompt_id: &str, task_id: &str, template_text: &str) -> String {
    let mut h = Sha256::new();
    for p in [model_name, prompt_id, task_id, template_text] {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}

fn cache_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("{key}.txt"))
}

fn cache_store(dir: &Path, key: &str, body: &str) -> Result<()> {
    let path = cache_path(dir, key);
    let tmp = dir.join(format!("{key}.tmp"));
    fs::write(&tmp, body).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RawResponse {
    pub task_id: String,
    pub rater_id: String,
    pub prompt_id: String,
    pub body: String,
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub task_id: String,
    pub attempts: u32,
    pub error: String,
    pub last_response: Option<RawResponse>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoringRun {
    /// Records in task input order.
    pub records: Vec<ScoreRecord>,
    pub failures: Vec<Failure>,
    pub cache_hits: usize,
    pub provider_calls: usize,
}

impl ScoringRun {
    pub fn into_panel(self, metadata: BTreeMap<String, String>) -> Result<ScorePanel> {
        ScorePanel::new(self.records, metadata)
    }
}

enum Outcome {
    Scored(ScoreRecord, bool),
    Failed(Failure),
}

/// Scores every task with one template. Work is spread over
/// `config.max_parallel` threads; results come back in input order
/// regardless of completion order.
pub fn score_tasks(
    tasks: &[Task],
    template: &PromptTemplate,
    config: &ProviderConfig,
    provider: &dyn Provider,
) -> Result<ScoringRun> {
    config.validate()?;
    template.validate()?;
    if let Some(dir) = &config.cache_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let calls_before = provider.calls();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Outcome>>> = Mutex::new((0..tasks.len()).map(|_| None).collect());
    let workers = config.max_parallel.min(tasks.len()).max(1);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(task) = tasks.get(i) else { break };
                let outcome = score_one(task, template, config, provider);
                results.lock().expect("result lock poisoned")[i] = Some(outcome);
            });
        }
    });

    let mut run = ScoringRun {
        records: Vec::with_capacity(tasks.len()),
        failures: Vec::new(),
        cache_hits: 0,
        provider_calls: provider.calls() - calls_before,
    };
    for outcome in results
        .into_inner()
        .expect("result lock poisoned")
        .into_iter()
        .flatten()
    {
        match outcome {
            Outcome::Scored(r, hit) => {
                run.cache_hits += hit as usize;
                run.records.push(r);
            }
            Outcome::Failed(f) => run.failures.push(f),
        }
    }
    if !run.failures.is_empty() {
        log::warn!("{} task(s) failed after retries", run.failures.len());
    }
    Ok(run)
}

fn score_one(
    task: &Task,
    template: &PromptTemplate,
    config: &ProviderConfig,
    provider: &dyn Provider,
) -> Outcome {
    let record = |s: ParsedScores| ScoreRecord {
        task_id: task.task_id.clone(),
        occupation_code: task.occupation_code.clone(),
        rater_id: config.model_name.clone(),
        prompt_id: template.prompt_id.clone(),
        augmentation: s.augmentation,
        substitution: s.substitution,
        weight: task.weight,
    };
    let fail = |attempts, error: String, last_response| {
        Outcome::Failed(Failure {
            task_id: task.task_id.clone(),
            attempts,
            error,
            last_response,
        })
    };
    let prompt = match render_prompt(template, &task.task_text) {
        Ok(p) => p,
        Err(e) => return fail(0, e.to_string(), None),
    };
    let key = cache_key(
        &config.model_name,
        &template.prompt_id,
        &task.task_id,
        &template.template_text,
    );
    if let Some(dir) = &config.cache_dir {
        if let Ok(body) = fs::read_to_string(cache_path(dir, &key)) {
            if let Ok(s) = parse_response(&body, &template.response_schema) {
                return Outcome::Scored(record(s), true);
            }
        }
    }

    let mut last_error = String::new();
    let mut last_response = None;
    let max_attempts = config.max_retries + 1;
    for attempt in 1..=max_attempts {
        let request = Request {
            task_id: &task.task_id,
            model_name: &config.model_name,
            template,
            prompt: &prompt,
            attempt,
        };
        match provider.complete(&request) {
            Ok(body) => match parse_response(&body, &template.response_schema) {
                Ok(s) => {
                    if let Some(dir) = &config.cache_dir {
                        if let Err(e) = cache_store(dir, &key, &body) {
                            log::warn!("cache write failed: {e}");
                        }
                    }
                    return Outcome::Scored(record(s), false);
                }
                Err(e) => {
                    last_error = e.to_string();
                    last_response = Some(RawResponse {
                        task_id: task.task_id.clone(),
                        rater_id: config.model_name.clone(),
                        prompt_id: template.prompt_id.clone(),
                        body,
                        attempt,
                    });
                }
            },
            Err(e) => last_error = e.to_string(),
        }
        if attempt < max_attempts && !config.backoff_base.is_zero() {
            let base = config.backoff_base * 2u32.saturating_pow(attempt - 1);
            let jitter = rand::rng().random_range(0.0..1.0);
            std::thread::sleep(base.mul_f64(1.0 + jitter));
        }
    }
    fail(max_attempts, last_error, last_response)
}
