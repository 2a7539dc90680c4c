//! Deterministic JSON and Markdown report serialization.
//!
//! Any `Serialize` value is normalized before writing: object keys are
//! sorted, floats are rounded to 6 significant digits, and non-finite floats
//! become `null` with an entry in the top-level `warnings` array.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};
use serde_value::Value as Raw;

use crate::error::{Error, Result};

pub const SIGNIFICANT_DIGITS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::Validation(format!(
                "unknown report format `{other}`"
            ))),
        }
    }
}

/// Rounds to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_significant(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .unwrap_or(x)
}

fn key_string(k: Raw) -> String {
    match k {
        Raw::String(s) => s,
        Raw::Char(c) => c.to_string(),
        Raw::Bool(b) => b.to_string(),
        Raw::U8(v) => v.to_string(),
        Raw::U16(v) => v.to_string(),
        Raw::U32(v) => v.to_string(),
        Raw::U64(v) => v.to_string(),
        Raw::I8(v) => v.to_string(),
        Raw::I16(v) => v.to_string(),
        Raw::I32(v) => v.to_string(),
        Raw::I64(v) => v.to_string(),
        Raw::Newtype(inner) => key_string(*inner),
        other => format!("{other:?}"),
    }
}

fn normalize(v: Raw, path: &str, warnings: &mut Vec<String>) -> Value {
    let float = |x: f64, warnings: &mut Vec<String>| match Number::from_f64(round_significant(x)) {
        Some(n) => Value::Number(n),
        None => {
            warnings.push(format!("{path}: non-finite value ({x}) written as null"));
            Value::Null
        }
    };
    match v {
        Raw::Bool(b) => Value::Bool(b),
        Raw::U8(x) => Value::from(x),
        Raw::U16(x) => Value::from(x),
        Raw::U32(x) => Value::from(x),
        Raw::U64(x) => Value::from(x),
        Raw::I8(x) => Value::from(x),
        Raw::I16(x) => Value::from(x),
        Raw::I32(x) => Value::from(x),
        Raw::I64(x) => Value::from(x),
        Raw::F32(x) => float(f64::from(x), warnings),
        Raw::F64(x) => float(x, warnings),
        Raw::Char(c) => Value::String(c.to_string()),
        Raw::String(s) => Value::String(s),
        Raw::Unit => Value::Null,
        Raw::Option(None) => Value::Null,
        Raw::Option(Some(inner)) | Raw::Newtype(inner) => normalize(*inner, path, warnings),
        Raw::Seq(items) => Value::Array(
            items
                .into_iter()
                .enumerate()
                .map(|(i, x)| normalize(x, &format!("{path}[{i}]"), warnings))
                .collect(),
        ),
        Raw::Map(map) => {
            let mut out = Map::new();
            for (k, x) in map {
                let k = key_string(k);
                let child = if path.is_empty() {
                    k.clone()
                } else {
                    format!("{path}.{k}")
                };
                out.insert(k, normalize(x, &child, warnings));
            }
            Value::Object(out)
        }
        Raw::Bytes(b) => Value::String(hex::encode(b)),
    }
}

/// Normalized JSON value for `report`.
pub fn to_report_value<S: Serialize + ?Sized>(report: &S) -> Result<Value> {
    let raw = serde_value::to_value(report)
        .map_err(|e| Error::Validation(format!("report serialization: {e}")))?;
    let mut warnings = Vec::new();
    let mut value = normalize(raw, "", &mut warnings);
    if let Value::Object(map) = &mut value {
        let slot = map
            .entry("warnings")
            .or_insert_with(|| Value::Array(Vec::new()));
        match slot {
            Value::Array(existing) => existing.extend(warnings.into_iter().map(Value::String)),
            _ => log::warn!(
                "report has a non-array `warnings` field; {} warning(s) dropped",
                warnings.len()
            ),
        }
    } else if !warnings.is_empty() {
        log::warn!("{}", warnings.join("; "));
    }
    Ok(value)
}

pub fn render(report: &Value, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("json values always serialize");
            s.push('\n');
            s
        }
        ReportFormat::Markdown => render_markdown(report),
    }
}

pub fn write_report<S: Serialize + ?Sized>(
    report: &S,
    path: &Path,
    format: ReportFormat,
) -> Result<()> {
    let text = render(&to_report_value(report)?, format);
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.replace('|', "\\|"),
        other => other.to_string(),
    }
}

fn is_scalar(v: &Value) -> bool {
    !matches!(v, Value::Array(_) | Value::Object(_))
}

/// Arrays of flat objects with identical keys become tables; everything else
/// is a nested bullet list.
fn table_columns(items: &[Value]) -> Option<Vec<String>> {
    let first = items.first()?.as_object()?;
    let cols: Vec<String> = first.keys().cloned().collect();
    let uniform = items.iter().all(|it| {
        it.as_object()
            .is_some_and(|o| o.keys().eq(cols.iter()) && o.values().all(is_scalar))
    });
    uniform.then_some(cols)
}

fn markdown_value(out: &mut String, v: &Value, depth: usize) {
    let pad = "  ".repeat(depth);
    match v {
        Value::Object(map) if map.is_empty() => {
            let _ = writeln!(out, "{pad}- {{}}");
        }
        Value::Object(map) => {
            for (k, x) in map {
                if is_scalar(x) {
                    let _ = writeln!(out, "{pad}- **{k}**: {}", scalar_text(x));
                } else if matches!(x, Value::Array(a) if a.is_empty()) {
                    let _ = writeln!(out, "{pad}- **{k}**: []");
                } else {
                    let _ = writeln!(out, "{pad}- **{k}**:");
                    markdown_value(out, x, depth + 1);
                }
            }
        }
        Value::Array(items) if items.is_empty() => {
            let _ = writeln!(out, "{pad}- []");
        }
        Value::Array(items) => {
            if let Some(cols) = table_columns(items) {
                out.push('\n');
                let _ = writeln!(out, "| {} |", cols.join(" | "));
                let _ = writeln!(out, "|{}", "---|".repeat(cols.len()));
                for it in items {
                    let row: Vec<String> = cols.iter().map(|c| scalar_text(&it[c])).collect();
                    let _ = writeln!(out, "| {} |", row.join(" | "));
                }
                out.push('\n');
            } else {
                for (i, x) in items.iter().enumerate() {
                    if is_scalar(x) {
                        let _ = writeln!(out, "{pad}- {}", scalar_text(x));
                    } else {
                        let _ = writeln!(out, "{pad}- [{i}]");
                        markdown_value(out, x, depth + 1);
                    }
                }
            }
        }
        scalar => {
            let _ = writeln!(out, "{pad}- {}", scalar_text(scalar));
        }
    }
}

fn render_markdown(v: &Value) -> String {
    let mut out = String::from("# Report\n");
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                let _ = write!(out, "\n## {k}\n\n");
                match x {
                    Value::Array(a) if a.is_empty() => out.push_str("[]\n"),
                    x if is_scalar(x) => {
                        let _ = writeln!(out, "{}", scalar_text(x));
                    }
                    x => markdown_value(&mut out, x, 0),
                }
            }
        }
        other => markdown_value(&mut out, other, 0),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Demo {
        zeta: f64,
        alpha: Vec<u32>,
        ratio: f64,
        missing: Option<f64>,
    }

    #[test]
    fn keys_sorted_and_floats_rounded() {
        let v = to_report_value(&Demo {
            zeta: 1.0 / 3.0,
            alpha: vec![],
            ratio: 123456789.0,
            missing: None,
        })
        .unwrap();
        let text = render(&v, ReportFormat::Json);
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["alpha", "missing", "ratio", "warnings", "zeta"]);
        assert!(text.contains("0.333333"), "{text}");
        assert!(text.contains("123457000"), "{text}");
        assert!(text.contains("\"alpha\": []"), "{text}");
    }

    #[test]
    fn nan_becomes_null_with_warning() {
        let v = to_report_value(&Demo {
            zeta: f64::NAN,
            alpha: vec![1],
            ratio: 1.0,
            missing: Some(2.0),
        })
        .unwrap();
        assert_eq!(v["zeta"], Value::Null);
        let w = v["warnings"].as_array().unwrap();
        assert_eq!(w.len(), 1);
        assert!(w[0].as_str().unwrap().starts_with("zeta"));
    }

    #[test]
    fn round_significant_digits() {
        assert_eq!(round_significant(0.1234567), 0.123457);
        assert_eq!(round_significant(-98765.43), -98765.4);
        assert_eq!(round_significant(0.0), 0.0);
    }

    #[test]
    fn markdown_mirrors_values() {
        #[derive(Serialize)]
        struct Row {
            name: &'static str,
            r: f64,
        }
        #[derive(Serialize)]
        struct R {
            rows: Vec<Row>,
            empty: Vec<Row>,
            title: &'static str,
        }
        let v = to_report_value(&R {
            rows: vec![Row { name: "a", r: 0.5 }, Row { name: "b", r: 0.25 }],
            empty: vec![],
            title: "t",
        })
        .unwrap();
        let md = render(&v, ReportFormat::Markdown);
        assert!(md.contains("## empty\n\n[]"), "{md}");
        assert!(md.contains("| name | r |"), "{md}");
        assert!(md.contains("| a | 0.5 |"), "{md}");
    }
}
