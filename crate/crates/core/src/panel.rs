//! Score panels and external index tables: data model, validation and file
//! ingest/emit.
//!
//! The canonical interchange format is CSV with the columns
//! `task_id, occupation_code, rater_id, prompt_id, augmentation, substitution, weight`.
//! JSONL with the same field names per line is also accepted.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use crate::report::{write_report, ReportFormat};

pub const SCORE_MIN: f64 = 0.0;
pub const SCORE_MAX: f64 = 100.0;

pub const PANEL_COLUMNS: [&str; 7] = [
    "task_id",
    "occupation_code",
    "rater_id",
    "prompt_id",
    "augmentation",
    "substitution",
    "weight",
];

/// Which score a downstream analysis reads from each record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreField {
    Augmentation,
    Substitution,
}

impl FromStr for ScoreField {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "augmentation" => Ok(Self::Augmentation),
            "substitution" => Ok(Self::Substitution),
            other => Err(Error::Validation(format!(
                "unknown score field `{other}` (expected augmentation or substitution)"
            ))),
        }
    }
}

impl std::fmt::Display for ScoreField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Augmentation => "augmentation",
            Self::Substitution => "substitution",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PanelFormat {
    Csv,
    Jsonl,
}

impl FromStr for PanelFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(Error::Validation(format!("unknown panel format `{other}`"))),
        }
    }
}

impl PanelFormat {
    /// Guesses the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => Self::Jsonl,
            _ => Self::Csv,
        }
    }
}

/// One task scored by one rater under one prompt variant.
///
/// `substitution` is absent when the prompt elicited a single score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRecord {
    pub task_id: String,
    pub occupation_code: String,
    pub rater_id: String,
    pub prompt_id: String,
    pub augmentation: f64,
    #[serde(default)]
    pub substitution: Option<f64>,
    pub weight: f64,
}

impl ScoreRecord {
    pub fn score(&self, field: ScoreField) -> Option<f64> {
        match field {
            ScoreField::Augmentation => Some(self.augmentation),
            ScoreField::Substitution => self.substitution,
        }
    }

    pub fn score_mut(&mut self, field: ScoreField) -> Option<&mut f64> {
        match field {
            ScoreField::Augmentation => Some(&mut self.augmentation),
            ScoreField::Substitution => self.substitution.as_mut(),
        }
    }

    fn check(&self, row: usize) -> Vec<Error> {
        let mut problems = Vec::new();
        let mut bound = |field: &'static str, value: f64, min: f64, max: f64| {
            if !(value.is_finite() && value >= min && value <= max) {
                problems.push(Error::OutOfRange {
                    row,
                    field,
                    value,
                    min,
                    max,
                });
            }
        };
        bound("augmentation", self.augmentation, SCORE_MIN, SCORE_MAX);
        if let Some(s) = self.substitution {
            bound("substitution", s, SCORE_MIN, SCORE_MAX);
        }
        bound("weight", self.weight, 0.0, f64::MAX);
        problems
    }
}

/// A validated, immutable collection of score records.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePanel {
    records: Vec<ScoreRecord>,
    metadata: BTreeMap<String, String>,
}

impl ScorePanel {
    /// Validates ranges and key uniqueness. Row numbers in errors are the
    /// 1-based positions of the records.
    pub fn new(records: Vec<ScoreRecord>, metadata: BTreeMap<String, String>) -> Result<Self> {
        Self::validate(records, metadata, Path::new("<memory>"), |i| i + 1)
    }

    fn validate(
        records: Vec<ScoreRecord>,
        metadata: BTreeMap<String, String>,
        path: &Path,
        row_of: impl Fn(usize) -> usize,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Validation(format!(
                "{}: panel is empty",
                path.display()
            )));
        }
        let mut problems = Vec::new();
        let mut seen: HashMap<(&str, &str, &str), usize> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            let row = row_of(i);
            problems.extend(r.check(row));
            let key = (
                r.task_id.as_str(),
                r.rater_id.as_str(),
                r.prompt_id.as_str(),
            );
            if let Some(&first) = seen.get(&key) {
                problems.push(Error::DuplicateKey {
                    task_id: r.task_id.clone(),
                    rater_id: r.rater_id.clone(),
                    prompt_id: r.prompt_id.clone(),
                    first_row: first,
                    second_row: row,
                });
            } else {
                seen.insert(key, row);
            }
        }
        if !problems.is_empty() {
            return Err(Error::Rejected {
                path: path.to_path_buf(),
                problems,
            });
        }
        Ok(Self { records, metadata })
    }

    pub fn records(&self) -> &[ScoreRecord] {
        &self.records
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_parts(self) -> (Vec<ScoreRecord>, BTreeMap<String, String>) {
        (self.records, self.metadata)
    }

    pub fn raters(&self) -> Vec<String> {
        self.distinct(|r| &r.rater_id)
    }

    pub fn prompts(&self) -> Vec<String> {
        self.distinct(|r| &r.prompt_id)
    }

    pub fn occupations(&self) -> Vec<String> {
        self.distinct(|r| &r.occupation_code)
    }

    fn distinct(&self, key: impl Fn(&ScoreRecord) -> &String) -> Vec<String> {
        self.records
            .iter()
            .map(key)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .cloned()
            .collect()
    }

    /// Records matching a predicate, re-validated as a new panel.
    pub fn filter(&self, keep: impl Fn(&ScoreRecord) -> bool) -> Result<Self> {
        let records: Vec<_> = self.records.iter().filter(|r| keep(r)).cloned().collect();
        Self::new(records, self.metadata.clone())
    }

    pub fn for_rater(&self, rater_id: &str) -> Result<Self> {
        self.filter(|r| r.rater_id == rater_id)
    }

    /// Occupations whose records all carry zero weight.
    pub fn degenerate_occupations(&self) -> Vec<String> {
        let mut positive: BTreeMap<&str, bool> = BTreeMap::new();
        for r in &self.records {
            *positive.entry(&r.occupation_code).or_default() |= r.weight > 0.0;
        }
        positive
            .into_iter()
            .filter(|(_, p)| !p)
            .map(|(o, _)| o.to_string())
            .collect()
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn parse_f64(path: &Path, row: usize, field: &str, cell: &str) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|_| {
        Error::format(
            path,
            format!("row {row}: column `{field}` has non-numeric value `{cell}`"),
        )
    })
}

/// Reads a score panel. Rows are numbered by file line (the CSV header is
/// line 1).
pub fn load_panel(path: &Path, format: PanelFormat) -> Result<ScorePanel> {
    let (records, rows) = match format {
        PanelFormat::Csv => read_panel_csv(path)?,
        PanelFormat::Jsonl => read_panel_jsonl(path)?,
    };
    let mut metadata = BTreeMap::new();
    metadata.insert("source".to_string(), path.display().to_string());
    ScorePanel::validate(records, metadata, path, |i| rows[i])
}

fn read_panel_csv(path: &Path) -> Result<(Vec<ScoreRecord>, Vec<usize>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let headers = rdr
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .clone();
    let mut position = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        if !PANEL_COLUMNS.contains(&h) {
            return Err(Error::format(path, format!("unknown column `{h}`")));
        }
        if position.insert(h.to_string(), i).is_some() {
            return Err(Error::format(path, format!("duplicate column `{h}`")));
        }
    }
    for required in PANEL_COLUMNS.iter().filter(|c| **c != "substitution") {
        if !position.contains_key(*required) {
            return Err(Error::format(path, format!("missing column `{required}`")));
        }
    }

    let mut records = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        let row = rec.position().map_or(i + 2, |p| p.line() as usize);
        let cell = |name: &str| position.get(name).and_then(|&j| rec.get(j)).unwrap_or("");
        let substitution = match cell("substitution") {
            "" => None,
            s => Some(parse_f64(path, row, "substitution", s)?),
        };
        records.push(ScoreRecord {
            task_id: cell("task_id").to_string(),
            occupation_code: cell("occupation_code").to_string(),
            rater_id: cell("rater_id").to_string(),
            prompt_id: cell("prompt_id").to_string(),
            augmentation: parse_f64(path, row, "augmentation", cell("augmentation"))?,
            substitution,
            weight: parse_f64(path, row, "weight", cell("weight"))?,
        });
        rows.push(row);
    }
    Ok((records, rows))
}

fn read_panel_jsonl(path: &Path) -> Result<(Vec<ScoreRecord>, Vec<usize>)> {
    let mut records = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(open(path)?).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ScoreRecord = serde_json::from_str(&line)
            .map_err(|e| Error::format(path, format!("row {}: {e}", i + 1)))?;
        records.push(rec);
        rows.push(i + 1);
    }
    Ok((records, rows))
}

/// Writes a panel in either format. Numbers use the shortest representation
/// that parses back to the same `f64`.
pub fn write_panel(panel: &ScorePanel, path: &Path, format: PanelFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    match format {
        PanelFormat::Csv => {
            writeln!(w, "{}", PANEL_COLUMNS.join(",")).map_err(io)?;
            let mut cw = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(&mut w);
            for r in panel.records() {
                let sub = r.substitution.map(|s| s.to_string()).unwrap_or_default();
                cw.write_record([
                    r.task_id.as_str(),
                    &r.occupation_code,
                    &r.rater_id,
                    &r.prompt_id,
                    &r.augmentation.to_string(),
                    &sub,
                    &r.weight.to_string(),
                ])
                .map_err(|e| Error::format(path, e.to_string()))?;
            }
            cw.flush().map_err(io)?;
        }
        PanelFormat::Jsonl => {
            for r in panel.records() {
                let line =
                    serde_json::to_string(r).map_err(|e| Error::format(path, e.to_string()))?;
                writeln!(w, "{line}").map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

/// One named index column; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexColumn {
    pub name: String,
    pub values: Vec<Option<f64>>,
}

impl IndexColumn {
    pub fn observed(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// Occupation-level table of named indices with true missingness.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexTable {
    occupation_codes: Vec<String>,
    columns: Vec<IndexColumn>,
}

pub const OCCUPATION_COLUMN: &str = "occupation_code";

impl IndexTable {
    pub fn new(occupation_codes: Vec<String>, columns: Vec<IndexColumn>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Validation("no index columns".into()));
        }
        let mut names = BTreeSet::new();
        for c in &columns {
            if !names.insert(c.name.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate index column `{}`",
                    c.name
                )));
            }
            if c.values.len() != occupation_codes.len() {
                return Err(Error::Validation(format!(
                    "column `{}` has {} values for {} occupations",
                    c.name,
                    c.values.len(),
                    occupation_codes.len()
                )));
            }
            if c.values.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "column `{}` has non-finite values",
                    c.name
                )));
            }
        }
        Ok(Self {
            occupation_codes,
            columns,
        })
    }

    pub fn occupation_codes(&self) -> &[String] {
        &self.occupation_codes
    }

    pub fn columns(&self) -> &[IndexColumn] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&IndexColumn> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn n_rows(&self) -> usize {
        self.occupation_codes.len()
    }

    /// Outer-joins another table on occupation code. Column names must not
    /// collide.
    pub fn join(&self, other: &IndexTable) -> Result<IndexTable> {
        let mut codes: Vec<String> = self.occupation_codes.clone();
        let mut seen: BTreeSet<String> = codes.iter().cloned().collect();
        for c in &other.occupation_codes {
            if seen.insert(c.clone()) {
                codes.push(c.clone());
            }
        }
        fn lookup(t: &IndexTable) -> HashMap<&str, usize> {
            t.occupation_codes
                .iter()
                .enumerate()
                .map(|(i, c)| (c.as_str(), i))
                .collect()
        }
        let (left, right) = (lookup(self), lookup(other));
        let mut columns = Vec::new();
        for (table, idx) in [(self, &left), (other, &right)] {
            for col in &table.columns {
                columns.push(IndexColumn {
                    name: col.name.clone(),
                    values: codes
                        .iter()
                        .map(|c| idx.get(c.as_str()).and_then(|&i| col.values[i]))
                        .collect(),
                });
            }
        }
        IndexTable::new(codes, columns)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
        let mut header = vec![OCCUPATION_COLUMN.to_string()];
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        w.write_record(&header)
            .map_err(|e| Error::format(path, e.to_string()))?;
        for (i, code) in self.occupation_codes.iter().enumerate() {
            let mut row = vec![code.clone()];
            row.extend(
                self.columns
                    .iter()
                    .map(|c| c.values[i].map(|v| v.to_string()).unwrap_or_default()),
            );
            w.write_record(&row)
                .map_err(|e| Error::format(path, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Reads an occupation-level index table. Blank cells become missing values.
pub fn load_index_table(path: &Path) -> Result<IndexTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let headers = rdr
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .clone();
    let code_idx = headers
        .iter()
        .position(|h| h == OCCUPATION_COLUMN)
        .ok_or_else(|| Error::format(path, format!("no `{OCCUPATION_COLUMN}` column")))?;
    let names: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != code_idx)
        .map(|(i, h)| (i, h.to_string()))
        .collect();
    if names.is_empty() {
        return Err(Error::format(path, "no index columns"));
    }
    let mut codes = Vec::new();
    let mut columns: Vec<IndexColumn> = names
        .iter()
        .map(|(_, n)| IndexColumn {
            name: n.clone(),
            values: Vec::new(),
        })
        .collect();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        let row = rec.position().map_or(i + 2, |p| p.line() as usize);
        codes.push(rec.get(code_idx).unwrap_or("").to_string());
        for ((j, name), col) in names.iter().zip(columns.iter_mut()) {
            let cell = rec.get(*j).unwrap_or("");
            let v = match cell {
                "" | "NA" | "NaN" | "nan" | "null" => None,
                s => Some(parse_f64(path, row, name, s)?),
            };
            col.values.push(v);
        }
    }
    IndexTable::new(codes, columns).map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        File::create(&p)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        p
    }

    const HEADER: &str =
        "task_id,occupation_code,rater_id,prompt_id,augmentation,substitution,weight\n";

    #[test]
    fn loads_well_formed_csv() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{HEADER}t1,11-1011,rater1,A,72,31,4.5\nt2,11-1011,rater1,A,40,20,3\nt3,15-1252,rater1,A,60,,1\n"
        );
        let panel = load_panel(&write(&dir, "p.csv", &body), PanelFormat::Csv).unwrap();
        assert_eq!(panel.len(), 3);
        assert_eq!(panel.records()[2].substitution, None);
        assert_eq!(panel.records()[0].weight, 4.5);
    }

    #[test]
    fn out_of_range_names_row_and_bound() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{HEADER}t1,o,r,A,72,31,1\nt2,o,r,A,150,31,1\n");
        let err = load_panel(&write(&dir, "p.csv", &body), PanelFormat::Csv).unwrap_err();
        let Error::Rejected { problems, .. } = &err else {
            panic!("unexpected {err}")
        };
        assert!(matches!(
            problems[0],
            Error::OutOfRange { row: 3, field: "augmentation", max, .. } if max == 100.0
        ));
        let msg = err.to_string();
        assert!(msg.contains("row 3") && msg.contains("150") && msg.contains("100"));
    }

    #[test]
    fn duplicate_key_lists_both_rows() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{HEADER}t1,o,r,A,72,31,1\nt2,o,r,A,40,31,1\nt1,o,r,A,50,31,1\n");
        let err = load_panel(&write(&dir, "p.csv", &body), PanelFormat::Csv).unwrap_err();
        let Error::Rejected { problems, .. } = err else {
            panic!()
        };
        assert!(matches!(
            problems[0],
            Error::DuplicateKey {
                first_row: 2,
                second_row: 4,
                ..
            }
        ));
    }

    #[test]
    fn unknown_column_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let body = "task_id,occupation_code,rater_id,prompt_id,augmentation,weight,colour\n";
        let err = load_panel(&write(&dir, "p.csv", body), PanelFormat::Csv).unwrap_err();
        assert!(err.to_string().contains("unknown column `colour`"));
        let err = load_panel(&dir.path().join("absent.csv"), PanelFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn jsonl_ingest() {
        let dir = tempfile::tempdir().unwrap();
        let body = r#"{"task_id":"t1","occupation_code":"o","rater_id":"r","prompt_id":"A","augmentation":10,"substitution":null,"weight":1}
{"task_id":"t2","occupation_code":"o","rater_id":"r","prompt_id":"A","augmentation":20,"weight":2}
"#;
        let panel = load_panel(&write(&dir, "p.jsonl", body), PanelFormat::Jsonl).unwrap();
        assert_eq!(panel.len(), 2);
        let bad = r#"{"task_id":"t1","occupation_code":"o","rater_id":"r","prompt_id":"A","augmentation":10,"weight":1,"extra":1}"#;
        assert!(load_panel(&write(&dir, "q.jsonl", bad), PanelFormat::Jsonl).is_err());
    }

    #[test]
    fn degenerate_occupation_flagged() {
        let rec = |t: &str, o: &str, w: f64| ScoreRecord {
            task_id: t.into(),
            occupation_code: o.into(),
            rater_id: "r".into(),
            prompt_id: "A".into(),
            augmentation: 50.0,
            substitution: None,
            weight: w,
        };
        let panel = ScorePanel::new(
            vec![
                rec("t1", "a", 1.0),
                rec("t2", "b", 0.0),
                rec("t3", "b", 0.0),
            ],
            BTreeMap::new(),
        )
        .unwrap();
        assert_eq!(panel.degenerate_occupations(), vec!["b".to_string()]);
    }

    #[test]
    fn index_table_missing_cells_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let t = load_index_table(&write(
            &dir,
            "i.csv",
            "occupation_code,idx,aioe\n11-1011,0.5,\n11-2011,,1.25\n13-1111,0.1,0.2\n",
        ))
        .unwrap();
        assert_eq!(t.columns().len(), 2);
        assert_eq!(
            t.column("idx").unwrap().values,
            vec![Some(0.5), None, Some(0.1)]
        );
        assert_eq!(t.column("aioe").unwrap().values[0], None);

        let err =
            load_index_table(&write(&dir, "j.csv", "occupation_code\n11-1011\n")).unwrap_err();
        assert!(err.to_string().contains("no index columns"));
        let err = load_index_table(&write(&dir, "k.csv", "code,idx\n1,2\n")).unwrap_err();
        assert!(err.to_string().contains("occupation_code"));
        let err =
            load_index_table(&write(&dir, "l.csv", "occupation_code,idx\n1,high\n")).unwrap_err();
        assert!(err.to_string().contains("non-numeric"));
    }

    #[test]
    fn join_aligns_codes() {
        let a = IndexTable::new(
            vec!["x".into(), "y".into()],
            vec![IndexColumn {
                name: "a".into(),
                values: vec![Some(1.0), Some(2.0)],
            }],
        )
        .unwrap();
        let b = IndexTable::new(
            vec!["y".into(), "z".into()],
            vec![IndexColumn {
                name: "b".into(),
                values: vec![Some(5.0), Some(6.0)],
            }],
        )
        .unwrap();
        let j = a.join(&b).unwrap();
        assert_eq!(j.occupation_codes(), ["x", "y", "z"]);
        assert_eq!(
            j.column("b").unwrap().values,
            vec![None, Some(5.0), Some(6.0)]
        );
    }
}
