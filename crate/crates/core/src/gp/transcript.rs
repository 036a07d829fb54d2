use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Map, Value};
use thiserror::Error;

use super::cards::{GpState, Rule, RuleVariant};
use super::game::{extract_equation, validate, Reason, Verdict};

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no records")]
    NoRecords,
    #[error("write failed: {0}")]
    Write(#[from] std::io::Error),
}

#[derive(Deserialize)]
struct RawRecord {
    cards: Vec<String>,
    response: String,
    #[serde(default)]
    rule: Option<RuleVariant>,
    #[serde(default)]
    target: Option<u32>,
}

/// One scored transcript line.
#[derive(Clone, Debug)]
pub struct ScoredRecord {
    /// 1-based line number in the input.
    pub line: usize,
    pub verdict: Verdict,
    pub equation: Option<String>,
    /// Set when the line could not be interpreted as a record.
    pub malformed: Option<String>,
    /// The input record with the verdict fields added.
    pub output: Value,
}

#[derive(Clone, Debug)]
pub struct TranscriptScore {
    pub records: Vec<ScoredRecord>,
    pub n: usize,
    pub success_rate: f64,
}

impl TranscriptScore {
    pub fn count(&self, reason: Reason) -> usize {
        self.records.iter().filter(|r| r.verdict.reason == reason).count()
    }

    pub fn summary(&self) -> Value {
        json!({ "n": self.n, "success_rate": self.success_rate })
    }

    /// Writes one JSON object per record, then the summary object.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), TranscriptError> {
        for r in &self.records {
            serde_json::to_writer(&mut out, &r.output).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut out, &self.summary()).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        Ok(())
    }
}

fn score_line(line_no: usize, line: &str, default_rule: &Rule, marker: Option<&str>) -> ScoredRecord {
    let malformed = |msg: String, base: Value| {
        let verdict = Verdict::no_equation(Some(msg.clone()));
        let mut obj = match base {
            Value::Object(m) => m,
            _ => {
                let mut m = Map::new();
                m.insert("raw".into(), Value::String(line.to_string()));
                m
            }
        };
        obj.insert("line".into(), json!(line_no));
        obj.insert("valid".into(), json!(false));
        obj.insert("reason".into(), json!(Reason::NoEquationFound.as_str()));
        obj.insert("equation".into(), Value::Null);
        obj.insert("value".into(), Value::Null);
        obj.insert("malformed".into(), Value::String(msg.clone()));
        ScoredRecord {
            line: line_no,
            verdict,
            equation: None,
            malformed: Some(msg),
            output: Value::Object(obj),
        }
    };

    let value: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return malformed(format!("invalid JSON: {e}"), Value::Null),
    };
    let raw: RawRecord = match RawRecord::deserialize(&value) {
        Ok(r) => r,
        Err(e) => return malformed(format!("bad record: {e}"), value),
    };
    let target = raw.target.unwrap_or(GpState::DEFAULT_TARGET);
    let state = match GpState::from_tokens(&raw.cards, target) {
        Ok(s) => s,
        Err(e) => return malformed(format!("bad cards: {e}"), value),
    };
    let rule = raw.rule.map(Rule::of).unwrap_or(*default_rule);

    let equation = extract_equation(&raw.response, marker);
    let verdict = match &equation {
        Some(eq) => validate(&state, &rule, eq),
        None => Verdict::no_equation(None),
    };

    let mut obj = match value {
        Value::Object(m) => m,
        _ => unreachable!("record deserialized from a JSON object"),
    };
    obj.insert("line".into(), json!(line_no));
    obj.insert("valid".into(), json!(verdict.valid));
    obj.insert("reason".into(), json!(verdict.reason.as_str()));
    obj.insert("equation".into(), json!(equation));
    obj.insert("value".into(), json!(verdict.value_string()));
    ScoredRecord {
        line: line_no,
        verdict,
        equation,
        malformed: None,
        output: Value::Object(obj),
    }
}

/// Scores line-delimited JSON transcripts held in memory. Blank lines are
/// ignored; every other line counts as a record.
pub fn score_transcript_text(
    text: &str,
    rule: &Rule,
    marker: Option<&str>,
) -> Result<TranscriptScore, TranscriptError> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect();
    if lines.is_empty() {
        return Err(TranscriptError::NoRecords);
    }
    let records: Vec<ScoredRecord> = lines
        .par_iter()
        .map(|&(no, l)| score_line(no, l, rule, marker))
        .collect();
    let n = records.len();
    let ok = records.iter().filter(|r| r.verdict.valid).count();
    Ok(TranscriptScore {
        records,
        n,
        success_rate: ok as f64 / n as f64,
    })
}

pub fn score_transcripts(
    path: &Path,
    rule: &Rule,
    marker: Option<&str>,
) -> Result<TranscriptScore, TranscriptError> {
    let text = std::fs::read_to_string(path).map_err(|source| TranscriptError::Io {
        path: path.display().to_string(),
        source,
    })?;
    score_transcript_text(&text, rule, marker)
}
