//! JSON-lines records read and written by the `brctc` binary.
//!
//! Input records hold one utterance per line:
//!
//! | field        | type              | notes                                   |
//! |--------------|-------------------|-----------------------------------------|
//! | `id`         | string            | required                                |
//! | `logits`     | `T × (V+1)` array | exactly one of `logits` / `logprobs`    |
//! | `logprobs`   | `T × (V+1)` array | rows must be log-normalized             |
//! | `labels`     | token ids         | `1..=V`; blank is id 0                  |
//! | `ref_events` | frame indices     | reference start frame of every token    |
//! | `hidden`     | `T × H` array     | encoder states to trim                  |
//! | `path`       | symbol per frame  | alignment used by `latency`             |
//! | `chunk`      | object            | `chunk_ms`, `right_context_ms`, `rtf`, `frame_ms` |
//!
//! Frame indices are 0-based. A malformed or failing record produces an
//! error line `{"id": .., "line": .., "error": ..}` in place of its output,
//! and the stream continues.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::align::{greedy_path, trim, trim_point, Alignment};
use crate::error::{Error, Result};
use crate::latency::{corpus_latency, utterance_latency, ChunkConfig, LatencyReport};
use crate::lattice::{Grid, LabelSeq, PosteriorGrid};
use crate::oracle::{collapse, oracle_objective, token_end_frame};
use crate::risk::{brctc_loss, RiskSpec};

/// Records processed concurrently before their outputs are written.
pub const BATCH_SIZE: usize = 64;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtteranceRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub labels: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_events: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunk: Option<ChunkConfig>,
}

impl UtteranceRecord {
    pub fn parse(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn posteriors(&self) -> Result<PosteriorGrid> {
        match (&self.logits, &self.logprobs) {
            (Some(z), None) => PosteriorGrid::from_logits(&Grid::from_rows(z)?),
            (None, Some(lp)) => PosteriorGrid::from_log_probs(Grid::from_rows(lp)?),
            (Some(_), Some(_)) => Err(Error::Parse("both `logits` and `logprobs` given".into())),
            (None, None) => Err(Error::Parse("one of `logits` or `logprobs` is required".into())),
        }
    }

    /// Labels over the vocabulary implied by the grid width.
    pub fn label_seq(&self, y: &PosteriorGrid) -> Result<LabelSeq> {
        LabelSeq::new(self.labels.clone(), y.vocab())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossOutput {
    pub id: String,
    pub loss: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub clamped: bool,
    /// Gradient w.r.t. the logits, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad: Option<Vec<Vec<f64>>>,
}

pub fn record_loss(rec: &UtteranceRecord, spec: &RiskSpec, with_grad: bool) -> Result<LossOutput> {
    let y = rec.posteriors()?;
    let labels = rec.label_seq(&y)?;
    let result = brctc_loss(&y, &labels, spec, with_grad)?;
    Ok(LossOutput {
        id: rec.id.clone(),
        loss: result.neg_log_objective,
        clamped: result.clamped,
        grad: result.grad_logits.map(|g| g.to_rows()),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrimOutput {
    pub id: String,
    pub report: crate::align::TrimReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<Vec<f64>>>,
}

pub fn record_trim(rec: &UtteranceRecord, threshold: f64, margin: usize) -> Result<TrimOutput> {
    let y = rec.posteriors()?;
    let mut report = trim_point(&y, threshold, margin);
    if !rec.labels.is_empty() {
        report = report.with_target_len(rec.labels.len());
    }
    let hidden = rec.hidden.as_ref().map(|h| trim(h, &report)).transpose()?;
    Ok(TrimOutput {
        id: rec.id.clone(),
        report,
        hidden,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyOutput {
    pub id: String,
    #[serde(flatten)]
    pub report: LatencyReport,
}

/// The record's `path` if present, else the greedy decode of its grid.
pub fn record_alignment(rec: &UtteranceRecord) -> Result<Alignment> {
    match &rec.path {
        Some(path) => Ok(Alignment::from_path(path.clone(), 0.0)),
        None => Ok(greedy_path(&rec.posteriors()?)),
    }
}

pub fn record_latency(rec: &UtteranceRecord, default_chunk: &ChunkConfig) -> Result<LatencyOutput> {
    let ref_events = rec
        .ref_events
        .as_ref()
        .ok_or_else(|| Error::Parse("`ref_events` is required".into()))?;
    let alignment = record_alignment(rec)?;
    let chunk = rec.chunk.unwrap_or(*default_chunk);
    Ok(LatencyOutput {
        id: rec.id.clone(),
        report: utterance_latency(&alignment, &rec.labels, ref_events, &chunk)?,
    })
}

/// Counts of a processed stream.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StreamSummary {
    pub records: usize,
    pub failed: usize,
}

impl StreamSummary {
    /// 0 when every record succeeded, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.failed == 0 {
            0
        } else {
            2
        }
    }
}

/// The error line written for input line `line` (1-based).
pub fn error_line(line: usize, raw: &str, err: &Error) -> String {
    let id = serde_json::from_str::<serde_json::Value>(raw)
        .ok()
        .and_then(|v| v.get("id").cloned())
        .unwrap_or(serde_json::Value::Null);
    json!({"id": id, "line": line, "error": err.to_string()}).to_string()
}

fn to_line<S: Serialize>(value: &S) -> Result<String> {
    serde_json::to_string(value).map_err(|e| Error::Parse(e.to_string()))
}

/// Maps every non-empty input line through `f`, [`BATCH_SIZE`] records at a
/// time, and writes one output line per record in input order. Successful
/// results also yield a side value, returned in order.
pub fn process_stream<R, W, T, S, F>(input: R, mut out: W, f: F) -> Result<(StreamSummary, Vec<T>)>
where
    R: BufRead,
    W: Write,
    T: Send,
    S: Serialize + Send,
    F: Fn(&UtteranceRecord) -> Result<(S, T)> + Sync,
{
    let mut summary = StreamSummary::default();
    let mut side = Vec::new();
    let mut batch: Vec<(usize, String)> = Vec::with_capacity(BATCH_SIZE);
    let mut lines = input.lines().enumerate();
    loop {
        batch.clear();
        for (i, line) in lines.by_ref() {
            let line = line?;
            if !line.trim().is_empty() {
                batch.push((i + 1, line));
            }
            if batch.len() == BATCH_SIZE {
                break;
            }
        }
        if batch.is_empty() {
            break;
        }
        let results: Vec<Result<(String, T)>> = batch
            .par_iter()
            .map(|(_, raw)| {
                let rec = UtteranceRecord::parse(raw)?;
                let (value, extra) = f(&rec)?;
                Ok((to_line(&value)?, extra))
            })
            .collect();
        for ((n, raw), result) in batch.iter().zip(results) {
            summary.records += 1;
            match result {
                Ok((line, extra)) => {
                    writeln!(out, "{line}")?;
                    side.push(extra);
                }
                Err(e) => {
                    summary.failed += 1;
                    writeln!(out, "{}", error_line(*n, raw, &e))?;
                }
            }
        }
    }
    out.flush()?;
    Ok((summary, side))
}

pub fn loss_stream<R: BufRead, W: Write>(input: R, out: W, spec: &RiskSpec, with_grad: bool) -> Result<StreamSummary> {
    spec.validate()?;
    let (summary, _) = process_stream(input, out, |rec| Ok((record_loss(rec, spec, with_grad)?, ())))?;
    Ok(summary)
}

pub fn trim_stream<R: BufRead, W: Write>(input: R, out: W, threshold: f64, margin: usize) -> Result<StreamSummary> {
    let (summary, _) = process_stream(input, out, |rec| Ok((record_trim(rec, threshold, margin)?, ())))?;
    Ok(summary)
}

/// Per-utterance latency lines followed by one `{"corpus": ..}` line.
pub fn latency_stream<R: BufRead, W: Write>(input: R, mut out: W, chunk: &ChunkConfig) -> Result<StreamSummary> {
    let (summary, reports) = process_stream(input, &mut out, |rec| {
        let o = record_latency(rec, chunk)?;
        let report = o.report.clone();
        Ok((o, report))
    })?;
    writeln!(out, "{}", to_line(&json!({"corpus": corpus_latency(&reports)}))?)?;
    out.flush()?;
    Ok(summary)
}

/// Explicit paths with their posteriors and risks. Every path must collapse
/// to the same target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathFixture {
    pub paths: Vec<Vec<usize>>,
    pub posteriors: Vec<f64>,
    pub risks: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathFixtureReport {
    /// `sum_i posterior_i * risk_i`.
    pub objective: f64,
    /// The same sum formed group by group over the end frame of the last
    /// token.
    pub grouped_objective: f64,
    /// `(end frame, group mass)` pairs in frame order.
    pub groups: Vec<(usize, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<f64>,
}

impl PathFixture {
    pub fn evaluate(&self) -> Result<PathFixtureReport> {
        let n = self.paths.len();
        for len in [self.posteriors.len(), self.risks.len()] {
            if len != n {
                return Err(Error::LengthMismatch { expected: n, actual: len });
            }
        }
        let target = self.paths.first().map(|p| collapse(p)).unwrap_or_default();
        if target.is_empty() || self.paths.iter().any(|p| collapse(p) != target) {
            return Err(Error::Parse("fixture paths must share one non-empty target".into()));
        }
        let last = target.len() - 1;
        let mut groups: std::collections::BTreeMap<usize, (f64, f64)> = Default::default();
        for ((path, &p), &r) in self.paths.iter().zip(&self.posteriors).zip(&self.risks) {
            let tau = token_end_frame(path, last).expect("path emits its target");
            let entry = groups.entry(tau).or_insert((0.0, r));
            if entry.1 != r {
                return Err(Error::Parse(format!("risk is not constant within group {tau}")));
            }
            entry.0 += p;
        }
        Ok(PathFixtureReport {
            objective: oracle_objective(&self.posteriors, &self.risks),
            grouped_objective: groups.values().map(|(m, r)| m * r).sum(),
            groups: groups.iter().map(|(&t, &(m, _))| (t, m)).collect(),
            expected: self.expected,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const T1: &str = r#"{"id":"t1","logprobs":[[-0.916290731874155,-0.5108256237659907]],"labels":[1]}"#;

    #[test]
    fn single_frame_loss() {
        let rec = UtteranceRecord::parse(T1).unwrap();
        let out = record_loss(&rec, &RiskSpec::vanilla(), false).unwrap();
        assert!((out.loss + 0.6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn exactly_one_grid() {
        let both = r#"{"id":"x","logits":[[0,0]],"logprobs":[[0,0]],"labels":[1]}"#;
        let none = r#"{"id":"x","labels":[1]}"#;
        for raw in [both, none] {
            let rec = UtteranceRecord::parse(raw).unwrap();
            assert!(matches!(rec.posteriors(), Err(Error::Parse(_))));
        }
    }

    #[test]
    fn stream_keeps_order_and_reports_failures() {
        let mut input = String::new();
        for i in 0..150 {
            if i == 77 {
                input.push_str(r#"{"id":"bad","logits":[[0,0]],"labels":[1,1]}"#);
            } else {
                input.push_str(&format!(r#"{{"id":"u{i}","logits":[[0,{i}],[0,0]],"labels":[1]}}"#));
            }
            input.push('\n');
        }
        let mut out = Vec::new();
        let s = loss_stream(input.as_bytes(), &mut out, &RiskSpec::vanilla(), false).unwrap();
        assert_eq!(s, StreamSummary { records: 150, failed: 1 });
        assert_eq!(s.exit_code(), 2);
        let lines: Vec<serde_json::Value> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 150);
        assert_eq!(lines[77]["id"], "bad");
        assert_eq!(lines[77]["line"], 78);
        assert!(lines[77]["error"].as_str().unwrap().contains("no alignment"));
        assert_eq!(lines[149]["id"], "u149");
    }

    #[test]
    fn unparseable_line_has_null_id() {
        let mut out = Vec::new();
        let s = loss_stream("not json\n".as_bytes(), &mut out, &RiskSpec::vanilla(), false).unwrap();
        assert_eq!(s.failed, 1);
        let v: serde_json::Value = serde_json::from_slice(&out).unwrap();
        assert!(v["id"].is_null());
    }

    #[test]
    fn path_fixture_grouping() {
        let f = PathFixture {
            paths: vec![vec![1, 2, 0], vec![1, 2, 2], vec![1, 1, 2], vec![1, 0, 2], vec![0, 1, 2]],
            posteriors: vec![0.3, 0.1, 0.2, 0.0, 0.1],
            risks: vec![1.0, 0.8, 0.8, 0.8, 0.8],
            expected: None,
        };
        let r = f.evaluate().unwrap();
        assert!((r.objective - 0.62).abs() < 1e-15);
        assert!((r.grouped_objective - 0.62).abs() < 1e-15);
        assert_eq!(r.groups.len(), 2);
        let mut bad = f.clone();
        bad.risks[1] = 0.5;
        assert!(bad.evaluate().is_err());
    }
}
