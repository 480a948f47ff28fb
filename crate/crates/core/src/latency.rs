//! Latency of a chunked streaming recognizer, split into three exclusive
//! sources:
//!
//! * data-collecting latency, `chunk / 2 + right_context`;
//! * computational latency, `chunk * rtf`;
//! * drift latency, the mean over LCS-matched tokens of
//!   `(predicted end frame - reference start frame) * frame_ms`.

use serde::{Deserialize, Serialize};

use crate::align::Alignment;
use crate::error::{Error, Result};

/// One maximal monotone matching between `hyp` and `reference`, as 0-based
/// `(hyp_index, ref_index)` pairs. Among all maximal matchings the
/// lexicographically smallest pair sequence is returned.
pub fn lcs_match<T: PartialEq>(hyp: &[T], reference: &[T]) -> Vec<(usize, usize)> {
    let (n, m) = (hyp.len(), reference.len());
    // suffix[i][j] = LCS length of hyp[i..] and reference[j..]
    let mut suffix = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            suffix[i][j] = if hyp[i] == reference[j] {
                suffix[i + 1][j + 1] + 1
            } else {
                suffix[i + 1][j].max(suffix[i][j + 1])
            };
        }
    }
    let mut pairs = Vec::with_capacity(suffix[0][0]);
    let (mut i0, mut j0) = (0, 0);
    let mut remaining = suffix[0][0];
    while remaining > 0 {
        let next = (i0..n)
            .flat_map(|i| (j0..m).map(move |j| (i, j)))
            .find(|&(i, j)| hyp[i] == reference[j] && suffix[i + 1][j + 1] + 1 == remaining)
            .expect("an LCS continuation exists while tokens remain");
        pairs.push(next);
        i0 = next.0 + 1;
        j0 = next.1 + 1;
        remaining -= 1;
    }
    pairs
}

/// Mean drift in frames: `hyp_ends[i] - ref_starts[j]` over matched pairs.
pub fn drift_frames(hyp_ends: &[usize], ref_starts: &[usize], matching: &[(usize, usize)]) -> Result<f64> {
    if matching.is_empty() {
        return Err(Error::NoMatchedTokens);
    }
    let total: f64 = matching
        .iter()
        .map(|&(i, j)| hyp_ends[i] as f64 - ref_starts[j] as f64)
        .sum();
    Ok(total / matching.len() as f64)
}

/// Drift latency in milliseconds of a predicted alignment against reference
/// token start frames.
pub fn drift_latency(
    alignment: &Alignment,
    ref_starts: &[usize],
    frame_ms: f64,
    matching: &[(usize, usize)],
) -> Result<f64> {
    Ok(drift_frames(&alignment.end_frames(), ref_starts, matching)? * frame_ms)
}

/// All latency figures of one utterance, in milliseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub dcl: f64,
    pub cl: f64,
    /// Absent when no token matched.
    pub dl: Option<f64>,
    /// `dcl + dl`, hardware independent.
    pub dcl_dl: Option<f64>,
    /// `dcl + dl + cl`.
    pub total: Option<f64>,
    pub matched_tokens: usize,
    /// Predicted end frames of the matched hypothesis tokens.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pred_end_frames: Vec<usize>,
    /// Reference start frames of the matched reference tokens.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ref_start_frames: Vec<usize>,
}

/// Combines the chunk configuration with an already computed drift latency.
pub fn latency_report(chunk_ms: f64, right_context_ms: f64, rtf: f64, dl_ms: Option<f64>) -> LatencyReport {
    let dcl = chunk_ms / 2.0 + right_context_ms;
    let cl = chunk_ms * rtf;
    LatencyReport {
        dcl,
        cl,
        dl: dl_ms,
        dcl_dl: dl_ms.map(|dl| dcl + dl),
        total: dl_ms.map(|dl| dcl + dl + cl),
        matched_tokens: 0,
        pred_end_frames: Vec::new(),
        ref_start_frames: Vec::new(),
    }
}

/// Chunking of a streaming model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChunkConfig {
    pub chunk_ms: f64,
    pub right_context_ms: f64,
    pub rtf: f64,
    pub frame_ms: f64,
}

/// Full report for a hypothesis alignment against reference tokens and
/// their start frames.
pub fn utterance_latency(
    alignment: &Alignment,
    ref_tokens: &[usize],
    ref_starts: &[usize],
    chunk: &ChunkConfig,
) -> Result<LatencyReport> {
    if ref_tokens.len() != ref_starts.len() {
        return Err(Error::LengthMismatch {
            expected: ref_tokens.len(),
            actual: ref_starts.len(),
        });
    }
    let matching = lcs_match(&alignment.tokens(), ref_tokens);
    let dl = match drift_latency(alignment, ref_starts, chunk.frame_ms, &matching) {
        Ok(dl) => Some(dl),
        Err(Error::NoMatchedTokens) => None,
        Err(e) => return Err(e),
    };
    let ends = alignment.end_frames();
    let mut report = latency_report(chunk.chunk_ms, chunk.right_context_ms, chunk.rtf, dl);
    report.matched_tokens = matching.len();
    report.pred_end_frames = matching.iter().map(|&(i, _)| ends[i]).collect();
    report.ref_start_frames = matching.iter().map(|&(_, j)| ref_starts[j]).collect();
    Ok(report)
}

/// Corpus means. DL and the sums average only utterances that have a DL.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusLatency {
    pub utterances: usize,
    pub dcl: f64,
    pub cl: f64,
    pub dl: Option<f64>,
    pub dcl_dl: Option<f64>,
    pub total: Option<f64>,
}

pub fn corpus_latency(reports: &[LatencyReport]) -> CorpusLatency {
    let n = reports.len().max(1) as f64;
    let mean_opt = |f: fn(&LatencyReport) -> Option<f64>| {
        let vals: Vec<f64> = reports.iter().filter_map(f).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    CorpusLatency {
        utterances: reports.len(),
        dcl: reports.iter().map(|r| r.dcl).sum::<f64>() / n,
        cl: reports.iter().map(|r| r.cl).sum::<f64>() / n,
        dl: mean_opt(|r| r.dl),
        dcl_dl: mean_opt(|r| r.dcl_dl),
        total: mean_opt(|r| r.total),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lcs_cases() {
        assert_eq!(lcs_match(b"abc", b"abc"), vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(lcs_match(b"abc", b"axc"), vec![(0, 0), (2, 2)]);
        assert!(lcs_match(b"abc", b"xyz").is_empty());
        // leftmost of several maximal matchings
        assert_eq!(lcs_match(b"aa", b"a"), vec![(0, 0)]);
        assert_eq!(lcs_match(b"ab", b"ba"), vec![(0, 1)]);
    }

    #[test]
    fn drift_cases() {
        let ali = Alignment::from_path(vec![0, 1, 0, 0, 2, 0], 0.0);
        // predictions end at 1 and 4
        let m = lcs_match(&ali.tokens(), &[1, 2]);
        assert_eq!(drift_latency(&ali, &[1, 4], 40.0, &m).unwrap(), 0.0);
        assert_eq!(drift_latency(&ali, &[3, 5], 40.0, &m).unwrap(), -60.0);
        assert_eq!(drift_latency(&ali, &[0, 0], 40.0, &m).unwrap(), 100.0);
        // drifts 2 and 4 frames
        assert_eq!(drift_frames(&[3, 6], &[1, 2], &[(0, 0), (1, 1)]).unwrap() * 40.0, 120.0);
        assert_eq!(drift_latency(&ali, &[1, 4], 40.0, &[]), Err(Error::NoMatchedTokens));
    }

    #[test]
    fn report_arithmetic() {
        let r = latency_report(480.0, 0.0, 0.128, Some(94.0));
        assert_eq!(r.dcl, 240.0);
        assert_eq!(r.dcl_dl, Some(334.0));
        let r = latency_report(160.0, 160.0, 0.176, Some(206.0));
        assert_eq!(r.cl.round(), 28.0);
        assert!((r.cl - 28.16).abs() < 1e-12);
        let r = latency_report(0.0, 40.0, 0.5, None);
        assert_eq!((r.dcl, r.cl, r.total), (40.0, 0.0, None));
    }

    #[test]
    fn unmatched_utterance_has_no_dl() {
        let ali = Alignment::from_path(vec![0, 3, 0], 0.0);
        let chunk = ChunkConfig {
            chunk_ms: 160.0,
            right_context_ms: 0.0,
            rtf: 0.1,
            frame_ms: 40.0,
        };
        let r = utterance_latency(&ali, &[1, 2], &[0, 1], &chunk).unwrap();
        assert_eq!(r.dl, None);
        assert_eq!(r.matched_tokens, 0);
    }
}
