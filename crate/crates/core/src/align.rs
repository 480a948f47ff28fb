//! Best-path alignment, trailing-blank trimming of hidden sequences and the
//! down-sampling factor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{extend_labels, is_feasible, Grid, LabelSeq, PosteriorGrid, BLANK, LOG_ZERO};
use crate::oracle::collapse;

/// Default blank posterior above which a trailing frame counts as confident.
pub const DEFAULT_BLANK_THRESHOLD: f64 = 0.99;

/// Default number of frames kept past the last non-confident frame.
pub const DEFAULT_MARGIN: usize = 5;

/// Inclusive frame interval (0-based) during which a token is emitted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub token: usize,
    pub start: usize,
    pub end: usize,
}

/// A frame-level path together with its per-token emission spans.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub path: Vec<usize>,
    pub log_posterior: f64,
    pub token_spans: Vec<TokenSpan>,
}

impl Alignment {
    /// Wraps an arbitrary path, e.g. a greedy decode.
    pub fn from_path(path: Vec<usize>, log_posterior: f64) -> Self {
        let mut spans: Vec<TokenSpan> = Vec::new();
        let mut prev = BLANK;
        for (t, &s) in path.iter().enumerate() {
            if s != BLANK {
                if s == prev {
                    if let Some(last) = spans.last_mut() {
                        last.end = t;
                    }
                } else {
                    spans.push(TokenSpan {
                        token: s,
                        start: t,
                        end: t,
                    });
                }
            }
            prev = s;
        }
        Alignment {
            path,
            log_posterior,
            token_spans: spans,
        }
    }

    /// Collapsed token sequence.
    pub fn tokens(&self) -> Vec<usize> {
        self.token_spans.iter().map(|s| s.token).collect()
    }

    /// Last emission frame of every token.
    pub fn end_frames(&self) -> Vec<usize> {
        self.token_spans.iter().map(|s| s.end).collect()
    }

    /// Last frame holding any non-blank symbol.
    pub fn last_spike(&self) -> Option<usize> {
        self.token_spans.last().map(|s| s.end)
    }
}

/// Frame-wise argmax path. No target needed.
pub fn greedy_path(y: &PosteriorGrid) -> Alignment {
    let mut path = Vec::with_capacity(y.frames());
    let mut score = 0.0;
    for t in 0..y.frames() {
        let row = y.row(t);
        let mut best = 0;
        for (k, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = k;
            }
        }
        score += row[best];
        path.push(best);
    }
    Alignment::from_path(path, score)
}

/// Most probable path that collapses to `labels` (constrained Viterbi).
///
/// Ties prefer the predecessor with the higher lattice position, so a token
/// is entered as early as the scores allow.
pub fn best_path(y: &PosteriorGrid, labels: &LabelSeq) -> Result<Alignment> {
    let ext = extend_labels(labels);
    let (frames, states) = (y.frames(), ext.len());
    if labels.tokens().iter().any(|&k| k >= y.symbols()) {
        return Err(Error::InvalidLabels("token id exceeds the grid vocabulary".into()));
    }
    if !is_feasible(&ext, frames) {
        return Err(Error::InfeasibleAlignment {
            frames,
            min_frames: labels.min_frames(),
        });
    }
    let mut score = Grid::filled(frames, states, LOG_ZERO);
    let mut back = vec![0usize; frames * states];
    score.set(0, 0, y.logp(0, ext.symbol(0)));
    score.set(0, 1, y.logp(0, ext.symbol(1)));
    for t in 1..frames {
        for v in 0..states {
            let mut best_prev = v;
            let mut best = score.get(t - 1, v);
            if v >= 1 && score.get(t - 1, v - 1) > best {
                best = score.get(t - 1, v - 1);
                best_prev = v - 1;
            }
            if ext.can_skip_into(v) && score.get(t - 1, v - 2) > best {
                best = score.get(t - 1, v - 2);
                best_prev = v - 2;
            }
            if best != LOG_ZERO {
                score.set(t, v, best + y.logp(t, ext.symbol(v)));
            }
            back[t * states + v] = best_prev;
        }
    }
    let last = frames - 1;
    let mut v = if score.get(last, states - 2) > score.get(last, states - 1) {
        states - 2
    } else {
        states - 1
    };
    let log_posterior = score.get(last, v);
    let mut positions = vec![0; frames];
    for t in (0..frames).rev() {
        positions[t] = v;
        if t > 0 {
            v = back[t * states + v];
        }
    }
    let path: Vec<usize> = positions.iter().map(|&v| ext.symbol(v)).collect();
    debug_assert_eq!(collapse(&path), labels.tokens());
    Ok(Alignment::from_path(path, log_posterior))
}

/// Where to cut a hidden sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrimReport {
    pub frames: usize,
    /// Number of frames up to and including the last frame whose blank
    /// posterior does not exceed the threshold; 0 when every frame is a
    /// confident blank.
    pub last_active: usize,
    pub margin: usize,
    pub threshold: f64,
    /// Frames kept: `min(last_active + margin, frames)`, at least one.
    pub kept: usize,
    /// `kept / frames`.
    pub dsf: f64,
    /// `U / frames`, when the target length is known.
    pub oracle_dsf: Option<f64>,
}

impl TrimReport {
    pub fn with_target_len(mut self, tokens: usize) -> Self {
        self.oracle_dsf = Some(tokens as f64 / self.frames as f64);
        self
    }
}

/// Keeps everything up to the last frame that is not a confident blank, plus
/// `margin` frames.
pub fn trim_point(y: &PosteriorGrid, threshold: f64, margin: usize) -> TrimReport {
    let frames = y.frames();
    let last_active = (0..frames)
        .rev()
        .find(|&t| y.prob(t, BLANK) <= threshold)
        .map_or(0, |t| t + 1);
    let kept = (last_active + margin).min(frames).max(1);
    TrimReport {
        frames,
        last_active,
        margin,
        threshold,
        kept,
        dsf: kept as f64 / frames as f64,
        oracle_dsf: None,
    }
}

/// Keeps the first `report.kept` vectors.
pub fn trim<T: Clone>(hidden: &[T], report: &TrimReport) -> Result<Vec<T>> {
    if hidden.len() != report.frames {
        return Err(Error::LengthMismatch {
            expected: report.frames,
            actual: hidden.len(),
        });
    }
    Ok(hidden[..report.kept].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs(rows: Vec<Vec<f64>>) -> PosteriorGrid {
        PosteriorGrid::from_probs(&Grid::from_rows(&rows).unwrap()).unwrap()
    }

    fn trailing_blank_grid() -> PosteriorGrid {
        // frames 11..=20 (1-based) are confident blanks
        let rows = (0..20)
            .map(|t| {
                if t >= 10 {
                    vec![0.995, 0.005]
                } else {
                    vec![0.4, 0.6]
                }
            })
            .collect();
        probs(rows)
    }

    #[test]
    fn trim_point_on_constructed_grid() {
        let r = trim_point(&trailing_blank_grid(), DEFAULT_BLANK_THRESHOLD, DEFAULT_MARGIN);
        assert_eq!(r.last_active, 10);
        assert_eq!(r.kept, 15);
        assert_eq!(r.dsf, 0.75);
        let hidden: Vec<Vec<f64>> = (0..20).map(|t| vec![t as f64; 3]).collect();
        let trimmed = trim(&hidden, &r).unwrap();
        assert_eq!(trimmed.len(), 15);
        assert_eq!(trimmed[..], hidden[..15]);
    }

    #[test]
    fn no_trailing_blanks_keeps_everything() {
        let y = probs(vec![vec![0.5, 0.5]; 8]);
        let r = trim_point(&y, 0.99, 5);
        assert_eq!((r.last_active, r.kept, r.dsf), (8, 8, 1.0));
        let hidden = vec![[1.0, 2.0]; 8];
        assert_eq!(trim(&hidden, &r).unwrap(), hidden);
    }

    #[test]
    fn all_blank_keeps_margin() {
        let y = probs(vec![vec![0.999, 0.001]; 8]);
        let r = trim_point(&y, 0.99, 5);
        assert_eq!((r.last_active, r.kept), (0, 5));
        let y = probs(vec![vec![0.999, 0.001]; 3]);
        assert_eq!(trim_point(&y, 0.99, 5).kept, 3);
    }

    #[test]
    fn trim_rejects_length_mismatch() {
        let r = trim_point(&trailing_blank_grid(), 0.99, 5);
        assert!(matches!(
            trim(&[0.0; 19], &r),
            Err(Error::LengthMismatch { expected: 20, actual: 19 })
        ));
    }

    #[test]
    fn best_path_follows_one_hot_grid() {
        let path = [0, 1, 1, 0, 2, 0];
        let rows = path
            .iter()
            .map(|&s| {
                let mut r = vec![0.0; 3];
                r[s] = 1.0;
                r
            })
            .collect();
        let y = probs(rows);
        let l = LabelSeq::new(vec![1, 2], 2).unwrap();
        let ali = best_path(&y, &l).unwrap();
        assert_eq!(ali.path, path);
        assert_eq!(ali.log_posterior, 0.0);
        assert_eq!(
            ali.token_spans,
            vec![
                TokenSpan { token: 1, start: 1, end: 2 },
                TokenSpan { token: 2, start: 4, end: 4 }
            ]
        );
    }

    #[test]
    fn best_path_prefers_early_emission_on_ties() {
        // uniform grid: every path ties, so tokens enter as early as possible
        let y = probs(vec![vec![1.0 / 3.0; 3]; 4]);
        let l = LabelSeq::new(vec![1, 2], 2).unwrap();
        let ali = best_path(&y, &l).unwrap();
        assert_eq!(ali.path, vec![1, 2, 0, 0]);
    }

    #[test]
    fn greedy_path_collapses() {
        let y = probs(vec![
            vec![0.1, 0.8, 0.1],
            vec![0.1, 0.8, 0.1],
            vec![0.9, 0.05, 0.05],
            vec![0.1, 0.1, 0.8],
        ]);
        let ali = greedy_path(&y);
        assert_eq!(ali.path, vec![1, 1, 0, 2]);
        assert_eq!(ali.tokens(), vec![1, 2]);
        assert_eq!(ali.end_frames(), vec![1, 3]);
        assert_eq!(ali.last_spike(), Some(3));
    }
}
