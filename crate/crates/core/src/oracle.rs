//! Brute-force reference: enumerate every path, score it in the plain
//! probability domain, and sum. Shares no numerical machinery with the
//! lattice code, which makes it the ground truth for tiny instances.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::lattice::{LabelSeq, PosteriorGrid, BLANK};

/// Upper bound on `(V+1)^T` accepted by [`enumerate_paths`].
pub const ENUMERATION_LIMIT: f64 = 1e7;

/// The collapse mapping: merge repeats, then drop blanks. The result may be
/// empty.
pub fn collapse(symbols: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = BLANK;
    for &s in symbols {
        if s != BLANK && s != prev {
            out.push(s);
        }
        prev = s;
    }
    out
}

/// One alignment path and its posterior.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    pub symbols: Vec<usize>,
    /// `sum_t log y^t_{pi_t}`.
    pub log_posterior: f64,
    /// `prod_t y^t_{pi_t}`, multiplied out in the probability domain.
    pub posterior: f64,
}

/// Every length-`frames` symbol sequence over `0..=vocab` that collapses to
/// `labels`, in lexicographic order.
pub fn enumerate_paths(frames: usize, labels: &LabelSeq, vocab: usize) -> Result<Vec<Vec<usize>>> {
    let count = ((vocab + 1) as f64).powi(frames as i32);
    if count > ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut out = Vec::new();
    let mut prefix = Vec::with_capacity(frames);
    extend(&mut prefix, 0, frames, labels.tokens(), vocab, &mut out);
    Ok(out)
}

// `emitted` counts target tokens already produced by `prefix`.
fn extend(
    prefix: &mut Vec<usize>,
    emitted: usize,
    frames: usize,
    target: &[usize],
    vocab: usize,
    out: &mut Vec<Vec<usize>>,
) {
    if prefix.len() == frames {
        if emitted == target.len() {
            out.push(prefix.clone());
        }
        return;
    }
    let prev = prefix.last().copied().unwrap_or(BLANK);
    for s in 0..=vocab {
        let next = if s == BLANK || s == prev {
            emitted
        } else if emitted < target.len() && target[emitted] == s {
            emitted + 1
        } else {
            continue;
        };
        prefix.push(s);
        extend(prefix, next, frames, target, vocab, out);
        prefix.pop();
    }
}

pub fn score_paths(y: &PosteriorGrid, paths: Vec<Vec<usize>>) -> Vec<Path> {
    paths
        .into_iter()
        .map(|symbols| {
            let mut posterior = 1.0;
            let mut log_posterior = 0.0;
            for (t, &s) in symbols.iter().enumerate() {
                posterior *= y.prob(t, s);
                log_posterior += y.logp(t, s);
            }
            Path {
                symbols,
                log_posterior,
                posterior,
            }
        })
        .collect()
}

/// All scored paths of `labels` under `y`.
pub fn oracle_paths(y: &PosteriorGrid, labels: &LabelSeq) -> Result<Vec<Path>> {
    let paths = enumerate_paths(y.frames(), labels, y.vocab())?;
    Ok(score_paths(y, paths))
}

/// `sum_i posterior_i * risk_i`, literally.
pub fn oracle_objective(posteriors: &[f64], risks: &[f64]) -> f64 {
    posteriors.iter().zip(risks).map(|(p, r)| p * r).sum()
}

/// Last frame (0-based) at which the path is still emitting target token `u`
/// (0-based), tracking token occurrences so repeated ids stay distinct.
pub fn token_end_frame(symbols: &[usize], u: usize) -> Option<usize> {
    let mut index: Option<usize> = None;
    let mut prev = BLANK;
    let mut end = None;
    for (t, &s) in symbols.iter().enumerate() {
        if s != BLANK {
            if s != prev {
                index = Some(index.map_or(0, |i| i + 1));
            }
            if index == Some(u) {
                end = Some(t);
            }
        }
        prev = s;
    }
    end
}

/// Path mass partitioned by the end frame of token `u`.
pub fn oracle_group_sums(paths: &[Path], u: usize) -> BTreeMap<usize, f64> {
    let mut groups = BTreeMap::new();
    for path in paths {
        if let Some(tau) = token_end_frame(&path.symbols, u) {
            *groups.entry(tau).or_insert(0.0) += path.posterior;
        }
    }
    groups
}

/// Total path mass, `P(l|x)`.
pub fn oracle_total(paths: &[Path]) -> f64 {
    paths.iter().map(|p| p.posterior).sum()
}

/// Down-sampling objective with the 1-based end frame in the exponent:
/// `sum_pi p(pi) exp(-lambda * tau / T)` for the last token.
pub fn oracle_downsample_objective(paths: &[Path], frames: usize, lambda: f64) -> f64 {
    let posteriors: Vec<f64> = paths.iter().map(|p| p.posterior).collect();
    let risks: Vec<f64> = paths
        .iter()
        .map(|p| {
            let last = p.symbols.iter().rposition(|&s| s != BLANK).unwrap_or(0);
            (-lambda * (last + 1) as f64 / frames as f64).exp()
        })
        .collect();
    oracle_objective(&posteriors, &risks)
}

/// Per-token early-emission sum `J'(u)` and its bias frame (0-based, ties to
/// the smallest frame).
pub fn oracle_early_emission_term(paths: &[Path], frames: usize, u: usize, lambda: f64) -> (f64, usize) {
    let groups = oracle_group_sums(paths, u);
    let mut bias = 0;
    let mut best = f64::NEG_INFINITY;
    for (&tau, &mass) in &groups {
        if mass > best {
            best = mass;
            bias = tau;
        }
    }
    let posteriors: Vec<f64> = paths.iter().map(|p| p.posterior).collect();
    let risks: Vec<f64> = paths
        .iter()
        .map(|p| {
            let tau = token_end_frame(&p.symbols, u).expect("member path emits every token");
            (-lambda * (tau as f64 - bias as f64) / frames as f64).exp()
        })
        .collect();
    (oracle_objective(&posteriors, &risks), bias)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Grid;

    const A: usize = 1;
    const B: usize = 2;

    #[test]
    fn collapse_cases() {
        assert_eq!(collapse(&[0, A, A, 0, A, B, B]), vec![A, A, B]);
        assert!(collapse(&[0, 0, 0]).is_empty());
        assert_eq!(collapse(&[1, 2, 3]), vec![1, 2, 3]);
    }

    #[test]
    fn five_paths_for_ab_in_three_frames() {
        let l = LabelSeq::new(vec![A, B], 2).unwrap();
        let mut paths = enumerate_paths(3, &l, 2).unwrap();
        paths.sort();
        let mut expected = vec![
            vec![A, B, 0],
            vec![A, B, B],
            vec![A, A, B],
            vec![A, 0, B],
            vec![0, A, B],
        ];
        expected.sort();
        assert_eq!(paths, expected);
    }

    #[test]
    fn infeasible_and_tight_enumerations() {
        let aa = LabelSeq::new(vec![A, A], 1).unwrap();
        assert!(enumerate_paths(2, &aa, 1).unwrap().is_empty());
        let abc = LabelSeq::new(vec![1, 2, 3], 3).unwrap();
        assert_eq!(enumerate_paths(3, &abc, 3).unwrap(), vec![vec![1, 2, 3]]);
    }

    #[test]
    fn guard_rejects_large_enumeration() {
        let l = LabelSeq::new(vec![1], 9).unwrap();
        assert!(matches!(enumerate_paths(8, &l, 9), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn worked_grouping_example() {
        // posteriors of AB∅, ABB, AAB, A∅B, ∅AB and the two group risks
        let posteriors = [0.3, 0.1, 0.2, 0.0, 0.1];
        let risks = [1.0, 0.8, 0.8, 0.8, 0.8];
        assert!((oracle_objective(&posteriors, &risks) - 0.62).abs() < 1e-15);
        assert_eq!(oracle_objective(&posteriors, &[1.0; 5]), posteriors.iter().sum::<f64>());
        assert_eq!(oracle_objective(&posteriors, &[0.0; 5]), 0.0);

        let symbols = [
            vec![A, B, 0],
            vec![A, B, B],
            vec![A, A, B],
            vec![A, 0, B],
            vec![0, A, B],
        ];
        let paths: Vec<Path> = symbols
            .iter()
            .zip(posteriors)
            .map(|(s, p)| Path {
                symbols: s.clone(),
                log_posterior: p.ln(),
                posterior: p,
            })
            .collect();
        // 1-based frames 2 and 3
        let groups = oracle_group_sums(&paths, 1);
        assert_eq!(groups.len(), 2);
        assert!((groups[&1] - 0.3).abs() < 1e-15);
        assert!((groups[&2] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn token_end_frame_distinguishes_repeats() {
        let path = [A, 0, A, A, 0];
        assert_eq!(token_end_frame(&path, 0), Some(0));
        assert_eq!(token_end_frame(&path, 1), Some(3));
        assert_eq!(token_end_frame(&path, 2), None);
    }

    #[test]
    fn normalized_grid_mass_sums_to_one_over_all_targets() {
        // every sequence of 3 frames over {∅, A, B} lands in exactly one target
        let rows = vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.1, 0.3], vec![0.25, 0.25, 0.5]];
        let y = PosteriorGrid::from_probs(&Grid::from_rows(&rows).unwrap()).unwrap();
        let mut total = 0.0;
        let mut targets = vec![vec![]];
        for len in 1..=3 {
            let mut next = Vec::new();
            for t in &targets {
                if t.len() == len - 1 {
                    for k in 1..=2 {
                        let mut e: Vec<usize> = t.clone();
                        e.push(k);
                        next.push(e);
                    }
                }
            }
            targets.extend(next);
        }
        // empty target: the all-blank path
        total += (0..3).map(|t| y.prob(t, 0)).product::<f64>();
        for t in targets.iter().filter(|t| !t.is_empty()) {
            let l = LabelSeq::new(t.clone(), 2).unwrap();
            total += oracle_total(&oracle_paths(&y, &l).unwrap());
        }
        assert!((total - 1.0).abs() < 1e-12);
    }
}
