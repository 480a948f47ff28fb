//! Sequence types and the vanilla CTC forward-backward lattice.
//!
//! Everything here works in the log domain. `f64::NEG_INFINITY` is the
//! sentinel for an exact zero and is absorbed by [`logsumexp`].
//!
//! Index convention: frames `t` run over `0..T`, extended-label positions `v`
//! over `0..2U+1` (even positions are blanks, token `u` sits at `2u + 1`),
//! target tokens `u` over `0..U`. Symbol id `0` is the blank; tokens are
//! `1..=V`.

use crate::error::{Error, Result};

/// Symbol id of the blank.
pub const BLANK: usize = 0;

/// Log-domain zero.
pub const LOG_ZERO: f64 = f64::NEG_INFINITY;

/// Largest allowed `|logsumexp(row)|` for a grid built from log-probabilities.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// `log(sum(exp(values)))`, max-shifted. An empty or all-sentinel input
/// returns the sentinel.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(LOG_ZERO, f64::max);
    if max == LOG_ZERO {
        return LOG_ZERO;
    }
    if max.is_infinite() || max.is_nan() {
        return max;
    }
    max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

#[inline]
pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    if a == LOG_ZERO {
        return b;
    }
    if b == LOG_ZERO {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Grid {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Grid { rows, cols, data })
    }

    /// Builds a grid from nested rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::LengthMismatch {
                    expected: cols,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Grid {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).map(<[f64]>::to_vec).collect()
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &Grid) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A target sequence `l = [l_1, ..., l_U]` over the tokens `1..=vocab`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabelSeq {
    tokens: Vec<usize>,
    vocab: usize,
}

impl LabelSeq {
    pub fn new(tokens: Vec<usize>, vocab: usize) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::InvalidLabels("target must hold at least one token".into()));
        }
        if let Some(&bad) = tokens.iter().find(|&&k| k == BLANK || k > vocab) {
            return Err(Error::InvalidLabels(format!(
                "token id {bad} outside 1..={vocab}"
            )));
        }
        Ok(LabelSeq { tokens, vocab })
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    /// Number of adjacent equal token pairs.
    pub fn repeats(&self) -> usize {
        self.tokens.windows(2).filter(|w| w[0] == w[1]).count()
    }

    /// Shortest frame count admitting at least one path.
    pub fn min_frames(&self) -> usize {
        self.len() + self.repeats()
    }
}

/// The blank-interleaved target `l' = [∅, l_1, ∅, ..., l_U, ∅]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtendedLabels {
    symbols: Vec<usize>,
    labels: LabelSeq,
}

impl ExtendedLabels {
    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn source(&self) -> &LabelSeq {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    #[inline]
    pub fn symbol(&self, v: usize) -> usize {
        self.symbols[v]
    }

    /// Extended position of target token `u`.
    #[inline]
    pub fn token_position(u: usize) -> usize {
        2 * u + 1
    }

    /// Whether a path may jump from `v - 2` straight to `v`.
    #[inline]
    pub fn can_skip_into(&self, v: usize) -> bool {
        v >= 2 && self.symbols[v] != BLANK && self.symbols[v] != self.symbols[v - 2]
    }

    /// Positions a complete path may occupy on its last frame.
    #[inline]
    pub fn is_terminal(&self, v: usize) -> bool {
        v + 2 >= self.symbols.len()
    }
}

pub fn extend_labels(labels: &LabelSeq) -> ExtendedLabels {
    let mut symbols = Vec::with_capacity(2 * labels.len() + 1);
    symbols.push(BLANK);
    for &k in labels.tokens() {
        symbols.push(k);
        symbols.push(BLANK);
    }
    ExtendedLabels {
        symbols,
        labels: labels.clone(),
    }
}

/// Per-frame log-posteriors over the blank-extended vocabulary, `T × (V+1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorGrid {
    logp: Grid,
}

impl PosteriorGrid {
    /// Log-softmax over each row of pre-softmax scores.
    pub fn from_logits(logits: &Grid) -> Result<Self> {
        Self::check_shape(logits)?;
        let mut logp = logits.clone();
        for t in 0..logp.rows() {
            let row = logp.row_mut(t);
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidGrid(format!("non-finite logit in frame {t}")));
            }
            let norm = logsumexp(row);
            row.iter_mut().for_each(|x| *x -= norm);
        }
        Ok(PosteriorGrid { logp })
    }

    /// Takes rows that are already normalized log-probabilities.
    pub fn from_log_probs(logp: Grid) -> Result<Self> {
        Self::check_shape(&logp)?;
        for t in 0..logp.rows() {
            let row = logp.row(t);
            if row.iter().any(|&x| x.is_nan() || x > 0.0 || x == f64::INFINITY) {
                return Err(Error::InvalidGrid(format!(
                    "frame {t} holds an entry that is not a log-probability"
                )));
            }
            let norm = logsumexp(row);
            if norm.is_nan() || norm.abs() > NORMALIZATION_TOLERANCE {
                return Err(Error::InvalidGrid(format!(
                    "frame {t} is not normalized (log-sum {norm:e})"
                )));
            }
        }
        Ok(PosteriorGrid { logp })
    }

    /// Takes plain probabilities; zeros become the sentinel.
    pub fn from_probs(probs: &Grid) -> Result<Self> {
        let mut logp = probs.clone();
        logp.data.iter_mut().for_each(|p| *p = p.ln());
        Self::from_log_probs(logp)
    }

    fn check_shape(g: &Grid) -> Result<()> {
        if g.rows() == 0 {
            return Err(Error::InvalidGrid("grid has no frames".into()));
        }
        if g.cols() < 2 {
            return Err(Error::InvalidGrid(
                "grid needs the blank plus at least one token".into(),
            ));
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.logp.rows()
    }

    /// Symbols per frame, blank included (`V + 1`).
    pub fn symbols(&self) -> usize {
        self.logp.cols()
    }

    /// Vocabulary size `V`, blank excluded.
    pub fn vocab(&self) -> usize {
        self.logp.cols() - 1
    }

    #[inline]
    pub fn logp(&self, t: usize, k: usize) -> f64 {
        self.logp.get(t, k)
    }

    pub fn prob(&self, t: usize, k: usize) -> f64 {
        self.logp.get(t, k).exp()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        self.logp.row(t)
    }

    pub fn log_probs(&self) -> &Grid {
        &self.logp
    }
}

/// Forward and backward tables, `T × (2U+1)`, both in the log domain.
///
/// `beta(t, v)` includes the frame-`t` emission, so the occupation of a cell
/// is `alpha + beta - log y`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeVars {
    pub alpha: Grid,
    pub beta: Grid,
}

/// Exact structural reachability: does any path of `frames` frames reach a
/// terminal position? Ignores the posterior values.
pub fn is_feasible(ext: &ExtendedLabels, frames: usize) -> bool {
    let states = ext.len();
    let mut reach = vec![false; states];
    reach[0] = true;
    if states > 1 {
        reach[1] = true;
    }
    for _ in 1..frames {
        let prev = reach.clone();
        for v in 0..states {
            reach[v] = prev[v]
                || (v >= 1 && prev[v - 1])
                || (ext.can_skip_into(v) && prev[v - 2]);
        }
    }
    (0..states).any(|v| ext.is_terminal(v) && reach[v])
}

fn check_inputs(y: &PosteriorGrid, ext: &ExtendedLabels) -> Result<()> {
    let labels = ext.source();
    if let Some(&k) = labels.tokens().iter().find(|&&k| k >= y.symbols()) {
        return Err(Error::InvalidLabels(format!(
            "token id {k} does not fit a grid with vocabulary {}",
            y.vocab()
        )));
    }
    if !is_feasible(ext, y.frames()) {
        return Err(Error::InfeasibleAlignment {
            frames: y.frames(),
            min_frames: labels.min_frames(),
        });
    }
    Ok(())
}

/// Forward table `alpha(t, v)`: log mass of all path prefixes ending in
/// position `v` at frame `t`.
pub fn forward(y: &PosteriorGrid, ext: &ExtendedLabels) -> Result<Grid> {
    check_inputs(y, ext)?;
    Ok(forward_unchecked(y, ext))
}

fn forward_unchecked(y: &PosteriorGrid, ext: &ExtendedLabels) -> Grid {
    let (frames, states) = (y.frames(), ext.len());
    let mut alpha = Grid::filled(frames, states, LOG_ZERO);
    alpha.set(0, 0, y.logp(0, ext.symbol(0)));
    if states > 1 {
        alpha.set(0, 1, y.logp(0, ext.symbol(1)));
    }
    for t in 1..frames {
        for v in 0..states {
            let mut acc = alpha.get(t - 1, v);
            if v >= 1 {
                acc = log_add(acc, alpha.get(t - 1, v - 1));
            }
            if ext.can_skip_into(v) {
                acc = log_add(acc, alpha.get(t - 1, v - 2));
            }
            if acc != LOG_ZERO {
                alpha.set(t, v, acc + y.logp(t, ext.symbol(v)));
            }
        }
    }
    alpha
}

/// Backward table `beta(t, v)`: log mass of all path suffixes starting in
/// position `v` at frame `t`, frame `t` included.
pub fn backward(y: &PosteriorGrid, ext: &ExtendedLabels) -> Result<Grid> {
    check_inputs(y, ext)?;
    Ok(backward_unchecked(y, ext))
}

fn backward_unchecked(y: &PosteriorGrid, ext: &ExtendedLabels) -> Grid {
    let (frames, states) = (y.frames(), ext.len());
    let last = frames - 1;
    let mut beta = Grid::filled(frames, states, LOG_ZERO);
    beta.set(last, states - 1, y.logp(last, ext.symbol(states - 1)));
    beta.set(last, states - 2, y.logp(last, ext.symbol(states - 2)));
    for t in (0..last).rev() {
        for v in 0..states {
            let mut acc = beta.get(t + 1, v);
            if v + 1 < states {
                acc = log_add(acc, beta.get(t + 1, v + 1));
            }
            if v + 2 < states && ext.can_skip_into(v + 2) {
                acc = log_add(acc, beta.get(t + 1, v + 2));
            }
            if acc != LOG_ZERO {
                beta.set(t, v, acc + y.logp(t, ext.symbol(v)));
            }
        }
    }
    beta
}

/// A fully evaluated lattice for one utterance.
#[derive(Clone, Debug)]
pub struct Lattice<'a> {
    y: &'a PosteriorGrid,
    ext: ExtendedLabels,
    vars: LatticeVars,
    log_likelihood: f64,
}

impl<'a> Lattice<'a> {
    pub fn new(y: &'a PosteriorGrid, labels: &LabelSeq) -> Result<Self> {
        let ext = extend_labels(labels);
        check_inputs(y, &ext)?;
        let alpha = forward_unchecked(y, &ext);
        let beta = backward_unchecked(y, &ext);
        let (last, states) = (y.frames() - 1, ext.len());
        let log_likelihood = log_add(alpha.get(last, states - 1), alpha.get(last, states - 2));
        Ok(Lattice {
            y,
            ext,
            vars: LatticeVars { alpha, beta },
            log_likelihood,
        })
    }

    pub fn posteriors(&self) -> &'a PosteriorGrid {
        self.y
    }

    pub fn extended(&self) -> &ExtendedLabels {
        &self.ext
    }

    pub fn vars(&self) -> &LatticeVars {
        &self.vars
    }

    pub fn frames(&self) -> usize {
        self.y.frames()
    }

    pub fn states(&self) -> usize {
        self.ext.len()
    }

    #[inline]
    pub fn alpha(&self, t: usize, v: usize) -> f64 {
        self.vars.alpha.get(t, v)
    }

    #[inline]
    pub fn beta(&self, t: usize, v: usize) -> f64 {
        self.vars.beta.get(t, v)
    }

    /// `log y^t` of the symbol at extended position `v`.
    #[inline]
    pub fn emission(&self, t: usize, v: usize) -> f64 {
        self.y.logp(t, self.ext.symbol(v))
    }

    /// `log P(l|x)` from the two terminal forward cells.
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// Log mass of the paths occupying position `v` at frame `t`.
    pub fn occupation(&self, t: usize, v: usize) -> f64 {
        let (a, b) = (self.alpha(t, v), self.beta(t, v));
        if a == LOG_ZERO || b == LOG_ZERO {
            return LOG_ZERO;
        }
        a + b - self.emission(t, v)
    }

    /// `log P(l|x)` re-derived from the occupations of frame `t`.
    pub fn log_likelihood_at(&self, t: usize) -> f64 {
        let occ: Vec<f64> = (0..self.states()).map(|v| self.occupation(t, v)).collect();
        logsumexp(&occ)
    }
}

/// Result of a loss evaluation. The objective is in nats.
#[derive(Clone, Debug, PartialEq)]
pub struct LossResult {
    pub neg_log_objective: f64,
    /// Gradient of `neg_log_objective` w.r.t. the pre-softmax logits.
    pub grad_logits: Option<Grid>,
    /// Set when at least one per-token term was floored at the clamp value.
    pub clamped: bool,
}

/// Maps `w = dL/d(log y)` through the softmax Jacobian: row-wise
/// `dL/dz_k = w_k - y_k * sum_j w_j`.
pub(crate) fn logits_grad_from_log_grad(y: &PosteriorGrid, w: &Grid) -> Grid {
    let mut out = w.clone();
    for t in 0..y.frames() {
        let total: f64 = w.row(t).iter().sum();
        for (k, g) in out.row_mut(t).iter_mut().enumerate() {
            *g -= y.prob(t, k) * total;
        }
    }
    out
}

/// `-log P(l|x)`, no gradient.
pub fn ctc_loss(y: &PosteriorGrid, labels: &LabelSeq) -> Result<LossResult> {
    let lattice = Lattice::new(y, labels)?;
    let ll = lattice.log_likelihood();
    if ll == LOG_ZERO {
        return Err(Error::DegenerateObjective);
    }
    Ok(LossResult {
        neg_log_objective: -ll,
        grad_logits: None,
        clamped: false,
    })
}

/// `-log P(l|x)` together with its gradient w.r.t. the logits.
pub fn ctc_loss_with_grad(y: &PosteriorGrid, labels: &LabelSeq) -> Result<LossResult> {
    let lattice = Lattice::new(y, labels)?;
    let ll = lattice.log_likelihood();
    if ll == LOG_ZERO {
        return Err(Error::DegenerateObjective);
    }
    Ok(LossResult {
        neg_log_objective: -ll,
        grad_logits: Some(ctc_grad_from_lattice(&lattice)),
        clamped: false,
    })
}

/// `-log` of the frame-`t` occupation sum. Equal to [`ctc_loss`] for every
/// `t`; exists so that identity can be checked.
pub fn ctc_loss_at_frame(y: &PosteriorGrid, labels: &LabelSeq, t: usize) -> Result<f64> {
    if t >= y.frames() {
        return Err(Error::LengthMismatch {
            expected: y.frames(),
            actual: t,
        });
    }
    let lattice = Lattice::new(y, labels)?;
    Ok(-lattice.log_likelihood_at(t))
}

/// Log occupation probability of cell `(t, v)` (0-based).
pub fn occupation(y: &PosteriorGrid, labels: &LabelSeq, t: usize, v: usize) -> Result<f64> {
    let lattice = Lattice::new(y, labels)?;
    if t >= lattice.frames() || v >= lattice.states() {
        return Err(Error::LengthMismatch {
            expected: lattice.states(),
            actual: v,
        });
    }
    Ok(lattice.occupation(t, v))
}

/// Per-symbol log occupation `log sum_{v : l'_v = k} alpha beta / y` of frame `t`.
pub(crate) fn symbol_occupations(lattice: &Lattice<'_>, t: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = LOG_ZERO);
    for v in 0..lattice.states() {
        let k = lattice.extended().symbol(v);
        out[k] = log_add(out[k], lattice.occupation(t, v));
    }
}

fn ctc_grad_from_lattice(lattice: &Lattice<'_>) -> Grid {
    let y = lattice.posteriors();
    let ll = lattice.log_likelihood();
    let mut w = Grid::filled(y.frames(), y.symbols(), 0.0);
    let mut occ = vec![LOG_ZERO; y.symbols()];
    for t in 0..y.frames() {
        symbol_occupations(lattice, t, &mut occ);
        for (k, g) in w.row_mut(t).iter_mut().enumerate() {
            *g = -(occ[k] - ll).exp();
        }
    }
    logits_grad_from_log_grad(y, &w)
}

/// Gradient of `-log P(l|x)` w.r.t. the pre-softmax logits.
pub fn ctc_grad(y: &PosteriorGrid, labels: &LabelSeq) -> Result<Grid> {
    let lattice = Lattice::new(y, labels)?;
    if lattice.log_likelihood() == LOG_ZERO {
        return Err(Error::DegenerateObjective);
    }
    Ok(ctc_grad_from_lattice(&lattice))
}

/// Gradient of `-log P(l|x)` w.r.t. the posteriors `y` themselves:
/// `-(1/P) (1/y²) sum_{v in lab(k)} alpha beta`. Linear domain; entries with
/// `y = 0` are left at zero.
pub fn ctc_posterior_grad(y: &PosteriorGrid, labels: &LabelSeq) -> Result<Grid> {
    let lattice = Lattice::new(y, labels)?;
    let ll = lattice.log_likelihood();
    if ll == LOG_ZERO {
        return Err(Error::DegenerateObjective);
    }
    let mut g = Grid::filled(y.frames(), y.symbols(), 0.0);
    for t in 0..y.frames() {
        for v in 0..lattice.states() {
            let k = lattice.extended().symbol(v);
            let ab = lattice.alpha(t, v) + lattice.beta(t, v);
            if ab == LOG_ZERO {
                continue;
            }
            let dp = (ab - 2.0 * y.logp(t, k) - ll).exp();
            g.set(t, k, g.get(t, k) - dp);
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(probs: &[&[f64]]) -> PosteriorGrid {
        let rows: Vec<Vec<f64>> = probs.iter().map(|r| r.to_vec()).collect();
        PosteriorGrid::from_probs(&Grid::from_rows(&rows).unwrap()).unwrap()
    }

    fn uniform(frames: usize, symbols: usize) -> PosteriorGrid {
        let p = 1.0 / symbols as f64;
        let rows = vec![vec![p; symbols]; frames];
        PosteriorGrid::from_probs(&Grid::from_rows(&rows).unwrap()).unwrap()
    }

    fn labels(tokens: &[usize], vocab: usize) -> LabelSeq {
        LabelSeq::new(tokens.to_vec(), vocab).unwrap()
    }

    const A: usize = 1;
    const B: usize = 2;

    #[test]
    fn extend_labels_interleaves_blanks() {
        assert_eq!(extend_labels(&labels(&[A], 2)).symbols(), &[0, A, 0]);
        let ext = extend_labels(&labels(&[A, A, B], 2));
        assert_eq!(ext.symbols(), &[0, A, 0, A, 0, B, 0]);
        assert_eq!(ext.len(), 7);
    }

    #[test]
    fn label_seq_rejects_blank_and_out_of_range() {
        assert!(LabelSeq::new(vec![], 3).is_err());
        assert!(LabelSeq::new(vec![0, 1], 3).is_err());
        assert!(LabelSeq::new(vec![4], 3).is_err());
        assert_eq!(labels(&[A, A, B, B, B], 2).repeats(), 3);
    }

    #[test]
    fn logsumexp_cases() {
        let half = 0.5f64.ln();
        assert!(logsumexp(&[half, half]).abs() < 1e-15);
        assert!((logsumexp(&[LOG_ZERO, 0.3f64.ln()]) - 0.3f64.ln()).abs() < 1e-15);
        let table = [0.3f64, 0.1, 0.2, 0.0, 0.1].map(f64::ln);
        assert!((logsumexp(&table) - 0.7f64.ln()).abs() < 1e-12);
        assert_eq!(logsumexp(&[LOG_ZERO, LOG_ZERO]), LOG_ZERO);
        assert_eq!(logsumexp(&[]), LOG_ZERO);
        assert!((logsumexp(&[-1000.0, -1000.0]) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn single_frame_initial_conditions() {
        let y = grid(&[&[0.4, 0.6]]);
        let ext = extend_labels(&labels(&[A], 1));
        let alpha = forward(&y, &ext).unwrap();
        assert!((alpha.get(0, 1) - 0.6f64.ln()).abs() < 1e-15);
        assert!((alpha.get(0, 0) - 0.4f64.ln()).abs() < 1e-15);
        assert_eq!(alpha.get(0, 2), LOG_ZERO);
        let beta = backward(&y, &ext).unwrap();
        assert!((beta.get(0, 1) - 0.6f64.ln()).abs() < 1e-15);
        assert!((beta.get(0, 2) - 0.4f64.ln()).abs() < 1e-15);
        assert_eq!(beta.get(0, 0), LOG_ZERO);

        let loss = ctc_loss(&y, &labels(&[A], 1)).unwrap();
        assert!((loss.neg_log_objective + 0.6f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn repeat_needs_separating_blank() {
        let y = uniform(2, 2);
        let err = ctc_loss(&y, &labels(&[A, A], 1)).unwrap_err();
        assert_eq!(
            err,
            Error::InfeasibleAlignment {
                frames: 2,
                min_frames: 3
            }
        );
        assert!(ctc_loss(&uniform(3, 2), &labels(&[A, A], 1)).is_ok());
    }

    #[test]
    fn two_frames_three_paths() {
        // paths ∅A, A∅, AA each with mass 1/4
        let y = grid(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let loss = ctc_loss(&y, &labels(&[A], 1)).unwrap();
        assert!((loss.neg_log_objective + 0.75f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn uniform_three_frames_ab() {
        // 5 paths, each (1/3)^3
        let y = uniform(3, 3);
        let l = labels(&[A, B], 2);
        let expected = (5.0f64 / 27.0).ln();
        let ext = extend_labels(&l);
        let alpha = forward(&y, &ext).unwrap();
        assert!((log_add(alpha.get(2, 3), alpha.get(2, 4)) - expected).abs() < 1e-14);
        assert!((ctc_loss(&y, &l).unwrap().neg_log_objective + expected).abs() < 1e-14);
        assert!((ctc_loss_at_frame(&y, &l, 1).unwrap() + expected).abs() < 1e-14);
        // AB∅, ABB, AAB, A∅B start with A
        let occ = occupation(&y, &l, 0, 1).unwrap();
        assert!((occ - (4.0f64 / 27.0).ln()).abs() < 1e-14);
        assert_eq!(occupation(&y, &l, 0, 3).unwrap(), LOG_ZERO);
    }

    #[test]
    fn backward_mirrors_forward_reachability() {
        let y = uniform(4, 3);
        let l = labels(&[A, B], 2);
        let lattice = Lattice::new(&y, &l).unwrap();
        for t in 0..4 {
            for v in 0..5 {
                let fwd_dead = lattice.alpha(t, v) == LOG_ZERO;
                let occ_dead = lattice.occupation(t, v) == LOG_ZERO;
                if fwd_dead {
                    assert!(occ_dead);
                }
            }
            assert!((lattice.log_likelihood_at(t) - lattice.log_likelihood()).abs() < 1e-12);
        }
        assert_eq!(lattice.alpha(0, 4), LOG_ZERO);
        assert_eq!(lattice.beta(3, 0), LOG_ZERO);
    }

    #[test]
    fn single_frame_grad_is_cross_entropy() {
        let logits = Grid::from_rows(&[vec![0.3, -1.2, 0.7]]).unwrap();
        let y = PosteriorGrid::from_logits(&logits).unwrap();
        let g = ctc_grad(&y, &labels(&[2], 2)).unwrap();
        for k in 0..3 {
            let onehot = if k == 2 { 1.0 } else { 0.0 };
            assert!((g.get(0, k) - (y.prob(0, k) - onehot)).abs() < 1e-14);
        }
    }

    #[test]
    fn absent_symbol_grad_is_softmax() {
        let logits = Grid::from_rows(&[
            vec![0.1, 0.5, -0.3, 0.2],
            vec![0.4, -0.2, 0.9, 0.0],
            vec![-0.6, 0.3, 0.1, 0.8],
        ])
        .unwrap();
        let y = PosteriorGrid::from_logits(&logits).unwrap();
        let g = ctc_grad(&y, &labels(&[1, 2], 3)).unwrap();
        for t in 0..3 {
            assert!((g.get(t, 3) - y.prob(t, 3)).abs() < 1e-14);
            assert!(g.row(t).iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn posterior_grad_composes_to_logit_grad() {
        let logits = Grid::from_rows(&[
            vec![0.1, 0.5, -0.3],
            vec![0.4, -0.2, 0.9],
            vec![-0.6, 0.3, 0.1],
            vec![0.2, 0.2, -0.5],
        ])
        .unwrap();
        let y = PosteriorGrid::from_logits(&logits).unwrap();
        let l = labels(&[1, 2], 2);
        let gy = ctc_posterior_grad(&y, &l).unwrap();
        let gz = ctc_grad(&y, &l).unwrap();
        for t in 0..4 {
            let dot: f64 = (0..3).map(|j| y.prob(t, j) * gy.get(t, j)).sum();
            for k in 0..3 {
                let composed = y.prob(t, k) * (gy.get(t, k) - dot);
                assert!((composed - gz.get(t, k)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn from_log_probs_rejects_unnormalized() {
        let g = Grid::from_rows(&[vec![0.5f64.ln(), 0.6f64.ln()]]).unwrap();
        assert!(matches!(
            PosteriorGrid::from_log_probs(g),
            Err(Error::InvalidGrid(_))
        ));
    }

    #[test]
    fn feasibility_matches_min_frames() {
        for tokens in [vec![1], vec![1, 1], vec![1, 2, 2, 1], vec![2, 2, 2]] {
            let l = labels(&tokens, 2);
            let ext = extend_labels(&l);
            for frames in 1..9 {
                assert_eq!(is_feasible(&ext, frames), frames >= l.min_frames());
            }
        }
    }
}
