//! Bayes-risk CTC: paths grouped by the frame at which a token's emission
//! ends, each group scaled by a risk `r_g(tau)`.
//!
//! Two objectives are provided:
//!
//! * down-sampling, `-log sum_tau exp(-lambda * tau / T) * G_U(tau)`, which
//!   rewards finishing the last token early;
//! * early emission, `-(1/U) sum_u log J'(u)` with
//!   `J'(u) = sum_tau exp(-lambda * (tau - tau'_u) / T) * G_u(tau)` and
//!   `tau'_u` the heaviest group of token `u`.
//!
//! `G_u(tau)` is the mass of all paths whose last frame on token `u` is
//! `tau`. In the exponent of the down-sampling risk `tau` is counted from 1
//! (so the final frame gives `exp(-lambda)`); everywhere else frames are
//! 0-based like the rest of the crate.
//!
//! Gradients use a risk-weighted forward-backward pass rather than reverse
//! accumulation through the tables: for token position `p = 2u+1`, positions
//! `v <= p` carry the risk in a weighted backward table and positions `v > p`
//! in a weighted forward table, so every cell's risk-weighted occupation is
//! available in one sweep and the logit gradient is `y - W / J`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{
    ctc_loss, ctc_loss_with_grad, log_add, logits_grad_from_log_grad, logsumexp, ExtendedLabels, Grid,
    LabelSeq, Lattice, LossResult, PosteriorGrid, LOG_ZERO,
};

/// Default log-domain floor for per-token early-emission terms.
pub const DEFAULT_CLAMP_FLOOR: f64 = -1e30;

/// Log-difference operands closer than this (relative) are treated as
/// cancelled.
pub const CANCELLATION_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RiskKind {
    Vanilla,
    Downsample,
    EarlyEmission,
}

impl std::str::FromStr for RiskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(RiskKind::Vanilla),
            "downsample" => Ok(RiskKind::Downsample),
            "early-emission" | "early_emission" => Ok(RiskKind::EarlyEmission),
            other => Err(Error::InvalidRiskSpec(format!("unknown risk kind `{other}`"))),
        }
    }
}

/// Which objective to train with, and its risk factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskSpec {
    pub kind: RiskKind,
    /// Risk factor; ignored for [`RiskKind::Vanilla`].
    pub lambda: f64,
    pub clamp_floor: f64,
}

impl Default for RiskSpec {
    fn default() -> Self {
        RiskSpec::vanilla()
    }
}

impl RiskSpec {
    pub fn new(kind: RiskKind, lambda: f64) -> Result<Self> {
        let spec = RiskSpec {
            kind,
            lambda,
            clamp_floor: DEFAULT_CLAMP_FLOOR,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn vanilla() -> Self {
        RiskSpec {
            kind: RiskKind::Vanilla,
            lambda: 0.0,
            clamp_floor: DEFAULT_CLAMP_FLOOR,
        }
    }

    pub fn downsample(lambda: f64) -> Result<Self> {
        Self::new(RiskKind::Downsample, lambda)
    }

    pub fn early_emission(lambda: f64) -> Result<Self> {
        Self::new(RiskKind::EarlyEmission, lambda)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != RiskKind::Vanilla && !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidRiskSpec(format!(
                "risk factor must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        if self.clamp_floor.is_nan() {
            return Err(Error::InvalidRiskSpec("clamp floor is NaN".into()));
        }
        Ok(())
    }
}

/// Log mass of the paths whose emission of token `u` ends at frame `tau`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupPosterior {
    pub u: usize,
    pub tau: usize,
    pub log_mass: f64,
}

fn check_cell(lattice: &Lattice<'_>, u: usize, tau: usize) -> Result<()> {
    let tokens = lattice.extended().source().len();
    if u >= tokens {
        return Err(Error::LengthMismatch {
            expected: tokens,
            actual: u,
        });
    }
    if tau >= lattice.frames() {
        return Err(Error::LengthMismatch {
            expected: lattice.frames(),
            actual: tau,
        });
    }
    Ok(())
}

/// Log mass of suffixes that leave position `p` right after frame `tau`.
fn log_exit(lattice: &Lattice<'_>, p: usize, tau: usize) -> f64 {
    let mut acc = lattice.beta(tau + 1, p + 1);
    if p + 2 < lattice.states() && lattice.extended().can_skip_into(p + 2) {
        acc = log_add(acc, lattice.beta(tau + 1, p + 2));
    }
    acc
}

/// `log beta_hat(tau, 2u)`: the backward mass at token `u`'s position,
/// restricted to suffixes that leave the token after frame `tau`.
///
/// Computed as the stable log-difference `beta(tau, p) - beta(tau+1, p) * y`,
/// except at the final frame where it is `beta(tau, p)`. Exact zeros map to
/// the sentinel; operands that agree to within [`CANCELLATION_TOLERANCE`]
/// while the true value is nonzero raise [`Error::NumericalCancellation`].
pub fn beta_hat(lattice: &Lattice<'_>, u: usize, tau: usize) -> Result<f64> {
    check_cell(lattice, u, tau)?;
    let p = ExtendedLabels::token_position(u);
    let whole = lattice.beta(tau, p);
    if tau + 1 == lattice.frames() {
        return Ok(whole);
    }
    let stay = lattice.beta(tau + 1, p) + lattice.emission(tau, p);
    if stay == LOG_ZERO || stay.is_nan() {
        return Ok(whole);
    }
    if whole == LOG_ZERO {
        return Ok(LOG_ZERO);
    }
    let d = stay - whole;
    if d >= -CANCELLATION_TOLERANCE {
        if log_exit(lattice, p, tau) == LOG_ZERO {
            return Ok(LOG_ZERO);
        }
        return Err(Error::NumericalCancellation { frame: tau, token: u });
    }
    Ok(whole + (-d.exp_m1()).ln())
}

/// Group mass `alpha(tau, 2u) * beta_hat(tau, 2u) / y`.
pub fn group_posterior(lattice: &Lattice<'_>, u: usize, tau: usize) -> Result<GroupPosterior> {
    let bh = beta_hat(lattice, u, tau)?;
    let p = ExtendedLabels::token_position(u);
    let a = lattice.alpha(tau, p);
    let log_mass = if a == LOG_ZERO || bh == LOG_ZERO {
        LOG_ZERO
    } else {
        a + bh - lattice.emission(tau, p)
    };
    Ok(GroupPosterior { u, tau, log_mass })
}

/// All group masses of token `u`, indexed by end frame.
///
/// Uses the subtraction-free form `alpha(tau, p) * exit(tau)`, which equals
/// [`group_posterior`] without its cancellation hazard.
pub fn group_masses(lattice: &Lattice<'_>, u: usize) -> Vec<f64> {
    let p = ExtendedLabels::token_position(u);
    let frames = lattice.frames();
    (0..frames)
        .map(|tau| {
            let a = lattice.alpha(tau, p);
            if a == LOG_ZERO {
                LOG_ZERO
            } else if tau + 1 == frames {
                let b = lattice.beta(tau, p);
                if b == LOG_ZERO {
                    LOG_ZERO
                } else {
                    a + b - lattice.emission(tau, p)
                }
            } else {
                a + log_exit(lattice, p, tau)
            }
        })
        .collect()
}

/// Heaviest end frame of token `u`; ties go to the earliest frame.
pub fn tau_star(lattice: &Lattice<'_>, u: usize) -> usize {
    argmax_first(&group_masses(lattice, u))
}

fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Log risk of the group ending at frame `tau` (0-based) of a `frames`-long
/// utterance.
pub fn risk_value(spec: &RiskSpec, tau: usize, frames: usize, bias: Option<usize>) -> Result<f64> {
    spec.validate()?;
    let frames = frames as f64;
    match spec.kind {
        RiskKind::Vanilla => Ok(0.0),
        RiskKind::Downsample => Ok(-spec.lambda * (tau + 1) as f64 / frames),
        RiskKind::EarlyEmission => {
            let bias = bias.ok_or(Error::MissingBias)?;
            Ok(-spec.lambda * (tau as f64 - bias as f64) / frames)
        }
    }
}

/// Risk-weighted occupations `W(t, v)` for the grouping of token `u`.
///
/// `log_risk[tau]` is the log risk of the group ending at `tau`. Every row of
/// the returned table sums (in the log domain) to the risk-weighted objective.
pub fn weighted_occupations(lattice: &Lattice<'_>, u: usize, log_risk: &[f64]) -> Grid {
    let (frames, states) = (lattice.frames(), lattice.states());
    let ext = lattice.extended();
    let p = ExtendedLabels::token_position(u);
    let last = frames - 1;

    // positions <= p: risk carried by the suffix
    let mut beta_r = Grid::filled(frames, p + 1, LOG_ZERO);
    for v in 0..=p {
        let b = lattice.beta(last, v);
        beta_r.set(last, v, if v == p { b + log_risk[last] } else { b });
    }
    for t in (0..last).rev() {
        for v in 0..=p {
            let acc = if v == p {
                let leave = log_exit(lattice, p, t);
                log_add(beta_r.get(t + 1, p), log_risk[t] + leave)
            } else {
                let mut acc = log_add(beta_r.get(t + 1, v), beta_r.get(t + 1, v + 1));
                if v + 2 <= p && ext.can_skip_into(v + 2) {
                    acc = log_add(acc, beta_r.get(t + 1, v + 2));
                }
                acc
            };
            if acc != LOG_ZERO {
                beta_r.set(t, v, acc + lattice.emission(t, v));
            }
        }
    }

    // positions > p: risk carried by the prefix
    let mut alpha_r = Grid::filled(frames, states, LOG_ZERO);
    for t in 1..frames {
        for v in p + 1..states {
            let from = |q: usize| {
                if q > p {
                    alpha_r.get(t - 1, q)
                } else {
                    let a = lattice.alpha(t - 1, p);
                    if a == LOG_ZERO {
                        LOG_ZERO
                    } else {
                        a + log_risk[t - 1]
                    }
                }
            };
            let mut acc = log_add(from(v), from(v - 1));
            if ext.can_skip_into(v) {
                acc = log_add(acc, from(v - 2));
            }
            if acc != LOG_ZERO {
                alpha_r.set(t, v, acc + lattice.emission(t, v));
            }
        }
    }

    let mut w = Grid::filled(frames, states, LOG_ZERO);
    for t in 0..frames {
        for v in 0..states {
            let (a, b) = if v <= p {
                (lattice.alpha(t, v), beta_r.get(t, v))
            } else {
                (alpha_r.get(t, v), lattice.beta(t, v))
            };
            if a != LOG_ZERO && b != LOG_ZERO {
                w.set(t, v, a + b - lattice.emission(t, v));
            }
        }
    }
    w
}

/// Adds `scale * exp(W(t, v) - log_norm)` into `out[t][l'_v]`.
fn accumulate_log_grad(lattice: &Lattice<'_>, w: &Grid, log_norm: f64, scale: f64, out: &mut Grid) {
    let ext = lattice.extended();
    for t in 0..lattice.frames() {
        for v in 0..lattice.states() {
            let cell = w.get(t, v);
            if cell != LOG_ZERO {
                let k = ext.symbol(v);
                out.set(t, k, out.get(t, k) + scale * (cell - log_norm).exp());
            }
        }
    }
}

fn downsample_log_risk(lambda: f64, frames: usize) -> Vec<f64> {
    (0..frames)
        .map(|tau| -lambda * (tau + 1) as f64 / frames as f64)
        .collect()
}

/// `log J` of the down-sampling objective, evaluated for any `lambda`
/// (including zero) through the grouped sum.
pub fn downsample_objective(lattice: &Lattice<'_>, lambda: f64) -> f64 {
    let u = lattice.extended().source().len() - 1;
    let log_risk = downsample_log_risk(lambda, lattice.frames());
    let terms: Vec<f64> = group_masses(lattice, u)
        .iter()
        .zip(&log_risk)
        .map(|(m, r)| m + r)
        .collect();
    logsumexp(&terms)
}

/// Per-token early-emission term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmissionTerm {
    /// `log J'(u)` before clamping.
    pub log_objective: f64,
    /// Bias frame `tau'_u`.
    pub bias: usize,
}

fn early_emission_log_risk(lambda: f64, frames: usize, bias: usize) -> Vec<f64> {
    (0..frames)
        .map(|tau| -lambda * (tau as f64 - bias as f64) / frames as f64)
        .collect()
}

/// `log J'(u)` and `tau'_u` for every token, in token order.
pub fn early_emission_terms(lattice: &Lattice<'_>, lambda: f64) -> Vec<EmissionTerm> {
    let frames = lattice.frames();
    (0..lattice.extended().source().len())
        .map(|u| {
            let masses = group_masses(lattice, u);
            let bias = argmax_first(&masses);
            let log_risk = early_emission_log_risk(lambda, frames, bias);
            let terms: Vec<f64> = masses.iter().zip(&log_risk).map(|(m, r)| m + r).collect();
            EmissionTerm {
                log_objective: logsumexp(&terms),
                bias,
            }
        })
        .collect()
}

/// Down-sampling BRCTC loss, `-log J`.
pub fn brctc_downsample_loss(
    y: &PosteriorGrid,
    labels: &LabelSeq,
    spec: &RiskSpec,
    with_grad: bool,
) -> Result<LossResult> {
    spec.validate()?;
    if spec.kind != RiskKind::Downsample {
        return Err(Error::InvalidRiskSpec("expected a down-sampling spec".into()));
    }
    // r_g == 1 reduces exactly to CTC
    if spec.lambda == 0.0 {
        return vanilla(y, labels, with_grad);
    }
    let lattice = Lattice::new(y, labels)?;
    let log_j = downsample_objective(&lattice, spec.lambda);
    if log_j == LOG_ZERO {
        return Err(Error::DegenerateObjective);
    }
    let grad_logits = with_grad.then(|| {
        let u = labels.len() - 1;
        let w = weighted_occupations(&lattice, u, &downsample_log_risk(spec.lambda, y.frames()));
        let mut g = Grid::filled(y.frames(), y.symbols(), 0.0);
        accumulate_log_grad(&lattice, &w, log_j, -1.0, &mut g);
        logits_grad_from_log_grad(y, &g)
    });
    Ok(LossResult {
        neg_log_objective: -log_j,
        grad_logits,
        clamped: false,
    })
}

/// Early-emission BRCTC loss, `-(1/U) sum_u log J'(u)`.
///
/// The bias frames are held constant: no gradient flows through the argmax.
/// Terms below `spec.clamp_floor` are floored, contribute no gradient, and
/// set [`LossResult::clamped`].
pub fn brctc_earlyemit_loss(
    y: &PosteriorGrid,
    labels: &LabelSeq,
    spec: &RiskSpec,
    with_grad: bool,
) -> Result<LossResult> {
    spec.validate()?;
    if spec.kind != RiskKind::EarlyEmission {
        return Err(Error::InvalidRiskSpec("expected an early-emission spec".into()));
    }
    if spec.lambda == 0.0 {
        return vanilla(y, labels, with_grad);
    }
    let lattice = Lattice::new(y, labels)?;
    let terms = early_emission_terms(&lattice, spec.lambda);
    let tokens = terms.len() as f64;
    let mut clamped = false;
    let mut total = 0.0;
    for term in &terms {
        if term.log_objective < spec.clamp_floor || term.log_objective.is_nan() {
            clamped = true;
            total += spec.clamp_floor;
        } else {
            total += term.log_objective;
        }
    }
    let grad_logits = with_grad.then(|| {
        let mut g = Grid::filled(y.frames(), y.symbols(), 0.0);
        for (u, term) in terms.iter().enumerate() {
            if term.log_objective < spec.clamp_floor || term.log_objective.is_nan() {
                continue;
            }
            let log_risk = early_emission_log_risk(spec.lambda, y.frames(), term.bias);
            let w = weighted_occupations(&lattice, u, &log_risk);
            accumulate_log_grad(&lattice, &w, term.log_objective, -1.0 / tokens, &mut g);
        }
        logits_grad_from_log_grad(y, &g)
    });
    Ok(LossResult {
        neg_log_objective: -total / tokens,
        grad_logits,
        clamped,
    })
}

fn vanilla(y: &PosteriorGrid, labels: &LabelSeq, with_grad: bool) -> Result<LossResult> {
    if with_grad {
        ctc_loss_with_grad(y, labels)
    } else {
        ctc_loss(y, labels)
    }
}

/// Dispatches on `spec.kind`.
pub fn brctc_loss(
    y: &PosteriorGrid,
    labels: &LabelSeq,
    spec: &RiskSpec,
    with_grad: bool,
) -> Result<LossResult> {
    match spec.kind {
        RiskKind::Vanilla => vanilla(y, labels, with_grad),
        RiskKind::Downsample => brctc_downsample_loss(y, labels, spec, with_grad),
        RiskKind::EarlyEmission => brctc_earlyemit_loss(y, labels, spec, with_grad),
    }
}

/// Gradient of the selected objective w.r.t. the pre-softmax logits.
pub fn brctc_grad(y: &PosteriorGrid, labels: &LabelSeq, spec: &RiskSpec) -> Result<Grid> {
    let result = brctc_loss(y, labels, spec, true)?;
    Ok(result.grad_logits.expect("gradient requested"))
}
