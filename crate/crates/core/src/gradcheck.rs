//! Central finite differences against the analytic logit gradients, on
//! seeded random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::Result;
use crate::lattice::{Grid, LabelSeq, Lattice, PosteriorGrid};
use crate::risk::{brctc_loss, early_emission_terms, RiskKind, RiskSpec};

/// Denominator floor of [`relative_error`].
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// Default finite-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Pass threshold on the worst relative error.
pub const MAX_RELATIVE_ERROR: f64 = 1e-4;

/// `|a - b| / max(|a|, |b|, RELATIVE_ERROR_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_ERROR_FLOOR)
}

pub fn max_relative_error(analytic: &Grid, numeric: &Grid) -> f64 {
    analytic
        .as_slice()
        .iter()
        .zip(numeric.as_slice())
        .map(|(&a, &b)| relative_error(a, b))
        .fold(0.0, f64::max)
}

/// Logits with i.i.d. `N(0, scale²)` entries.
pub fn random_logits<R: Rng>(rng: &mut R, frames: usize, symbols: usize, scale: f64) -> Grid {
    let data = (0..frames * symbols)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Grid::from_vec(frames, symbols, data).expect("shape matches")
}

/// Uniform random target of `tokens` ids over `1..=vocab` that fits in
/// `frames` frames.
pub fn random_labels<R: Rng>(rng: &mut R, tokens: usize, vocab: usize, frames: usize) -> LabelSeq {
    loop {
        let ids: Vec<usize> = (0..tokens).map(|_| rng.random_range(1..=vocab)).collect();
        let labels = LabelSeq::new(ids, vocab).expect("ids in range");
        if labels.min_frames() <= frames {
            return labels;
        }
    }
}

/// Central-difference gradient of `f` at `logits`.
pub fn central_difference<F>(logits: &Grid, step: f64, mut f: F) -> Result<Grid>
where
    F: FnMut(&Grid) -> Result<f64>,
{
    let mut probe = logits.clone();
    let mut out = Grid::filled(logits.rows(), logits.cols(), 0.0);
    for r in 0..logits.rows() {
        for c in 0..logits.cols() {
            let x = logits.get(r, c);
            probe.set(r, c, x + step);
            let plus = f(&probe)?;
            probe.set(r, c, x - step);
            let minus = f(&probe)?;
            probe.set(r, c, x);
            out.set(r, c, (plus - minus) / (2.0 * step));
        }
    }
    Ok(out)
}

fn loss_of(logits: &Grid, labels: &LabelSeq, spec: &RiskSpec) -> Result<f64> {
    let y = PosteriorGrid::from_logits(logits)?;
    Ok(brctc_loss(&y, labels, spec, false)?.neg_log_objective)
}

fn biases(logits: &Grid, labels: &LabelSeq, lambda: f64) -> Result<Vec<usize>> {
    let y = PosteriorGrid::from_logits(logits)?;
    let lattice = Lattice::new(&y, labels)?;
    Ok(early_emission_terms(&lattice, lambda).iter().map(|t| t.bias).collect())
}

/// Worst relative error of one instance, or `None` when an early-emission
/// bias frame moves under a `±step` perturbation.
pub fn check_instance(logits: &Grid, labels: &LabelSeq, spec: &RiskSpec, step: f64) -> Result<Option<f64>> {
    let y = PosteriorGrid::from_logits(logits)?;
    let analytic = brctc_loss(&y, labels, spec, true)?
        .grad_logits
        .expect("gradient requested");
    if spec.kind == RiskKind::EarlyEmission {
        let base = biases(logits, labels, spec.lambda)?;
        let mut stable = true;
        let mut probe = logits.clone();
        'outer: for r in 0..logits.rows() {
            for c in 0..logits.cols() {
                let x = logits.get(r, c);
                for delta in [step, -step] {
                    probe.set(r, c, x + delta);
                    if biases(&probe, labels, spec.lambda)? != base {
                        stable = false;
                        break 'outer;
                    }
                }
                probe.set(r, c, x);
            }
        }
        if !stable {
            return Ok(None);
        }
    }
    let numeric = central_difference(logits, step, |z| loss_of(z, labels, spec))?;
    Ok(Some(max_relative_error(&analytic, &numeric)))
}

/// Instance sizes and sampling for a gradient-check sweep.
#[derive(Clone, Debug, Serialize)]
pub struct GradCheckConfig {
    pub seed: u64,
    pub instances: usize,
    pub max_frames: usize,
    pub max_tokens: usize,
    pub vocab: usize,
    pub logit_scale: f64,
    pub step: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            seed: 0,
            instances: 20,
            max_frames: 8,
            max_tokens: 4,
            vocab: 3,
            logit_scale: 1.0,
            step: DEFAULT_STEP,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub kind: RiskKind,
    pub lambda: f64,
    pub step: f64,
    pub checked: usize,
    /// Early-emission instances skipped because a bias frame moved.
    pub skipped_unstable: usize,
    pub max_relative_error: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_relative_error < MAX_RELATIVE_ERROR
    }
}

/// Draws instances until `cfg.instances` of them have been checked.
pub fn run_grad_check(cfg: &GradCheckConfig, spec: &RiskSpec) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut checked = 0;
    let mut skipped = 0;
    let mut worst: f64 = 0.0;
    while checked < cfg.instances {
        let frames = rng.random_range(2..=cfg.max_frames.max(2));
        let tokens = rng.random_range(1..=cfg.max_tokens.min(frames));
        let labels = random_labels(&mut rng, tokens, cfg.vocab, frames);
        let logits = random_logits(&mut rng, frames, cfg.vocab + 1, cfg.logit_scale);
        match check_instance(&logits, &labels, spec, cfg.step)? {
            Some(err) => {
                worst = worst.max(err);
                checked += 1;
            }
            None => skipped += 1,
        }
    }
    Ok(GradCheckReport {
        kind: spec.kind,
        lambda: spec.lambda,
        step: cfg.step,
        checked,
        skipped_unstable: skipped,
        max_relative_error: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_difference_of_quadratic() {
        let x = Grid::from_rows(&[vec![1.0, -2.0]]).unwrap();
        let g = central_difference(&x, 1e-5, |z| Ok(z.get(0, 0).powi(2) + 3.0 * z.get(0, 1))).unwrap();
        assert!((g.get(0, 0) - 2.0).abs() < 1e-9);
        assert!((g.get(0, 1) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 1e-3).abs() < 1e-15);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn vanilla_sweep_passes() {
        let cfg = GradCheckConfig {
            instances: 5,
            ..GradCheckConfig::default()
        };
        let report = run_grad_check(&cfg, &RiskSpec::vanilla()).unwrap();
        assert!(report.passed(), "{report:?}");
    }
}
