//! Lattice results checked against the enumeration oracle on one instance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gradcheck::random_logits;
use crate::lattice::{LabelSeq, Lattice, PosteriorGrid};
use crate::oracle::{
    oracle_downsample_objective, oracle_early_emission_term, oracle_group_sums, oracle_paths, oracle_total,
};
use crate::risk::{downsample_objective, early_emission_terms, group_masses};

/// Agreement tolerance used by `oracle-compare`.
pub const ORACLE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InstanceComparison {
    pub frames: usize,
    pub tokens: usize,
    /// Both sides found no path; nothing else is compared.
    pub infeasible: bool,
    /// `|log P_lattice - log P_oracle|`.
    pub ctc: f64,
    /// Worst absolute difference of any per-token group mass.
    pub groups: f64,
    /// `|log J_lattice - log J_oracle|` of the down-sampling objective.
    pub downsample: f64,
    /// Worst `|log J'(u)|` difference over tokens.
    pub early_emission: f64,
    pub bias_frames_agree: bool,
}

impl InstanceComparison {
    pub fn max_error(&self) -> f64 {
        self.ctc.max(self.groups).max(self.downsample).max(self.early_emission)
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.bias_frames_agree && self.max_error() <= tolerance
    }
}

fn log_diff(lattice: f64, oracle: f64) -> f64 {
    if lattice == oracle.ln() {
        0.0
    } else {
        (lattice - oracle.ln()).abs()
    }
}

/// Compares CTC likelihood, grouped masses and both risk objectives.
pub fn compare_instance(
    y: &PosteriorGrid,
    labels: &LabelSeq,
    ds_lambda: f64,
    ee_lambda: f64,
) -> Result<InstanceComparison> {
    let paths = oracle_paths(y, labels)?;
    let frames = y.frames();
    let lattice = match Lattice::new(y, labels) {
        Ok(l) => Some(l),
        Err(Error::InfeasibleAlignment { .. }) => None,
        Err(e) => return Err(e),
    };
    let mut out = InstanceComparison {
        frames,
        tokens: labels.len(),
        infeasible: false,
        ctc: 0.0,
        groups: 0.0,
        downsample: 0.0,
        early_emission: 0.0,
        bias_frames_agree: true,
    };
    let Some(lattice) = lattice else {
        out.infeasible = paths.is_empty();
        out.bias_frames_agree = paths.is_empty();
        out.ctc = if paths.is_empty() { 0.0 } else { f64::INFINITY };
        return Ok(out);
    };
    if paths.is_empty() {
        out.ctc = f64::INFINITY;
        return Ok(out);
    }
    out.ctc = log_diff(lattice.log_likelihood(), oracle_total(&paths));
    for u in 0..labels.len() {
        let sums = oracle_group_sums(&paths, u);
        for (tau, m) in group_masses(&lattice, u).iter().enumerate() {
            let expected = sums.get(&tau).copied().unwrap_or(0.0);
            out.groups = out.groups.max((m.exp() - expected).abs());
        }
    }
    out.downsample = log_diff(
        downsample_objective(&lattice, ds_lambda),
        oracle_downsample_objective(&paths, frames, ds_lambda),
    );
    for (u, term) in early_emission_terms(&lattice, ee_lambda).iter().enumerate() {
        let (expected, bias) = oracle_early_emission_term(&paths, frames, u, ee_lambda);
        out.early_emission = out.early_emission.max(log_diff(term.log_objective, expected));
        out.bias_frames_agree &= bias == term.bias;
    }
    Ok(out)
}

/// Sizes of the random instances drawn by [`run_oracle_compare`].
#[derive(Clone, Debug, Serialize)]
pub struct CompareConfig {
    pub seed: u64,
    pub instances: usize,
    pub max_frames: usize,
    pub max_tokens: usize,
    pub vocab: usize,
    pub logit_scale: f64,
    pub ds_lambda: f64,
    pub ee_lambda: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            seed: 0,
            instances: 50,
            max_frames: 8,
            max_tokens: 4,
            vocab: 3,
            logit_scale: 2.0,
            ds_lambda: 10.0,
            ee_lambda: 20.0,
        }
    }
}

/// A random grid and target. Targets are not filtered for feasibility.
pub fn random_instance<R: Rng>(rng: &mut R, cfg: &CompareConfig) -> Result<(PosteriorGrid, LabelSeq)> {
    let frames = rng.random_range(1..=cfg.max_frames.max(1));
    let tokens = rng.random_range(1..=cfg.max_tokens.max(1));
    let ids = (0..tokens).map(|_| rng.random_range(1..=cfg.vocab)).collect();
    let labels = LabelSeq::new(ids, cfg.vocab)?;
    let logits = random_logits(rng, frames, cfg.vocab + 1, cfg.logit_scale);
    Ok((PosteriorGrid::from_logits(&logits)?, labels))
}

pub fn run_oracle_compare(cfg: &CompareConfig) -> Result<Vec<InstanceComparison>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.instances)
        .map(|_| {
            let (y, labels) = random_instance(&mut rng, cfg)?;
            compare_instance(&y, &labels, cfg.ds_lambda, cfg.ee_lambda)
        })
        .collect()
}
