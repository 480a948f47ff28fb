//! Synthetic transduction data: each token is a fixed-length segment of a
//! token-specific feature pattern plus Gaussian noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Grid, LabelSeq};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyTaskConfig {
    pub vocab_size: usize,
    pub frames_per_token: usize,
    pub noise_scale: f64,
    pub num_train: usize,
    pub num_eval: usize,
    pub seed: u64,
    pub feature_dim: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
}

impl Default for ToyTaskConfig {
    fn default() -> Self {
        ToyTaskConfig {
            vocab_size: 4,
            frames_per_token: 6,
            noise_scale: 0.5,
            num_train: 200,
            num_eval: 50,
            seed: 0,
            feature_dim: 8,
            min_tokens: 3,
            max_tokens: 5,
        }
    }
}

impl ToyTaskConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("vocab_size", self.vocab_size),
            ("frames_per_token", self.frames_per_token),
            ("num_train", self.num_train),
            ("num_eval", self.num_eval),
            ("feature_dim", self.feature_dim),
            ("min_tokens", self.min_tokens),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
        }
        if self.max_tokens < self.min_tokens {
            return Err(Error::InvalidConfig("max_tokens < min_tokens".into()));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::InvalidConfig("noise_scale must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    /// `T × feature_dim`.
    pub features: Grid,
    pub labels: LabelSeq,
    /// First frame (0-based) of every token's segment.
    pub ref_starts: Vec<usize>,
}

impl Utterance {
    pub fn frames(&self) -> usize {
        self.features.rows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyDataset {
    pub train: Vec<Utterance>,
    pub eval: Vec<Utterance>,
    /// One `frames_per_token × feature_dim` pattern per token id `1..=V`.
    pub templates: Vec<Grid>,
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn utterance<R: Rng>(rng: &mut R, cfg: &ToyTaskConfig, templates: &[Grid], id: String) -> Utterance {
    let tokens = rng.random_range(cfg.min_tokens..=cfg.max_tokens);
    let ids: Vec<usize> = (0..tokens).map(|_| rng.random_range(1..=cfg.vocab_size)).collect();
    let frames = tokens * cfg.frames_per_token;
    let mut features = Grid::filled(frames, cfg.feature_dim, 0.0);
    for (u, &k) in ids.iter().enumerate() {
        let template = &templates[k - 1];
        for offset in 0..cfg.frames_per_token {
            let t = u * cfg.frames_per_token + offset;
            for (i, x) in features.row_mut(t).iter_mut().enumerate() {
                let noise = if cfg.noise_scale == 0.0 { 0.0 } else { cfg.noise_scale * normal(rng) };
                *x = template.get(offset, i) + noise;
            }
        }
    }
    Utterance {
        id,
        features,
        ref_starts: (0..tokens).map(|u| u * cfg.frames_per_token).collect(),
        labels: LabelSeq::new(ids, cfg.vocab_size).expect("ids drawn in range"),
    }
}

/// Deterministic in `cfg.seed`.
pub fn gen_dataset(cfg: &ToyTaskConfig) -> Result<ToyDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let templates: Vec<Grid> = (0..cfg.vocab_size)
        .map(|_| {
            let data = (0..cfg.frames_per_token * cfg.feature_dim).map(|_| normal(&mut rng)).collect();
            Grid::from_vec(cfg.frames_per_token, cfg.feature_dim, data).expect("shape matches")
        })
        .collect();
    let train = (0..cfg.num_train)
        .map(|i| utterance(&mut rng, cfg, &templates, format!("train-{i:04}")))
        .collect();
    let eval = (0..cfg.num_eval)
        .map(|i| utterance(&mut rng, cfg, &templates, format!("eval-{i:04}")))
        .collect();
    Ok(ToyDataset { train, eval, templates })
}
