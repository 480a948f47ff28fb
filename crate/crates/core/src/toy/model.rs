//! Two-layer windowed per-frame scorer: `2w+1` neighbouring feature frames
//! go through a tanh hidden layer to `V+1` logits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Grid, PosteriorGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Frames of context on each side.
    pub window: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            window: 4,
            hidden: 32,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyModel {
    pub window: usize,
    pub feature_dim: usize,
    /// `hidden × (2w+1)·feature_dim`.
    pub w1: Grid,
    pub b1: Vec<f64>,
    /// `(V+1) × hidden`.
    pub w2: Grid,
    pub b2: Vec<f64>,
}

/// Activations kept for the backward pass.
pub struct Activations {
    pub hidden: Grid,
    pub logits: Grid,
}

/// Parameter-shaped gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrad {
    pub w1: Grid,
    pub b1: Vec<f64>,
    pub w2: Grid,
    pub b2: Vec<f64>,
}

impl ModelGrad {
    pub fn zeros_like(model: &ToyModel) -> Self {
        ModelGrad {
            w1: Grid::filled(model.w1.rows(), model.w1.cols(), 0.0),
            b1: vec![0.0; model.b1.len()],
            w2: Grid::filled(model.w2.rows(), model.w2.cols(), 0.0),
            b2: vec![0.0; model.b2.len()],
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &ModelGrad, scale: f64) {
        axpy(self.w1.as_mut_slice(), other.w1.as_slice(), scale);
        axpy(&mut self.b1, &other.b1, scale);
        axpy(self.w2.as_mut_slice(), other.w2.as_slice(), scale);
        axpy(&mut self.b2, &other.b2, scale);
    }

    /// Euclidean norm over all parameters.
    pub fn norm(&self) -> f64 {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]
            .iter()
            .flat_map(|s| s.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

fn axpy(dst: &mut [f64], src: &[f64], scale: f64) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += scale * s);
}

impl ToyModel {
    /// Random init: weights `N(0, 1/fan_in)`, biases zero.
    pub fn new(cfg: &ModelConfig, feature_dim: usize, vocab: usize) -> Result<Self> {
        if cfg.hidden == 0 || feature_dim == 0 || vocab == 0 {
            return Err(Error::InvalidConfig("model dimensions must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let input = (2 * cfg.window + 1) * feature_dim;
        let mut init = |rows: usize, cols: usize| {
            let std = (1.0 / cols as f64).sqrt();
            let data = (0..rows * cols)
                .map(|_| std * rng.sample::<f64, _>(StandardNormal))
                .collect();
            Grid::from_vec(rows, cols, data).expect("shape matches")
        };
        let w1 = init(cfg.hidden, input);
        let w2 = init(vocab + 1, cfg.hidden);
        Ok(ToyModel {
            window: cfg.window,
            feature_dim,
            w1,
            b1: vec![0.0; cfg.hidden],
            w2,
            b2: vec![0.0; vocab + 1],
        })
    }

    pub fn hidden_width(&self) -> usize {
        self.w1.rows()
    }

    pub fn symbols(&self) -> usize {
        self.w2.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    /// Visits `(input_index, feature_value)` of frame `t`'s window, skipping
    /// zero padding.
    fn for_window<F: FnMut(usize, f64)>(&self, features: &Grid, t: usize, mut f: F) {
        let w = self.window as isize;
        let frames = features.rows() as isize;
        for o in -w..=w {
            let src = t as isize + o;
            if src < 0 || src >= frames {
                continue;
            }
            let base = (o + w) as usize * self.feature_dim;
            for (i, &x) in features.row(src as usize).iter().enumerate() {
                f(base + i, x);
            }
        }
    }

    pub fn forward(&self, features: &Grid) -> Activations {
        let frames = features.rows();
        let (hw, sym) = (self.hidden_width(), self.symbols());
        let mut hidden = Grid::filled(frames, hw, 0.0);
        let mut logits = Grid::filled(frames, sym, 0.0);
        for t in 0..frames {
            let h = hidden.row_mut(t);
            h.copy_from_slice(&self.b1);
            for (j, hj) in h.iter_mut().enumerate() {
                let wrow = self.w1.row(j);
                let mut acc = *hj;
                self.for_window(features, t, |i, x| acc += wrow[i] * x);
                *hj = acc.tanh();
            }
            let h = hidden.row(t).to_vec();
            for (k, z) in logits.row_mut(t).iter_mut().enumerate() {
                *z = self.b2[k] + self.w2.row(k).iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        Activations { hidden, logits }
    }

    pub fn posteriors(&self, features: &Grid) -> Result<PosteriorGrid> {
        PosteriorGrid::from_logits(&self.forward(features).logits)
    }

    /// Parameter gradient given `dL/dlogits`.
    pub fn backward(&self, features: &Grid, act: &Activations, dlogits: &Grid) -> ModelGrad {
        let mut grad = ModelGrad::zeros_like(self);
        let hw = self.hidden_width();
        let mut dpre = vec![0.0; hw];
        for t in 0..features.rows() {
            let h = act.hidden.row(t);
            let dz = dlogits.row(t);
            dpre.iter_mut().for_each(|d| *d = 0.0);
            for (k, &g) in dz.iter().enumerate() {
                grad.b2[k] += g;
                let w2row = self.w2.row(k);
                let gw2 = grad.w2.row_mut(k);
                for j in 0..hw {
                    gw2[j] += g * h[j];
                    dpre[j] += g * w2row[j];
                }
            }
            for j in 0..hw {
                let d = dpre[j] * (1.0 - h[j] * h[j]);
                grad.b1[j] += d;
                let gw1 = grad.w1.row_mut(j);
                self.for_window(features, t, |i, x| gw1[i] += d * x);
            }
        }
        grad
    }

    /// Gradient-descent step.
    pub fn apply(&mut self, grad: &ModelGrad, lr: f64) {
        axpy(self.w1.as_mut_slice(), grad.w1.as_slice(), -lr);
        axpy(&mut self.b1, &grad.b1, -lr);
        axpy(self.w2.as_mut_slice(), grad.w2.as_slice(), -lr);
        axpy(&mut self.b2, &grad.b2, -lr);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, max_relative_error};

    fn tiny() -> (ToyModel, Grid) {
        let cfg = ModelConfig {
            window: 1,
            hidden: 3,
            seed: 3,
        };
        let model = ToyModel::new(&cfg, 2, 2).unwrap();
        let features = Grid::from_rows(&[
            vec![0.5, -1.0],
            vec![0.2, 0.3],
            vec![-0.7, 0.9],
            vec![1.1, 0.0],
        ])
        .unwrap();
        (model, features)
    }

    #[test]
    fn rows_normalize() {
        let (model, features) = tiny();
        let y = model.posteriors(&features).unwrap();
        for t in 0..4 {
            let s: f64 = (0..3).map(|k| y.prob(t, k)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let (model, features) = tiny();
        // loss = sum of weighted logits
        let weights = Grid::from_rows(&[
            vec![0.3, -0.2, 0.5],
            vec![-1.0, 0.4, 0.1],
            vec![0.7, 0.7, -0.3],
            vec![0.2, -0.6, 0.9],
        ])
        .unwrap();
        let loss = |m: &ToyModel| -> f64 {
            let z = m.forward(&features).logits;
            z.as_slice().iter().zip(weights.as_slice()).map(|(a, b)| a * b).sum()
        };
        let act = model.forward(&features);
        let grad = model.backward(&features, &act, &weights);
        let numeric = central_difference(&model.w1, 1e-6, |w1| {
            let mut m = model.clone();
            m.w1 = w1.clone();
            Ok(loss(&m))
        })
        .unwrap();
        assert!(max_relative_error(&grad.w1, &numeric) < 1e-6);
        let numeric = central_difference(&model.w2, 1e-6, |w2| {
            let mut m = model.clone();
            m.w2 = w2.clone();
            Ok(loss(&m))
        })
        .unwrap();
        assert!(max_relative_error(&grad.w2, &numeric) < 1e-6);
    }
}
