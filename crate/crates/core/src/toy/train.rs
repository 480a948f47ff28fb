use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risk::{brctc_loss, RiskSpec};
use crate::toy::data::Utterance;
use crate::toy::model::{ModelGrad, ToyModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 200, lr: 0.5 }
    }
}

/// Loss and parameter gradient of one utterance.
pub fn utterance_grad(model: &ToyModel, utt: &Utterance, spec: &RiskSpec) -> Result<(f64, ModelGrad)> {
    let act = model.forward(&utt.features);
    let y = crate::lattice::PosteriorGrid::from_logits(&act.logits)?;
    let result = brctc_loss(&y, &utt.labels, spec, true)?;
    let dlogits = result.grad_logits.expect("gradient requested");
    Ok((result.neg_log_objective, model.backward(&utt.features, &act, &dlogits)))
}

/// Full-batch gradient descent on the mean per-utterance loss. Returns the
/// mean loss measured before each update.
///
/// Utterances are evaluated in parallel; the reduction runs in utterance
/// order, so results do not depend on the thread count.
pub fn train(model: &mut ToyModel, data: &[Utterance], spec: &RiskSpec, cfg: &TrainConfig) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    spec.validate()?;
    let scale = 1.0 / data.len() as f64;
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let per_utt: Vec<(f64, ModelGrad)> = data
            .par_iter()
            .map(|utt| utterance_grad(model, utt, spec))
            .collect::<Result<_>>()?;
        let mut total = ModelGrad::zeros_like(model);
        let mut loss = 0.0;
        for (l, g) in &per_utt {
            loss += l;
            total.add_scaled(g, scale);
        }
        let loss = loss * scale;
        if !loss.is_finite() || !total.norm().is_finite() {
            return Err(Error::DivergedLoss { epoch, loss });
        }
        trace.push(loss);
        model.apply(&total, cfg.lr);
    }
    Ok(trace)
}
