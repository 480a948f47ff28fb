use serde::{Deserialize, Serialize};

use crate::align::{greedy_path, trim_point};
use crate::error::Result;
use crate::latency::{drift_frames, lcs_match};
use crate::lattice::ctc_loss;
use crate::toy::data::Utterance;
use crate::toy::model::ToyModel;

/// Alignment and trimming statistics of one evaluation utterance, from the
/// greedy (frame-wise argmax) decode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeStats {
    pub id: String,
    pub frames: usize,
    pub last_spike: Option<usize>,
    pub hypothesis: Vec<usize>,
    pub emission_frames: Vec<usize>,
    pub ref_starts: Vec<usize>,
    pub dsf: f64,
    pub oracle_dsf: f64,
    /// Mean drift in frames over LCS-matched tokens.
    pub drift_frames: Option<f64>,
    pub edits: usize,
    pub ref_tokens: usize,
    pub ctc_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub utterances: usize,
    pub mean_dsf: f64,
    pub mean_oracle_dsf: f64,
    /// Mean over utterances that have at least one matched token.
    pub mean_drift_frames: f64,
    pub mean_last_spike: f64,
    /// Total edit distance over total reference tokens.
    pub token_error_rate: f64,
    pub mean_ctc_loss: f64,
}

pub fn utterance_stats(model: &ToyModel, utt: &Utterance, threshold: f64, margin: usize) -> Result<SpikeStats> {
    let y = model.posteriors(&utt.features)?;
    let ali = greedy_path(&y);
    let hyp = ali.tokens();
    let reference = utt.labels.tokens();
    let matching = lcs_match(&hyp, reference);
    let drift = drift_frames(&ali.end_frames(), &utt.ref_starts, &matching).ok();
    let trim = trim_point(&y, threshold, margin).with_target_len(reference.len());
    Ok(SpikeStats {
        id: utt.id.clone(),
        frames: y.frames(),
        last_spike: ali.last_spike(),
        emission_frames: ali.end_frames(),
        ref_starts: utt.ref_starts.clone(),
        dsf: trim.dsf,
        oracle_dsf: trim.oracle_dsf.unwrap_or(0.0),
        drift_frames: drift,
        edits: strsim::generic_levenshtein(&hyp, &reference.to_vec()),
        ref_tokens: reference.len(),
        ctc_loss: ctc_loss(&y, &utt.labels)?.neg_log_objective,
        hypothesis: hyp,
    })
}

pub fn summarize(stats: &[SpikeStats]) -> EvalSummary {
    let n = stats.len().max(1) as f64;
    let mean = |f: &dyn Fn(&SpikeStats) -> f64| stats.iter().map(f).sum::<f64>() / n;
    let drifts: Vec<f64> = stats.iter().filter_map(|s| s.drift_frames).collect();
    let edits: usize = stats.iter().map(|s| s.edits).sum();
    let refs: usize = stats.iter().map(|s| s.ref_tokens).sum();
    EvalSummary {
        utterances: stats.len(),
        mean_dsf: mean(&|s| s.dsf),
        mean_oracle_dsf: mean(&|s| s.oracle_dsf),
        mean_drift_frames: if drifts.is_empty() {
            f64::NAN
        } else {
            drifts.iter().sum::<f64>() / drifts.len() as f64
        },
        // a blank-only decode counts as spiking at frame 0
        mean_last_spike: mean(&|s| s.last_spike.unwrap_or(0) as f64),
        token_error_rate: edits as f64 / refs.max(1) as f64,
        mean_ctc_loss: mean(&|s| s.ctc_loss),
    }
}

/// Per-utterance statistics and their summary over `data`.
pub fn evaluate_spikes(
    model: &ToyModel,
    data: &[Utterance],
    threshold: f64,
    margin: usize,
) -> Result<(Vec<SpikeStats>, EvalSummary)> {
    let stats = data
        .iter()
        .map(|utt| utterance_stats(model, utt, threshold, margin))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&stats);
    Ok((stats, summary))
}
