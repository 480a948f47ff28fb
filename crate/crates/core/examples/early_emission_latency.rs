//! Latency decomposition of a chunked streaming recognizer: drift measured
//! from the best path against reference event frames, plus the
//! configuration-dependent data-collecting and computational parts.

use brctc::align::best_path;
use brctc::latency::{corpus_latency, latency_report, utterance_latency, ChunkConfig};
use brctc::{Grid, LabelSeq, PosteriorGrid};

fn one_hot(path: &[usize], symbols: usize) -> anyhow::Result<PosteriorGrid> {
    let rows: Vec<Vec<f64>> = path
        .iter()
        .map(|&s| (0..symbols).map(|k| if k == s { 0.94 } else { 0.06 / (symbols - 1) as f64 }).collect())
        .collect();
    Ok(PosteriorGrid::from_probs(&Grid::from_rows(&rows)?)?)
}

fn main() -> anyhow::Result<()> {
    let chunk = ChunkConfig {
        chunk_ms: 160.0,
        right_context_ms: 80.0,
        rtf: 0.176,
        frame_ms: 40.0,
    };
    let labels = LabelSeq::new(vec![1, 2, 3], 3)?;
    let ref_starts = [1, 5, 9];
    // a late model and an earlier one with the same transcription
    let late = one_hot(&[0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0], 4)?;
    let early = one_hot(&[0, 1, 0, 0, 0, 2, 0, 0, 3, 0, 0, 0, 0, 0], 4)?;

    let mut reports = Vec::new();
    for (name, y) in [("late", &late), ("early", &early)] {
        let ali = best_path(y, &labels)?;
        let r = utterance_latency(&ali, labels.tokens(), &ref_starts, &chunk)?;
        println!(
            "{name:>5}: ends {:?}  DL {:>6.1} ms  DCL {:.0} ms  CL {:.1} ms  total {:.1} ms",
            r.pred_end_frames,
            r.dl.unwrap_or(f64::NAN),
            r.dcl,
            r.cl,
            r.total.unwrap_or(f64::NAN)
        );
        reports.push(r);
    }
    let corpus = corpus_latency(&reports);
    println!("corpus mean DL {:.1} ms", corpus.dl.unwrap_or(f64::NAN));

    let r = latency_report(480.0, 0.0, 0.128, None);
    println!("480 ms chunks without right context: DCL {} ms, CL {:.2} ms", r.dcl, r.cl);
    Ok(())
}
