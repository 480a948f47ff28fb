//! Trailing-blank trimming of an encoder output, driven by the blank
//! posteriors of an intermediate CTC layer.

use brctc::align::{greedy_path, trim, trim_point, DEFAULT_BLANK_THRESHOLD, DEFAULT_MARGIN};
use brctc::{Grid, PosteriorGrid};

fn main() -> anyhow::Result<()> {
    // 30 frames: tokens spike early, then a long run of confident blanks
    let rows: Vec<Vec<f64>> = (0..30)
        .map(|t| match t {
            2 => vec![0.05, 0.9, 0.05],
            5 => vec![0.1, 0.1, 0.8],
            9 => vec![0.2, 0.7, 0.1],
            _ if t < 12 => vec![0.9, 0.05, 0.05],
            _ => vec![0.998, 0.001, 0.001],
        })
        .collect();
    let y = PosteriorGrid::from_probs(&Grid::from_rows(&rows)?)?;
    let hidden: Vec<Vec<f32>> = (0..30).map(|t| vec![t as f32; 4]).collect();

    let ali = greedy_path(&y);
    println!("greedy tokens {:?} ending at frames {:?}", ali.tokens(), ali.end_frames());

    let report = trim_point(&y, DEFAULT_BLANK_THRESHOLD, DEFAULT_MARGIN).with_target_len(ali.tokens().len());
    let trimmed = trim(&hidden, &report)?;
    println!(
        "last active frame count {}, kept {} of {} (DSF {:.3}, oracle {:.3})",
        report.last_active,
        trimmed.len(),
        report.frames,
        report.dsf,
        report.oracle_dsf.unwrap_or(f64::NAN)
    );
    for margin in [0, 2, 5, 10] {
        println!("margin {margin:>2}: DSF {:.3}", trim_point(&y, DEFAULT_BLANK_THRESHOLD, margin).dsf);
    }
    Ok(())
}
