//! CTC loss, per-frame likelihood and logit gradient of a small instance.

use brctc::lattice::{ctc_loss_at_frame, Lattice};
use brctc::{ctc_loss_with_grad, Grid, LabelSeq, PosteriorGrid};

fn main() -> anyhow::Result<()> {
    // 5 frames over {blank, a, b}
    let logits = Grid::from_rows(&[
        vec![0.2, 1.5, -0.3],
        vec![1.0, 0.4, 0.1],
        vec![-0.5, 0.3, 1.2],
        vec![0.8, -0.2, 0.9],
        vec![1.4, 0.0, 0.2],
    ])?;
    let y = PosteriorGrid::from_logits(&logits)?;
    let labels = LabelSeq::new(vec![1, 2], 2)?;

    let result = ctc_loss_with_grad(&y, &labels)?;
    println!("-log P(l|x) = {:.6}", result.neg_log_objective);

    // every frame gives the same likelihood
    for t in 0..y.frames() {
        println!("frame {t}: -log P = {:.6}", ctc_loss_at_frame(&y, &labels, t)?);
    }

    let lattice = Lattice::new(&y, &labels)?;
    println!("occupation of the token states (linear):");
    for t in 0..lattice.frames() {
        let occ: Vec<String> = [1, 3]
            .iter()
            .map(|&v| format!("{:.4}", (lattice.occupation(t, v) - lattice.log_likelihood()).exp()))
            .collect();
        println!("  t={t}  a: {}  b: {}", occ[0], occ[1]);
    }

    let grad = result.grad_logits.expect("requested");
    println!("d loss / d logits:");
    for row in grad.to_rows() {
        println!("  {:?}", row.iter().map(|g| format!("{g:+.4}")).collect::<Vec<_>>());
    }
    Ok(())
}
