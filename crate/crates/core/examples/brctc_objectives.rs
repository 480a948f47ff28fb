//! The two Bayes-risk objectives next to plain CTC: where the grouped path
//! mass sits and how the losses react to the risk factor.

use brctc::lattice::Lattice;
use brctc::risk::{downsample_objective, early_emission_terms, group_masses};
use brctc::{brctc_loss, ctc_loss, Grid, LabelSeq, PosteriorGrid, RiskSpec};

fn main() -> anyhow::Result<()> {
    let logits = Grid::from_rows(&[
        vec![0.5, 0.9, 0.1],
        vec![0.3, 1.1, 0.4],
        vec![0.7, 0.2, 0.8],
        vec![0.4, 0.1, 1.3],
        vec![1.2, 0.3, 0.6],
        vec![1.5, 0.1, 0.2],
    ])?;
    let y = PosteriorGrid::from_logits(&logits)?;
    let labels = LabelSeq::new(vec![1, 2], 2)?;
    let lattice = Lattice::new(&y, &labels)?;
    let total = lattice.log_likelihood();

    for u in 0..labels.len() {
        let shares: Vec<String> = group_masses(&lattice, u)
            .iter()
            .map(|m| format!("{:.3}", (m - total).exp()))
            .collect();
        println!("token {u}: share of P(l|x) by end frame: {}", shares.join(" "));
    }

    println!("vanilla CTC loss: {:.5}", ctc_loss(&y, &labels)?.neg_log_objective);
    for lambda in [0.0, 1.0, 5.0, 10.0, 30.0] {
        let ds = brctc_loss(&y, &labels, &RiskSpec::downsample(lambda)?, false)?;
        let ee = brctc_loss(&y, &labels, &RiskSpec::early_emission(lambda)?, false)?;
        println!(
            "lambda {lambda:>4}: downsample {:.5} (log J {:.5})  early-emission {:.5}",
            ds.neg_log_objective,
            downsample_objective(&lattice, lambda),
            ee.neg_log_objective
        );
    }

    for term in early_emission_terms(&lattice, 20.0) {
        println!("bias frame {}  log J'(u) {:.5}", term.bias, term.log_objective);
    }
    Ok(())
}
