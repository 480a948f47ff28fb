//! Central finite differences against the analytic logit gradients of all
//! three objectives, over a sweep of step sizes.

use brctc::gradcheck::{run_grad_check, GradCheckConfig};
use brctc::RiskSpec;

fn main() -> anyhow::Result<()> {
    let specs = [
        RiskSpec::vanilla(),
        RiskSpec::downsample(10.0)?,
        RiskSpec::early_emission(20.0)?,
    ];
    for spec in specs {
        for step in [1e-4, 1e-5, 1e-6] {
            let cfg = GradCheckConfig {
                step,
                ..GradCheckConfig::default()
            };
            let r = run_grad_check(&cfg, &spec)?;
            println!(
                "{:?} lambda {:>4} step {step:e}: max rel err {:.2e} over {} instances ({} skipped){}",
                r.kind,
                r.lambda,
                r.max_relative_error,
                r.checked,
                r.skipped_unstable,
                if r.passed() { "" } else { "  FAIL" }
            );
        }
    }
    Ok(())
}
