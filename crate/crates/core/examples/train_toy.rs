//! Trains vanilla, down-sampling and early-emission models on the synthetic
//! task and compares where their spikes land.
//!
//! ```text
//! cargo run --release --example train_toy -- [seed ...]
//! ```

use brctc::toy::{run_comparison, RunConfig, DEFAULT_DOWNSAMPLE_LAMBDA, DEFAULT_EARLY_EMISSION_LAMBDA};

fn main() -> anyhow::Result<()> {
    let seeds: Vec<u64> = std::env::args().skip(1).map(|s| s.parse()).collect::<Result<_, _>>()?;
    let seeds = if seeds.is_empty() { vec![0] } else { seeds };
    let cfg = RunConfig::default();
    println!("seed objective        ctc_loss   ter     dsf    last_spike  drift");
    for seed in seeds {
        let start = std::time::Instant::now();
        let c = run_comparison(&cfg, seed, DEFAULT_DOWNSAMPLE_LAMBDA, DEFAULT_EARLY_EMISSION_LAMBDA)?;
        for (name, s) in [("vanilla", &c.vanilla), ("downsample", &c.downsample), ("early-emission", &c.early_emission)] {
            println!(
                "{seed:<4} {name:<16} {:<10.4} {:<7.4} {:<6.3} {:<11.2} {:.2}",
                s.mean_ctc_loss, s.token_error_rate, s.mean_dsf, s.mean_last_spike, s.mean_drift_frames
            );
        }
        eprintln!("seed {seed}: {:.1}s", start.elapsed().as_secs_f64());
    }
    Ok(())
}
