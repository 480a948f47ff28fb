//! Lattice results against brute-force path enumeration on seeded random
//! instances, plus the grouping example from a hand-written path list.

use brctc::compare::{run_oracle_compare, CompareConfig, ORACLE_TOLERANCE};
use brctc::records::PathFixture;

fn main() -> anyhow::Result<()> {
    let cfg = CompareConfig::default();
    let results = run_oracle_compare(&cfg)?;
    let worst = results.iter().map(|c| c.max_error()).fold(0.0, f64::max);
    let infeasible = results.iter().filter(|c| c.infeasible).count();
    let passed = results.iter().filter(|c| c.passed(ORACLE_TOLERANCE)).count();
    println!(
        "{passed}/{} instances within {ORACLE_TOLERANCE:e} ({infeasible} infeasible on both sides), worst error {worst:.2e}",
        results.len()
    );

    let fixture: PathFixture = serde_json::from_str(include_str!("../fixtures/grouping_paths.json"))?;
    let report = fixture.evaluate()?;
    println!("path-list objective {} grouped {}", report.objective, report.grouped_objective);
    for (tau, mass) in report.groups {
        println!("  last token ends at frame {tau} (0-based): mass {mass}");
    }
    Ok(())
}
