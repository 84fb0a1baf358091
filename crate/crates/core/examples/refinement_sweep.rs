//! Galerkin refinement: the final energy for growing (k, l) and the
//! difference between successive points.
//!
//! On this 12×10 mesh the indicator shrinks up to (16, 16). At (32, 32) the
//! complement basis starts to carry mesh-scale parts of the initial plastic
//! strain, so the initial energy itself moves and the indicator jumps.
//!
//! `cargo run --release --example refinement_sweep`

use std::path::PathBuf;

use thermovisco::scenario::{Axis, Scenario};
use thermovisco::study::{sweep, CheckSet};

fn main() -> thermovisco::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/norton_hoff_p2.cfg");
    let mut scenario = Scenario::load(path)?;
    scenario.study.kl = vec![(2, 2), (4, 4), (8, 8), (16, 16), (32, 32)];
    let summary = sweep(&scenario, Axis::Kl, CheckSet::Energy, None)?;
    println!("  k   l   E_final        |dE|        C");
    for (i, p) in summary.points.iter().enumerate() {
        let ind = summary.indicator[i].map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into());
        println!("{:3} {:3}   {:.6e}  {ind:>10}  {:.6e}", p.k, p.l, summary.final_energy[i], summary.budget_constants[i]);
    }
    println!("indicator monotone: {}, all checks pass: {}", summary.indicator_monotone(), summary.passed());
    Ok(())
}
