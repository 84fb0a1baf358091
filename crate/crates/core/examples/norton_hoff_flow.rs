//! Integrates a shipped scenario and prints its energy budget, the energy
//! identity residual, the ψ-probe and the Orlicz audit.
//!
//! `cargo run --release --example norton_hoff_flow [-- path/to/scenario.cfg]`

use std::path::PathBuf;

use thermovisco::scenario::Scenario;
use thermovisco::study::{run_point, CheckSet, RunPoint};

fn main() -> thermovisco::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/norton_hoff_p3.cfg"));
    let scenario = Scenario::load(&path)?;
    let out = run_point(&scenario, RunPoint::of(&scenario), CheckSet::All)?;
    let r = &out.report;

    if let Some(e) = &r.energy {
        println!("c = {}, d = {}, budget constant {:.6e}", e.c, e.d, e.budget_constant);
        println!("    t       E          lhs         rhs        margin");
        let stride = (e.times.len() / 10).max(1);
        for i in (0..e.times.len()).step_by(stride) {
            println!("{:6.3}  {:.4e}  {:.4e}  {:.4e}  {:.3e}", e.times[i], e.energy[i], e.lhs[i], e.rhs[i], e.margins[i]);
        }
    }
    println!("energy identity residual {:.3e}", r.identity.global_residual);
    if let Some(p) = &r.probe {
        println!("psi probe: lhs {:.4e}, energy average {:.4e}, E(0) {:.4e}, defect {:.2e}", p.lhs, p.energy_average, p.initial_energy, p.defect);
    }
    let a = &r.audit;
    println!(
        "Orlicz audit: <M> {:.4e}, <M*> {:.4e}, |G:T| {:.4e}, min slack {:.2e}",
        a.modular_m, a.modular_mstar, a.product_l1, a.min_fenchel_young_slack
    );
    println!("temperature: sup L1 {:.4e}, sup L2 {:.4e}", r.temperature.sup_l1, r.temperature.sup_l2);
    for c in &r.checks {
        println!("{} {}", if c.pass { "PASS" } else { "FAIL" }, c.name);
    }
    Ok(())
}
