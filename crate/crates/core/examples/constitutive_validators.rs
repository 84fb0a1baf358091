//! Sampled monotonicity and coercivity of Norton-Hoff flow laws.
//!
//! `cargo run --example constitutive_validators`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thermovisco::constitutive::{check_coercivity, check_monotonicity, continuity_moduli, GModel, SampleSpace, Scale};
use thermovisco::expr::Expr;
use thermovisco::orlicz::{complementary, ExponentField, NFunction, RadialGrid};

fn main() -> thermovisco::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let space = SampleSpace::new(vec![[0.25, 0.25], [0.5, 0.75], [0.9, 0.1]]);
    let thetas = [-1.0, 0.0, 2.0, 10.0];
    for p in [1.5, 2.0, 3.0] {
        let phi = Expr::parse("1 + 0.5*tanh(theta)")?;
        let model = GModel::norton_hoff(ExponentField::Constant(p), phi, 0.5, 1.5, Scale::Auto)?;
        let m = NFunction::power_constant(p)?;
        let mstar = complementary(&m, &RadialGrid::default())?;
        let mono = check_monotonicity(&model, &space, 5000, &mut rng)?;
        let coer = check_coercivity(&model, &m, &mstar, &space, &thetas, 1000, &mut rng)?;
        let (wt, ws) = continuity_moduli(&model, &space, 1e-6, 1000, &mut rng)?;
        println!(
            "p={p}: scale {:.4}, min monotone gap {mono:.3e}, coercivity inf {:.6} (declared {:?}), moduli {wt:.2e}/{ws:.2e}, {}",
            model.scale(),
            coer.sampled_inf,
            coer.declared,
            if coer.passed() { "ok" } else { "FAILED" }
        );
    }
    Ok(())
}
