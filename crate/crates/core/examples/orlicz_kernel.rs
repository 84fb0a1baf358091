//! N-functions, their complements and the Orlicz norms of a sampled field.
//!
//! `cargo run --example orlicz_kernel`

use thermovisco::expr::Expr;
use thermovisco::mesh::{Mesh, TriangleRule};
use thermovisco::orlicz::{complementary, fenchel_young_gap, modular_report, NFunction, RadialGrid};
use thermovisco::orlicz::{Integrand, SampledField};
use thermovisco::SymTensor3;

fn main() -> thermovisco::Result<()> {
    let grid = RadialGrid::default();

    // A profile with no closed-form conjugate: M(r) = (1+r) ln(1+r) − r.
    let m = NFunction::radial(Expr::parse("(1+r)*log(1+r) - r")?);
    let mstar = complementary(&m, &grid)?;
    println!("  r      M(r)         M*(r)        exp(r)-r-1");
    for r in [0.1, 0.5, 1.0, 2.0, 4.0] {
        let x = [0.0, 0.0];
        println!("{r:5.1}  {:.6e}  {:.6e}  {:.6e}", m.radial(x, r)?, mstar.radial(x, r)?, r.exp() - r - 1.0);
    }

    // Power family: the conjugate is closed form.
    let p = 3.0;
    let power = NFunction::power_constant(p)?;
    let power_star = complementary(&power, &grid)?;
    let xi = SymTensor3::new(0.3, -0.1, -0.2, 0.4, 0.0, 0.1);
    let dual = xi * xi.norm().powf(p - 2.0);
    println!("\nFenchel-Young gap at the dual pair: {:.2e}", fenchel_young_gap(&power, &power_star, [0.5, 0.5], &xi, &dual)?);

    // Norms of a field on the unit square.
    let mesh = Mesh::build(1.0, 1.0, 8, 8)?;
    let qp = mesh.quad_points(&TriangleRule::of_degree(2)?);
    let values = qp.points.iter().map(|q| xi * (1.0 + q[0] * q[1])).collect();
    let field = SampledField::on_quadrature(&qp, values, 1.0);
    let report = modular_report(&power, &field)?;
    println!(
        "modular {:.6e}, Luxemburg {:.6e}, Orlicz {:.6e} (bracket [{:.4e}, {:.4e}])",
        report.modular, report.luxemburg, report.orlicz, report.orlicz_bracket.0, report.orlicz_bracket.1
    );
    Ok(())
}
