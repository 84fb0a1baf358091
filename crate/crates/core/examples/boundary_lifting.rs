//! Liftings of the boundary data: a static elastic solve for the body force
//! and boundary displacement, and a heat solve carrying the boundary flux.
//!
//! `cargo run --example boundary_lifting`

use thermovisco::discretization::ElasticityTensor;
use thermovisco::evolution::time_grid;
use thermovisco::expr::Expr;
use thermovisco::lifting::{Lifting, Loads};
use thermovisco::mesh::{Mesh, TriangleRule};

fn main() -> thermovisco::Result<()> {
    let mesh = Mesh::build(1.0, 0.5, 16, 8)?;
    let d = ElasticityTensor::uniform(&mesh, 1.0, 1.0)?;
    let qp = mesh.quad_points(&TriangleRule::of_degree(2)?);
    let loads = Loads {
        f: [Expr::parse("0")?, Expr::parse("-1")?],
        g: [Expr::parse("0.1*x*t")?, Expr::parse("0")?],
        g_theta: Expr::parse("nx*(1 + t)")?,
        theta_lift0: Expr::parse("0")?,
    };
    let times = time_grid(0.05, 1.0)?;
    let lifting = Lifting::build(&mesh, &d, &qp, loads, &times)?;
    println!("elastic lifting is {}", if lifting.is_static() { "static" } else { "time dependent" });
    println!("   t     max|T~|     max|u~|     heat lift L1");
    for t in [0.0, 0.25, 0.5, 1.0] {
        let el = lifting.elastic(&mesh, &d, &qp, t);
        let umax = el.u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let theta = lifting.theta(t);
        let l1: f64 = mesh.lumped_mass().iter().zip(theta.iter()).map(|(w, v)| w * v.abs()).sum();
        println!("{t:5.2}  {:.4e}  {umax:.4e}  {l1:.4e}", el.stress_max);
    }
    let s = &lifting.heat.stability;
    println!("heat lifting: sup L1 {:.4e}, L2(H1) {:.4e}, data {:.4e}, ratio {:.3}", s.sup_l1, s.l2_h1, s.data_norm, s.constant);
    Ok(())
}
