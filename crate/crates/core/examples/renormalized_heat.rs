//! Heat equation with an integrable, non-square-integrable source, solved
//! through truncated approximations.
//!
//! `cargo run --release --example renormalized_heat`

use std::sync::Arc;

use thermovisco::evolution::time_grid;
use thermovisco::mesh::Mesh;
use thermovisco::renormheat::{manufactured_error, renorm_study, HeatProblem, StudyOptions};

fn main() -> thermovisco::Result<()> {
    println!("manufactured solution, dt = h^2:");
    for n in [4, 8, 16, 32] {
        let h = 1.0 / n as f64;
        let err = manufactured_error(Arc::new(Mesh::build(1.0, 1.0, n, n)?), time_grid(h * h, 0.5)?)?;
        println!("  h = 1/{n:<3} L2 error {err:.4e}");
    }

    let mesh = Arc::new(Mesh::build(1.0, 1.0, 16, 16)?);
    let problem = HeatProblem::singular(mesh, [0.5, 0.5], 1.5, time_grid(1.0 / 32.0, 1.0)?)?;
    let study = renorm_study(&problem, &StudyOptions::default())?;
    println!("\ndata L1 norms:");
    for (eps, l1) in &study.data_l1 {
        println!("  eps {eps:<8} {l1:.4e}");
    }
    println!("truncation tail on the finest approximation:");
    for (k, t) in &study.tails {
        println!("  K {k:<4} {t:.4e}");
    }
    println!("renormalized residuals:");
    for r in &study.residuals {
        println!("  eps {:<8} M_S {:<4} {:.4e}", r.eps, r.clamp, r.residual);
    }
    println!("Cauchy bound:");
    for c in &study.cauchy {
        println!("  ({}, {}) {:.4e} <= {:.4e}", c.eps, c.eta, c.distance, c.data_distance);
    }
    println!("tail monotone {}, residual monotone {}, Cauchy holds {}", study.tail_monotone(), study.residual_monotone(), study.cauchy_holds());
    Ok(())
}
