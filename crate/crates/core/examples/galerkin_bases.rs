//! Eigenfunction bases: Neumann Laplacian for temperature, elastostatic
//! modes for displacement and the D-orthogonal complement for plastic strain.
//!
//! `cargo run --example galerkin_bases`

use std::sync::Arc;

use thermovisco::discretization::{ElasticityTensor, GalerkinBases};
use thermovisco::linalg::EigenOptions;
use thermovisco::mesh::Mesh;

fn main() -> thermovisco::Result<()> {
    let mesh = Arc::new(Mesh::build(1.0, 1.0, 16, 16)?);
    let d = Arc::new(ElasticityTensor::uniform(&mesh, 1.0, 1.0)?);
    let bases = GalerkinBases::build(mesh.clone(), d, 6, 8, EigenOptions::default())?;

    let pi2 = std::f64::consts::PI.powi(2);
    println!("Neumann eigenvalues / pi^2:");
    for v in &bases.temperature.values {
        print!(" {:.4}", v / pi2);
    }
    println!("\nelastostatic eigenvalues:");
    for v in &bases.displacement.values {
        print!(" {v:.4}");
    }
    println!();

    let gram = bases.gram_report();
    println!("largest Gram defect {:.2e}", gram.max());
    println!("{}", serde_json::to_string_pretty(&gram).unwrap());

    // Projection and reconstruction of a nodal temperature.
    let theta: Vec<f64> = mesh.nodes.iter().map(|p| 1.0 + (std::f64::consts::PI * p[0]).cos()).collect();
    let beta = bases.project_scalar(&theta);
    let back = bases.reconstruct_scalar(&beta);
    let err = theta.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("coefficients {beta:.4?}\nmax nodal reconstruction error {err:.2e}");
    Ok(())
}
