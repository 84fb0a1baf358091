//! Boundary liftings.
//!
//! `ũ` solves `−div D ε(ũ) = f` with `ũ = g` on the boundary, and `θ̃`
//! solves `θ̃_t − Δθ̃ = 0` with `∂θ̃/∂n = g_θ`. The evolution then runs with
//! homogeneous data, shifted by `T̃ = D ε(ũ)` and `θ̃`.

use std::borrow::Cow;

use nalgebra::Vector4;

use crate::discretization::{elastic_stiffness, interior_dofs, strain, ElasticityTensor, StrainField};
use crate::error::{Error, Result};
use crate::expr::{Env, Expr, Var};
use crate::linalg::{BandCholesky, BandMatrix};
use crate::mesh::{Mesh, Point2, QuadPoints};
use crate::tensor::SymTensor3;

#[derive(Debug, Clone)]
pub struct LiftingElastic {
    /// Interleaved nodal displacement.
    pub u: Vec<f64>,
    /// `T̃ = D ε(ũ)` per element.
    pub stress: StrainField,
    pub stress_dev: StrainField,
    /// `max |T̃|` over elements.
    pub stress_max: f64,
}

impl LiftingElastic {
    pub fn zero(mesh: &Mesh) -> Self {
        let z = vec![Vector4::zeros(); mesh.element_count()];
        LiftingElastic { u: vec![0.0; 2 * mesh.node_count()], stress: z.clone(), stress_dev: z, stress_max: 0.0 }
    }

    pub fn stress_dev_tensor(&self, e: usize) -> SymTensor3 {
        SymTensor3::from_plane(&self.stress_dev[e])
    }
}

/// Factorized zero-Dirichlet elasticity operator, reusable across loads.
#[derive(Debug, Clone)]
pub struct ElasticLifter {
    stiffness: BandMatrix,
    dofs: Vec<usize>,
    factor: BandCholesky,
}

impl ElasticLifter {
    pub fn new(mesh: &Mesh, d: &ElasticityTensor) -> Result<Self> {
        let stiffness = elastic_stiffness(mesh, d);
        let dofs = interior_dofs(mesh);
        if dofs.is_empty() {
            return Err(Error::Config("elastic lifting needs interior nodes (Dirichlet set covers everything)".into()));
        }
        let factor = stiffness
            .restrict(&dofs)
            .cholesky()
            .map_err(|e| Error::Config(format!("elastic stiffness is singular: {e}")))?;
        Ok(ElasticLifter { stiffness, dofs, factor })
    }

    /// Solves with body force sampled at quadrature points and boundary
    /// values given as an interleaved nodal field (its interior values act
    /// as the extension into the domain).
    pub fn solve(&self, mesh: &Mesh, d: &ElasticityTensor, qp: &QuadPoints, f_at_q: &[[f64; 2]], g: &[f64]) -> LiftingElastic {
        let mut b = vec![0.0; 2 * mesh.node_count()];
        for q in 0..qp.len() {
            let n = mesh.elements[qp.element_of(q)].nodes;
            for a in 0..3 {
                let w = qp.weights[q] * qp.bary[q][a];
                b[2 * n[a]] += w * f_at_q[q][0];
                b[2 * n[a] + 1] += w * f_at_q[q][1];
            }
        }
        let kg = self.stiffness.mul_vec(g);
        let rhs: Vec<f64> = self.dofs.iter().map(|&i| b[i] - kg[i]).collect();
        let sol = self.factor.solve(&rhs);
        let mut u = g.to_vec();
        for (&i, v) in self.dofs.iter().zip(&sol) {
            u[i] += v;
        }
        let stress = d.apply_field(&strain(mesh, &u));
        let stress_dev: StrainField = stress
            .iter()
            .map(|s| SymTensor3::from_plane(s).dev().to_plane())
            .collect();
        let stress_max = stress.iter().map(|s| s.norm()).fold(0.0, f64::max);
        LiftingElastic { u, stress, stress_dev, stress_max }
    }
}

/// One-shot static elastic lifting.
pub fn solve_static_elastic(
    mesh: &Mesh,
    d: &ElasticityTensor,
    qp: &QuadPoints,
    f: impl Fn(Point2) -> [f64; 2],
    g: impl Fn(Point2) -> [f64; 2],
) -> Result<LiftingElastic> {
    let lifter = ElasticLifter::new(mesh, d)?;
    let f_at_q: Vec<_> = qp.points.iter().map(|p| f(*p)).collect();
    let gn: Vec<f64> = mesh.nodes.iter().flat_map(|p| g(*p)).collect();
    Ok(lifter.solve(mesh, d, qp, &f_at_q, &gn))
}

#[derive(Debug, Clone)]
pub struct HeatStability {
    pub sup_l1: f64,
    /// `(Σ dt (‖θ̃‖² + ‖∇θ̃‖²))^{1/2}`.
    pub l2_h1: f64,
    /// `‖g_θ‖_{L²(Σ)} + ‖θ̃₀‖_{L²}`.
    pub data_norm: f64,
    /// `(sup_l1 + l2_h1) / data_norm`, or zero for vanishing data.
    pub constant: f64,
}

#[derive(Debug, Clone)]
pub struct LiftingHeat {
    pub times: Vec<f64>,
    /// Nodal values per time.
    pub values: Vec<Vec<f64>>,
    pub stability: HeatStability,
}

impl LiftingHeat {
    /// Nodal field at `t`, linear in time between grid values.
    pub fn at(&self, t: f64) -> Cow<'_, [f64]> {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return Cow::Borrowed(&self.values[0]);
        }
        if t >= self.times[n - 1] {
            return Cow::Borrowed(&self.values[n - 1]);
        }
        let i = self.times.partition_point(|s| *s <= t) - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let s = (t - t0) / (t1 - t0);
        if s <= 1e-14 {
            return Cow::Borrowed(&self.values[i]);
        }
        if s >= 1.0 - 1e-14 {
            return Cow::Borrowed(&self.values[i + 1]);
        }
        Cow::Owned(self.values[i].iter().zip(&self.values[i + 1]).map(|(a, b)| a + s * (b - a)).collect())
    }
}

/// Implicit Euler for `θ̃_t − Δθ̃ = 0` with Neumann flux `g_θ(x, t, n)` on the
/// increasing time grid `times` (starting at the initial time).
pub fn solve_lifting_heat(
    mesh: &Mesh,
    g_theta: impl Fn(Point2, f64, [f64; 2]) -> f64,
    theta0: &[f64],
    times: &[f64],
) -> Result<LiftingHeat> {
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Input("heat lifting needs a strictly increasing, nonempty time grid".into()));
    }
    let k = mesh.stiffness();
    let m = mesh.mass();
    let mut values = vec![theta0.to_vec()];
    let mut factors: Vec<(f64, BandCholesky)> = vec![];
    let l1 = |v: &[f64]| mesh.integrate_nodal(&v.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let mut sup_l1 = l1(theta0);
    let mut l2_h1 = 0.0;
    let mut g_norm2 = 0.0;
    for w in times.windows(2) {
        let (t1, dt) = (w[1], w[1] - w[0]);
        let factor = match factors.iter().find(|(d, _)| (d - dt).abs() <= 1e-14 * dt) {
            Some((_, f)) => f.clone(),
            None => {
                let f = m.add_scaled(dt, &k).cholesky()?;
                factors.push((dt, f.clone()));
                f
            }
        };
        let prev = values.last().unwrap();
        let mut rhs = m.mul_vec(prev);
        let b = mesh.boundary_load(|p, n| g_theta(p, t1, n));
        for (r, bi) in rhs.iter_mut().zip(&b) {
            *r += dt * bi;
        }
        g_norm2 += dt * boundary_l2_squared(mesh, |p, n| g_theta(p, t1, n));
        let next = factor.solve(&rhs);
        sup_l1 = sup_l1.max(l1(&next));
        l2_h1 += dt * (m.inner(&next, &next) + k.inner(&next, &next));
        values.push(next);
    }
    let data_norm = g_norm2.sqrt() + m.inner(theta0, theta0).max(0.0).sqrt();
    let l2_h1 = l2_h1.sqrt();
    let constant = if data_norm > 0.0 { (sup_l1 + l2_h1) / data_norm } else { 0.0 };
    Ok(LiftingHeat {
        times: times.to_vec(),
        values,
        stability: HeatStability { sup_l1, l2_h1, data_norm, constant },
    })
}

fn boundary_l2_squared(mesh: &Mesh, g: impl Fn(Point2, [f64; 2]) -> f64) -> f64 {
    let gl = [(0.5 - 0.5 * 0.6f64.sqrt(), 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + 0.5 * 0.6f64.sqrt(), 5.0 / 18.0)];
    let mut acc = 0.0;
    for edge in &mesh.boundary {
        let (p0, p1) = (mesh.nodes[edge.nodes[0]], mesh.nodes[edge.nodes[1]]);
        let n = edge.side.outward_normal();
        for (s, w) in gl {
            let p = [p0[0] + s * (p1[0] - p0[0]), p0[1] + s * (p1[1] - p0[1])];
            acc += w * edge.length * g(p, n).powi(2);
        }
    }
    acc
}

/// Load expressions over `(x, y, t)`; the heat flux may also use the
/// outward normal `(nx, ny)`.
#[derive(Debug, Clone)]
pub struct Loads {
    pub f: [Expr; 2],
    pub g: [Expr; 2],
    pub g_theta: Expr,
    pub theta_lift0: Expr,
}

impl Default for Loads {
    fn default() -> Self {
        let z = Expr::constant(0.0);
        Loads { f: [z.clone(), z.clone()], g: [z.clone(), z.clone()], g_theta: z.clone(), theta_lift0: z }
    }
}

impl Loads {
    fn elastic_time_dependent(&self) -> bool {
        self.f.iter().chain(&self.g).any(|e| e.uses(Var::T))
    }
}

/// Both liftings along the evolution time grid.
#[derive(Debug, Clone)]
pub struct Lifting {
    lifter: ElasticLifter,
    loads: Loads,
    fixed: Option<LiftingElastic>,
    pub heat: LiftingHeat,
}

impl Lifting {
    pub fn build(mesh: &Mesh, d: &ElasticityTensor, qp: &QuadPoints, loads: Loads, times: &[f64]) -> Result<Self> {
        let lifter = ElasticLifter::new(mesh, d)?;
        let theta0: Vec<f64> = mesh.nodes.iter().map(|p| loads.theta_lift0.eval_xyt(p[0], p[1], 0.0)).collect();
        let g_theta = &loads.g_theta;
        let heat = solve_lifting_heat(
            mesh,
            |p, t, n| g_theta.eval(&Env { x: p[0], y: p[1], t, nx: n[0], ny: n[1], ..Default::default() }),
            &theta0,
            times,
        )?;
        let mut lifting = Lifting { lifter, loads, fixed: None, heat };
        if !lifting.loads.elastic_time_dependent() {
            lifting.fixed = Some(lifting.solve_elastic(mesh, d, qp, 0.0));
        }
        Ok(lifting)
    }

    fn solve_elastic(&self, mesh: &Mesh, d: &ElasticityTensor, qp: &QuadPoints, t: f64) -> LiftingElastic {
        if self.loads.f.iter().chain(&self.loads.g).all(|e| e.is_zero()) {
            return LiftingElastic::zero(mesh);
        }
        let f_at_q: Vec<[f64; 2]> = qp
            .points
            .iter()
            .map(|p| [self.loads.f[0].eval_xyt(p[0], p[1], t), self.loads.f[1].eval_xyt(p[0], p[1], t)])
            .collect();
        let g: Vec<f64> = mesh
            .nodes
            .iter()
            .flat_map(|p| [self.loads.g[0].eval_xyt(p[0], p[1], t), self.loads.g[1].eval_xyt(p[0], p[1], t)])
            .collect();
        self.lifter.solve(mesh, d, qp, &f_at_q, &g)
    }

    /// Elastic lifting at time `t` (cached when the loads are static).
    pub fn elastic(&self, mesh: &Mesh, d: &ElasticityTensor, qp: &QuadPoints, t: f64) -> Cow<'_, LiftingElastic> {
        match &self.fixed {
            Some(f) => Cow::Borrowed(f),
            None => Cow::Owned(self.solve_elastic(mesh, d, qp, t)),
        }
    }

    pub fn theta(&self, t: f64) -> Cow<'_, [f64]> {
        self.heat.at(t)
    }

    pub fn is_static(&self) -> bool {
        self.fixed.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::TriangleRule;

    fn setup(n: usize) -> (Mesh, ElasticityTensor, QuadPoints) {
        let mesh = Mesh::build(1.0, 1.0, n, n).unwrap();
        let d = ElasticityTensor::uniform(&mesh, 1.0, 1.0).unwrap();
        let qp = mesh.quad_points(&TriangleRule::of_degree(4).unwrap());
        (mesh, d, qp)
    }

    #[test]
    fn zero_data_gives_zero_lifting() {
        let (mesh, d, qp) = setup(4);
        let l = solve_static_elastic(&mesh, &d, &qp, |_| [0.0, 0.0], |_| [0.0, 0.0]).unwrap();
        assert!(l.u.iter().all(|v| *v == 0.0));
        assert_eq!(l.stress_max, 0.0);
    }

    #[test]
    fn rigid_translation_is_stress_free() {
        let (mesh, d, qp) = setup(4);
        let l = solve_static_elastic(&mesh, &d, &qp, |_| [0.0, 0.0], |_| [0.2, -0.7]).unwrap();
        assert!(l.stress_max < 1e-12);
        for n in 0..mesh.node_count() {
            assert!((l.u[2 * n] - 0.2).abs() < 1e-12 && (l.u[2 * n + 1] + 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn superposition() {
        let (mesh, d, qp) = setup(5);
        let f1 = |p: Point2| [p[0], 1.0];
        let f2 = |p: Point2| [0.0, p[1] * p[0]];
        let g = |p: Point2| [0.1 * p[0], 0.05 * p[1]];
        let a = solve_static_elastic(&mesh, &d, &qp, |p| [f1(p)[0] + f2(p)[0], f1(p)[1] + f2(p)[1]], g).unwrap();
        let b = solve_static_elastic(&mesh, &d, &qp, f1, g).unwrap();
        let c = solve_static_elastic(&mesh, &d, &qp, f2, |_| [0.0, 0.0]).unwrap();
        for i in 0..a.u.len() {
            assert!((a.u[i] - b.u[i] - c.u[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn stress_is_d_of_strain() {
        let (mesh, d, qp) = setup(4);
        let l = solve_static_elastic(&mesh, &d, &qp, |p| [p[1], -p[0]], |_| [0.0, 0.0]).unwrap();
        let eps = strain(&mesh, &l.u);
        for e in 0..mesh.element_count() {
            let t = d.plane(e) * eps[e];
            assert!((t - l.stress[e]).norm() <= 1e-12 * (1.0 + t.norm()));
            assert!(l.stress_dev_tensor(e).trace().abs() < 1e-14);
        }
    }

    #[test]
    fn constant_heat_stays_constant() {
        let mesh = Mesh::build(1.0, 1.0, 4, 4).unwrap();
        let times: Vec<f64> = (0..=10).map(|i| 0.1 * i as f64).collect();
        let h = solve_lifting_heat(&mesh, |_, _, _| 0.0, &vec![2.5; mesh.node_count()], &times).unwrap();
        for v in &h.values {
            assert!(v.iter().all(|x| (x - 2.5).abs() < 1e-12));
        }
    }

    #[test]
    fn homogeneous_flux_conserves_mass() {
        let mesh = Mesh::build(1.0, 1.0, 6, 6).unwrap();
        let theta0: Vec<f64> = mesh.nodes.iter().map(|p| (3.0 * p[0]).sin() + p[1] * p[1]).collect();
        let times: Vec<f64> = (0..=20).map(|i| 0.05 * i as f64).collect();
        let h = solve_lifting_heat(&mesh, |_, _, _| 0.0, &theta0, &times).unwrap();
        let m0 = mesh.integrate_nodal(&theta0);
        for v in &h.values {
            assert!((mesh.integrate_nodal(v) - m0).abs() <= 1e-10 * m0.abs());
        }
        assert!(h.stability.constant.is_finite());
    }

    #[test]
    fn interpolation_in_time() {
        let mesh = Mesh::build(1.0, 1.0, 2, 2).unwrap();
        let h = solve_lifting_heat(&mesh, |_, t, _| t, &vec![0.0; 9], &[0.0, 1.0]).unwrap();
        let mid = h.at(0.5);
        for (m, e) in mid.iter().zip(&h.values[1]) {
            assert!((m - 0.5 * e).abs() < 1e-14);
        }
    }
}
