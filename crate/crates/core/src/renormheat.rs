//! Heat equation with integrable data and homogeneous Neumann boundary,
//! solved through bounded approximations of the data.
//!
//! The solver is P1 with a lumped mass matrix and implicit Euler in time.
//! On the structured meshes of [`Mesh::build`] the stiffness matrix has
//! nonpositive off-diagonal entries, so each step solves with an M-matrix:
//! the scheme is order preserving, contracts the lumped `L¹` distance and
//! satisfies the truncated energy estimate with the constant `C(K) = K`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{BandCholesky, BandMatrix};
use crate::mesh::{Mesh, Point2, TriangleRule};

pub fn truncate_scalar(r: f64, k: f64) -> f64 {
    r.clamp(-k, k)
}

/// Pointwise clamp to `[-K, K]`.
pub fn truncate(field: &[f64], k: f64) -> Vec<f64> {
    field.iter().map(|v| truncate_scalar(*v, k)).collect()
}

/// Primitive of the truncation: `r²/2` inside `[-K, K]`, linear growth outside.
pub fn tilde_t(r: f64, k: f64) -> f64 {
    let a = r.abs();
    if a <= k {
        0.5 * a * a
    } else {
        0.5 * k * k + k * (a - k)
    }
}

pub type SpaceTimeFn = Arc<dyn Fn(Point2, f64) -> f64 + Send + Sync>;
pub type SpaceFn = Arc<dyn Fn(Point2) -> f64 + Send + Sync>;

/// Target data `f`, `θ₀` (possibly unbounded) on a mesh and time grid. The
/// approximations are `f^ε = 𝒯_{1/ε} f` and `θ₀^ε = 𝒯_{1/ε} θ₀`.
#[derive(Clone)]
pub struct HeatProblem {
    pub mesh: Arc<Mesh>,
    pub source: SpaceTimeFn,
    pub initial: SpaceFn,
    pub times: Vec<f64>,
}

impl fmt::Debug for HeatProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HeatProblem")
            .field("nodes", &self.mesh.node_count())
            .field("steps", &self.times.len().saturating_sub(1))
            .finish()
    }
}

impl HeatProblem {
    pub fn new(mesh: Arc<Mesh>, source: SpaceTimeFn, initial: SpaceFn, times: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Input("time grid must be nonempty and strictly increasing".into()));
        }
        Ok(HeatProblem { mesh, source, initial, times })
    }

    /// Source `|x − x₀|^{-a}` with zero initial temperature.
    pub fn singular(mesh: Arc<Mesh>, center: Point2, exponent: f64, times: Vec<f64>) -> Result<Self> {
        if !(exponent > 0.0) {
            return Err(Error::Input(format!("singular exponent must be positive, got {exponent}")));
        }
        let source: SpaceTimeFn = Arc::new(move |p: Point2, _t: f64| {
            let r2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
            r2.powf(-0.5 * exponent)
        });
        Self::new(mesh, source, Arc::new(|_| 0.0), times)
    }

    /// Smooth problem with exact solution `e^{-t} cos(πx/Lx) cos(πy/Ly)`.
    pub fn manufactured(mesh: Arc<Mesh>, times: Vec<f64>) -> Result<Self> {
        let (lx, ly) = (mesh.lx, mesh.ly);
        let rate = std::f64::consts::PI.powi(2) * (1.0 / (lx * lx) + 1.0 / (ly * ly)) - 1.0;
        let source: SpaceTimeFn = Arc::new(move |p: Point2, t: f64| rate * manufactured_exact(lx, ly, p, t));
        let initial: SpaceFn = Arc::new(move |p: Point2| manufactured_exact(lx, ly, p, 0.0));
        Self::new(mesh, source, initial, times)
    }

    fn level(eps: Option<f64>) -> Result<f64> {
        match eps {
            None => Ok(f64::INFINITY),
            Some(e) if e > 0.0 => Ok(1.0 / e),
            Some(e) => Err(Error::Input(format!("regularization ε must be positive, got {e}"))),
        }
    }

    fn nodal(&self, values: impl Fn(Point2) -> f64, level: f64, what: &str) -> Result<Vec<f64>> {
        self.mesh
            .nodes
            .iter()
            .map(|p| {
                let v = truncate_scalar(values(*p), level);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Numeric(format!("{what} is not finite at ({}, {}); use a regularization ε", p[0], p[1])))
                }
            })
            .collect()
    }

    /// Nodal `f^ε` at every grid time (index 0 is unused by the scheme).
    pub fn source_nodal(&self, eps: Option<f64>) -> Result<Vec<Vec<f64>>> {
        let level = Self::level(eps)?;
        self.times.iter().map(|t| self.nodal(|p| (self.source)(p, *t), level, "source")).collect()
    }

    pub fn initial_nodal(&self, eps: Option<f64>) -> Result<Vec<f64>> {
        self.nodal(|p| (self.initial)(p), Self::level(eps)?, "initial temperature")
    }
}

pub fn manufactured_exact(lx: f64, ly: f64, p: Point2, t: f64) -> f64 {
    use std::f64::consts::PI;
    (-t).exp() * (PI * p[0] / lx).cos() * (PI * p[1] / ly).cos()
}

/// Nodal trajectory together with the data it was computed from.
#[derive(Debug, Clone)]
pub struct HeatSolution {
    pub eps: Option<f64>,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub source: Vec<Vec<f64>>,
}

impl HeatSolution {
    pub fn initial(&self) -> &[f64] {
        &self.values[0]
    }
    pub fn last(&self) -> &[f64] {
        self.values.last().unwrap()
    }
}

/// Reusable factorizations of `M_L + dt A` keyed by the step size.
pub struct HeatSolver {
    stiffness: BandMatrix,
    lumped: Vec<f64>,
    cache: BTreeMap<u64, BandCholesky>,
}

impl HeatSolver {
    pub fn new(mesh: &Mesh) -> Self {
        HeatSolver { stiffness: mesh.stiffness(), lumped: mesh.lumped_mass(), cache: BTreeMap::new() }
    }

    pub fn lumped(&self) -> &[f64] {
        &self.lumped
    }

    pub fn stiffness(&self) -> &BandMatrix {
        &self.stiffness
    }

    fn factor(&mut self, dt: f64) -> Result<&BandCholesky> {
        let key = dt.to_bits();
        if !self.cache.contains_key(&key) {
            let mut diag = BandMatrix::zeros(self.lumped.len(), 0);
            for (i, m) in self.lumped.iter().enumerate() {
                diag.add(i, i, *m);
            }
            let sys = diag.add_scaled(dt, &self.stiffness);
            self.cache.insert(key, sys.cholesky()?);
        }
        Ok(&self.cache[&key])
    }

    /// One implicit Euler step `M_L (θ⁺ − θ)/dt + A θ⁺ = M_L f⁺`.
    pub fn step(&mut self, theta: &[f64], source: &[f64], dt: f64) -> Result<Vec<f64>> {
        let rhs: Vec<f64> = self.lumped.iter().zip(theta.iter().zip(source)).map(|(m, (t, f))| m * (t + dt * f)).collect();
        let out = self.factor(dt)?.solve(&rhs);
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::Numeric("heat step produced non-finite values".into()))
        }
    }
}

/// Solves the problem with data `f^ε`, `θ₀^ε`; `eps = None` uses the data as is.
pub fn solve_truncated(problem: &HeatProblem, eps: Option<f64>) -> Result<HeatSolution> {
    let source = problem.source_nodal(eps)?;
    let theta0 = problem.initial_nodal(eps)?;
    solve_nodal(&problem.mesh, &problem.times, theta0, source, eps)
}

pub fn solve_nodal(mesh: &Mesh, times: &[f64], theta0: Vec<f64>, source: Vec<Vec<f64>>, eps: Option<f64>) -> Result<HeatSolution> {
    let mut solver = HeatSolver::new(mesh);
    let mut values = Vec::with_capacity(times.len());
    values.push(theta0);
    for n in 1..times.len() {
        let next = solver.step(&values[n - 1], &source[n], times[n] - times[n - 1])?;
        values.push(next);
    }
    Ok(HeatSolution { eps, times: times.to_vec(), values, source })
}

/// `‖𝒯_{K+c}θ − 𝒯_Kθ‖` in `L²(0,T; W^{1,2})`, truncating nodal values.
pub fn truncation_tail(mesh: &Mesh, sol: &HeatSolution, k: f64, c: f64) -> Result<f64> {
    if !(k > 0.0 && c > 0.0) {
        return Err(Error::Input(format!("truncation tail needs K > 0 and c > 0 (got K={k}, c={c})")));
    }
    let mass = mesh.mass();
    let stiff = mesh.stiffness();
    let mut acc = 0.0;
    for n in 1..sol.times.len() {
        let w: Vec<f64> = sol.values[n].iter().map(|v| truncate_scalar(*v, k + c) - truncate_scalar(*v, k)).collect();
        acc += (sol.times[n] - sol.times[n - 1]) * (mass.inner(&w, &w) + stiff.inner(&w, &w));
    }
    Ok(acc.sqrt())
}

fn g(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// Smooth cutoff equal to 1 on `[0, ½]` and 0 on `[1, ∞)`, with its derivative.
pub fn cutoff(s: f64) -> (f64, f64) {
    if s <= 0.5 {
        return (1.0, 0.0);
    }
    if s >= 1.0 {
        return (0.0, 0.0);
    }
    let (a, b) = (g(1.0 - s), g(s - 0.5));
    let da = -a / (1.0 - s).powi(2);
    let db = b / (s - 0.5).powi(2);
    let sum = a + b;
    (a / sum, (da * b - a * db) / (sum * sum))
}

/// `S_M` with `S_M' = cutoff(|r|/M)`: the identity near zero, constant
/// beyond `±M`.
#[derive(Debug, Clone)]
pub struct SmoothClamp {
    pub m: f64,
    grid: Vec<f64>,
    primitive: Vec<f64>,
}

impl SmoothClamp {
    const CELLS: usize = 1024;

    pub fn new(m: f64) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Input(format!("clamp width must be positive, got {m}")));
        }
        let h = 0.5 / Self::CELLS as f64;
        let grid: Vec<f64> = (0..=Self::CELLS).map(|i| 0.5 + i as f64 * h).collect();
        let mut primitive = vec![0.5; grid.len()];
        // Composite 3-point Gauss on each cell.
        let nodes = [-(0.6f64).sqrt(), 0.0, (0.6f64).sqrt()];
        let weights = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        for i in 1..grid.len() {
            let mid = 0.5 * (grid[i] + grid[i - 1]);
            let cell: f64 = nodes.iter().zip(&weights).map(|(x, w)| w * cutoff(mid + 0.5 * h * x).0).sum();
            primitive[i] = primitive[i - 1] + 0.5 * h * cell;
        }
        Ok(SmoothClamp { m, grid, primitive })
    }

    fn unit_primitive(&self, s: f64) -> f64 {
        if s <= 0.5 {
            return s;
        }
        let last = *self.primitive.last().unwrap();
        if s >= 1.0 {
            return last;
        }
        let h = self.grid[1] - self.grid[0];
        let i = (((s - 0.5) / h) as usize).min(Self::CELLS - 1);
        let u = (s - self.grid[i]) / h;
        let (p0, p1) = (self.primitive[i], self.primitive[i + 1]);
        let (d0, d1) = (cutoff(self.grid[i]).0 * h, cutoff(self.grid[i + 1]).0 * h);
        let (u2, u3) = (u * u, u * u * u);
        (2.0 * u3 - 3.0 * u2 + 1.0) * p0 + (u3 - 2.0 * u2 + u) * d0 + (-2.0 * u3 + 3.0 * u2) * p1 + (u3 - u2) * d1
    }

    pub fn s(&self, r: f64) -> f64 {
        if r.is_nan() {
            return f64::NAN;
        }
        r.signum() * self.m * self.unit_primitive(r.abs() / self.m)
    }

    pub fn ds(&self, r: f64) -> f64 {
        cutoff(r.abs() / self.m).0
    }

    pub fn d2s(&self, r: f64) -> f64 {
        r.signum() * cutoff(r.abs() / self.m).1 / self.m
    }

    /// `S_M'` vanishes outside `[-M, M]`.
    pub fn support(&self) -> f64 {
        self.m
    }
}

/// `φ(x, y, t) = (x/Lx)^px (y/Ly)^py · b(t/T)` with `b` the smooth cutoff
/// rescaled to vanish at `t = T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestFunction {
    pub px: u32,
    pub py: u32,
    pub t_end: f64,
    pub lx: f64,
    pub ly: f64,
}

impl TestFunction {
    pub fn new(px: u32, py: u32, mesh: &Mesh, t_end: f64) -> Self {
        TestFunction { px, py, t_end, lx: mesh.lx, ly: mesh.ly }
    }

    pub fn family(mesh: &Mesh, t_end: f64) -> Vec<Self> {
        [(0, 0), (1, 0), (1, 1), (2, 1)].iter().map(|(a, b)| Self::new(*a, *b, mesh, t_end)).collect()
    }

    fn time(&self, t: f64) -> f64 {
        if self.t_end <= 0.0 {
            return 0.0;
        }
        cutoff(0.5 + 0.5 * t / self.t_end).0
    }

    fn space(&self, p: Point2) -> (f64, [f64; 2]) {
        let (x, y) = (p[0] / self.lx, p[1] / self.ly);
        let px = x.powi(self.px as i32);
        let py = y.powi(self.py as i32);
        let dx = if self.px == 0 { 0.0 } else { self.px as f64 * x.powi(self.px as i32 - 1) / self.lx };
        let dy = if self.py == 0 { 0.0 } else { self.py as f64 * y.powi(self.py as i32 - 1) / self.ly };
        (px * py, [dx * py, px * dy])
    }

    pub fn value(&self, p: Point2, t: f64) -> f64 {
        self.space(p).0 * self.time(t)
    }

    pub fn grad(&self, p: Point2, t: f64) -> [f64; 2] {
        let (_, g) = self.space(p);
        let b = self.time(t);
        [g[0] * b, g[1] * b]
    }
}

/// Residual of the renormalized identity tested with `S` and `φ`, assembled
/// with summation by parts in time and `∇θ` replaced by `∇𝒯_{M_S}θ`. The
/// source is the target `f` evaluated at quadrature points, the initial
/// datum is the target `θ₀` at nodes.
pub fn renorm_residual(problem: &HeatProblem, sol: &HeatSolution, s: &SmoothClamp, phi: &TestFunction) -> Result<f64> {
    let mesh = &*problem.mesh;
    let t_end = *sol.times.last().unwrap();
    for p in &mesh.nodes {
        let v = phi.value(*p, t_end);
        if v.abs() > 1e-14 {
            return Err(Error::Input(format!("test function does not vanish at the final time (φ = {v})")));
        }
    }
    let lumped = mesh.lumped_mass();
    let qp = mesh.quad_points(&TriangleRule::of_degree(4)?);
    let s_of = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| s.s(*x)).collect() };
    let phi_nodal = |t: f64| -> Vec<f64> { mesh.nodes.iter().map(|p| phi.value(*p, t)).collect() };

    let theta0_target: Vec<f64> = mesh.nodes.iter().map(|p| (problem.initial)(*p)).collect();
    let phi0 = phi_nodal(sol.times[0]);
    let mut total: f64 = lumped
        .iter()
        .zip(s_of(sol.initial()).iter().zip(&s_of(&theta0_target)))
        .zip(&phi0)
        .map(|((m, (a, b)), f)| m * (a - b) * f)
        .sum();

    let mut prev = s_of(sol.initial());
    for n in 1..sol.times.len() {
        let (t, dt) = (sol.times[n], sol.times[n] - sol.times[n - 1]);
        let theta = &sol.values[n];
        let cur = s_of(theta);
        let phin = phi_nodal(t);
        let time_part: f64 = (0..lumped.len()).map(|i| lumped[i] * (cur[i] - prev[i]) * phin[i]).sum();
        let clipped = truncate(theta, s.support());
        let theta_q = mesh.at_quad(&qp, theta);
        let space_part: f64 = (0..qp.len())
            .into_par_iter()
            .map(|q| {
                let e = qp.element_of(q);
                let gr = mesh.gradient(e, &clipped);
                let x = qp.points[q];
                let v = theta_q[q];
                let (phi_v, phi_g) = (phi.value(x, t), phi.grad(x, t));
                let f = (problem.source)(x, t);
                let grad_sq = gr[0] * gr[0] + gr[1] * gr[1];
                let source = if s.ds(v) == 0.0 { 0.0 } else { f * s.ds(v) * phi_v };
                qp.weights[q] * (s.ds(v) * (gr[0] * phi_g[0] + gr[1] * phi_g[1]) + s.d2s(v) * grad_sq * phi_v - source)
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum();
        total += time_part + dt * space_part;
        prev = cur;
    }
    if total.is_finite() {
        Ok(total)
    } else {
        Err(Error::Numeric("renormalized residual is not finite".into()))
    }
}

/// `min(θ₂ − θ₁)` over nodes and times for ordered data.
pub fn comparison(first: &HeatProblem, second: &HeatProblem, eps: Option<f64>) -> Result<f64> {
    if first.mesh.node_count() != second.mesh.node_count() || first.times != second.times {
        return Err(Error::Input("compared problems must share mesh and time grid".into()));
    }
    let (f1, f2) = (first.source_nodal(eps)?, second.source_nodal(eps)?);
    let (a1, a2) = (first.initial_nodal(eps)?, second.initial_nodal(eps)?);
    let scale = 1.0 + a1.iter().chain(&a2).fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale;
    if a1.iter().zip(&a2).any(|(x, y)| x > &(y + tol)) {
        return Err(Error::Input("initial data are not ordered".into()));
    }
    for (r1, r2) in f1.iter().zip(&f2).skip(1) {
        if r1.iter().zip(r2).any(|(x, y)| x > &(y + 1e-12 * (1.0 + x.abs()))) {
            return Err(Error::Input("sources are not ordered".into()));
        }
    }
    let s1 = solve_nodal(&first.mesh, &first.times, a1, f1, eps)?;
    let s2 = solve_nodal(&second.mesh, &second.times, a2, f2, eps)?;
    let gap = s1
        .values
        .iter()
        .zip(&s2.values)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(a, b)| b - a))
        .fold(f64::INFINITY, f64::min);
    Ok(gap)
}

fn l1(lumped: &[f64], v: &[f64]) -> f64 {
    lumped.iter().zip(v).map(|(m, x)| m * x.abs()).sum()
}

/// `∫_Q |f|` of the nodal data with the lumped rule, right endpoint in time.
pub fn source_l1(lumped: &[f64], times: &[f64], source: &[Vec<f64>]) -> f64 {
    (1..times.len()).map(|n| (times[n] - times[n - 1]) * l1(lumped, &source[n])).sum()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CauchyRow {
    pub eps: f64,
    pub eta: f64,
    /// `max_t ‖θ^ε − θ^η‖_{L¹}`.
    pub distance: f64,
    /// `∫_Q |f^ε − f^η| + ‖θ₀^ε − θ₀^η‖_{L¹}`.
    pub data_distance: f64,
}

pub fn cauchy(mesh: &Mesh, a: &HeatSolution, b: &HeatSolution) -> CauchyRow {
    let lumped = mesh.lumped_mass();
    let diff = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p - q).collect() };
    let distance = a.values.iter().zip(&b.values).map(|(x, y)| l1(&lumped, &diff(x, y))).fold(0.0, f64::max);
    let src: Vec<Vec<f64>> = a.source.iter().zip(&b.source).map(|(x, y)| diff(x, y)).collect();
    let data_distance = source_l1(&lumped, &a.times, &src) + l1(&lumped, &diff(a.initial(), b.initial()));
    CauchyRow { eps: a.eps.unwrap_or(0.0), eta: b.eps.unwrap_or(0.0), distance, data_distance }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TruncationEnergy {
    pub k: f64,
    /// Largest `∫𝒯̃_K(θ)(t) + ∫₀ᵗ |∇𝒯_Kθ|²` over the grid.
    pub max_lhs: f64,
    /// `K ‖f‖_{L¹(Q)} + K ‖θ₀‖_{L¹}`.
    pub bound: f64,
    /// Largest `‖𝒯_Kθ‖² / (2∫𝒯̃_Kθ)`.
    pub max_l2_ratio: f64,
}

impl TruncationEnergy {
    pub fn passed(&self) -> bool {
        self.max_lhs <= self.bound * (1.0 + 1e-10) + 1e-14 && self.max_l2_ratio <= 1.0 + 1e-12
    }
}

pub fn truncation_energy(mesh: &Mesh, sol: &HeatSolution, k: f64) -> TruncationEnergy {
    let lumped = mesh.lumped_mass();
    let stiff = mesh.stiffness();
    let bound = k * source_l1(&lumped, &sol.times, &sol.source) + k * l1(&lumped, sol.initial());
    let mut grad = 0.0;
    let mut max_lhs: f64 = 0.0;
    let mut ratio: f64 = 0.0;
    for n in 0..sol.times.len() {
        let tk = truncate(&sol.values[n], k);
        if n > 0 {
            grad += (sol.times[n] - sol.times[n - 1]) * stiff.inner(&tk, &tk);
        }
        let tilde: f64 = lumped.iter().zip(&sol.values[n]).map(|(m, v)| m * tilde_t(*v, k)).sum();
        let l2: f64 = lumped.iter().zip(&tk).map(|(m, v)| m * v * v).sum();
        max_lhs = max_lhs.max(tilde + grad);
        if tilde > 0.0 {
            ratio = ratio.max(l2 / (2.0 * tilde));
        }
    }
    TruncationEnergy { k, max_lhs, bound, max_l2_ratio: ratio }
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyOptions {
    pub eps: Vec<f64>,
    pub clamps: Vec<f64>,
    pub tail_levels: Vec<f64>,
    pub tail_c: f64,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            eps: vec![0.25, 1.0 / 16.0, 1.0 / 64.0],
            clamps: vec![8.0, 16.0, 32.0],
            tail_levels: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
            tail_c: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResidualRow {
    pub eps: f64,
    pub clamp: f64,
    /// Largest `|residual|` over the test-function family.
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RenormStudy {
    pub data_l1: Vec<(f64, f64)>,
    /// Tail on the finest approximation.
    pub tails: Vec<(f64, f64)>,
    pub residuals: Vec<ResidualRow>,
    pub cauchy: Vec<CauchyRow>,
    pub energy: Vec<TruncationEnergy>,
}

impl RenormStudy {
    pub fn tail_monotone(&self) -> bool {
        self.tails.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12) + 1e-15)
    }

    /// Ratio of the tail at the largest level to the tail at the smallest.
    pub fn tail_decay(&self) -> f64 {
        match (self.tails.first(), self.tails.last()) {
            (Some(a), Some(b)) if a.1 > 0.0 => b.1 / a.1,
            _ => 0.0,
        }
    }

    /// Whether the residual decreases along the ε sequence for every clamp.
    pub fn residual_monotone(&self) -> bool {
        let mut by_clamp: BTreeMap<u64, Vec<&ResidualRow>> = BTreeMap::new();
        for r in &self.residuals {
            by_clamp.entry(r.clamp.to_bits()).or_default().push(r);
        }
        by_clamp.values().all(|rows| {
            let mut rows = rows.clone();
            rows.sort_by(|a, b| b.eps.total_cmp(&a.eps));
            rows.windows(2).all(|w| w[1].residual <= w[0].residual)
        })
    }

    pub fn cauchy_holds(&self) -> bool {
        self.cauchy.iter().all(|r| r.distance <= r.data_distance * (1.0 + 1e-10) + 1e-12)
    }
}

pub fn renorm_study(problem: &HeatProblem, opts: &StudyOptions) -> Result<RenormStudy> {
    if opts.eps.is_empty() {
        return Err(Error::Input("renormalization study needs at least one ε".into()));
    }
    let mut eps = opts.eps.clone();
    eps.sort_by(|a, b| b.total_cmp(a));
    let sols: Vec<HeatSolution> = eps.par_iter().map(|e| solve_truncated(problem, Some(*e))).collect::<Result<_>>()?;
    let mesh = &*problem.mesh;
    let lumped = mesh.lumped_mass();
    let t_end = *problem.times.last().unwrap();
    let tests = TestFunction::family(mesh, t_end);
    let clamps: Vec<SmoothClamp> = opts.clamps.iter().map(|m| SmoothClamp::new(*m)).collect::<Result<_>>()?;

    let finest = sols.last().unwrap();
    let tails = opts
        .tail_levels
        .iter()
        .map(|k| Ok((*k, truncation_tail(mesh, finest, *k, opts.tail_c)?)))
        .collect::<Result<Vec<_>>>()?;

    let nc = clamps.len();
    let pairs: Vec<(usize, usize)> = (0..sols.len()).flat_map(|i| (0..nc).map(move |j| (i, j))).collect();
    let residuals = pairs
        .par_iter()
        .map(|(i, j)| {
            let worst = tests
                .iter()
                .map(|phi| renorm_residual(problem, &sols[*i], &clamps[*j], phi).map(f64::abs))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            Ok(ResidualRow { eps: eps[*i], clamp: clamps[*j].m, residual: worst })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cauchy_rows = Vec::new();
    for i in 0..sols.len() {
        for j in i + 1..sols.len() {
            cauchy_rows.push(cauchy(mesh, &sols[i], &sols[j]));
        }
    }
    let energy = opts.tail_levels.iter().map(|k| truncation_energy(mesh, finest, *k)).collect();
    let data_l1 = sols.iter().zip(&eps).map(|(s, e)| (*e, source_l1(&lumped, &s.times, &s.source))).collect();
    Ok(RenormStudy { data_l1, tails, residuals, cauchy: cauchy_rows, energy })
}

/// Error at the final time against the manufactured solution, in `L²`.
pub fn manufactured_error(mesh: Arc<Mesh>, times: Vec<f64>) -> Result<f64> {
    let problem = HeatProblem::manufactured(mesh.clone(), times)?;
    let sol = solve_truncated(&problem, None)?;
    let t = *sol.times.last().unwrap();
    let qp = mesh.quad_points(&TriangleRule::of_degree(4)?);
    let approx = mesh.at_quad(&qp, sol.last());
    let err: f64 = (0..qp.len())
        .map(|q| qp.weights[q] * (approx[q] - manufactured_exact(mesh.lx, mesh.ly, qp.points[q], t)).powi(2))
        .sum();
    Ok(err.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution;

    fn time_grid(dt: f64, t: f64) -> Vec<f64> {
        evolution::time_grid(dt, t).unwrap()
    }
    use proptest::prelude::*;

    fn mesh(n: usize) -> Arc<Mesh> {
        Arc::new(Mesh::build(1.0, 1.0, n, n).unwrap())
    }

    #[test]
    fn tilde_t_examples() {
        assert_eq!(tilde_t(2.0, 2.0), 2.0);
        assert_eq!(tilde_t(0.0, 3.0), 0.0);
        assert_eq!(tilde_t(4.0, 2.0), 6.0);
        assert_eq!(truncate(&[6.0, -1.0], 3.0), vec![3.0, -1.0]);
    }

    proptest! {
        #[test]
        fn truncation_bounds(r in -1e3f64..1e3, k in 1e-3f64..1e2) {
            let t = truncate_scalar(r, k);
            prop_assert!(t.abs() <= k);
            prop_assert!(t * t <= 2.0 * tilde_t(r, k) * (1.0 + 1e-12));
            prop_assert!(tilde_t(r, k) <= k * r.abs() + 1e-12);
        }

        #[test]
        fn clamp_primitive_matches_derivative(r in -40.0f64..40.0, m in 1.0f64..20.0) {
            let s = SmoothClamp::new(m).unwrap();
            let h = 1e-4;
            let fd = (s.s(r + h) - s.s(r - h)) / (2.0 * h);
            prop_assert!((fd - s.ds(r)).abs() < 1e-6, "{} vs {}", fd, s.ds(r));
            let fd2 = (s.ds(r + h) - s.ds(r - h)) / (2.0 * h);
            prop_assert!((fd2 - s.d2s(r)).abs() < 1e-3 * (1.0 + s.d2s(r).abs()));
        }
    }

    #[test]
    fn clamp_support() {
        let s = SmoothClamp::new(4.0).unwrap();
        assert_eq!(s.ds(4.0), 0.0);
        assert_eq!(s.ds(-5.0), 0.0);
        assert_eq!(s.ds(1.9), 1.0);
        assert_eq!(s.s(1.5), 1.5);
        assert_eq!(s.s(10.0), s.s(4.0));
        assert_eq!(s.s(-10.0), -s.s(10.0));
    }

    #[test]
    fn constant_state_persists_and_mass_balances() {
        let m = mesh(6);
        let times = time_grid(0.05, 0.5);
        let p = HeatProblem::new(m.clone(), Arc::new(|_, _| 0.0), Arc::new(|_| 2.5), times.clone()).unwrap();
        let s = solve_truncated(&p, None).unwrap();
        assert!(s.last().iter().all(|v| (v - 2.5).abs() < 1e-12));

        let p = HeatProblem::new(m.clone(), Arc::new(|x: Point2, t| x[0] * (1.0 + t)), Arc::new(|x: Point2| x[1]), times).unwrap();
        let s = solve_truncated(&p, None).unwrap();
        let lumped = m.lumped_mass();
        for n in 1..s.times.len() {
            let dm = m.integrate_nodal(&s.values[n]) - m.integrate_nodal(&s.values[n - 1]);
            let src: f64 = (s.times[n] - s.times[n - 1]) * lumped.iter().zip(&s.source[n]).map(|(a, b)| a * b).sum::<f64>();
            assert!((dm - src).abs() <= 1e-8 * src.abs().max(1e-12), "{dm} {src}");
        }
    }

    #[test]
    fn manufactured_rate() {
        let e1 = manufactured_error(mesh(8), time_grid(0.1 / 4.0, 0.5)).unwrap();
        let e2 = manufactured_error(mesh(16), time_grid(0.1 / 16.0, 0.5)).unwrap();
        let rate = (e1 / e2).log2();
        assert!((rate - 2.0).abs() < 0.3, "rate {rate}");
    }

    #[test]
    fn bounded_solution_has_no_tail() {
        let m = mesh(4);
        let p = HeatProblem::new(m.clone(), Arc::new(|_, _| 0.0), Arc::new(|x: Point2| x[0]), time_grid(0.1, 0.3)).unwrap();
        let s = solve_truncated(&p, None).unwrap();
        assert_eq!(truncation_tail(&m, &s, 1.5, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn comparison_examples() {
        let m = mesh(6);
        let times = time_grid(0.02, 0.2);
        let base = HeatProblem::new(m.clone(), Arc::new(|x: Point2, _| x[0] - 0.3), Arc::new(|x: Point2| x[1]), times.clone()).unwrap();
        assert_eq!(comparison(&base, &base, None).unwrap(), 0.0);
        let shifted = HeatProblem::new(m.clone(), Arc::new(|x: Point2, _| x[0] + 0.7), Arc::new(|x: Point2| x[1]), times.clone()).unwrap();
        let gap = comparison(&base, &shifted, None).unwrap();
        assert!(gap >= 0.0);
        assert!(comparison(&shifted, &base, None).is_err());
        let bumped = HeatProblem::new(m, Arc::new(|x: Point2, _| x[0] - 0.3), Arc::new(|x: Point2| x[1] + (x[0] * 9.0).sin().abs()), times).unwrap();
        assert!(comparison(&base, &bumped, None).unwrap() >= -1e-12);
    }

    #[test]
    fn constant_clamp_residual_telescopes() {
        // Once θ exceeds the clamp everywhere S(θ) is constant in time and
        // every term vanishes.
        let m = mesh(4);
        let p = HeatProblem::new(m.clone(), Arc::new(|_, _| 1.0), Arc::new(|_| 50.0), time_grid(0.1, 1.0)).unwrap();
        let s = solve_truncated(&p, None).unwrap();
        let clamp = SmoothClamp::new(8.0).unwrap();
        let phi = TestFunction::new(0, 0, &m, 1.0);
        assert!(renorm_residual(&p, &s, &clamp, &phi).unwrap().abs() < 1e-12);
    }

    #[test]
    fn smooth_residual_is_discretization_sized() {
        let m = mesh(16);
        let p = HeatProblem::manufactured(m.clone(), time_grid(1.0 / 128.0, 1.0)).unwrap();
        let s = solve_truncated(&p, None).unwrap();
        let clamp = SmoothClamp::new(4.0).unwrap();
        for phi in TestFunction::family(&m, 1.0) {
            let r = renorm_residual(&p, &s, &clamp, &phi).unwrap();
            assert!(r.abs() < 2e-2, "{phi:?}: {r}");
        }
        let late = TestFunction::new(0, 0, &m, 2.0);
        assert!(renorm_residual(&p, &s, &clamp, &late).is_err());
    }

    #[test]
    fn singular_study_properties() {
        let m = mesh(16);
        let p = HeatProblem::singular(m, [0.5, 0.5], 1.5, time_grid(1.0 / 32.0, 1.0)).unwrap();
        let study = renorm_study(&p, &StudyOptions::default()).unwrap();
        assert!(study.cauchy_holds(), "{:?}", study.cauchy);
        assert!(study.energy.iter().all(|e| e.passed()), "{:?}", study.energy);
        assert!(study.tail_monotone(), "{:?}", study.tails);
        assert!(study.tail_decay() <= 0.1, "{:?}", study.tails);
        assert!(study.residual_monotone(), "{:?}", study.residuals);
    }
}
