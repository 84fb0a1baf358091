//! Galerkin bases on the background P1 discretization.
//!
//! The rectangle carries P1 elements for displacement and temperature.
//! Strains of P1 displacements are element-wise constant, so the discrete
//! strain space is the space of element-wise constant plane tensors with
//! components `(11, 22, 33, 12)`, stored as [`Vector4`] in the plane Mandel
//! form of [`SymTensor3::to_plane`]. Three bases live on top of it:
//!
//! * Neumann Laplacian modes `v_m` (temperature),
//! * Dirichlet elasto-static modes `w_n` with their strains `ε(w_n)`,
//! * a `D`-orthonormal basis `ζ_m` of the `D`-orthogonal complement of
//!   `span{ε(w_n)}` inside the discrete strain space.

use std::sync::Arc;

use nalgebra::{DMatrix, Matrix4, Matrix6, SymmetricEigen, Vector4};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{smallest_eigenpairs, BandMatrix, EigenOptions};
use crate::mesh::{Mesh, Point2, QuadPoints};
use crate::tensor::SymTensor3;

/// Element-wise constant plane tensor field.
pub type StrainField = Vec<Vector4<f64>>;

const PLANE: [usize; 4] = [0, 1, 2, 5];
const OUT_OF_PLANE: [usize; 2] = [3, 4];
const PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];

/// Elasticity tensor `D`, constant on each element (nodal input is averaged,
/// which is the centroid value of its P1 interpolant).
#[derive(Debug, Clone)]
pub struct ElasticityTensor {
    full: Vec<Matrix6<f64>>,
    plane: Vec<Matrix4<f64>>,
    d0: f64,
    dmax: f64,
}

/// Full fourth-order components `d_ijkl` at one node.
pub type Components = [[[[f64; 3]; 3]; 3]; 3];

fn isotropic_mandel(lambda: f64, mu: f64) -> Matrix6<f64> {
    let mut m = Matrix6::identity() * (2.0 * mu);
    for i in 0..3 {
        for j in 0..3 {
            m[(i, j)] += lambda;
        }
    }
    m
}

fn mandel_weight(i: usize) -> f64 {
    if i < 3 {
        1.0
    } else {
        std::f64::consts::SQRT_2
    }
}

/// Isotropic components `λ δ_ij δ_kl + μ (δ_ik δ_jl + δ_il δ_jk)`.
pub fn isotropic_components(lambda: f64, mu: f64) -> Components {
    let d = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
    let mut c = [[[[0.0; 3]; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    c[i][j][k][l] = lambda * d(i, j) * d(k, l) + mu * (d(i, k) * d(j, l) + d(i, l) * d(j, k));
                }
            }
        }
    }
    c
}

impl ElasticityTensor {
    /// Isotropic tensor from nodal Lamé fields.
    pub fn isotropic(mesh: &Mesh, lambda: &[f64], mu: &[f64]) -> Result<Self> {
        let mut problems = vec![];
        for (n, (l, m)) in lambda.iter().zip(mu).enumerate() {
            if !(*m > 0.0 && 3.0 * l + 2.0 * m > 0.0) {
                problems.push(format!(
                    "material: Lamé parameters (λ={l}, μ={m}) at node {n} are not positive definite (need μ > 0, 3λ + 2μ > 0)"
                ));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        let full = mesh
            .elements
            .iter()
            .map(|el| {
                let avg = |f: &[f64]| el.nodes.iter().map(|&n| f[n]).sum::<f64>() / 3.0;
                isotropic_mandel(avg(lambda), avg(mu))
            })
            .collect();
        Self::from_elements(full)
    }

    pub fn uniform(mesh: &Mesh, lambda: f64, mu: f64) -> Result<Self> {
        let n = mesh.node_count();
        Self::isotropic(mesh, &vec![lambda; n], &vec![mu; n])
    }

    /// General tensor from nodal components; checks the minor and major
    /// symmetries at every node.
    pub fn from_components(mesh: &Mesh, nodal: &[Components]) -> Result<Self> {
        let mut problems = vec![];
        if nodal.len() != mesh.node_count() {
            return Err(Error::Config(format!(
                "elasticity tensor given at {} nodes, mesh has {}",
                nodal.len(),
                mesh.node_count()
            )));
        }
        let mut mandel = Vec::with_capacity(nodal.len());
        for (n, c) in nodal.iter().enumerate() {
            let scale = c.iter().flatten().flatten().flatten().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
            let tol = 1e-12 * scale;
            'sym: for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        for l in 0..3 {
                            let v = c[i][j][k][l];
                            if (v - c[j][i][k][l]).abs() > tol || (v - c[i][j][l][k]).abs() > tol || (v - c[k][l][i][j]).abs() > tol {
                                problems.push(format!(
                                    "material: d_{}{}{}{} at node {n} violates d_ijkl = d_jikl = d_ijlk = d_klij",
                                    i + 1,
                                    j + 1,
                                    k + 1,
                                    l + 1
                                ));
                                break 'sym;
                            }
                        }
                    }
                }
            }
            let m = Matrix6::from_fn(|a, b| {
                let (i, j) = PAIRS[a];
                let (k, l) = PAIRS[b];
                mandel_weight(a) * mandel_weight(b) * c[i][j][k][l]
            });
            mandel.push(m);
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        let full = mesh
            .elements
            .iter()
            .map(|el| (mandel[el.nodes[0]] + mandel[el.nodes[1]] + mandel[el.nodes[2]]) / 3.0)
            .collect();
        Self::from_elements(full)
    }

    fn from_elements(full: Vec<Matrix6<f64>>) -> Result<Self> {
        let mut problems = vec![];
        let mut plane = Vec::with_capacity(full.len());
        let (mut d0, mut dmax) = (f64::INFINITY, 0.0f64);
        for (e, m) in full.iter().enumerate() {
            let scale = m.abs().max().max(1e-300);
            if PLANE.iter().any(|&a| OUT_OF_PLANE.iter().any(|&b| m[(a, b)].abs() > 1e-12 * scale)) {
                problems.push(format!(
                    "material: element {e} couples in-plane strains to out-of-plane shear, which the plane-strain reduction cannot represent"
                ));
            }
            let p = Matrix4::from_fn(|a, b| m[(PLANE[a], PLANE[b])]);
            let eig = SymmetricEigen::new(*m).eigenvalues;
            let (lo, hi) = (eig.min(), eig.max());
            if lo <= 0.0 {
                problems.push(format!("material: D is not positive definite on element {e} (smallest eigenvalue {lo})"));
            }
            d0 = d0.min(lo);
            dmax = dmax.max(hi);
            plane.push(p);
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Ok(ElasticityTensor { full, plane, d0, dmax })
    }

    pub fn element_count(&self) -> usize {
        self.full.len()
    }

    /// Mandel 6×6 matrix on element `e`.
    pub fn full(&self, e: usize) -> &Matrix6<f64> {
        &self.full[e]
    }

    /// Plane block acting on `[11, 22, 33, √2·12]`.
    pub fn plane(&self, e: usize) -> &Matrix4<f64> {
        &self.plane[e]
    }

    /// Coercivity constant `d₀` with `ξ:Dξ ≥ d₀|ξ|²`.
    pub fn d0(&self) -> f64 {
        self.d0
    }

    pub fn dmax(&self) -> f64 {
        self.dmax
    }

    pub fn apply(&self, e: usize, t: &SymTensor3) -> SymTensor3 {
        SymTensor3::from_mandel(&(self.full[e] * t.to_mandel()))
    }

    pub fn apply_field(&self, f: &StrainField) -> StrainField {
        f.iter().enumerate().map(|(e, v)| self.plane[e] * v).collect()
    }
}

/// `∫ a : b` for element-wise constant fields.
pub fn l2_inner(mesh: &Mesh, a: &StrainField, b: &StrainField) -> f64 {
    mesh.elements.iter().zip(a.iter().zip(b)).map(|(el, (x, y))| el.area * x.dot(y)).sum()
}

/// `∫ a : D b`.
pub fn d_inner(mesh: &Mesh, d: &ElasticityTensor, a: &StrainField, b: &StrainField) -> f64 {
    mesh.elements
        .iter()
        .enumerate()
        .zip(a.iter().zip(b))
        .map(|((e, el), (x, y))| el.area * x.dot(&(d.plane(e) * y)))
        .sum()
}

fn strain_matrix(grads: &[[f64; 2]; 3]) -> nalgebra::SMatrix<f64, 4, 6> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut b = nalgebra::SMatrix::<f64, 4, 6>::zeros();
    for a in 0..3 {
        let [gx, gy] = grads[a];
        b[(0, 2 * a)] = gx;
        b[(1, 2 * a + 1)] = gy;
        b[(3, 2 * a)] = h * gy;
        b[(3, 2 * a + 1)] = h * gx;
    }
    b
}

fn vector_bandwidth(mesh: &Mesh) -> usize {
    2 * mesh.scalar_bandwidth() + 1
}

/// Stiffness `∫ D ε(u) : ε(v)` on interleaved displacement dofs `2·node + c`.
pub fn elastic_stiffness(mesh: &Mesh, d: &ElasticityTensor) -> BandMatrix {
    let local: Vec<_> = mesh
        .elements
        .par_iter()
        .enumerate()
        .map(|(e, el)| {
            let b = strain_matrix(&el.grads);
            b.transpose() * d.plane(e) * b * el.area
        })
        .collect();
    let mut k = BandMatrix::zeros(2 * mesh.node_count(), vector_bandwidth(mesh));
    for (el, ke) in mesh.elements.iter().zip(&local) {
        for a in 0..6 {
            let ia = 2 * el.nodes[a / 2] + a % 2;
            for b in 0..=a {
                let ib = 2 * el.nodes[b / 2] + b % 2;
                k.add(ia, ib, ke[(a, b)]);
            }
        }
    }
    k
}

/// Consistent mass for vector fields.
pub fn vector_mass(mesh: &Mesh) -> BandMatrix {
    let mut m = BandMatrix::zeros(2 * mesh.node_count(), vector_bandwidth(mesh));
    for el in &mesh.elements {
        for a in 0..3 {
            for b in 0..=a {
                let v = el.area * if a == b { 1.0 / 6.0 } else { 1.0 / 12.0 };
                for c in 0..2 {
                    m.add(2 * el.nodes[a] + c, 2 * el.nodes[b] + c, v);
                }
            }
        }
    }
    m
}

/// Element strains of an interleaved P1 displacement.
pub fn strain(mesh: &Mesh, u: &[f64]) -> StrainField {
    mesh.elements
        .iter()
        .map(|el| {
            let b = strain_matrix(&el.grads);
            let ue = nalgebra::SVector::<f64, 6>::from_fn(|a, _| u[2 * el.nodes[a / 2] + a % 2]);
            b * ue
        })
        .collect()
}

/// Interleaved dofs of interior nodes.
pub fn interior_dofs(mesh: &Mesh) -> Vec<usize> {
    mesh.interior_nodes().iter().flat_map(|&n| [2 * n, 2 * n + 1]).collect()
}

/// Element averages of a tensor-valued function (L² projection onto the
/// element-wise constants).
pub fn element_average(mesh: &Mesh, qp: &QuadPoints, f: impl Fn(Point2) -> SymTensor3) -> StrainField {
    let mut out = vec![Vector4::zeros(); mesh.element_count()];
    for q in 0..qp.len() {
        let e = qp.element_of(q);
        out[e] += f(qp.points[q]).to_plane() * (qp.weights[q] / mesh.elements[e].area);
    }
    out
}

#[derive(Debug, Clone)]
pub struct ScalarBasis {
    pub values: Vec<f64>,
    /// Nodal modes as columns.
    pub modes: DMatrix<f64>,
    pub residuals: Vec<f64>,
}

/// `l` smallest Neumann Laplacian eigenpairs `K v = μ M v`, `L²`-orthonormal.
pub fn neumann_eigenbasis(mesh: &Mesh, l: usize, opts: EigenOptions) -> Result<ScalarBasis> {
    if l + 1 > mesh.node_count() {
        return Err(Error::Config(format!(
            "temperature basis size l={l} exceeds node count − 1 = {}",
            mesh.node_count() - 1
        )));
    }
    let pairs = smallest_eigenpairs(&mesh.stiffness(), &mesh.mass(), l, -1.0, opts)?;
    let mut values = pairs.values;
    // The kernel is the constants; snap round-off so the first mode is exact.
    if let Some(v0) = values.first_mut() {
        if v0.abs() < 1e-9 {
            *v0 = 0.0;
        }
    }
    Ok(ScalarBasis { values, modes: pairs.vectors, residuals: pairs.residuals })
}

#[derive(Debug, Clone)]
pub struct DisplacementBasis {
    pub values: Vec<f64>,
    /// Interleaved nodal displacements as columns (zero on the boundary).
    pub modes: DMatrix<f64>,
    pub strains: Vec<StrainField>,
    /// `D ε(w_n)` per mode.
    pub stresses: Vec<StrainField>,
    pub residuals: Vec<f64>,
}

/// `k` smallest eigenpairs of `−div D ε(·)` with zero Dirichlet data.
pub fn elastostatic_eigenbasis(mesh: &Mesh, d: &ElasticityTensor, k: usize, opts: EigenOptions) -> Result<DisplacementBasis> {
    let dofs = interior_dofs(mesh);
    if k > dofs.len() {
        return Err(Error::Config(format!(
            "displacement basis size k={k} exceeds 2·(interior nodes) = {}",
            dofs.len()
        )));
    }
    let n = 2 * mesh.node_count();
    if k == 0 {
        return Ok(DisplacementBasis {
            values: vec![],
            modes: DMatrix::zeros(n, 0),
            strains: vec![],
            stresses: vec![],
            residuals: vec![],
        });
    }
    let kk = elastic_stiffness(mesh, d).restrict(&dofs);
    let mm = vector_mass(mesh).restrict(&dofs);
    let pairs = smallest_eigenpairs(&kk, &mm, k, 0.0, opts)?;
    let mut modes = DMatrix::zeros(n, k);
    for (r, &dof) in dofs.iter().enumerate() {
        for c in 0..k {
            modes[(dof, c)] = pairs.vectors[(r, c)];
        }
    }
    let strains: Vec<StrainField> = (0..k).map(|c| strain(mesh, modes.column(c).as_slice())).collect();
    let stresses = strains.iter().map(|s| d.apply_field(s)).collect();
    Ok(DisplacementBasis { values: pairs.values, modes, strains, stresses, residuals: pairs.residuals })
}

#[derive(Debug, Clone)]
pub struct ComplementBasis {
    pub modes: Vec<StrainField>,
    /// `D ζ_m` per mode.
    pub stresses: Vec<StrainField>,
}

fn plane_directions() -> [Vector4<f64>; 4] {
    let s2 = std::f64::consts::FRAC_1_SQRT_2;
    let s6 = 1.0 / 6f64.sqrt();
    let s3 = 1.0 / 3f64.sqrt();
    [
        Vector4::new(s2, -s2, 0.0, 0.0),
        Vector4::new(0.0, 0.0, 0.0, 1.0),
        Vector4::new(s6, s6, -2.0 * s6, 0.0),
        Vector4::new(s3, s3, s3, 0.0),
    ]
}

struct Orthonormalizer<'a> {
    mesh: &'a Mesh,
    d: &'a ElasticityTensor,
    basis: Vec<(StrainField, StrainField)>,
}

impl Orthonormalizer<'_> {
    fn weighted(&self, a: &StrainField, db: &StrainField) -> f64 {
        self.mesh.elements.iter().zip(a.iter().zip(db)).map(|(el, (x, y))| el.area * x.dot(y)).sum()
    }

    /// Removes the components along the current basis, twice.
    fn residual(&self, mut f: StrainField) -> (StrainField, StrainField) {
        for _ in 0..2 {
            for (b, db) in &self.basis {
                let c = self.weighted(&f, db);
                for (x, y) in f.iter_mut().zip(b) {
                    *x -= y * c;
                }
            }
        }
        let df = self.d.apply_field(&f);
        (f, df)
    }

    fn push_normalized(&mut self, f: StrainField, df: StrainField) -> bool {
        let norm = self.weighted(&f, &df).max(0.0).sqrt();
        if norm == 0.0 {
            return false;
        }
        let s = 1.0 / norm;
        self.basis.push((f.iter().map(|v| v * s).collect(), df.iter().map(|v| v * s).collect()));
        true
    }
}

/// `D`-orthonormal basis of the complement of `span{ε(w_n)}`, `l` modes.
///
/// Candidates are low-frequency cosine fields `cos(iπx/Lx) cos(jπy/Ly)`
/// times the plane directions (two deviatoric, one out-of-plane
/// deviatoric, volumetric), taken shell by shell in `i + j`; inside a shell
/// they are ordered by descending `D`-norm of their residual against the
/// basis built so far. Element indicators follow once the cosine shells are
/// exhausted, so every complement dimension is reachable.
pub fn complement_basis(mesh: &Mesh, d: &ElasticityTensor, strains: &[StrainField], l: usize) -> Result<ComplementBasis> {
    let dim = 4 * mesh.element_count();
    if l + strains.len() > dim {
        return Err(Error::Config(format!(
            "complement size l={l} exceeds the complement dimension {} (strain space {dim}, k={})",
            dim.saturating_sub(strains.len()),
            strains.len()
        )));
    }
    let mut orth = Orthonormalizer { mesh, d, basis: vec![] };
    for s in strains {
        let (f, df) = orth.residual(s.clone());
        orth.push_normalized(f, df);
    }
    let skip = orth.basis.len();
    let tol = 1e-6;
    let dirs = plane_directions();
    let accept = |orth: &mut Orthonormalizer, f: StrainField| -> bool {
        let raw = d_inner(mesh, d, &f, &f).sqrt();
        let (r, dr) = orth.residual(f);
        let norm = d_inner(mesh, d, &r, &r).sqrt();
        norm > tol * raw && orth.push_normalized(r, dr)
    };

    'shells: for shell in 0..=(mesh.nx + mesh.ny) {
        if orth.basis.len() - skip >= l {
            break;
        }
        let mut candidates = vec![];
        for i in 0..=shell.min(mesh.nx) {
            let j = shell - i;
            if j > mesh.ny {
                continue;
            }
            let profile: Vec<f64> = mesh
                .elements
                .iter()
                .map(|el| {
                    let [x, y] = el.centroid;
                    (i as f64 * std::f64::consts::PI * x / mesh.lx).cos() * (j as f64 * std::f64::consts::PI * y / mesh.ly).cos()
                })
                .collect();
            for dir in &dirs {
                candidates.push(profile.iter().map(|p| dir * *p).collect::<StrainField>());
            }
        }
        let mut scored: Vec<(f64, StrainField)> = candidates
            .into_iter()
            .map(|c| {
                let (r, _) = orth.residual(c.clone());
                (d_inner(mesh, d, &r, &r), c)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        for (_, c) in scored {
            if orth.basis.len() - skip >= l {
                break 'shells;
            }
            accept(&mut orth, c);
        }
    }
    'indicators: for e in 0..mesh.element_count() {
        for a in 0..4 {
            if orth.basis.len() - skip >= l {
                break 'indicators;
            }
            let mut f = vec![Vector4::zeros(); mesh.element_count()];
            f[e][a] = 1.0;
            accept(&mut orth, f);
        }
    }
    if orth.basis.len() - skip < l {
        return Err(Error::Numeric(format!(
            "complement construction produced {} of {l} modes",
            orth.basis.len() - skip
        )));
    }
    let (modes, stresses) = orth.basis.into_iter().skip(skip).unzip();
    Ok(ComplementBasis { modes, stresses })
}

/// Largest deviations of the basis Gram matrices from their targets.
#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct GramReport {
    /// `max |(v_i, v_j) − δ_ij|`.
    pub temperature: f64,
    /// `|μ_1|` and the spread of `v_1` around its mean.
    pub first_neumann_value: f64,
    pub first_mode_spread: f64,
    /// `max |(w_i, w_j) − δ_ij|`.
    pub displacement: f64,
    /// `max |(ε(w_i), ε(w_j))_D − λ_i δ_ij| / λ_i`.
    pub displacement_energy: f64,
    /// `max |(ζ_i, ζ_j)_D − δ_ij|`.
    pub complement: f64,
    /// `max |(ζ_m, ε(w_n))_D|`.
    pub cross: f64,
}

impl GramReport {
    pub fn max(&self) -> f64 {
        [
            self.temperature,
            self.first_neumann_value,
            self.first_mode_spread,
            self.displacement,
            self.displacement_energy,
            self.complement,
            self.cross,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// The three Galerkin bases on one mesh.
#[derive(Debug, Clone)]
pub struct GalerkinBases {
    pub mesh: Arc<Mesh>,
    pub elasticity: Arc<ElasticityTensor>,
    pub temperature: ScalarBasis,
    pub displacement: DisplacementBasis,
    pub complement: ComplementBasis,
    mass: BandMatrix,
}

impl GalerkinBases {
    pub fn build(mesh: Arc<Mesh>, d: Arc<ElasticityTensor>, k: usize, l: usize, opts: EigenOptions) -> Result<Self> {
        let temperature = neumann_eigenbasis(&mesh, l, opts)?;
        let displacement = elastostatic_eigenbasis(&mesh, &d, k, opts)?;
        let complement = complement_basis(&mesh, &d, &displacement.strains, l)?;
        let mass = mesh.mass();
        Ok(GalerkinBases { mesh, elasticity: d, temperature, displacement, complement, mass })
    }

    pub fn k(&self) -> usize {
        self.displacement.values.len()
    }

    pub fn l(&self) -> usize {
        self.complement.modes.len()
    }

    pub fn scalar_mass(&self) -> &BandMatrix {
        &self.mass
    }

    pub fn gram_report(&self) -> GramReport {
        let mesh = &self.mesh;
        let mut r = GramReport::default();
        let v = &self.temperature.modes;
        let mv: Vec<Vec<f64>> = (0..v.ncols()).map(|j| self.mass.mul_vec(v.column(j).as_slice())).collect();
        for i in 0..v.ncols() {
            for j in 0..v.ncols() {
                let g: f64 = v.column(i).iter().zip(&mv[j]).map(|(a, b)| a * b).sum();
                r.temperature = r.temperature.max((g - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
        if let Some(mu1) = self.temperature.values.first() {
            r.first_neumann_value = mu1.abs();
            let col = v.column(0);
            let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
            r.first_mode_spread = hi - lo;
        }
        let w = &self.displacement.modes;
        let vm = vector_mass(mesh);
        let mw: Vec<Vec<f64>> = (0..w.ncols()).map(|j| vm.mul_vec(w.column(j).as_slice())).collect();
        for i in 0..w.ncols() {
            for j in 0..w.ncols() {
                let delta = if i == j { 1.0 } else { 0.0 };
                let g: f64 = w.column(i).iter().zip(&mw[j]).map(|(a, b)| a * b).sum();
                r.displacement = r.displacement.max((g - delta).abs());
                let li = self.displacement.values[i];
                let e = l2_inner(mesh, &self.displacement.strains[i], &self.displacement.stresses[j]);
                r.displacement_energy = r.displacement_energy.max((e - li * delta).abs() / li);
            }
        }
        let z = &self.complement;
        for i in 0..z.modes.len() {
            for j in 0..z.modes.len() {
                let g = l2_inner(mesh, &z.modes[i], &z.stresses[j]);
                r.complement = r.complement.max((g - if i == j { 1.0 } else { 0.0 }).abs());
            }
            for s in &self.displacement.stresses {
                r.cross = r.cross.max(l2_inner(mesh, &z.modes[i], s).abs());
            }
        }
        r
    }

    /// `L²` projection of a nodal scalar onto the temperature modes.
    pub fn project_scalar(&self, nodal: &[f64]) -> Vec<f64> {
        let m = self.mass.mul_vec(nodal);
        let v = &self.temperature.modes;
        (0..v.ncols()).map(|j| v.column(j).iter().zip(&m).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn reconstruct_scalar(&self, beta: &[f64]) -> Vec<f64> {
        let v = &self.temperature.modes;
        let mut out = vec![0.0; v.nrows()];
        for (j, b) in beta.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(v.column(j).iter()) {
                *o += b * x;
            }
        }
        out
    }

    /// `D`-projection of a strain field: `γ_n = (f, ε(w_n))_D / λ_n`,
    /// `δ_m = (f, ζ_m)_D`.
    pub fn project_strain(&self, field: &StrainField) -> (Vec<f64>, Vec<f64>) {
        let mesh = &self.mesh;
        let gamma = self
            .displacement
            .stresses
            .iter()
            .zip(&self.displacement.values)
            .map(|(s, l)| l2_inner(mesh, field, s) / l)
            .collect();
        let delta = self.complement.stresses.iter().map(|s| l2_inner(mesh, field, s)).collect();
        (gamma, delta)
    }

    pub fn reconstruct_strain(&self, gamma: &[f64], delta: &[f64]) -> StrainField {
        let mut out = vec![Vector4::zeros(); self.mesh.element_count()];
        for (g, s) in gamma.iter().zip(&self.displacement.strains) {
            for (o, x) in out.iter_mut().zip(s) {
                *o += x * *g;
            }
        }
        out = add_modes(out, delta, &self.complement.modes);
        out
    }

    /// `Σ δ_m ζ_m`.
    pub fn complement_field(&self, delta: &[f64]) -> StrainField {
        add_modes(vec![Vector4::zeros(); self.mesh.element_count()], delta, &self.complement.modes)
    }

    /// `Σ δ_m D ζ_m`.
    pub fn complement_stress(&self, delta: &[f64]) -> StrainField {
        add_modes(vec![Vector4::zeros(); self.mesh.element_count()], delta, &self.complement.stresses)
    }

    pub fn reconstruct_displacement(&self, gamma: &[f64]) -> Vec<f64> {
        let w = &self.displacement.modes;
        let mut out = vec![0.0; w.nrows()];
        for (j, g) in gamma.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(w.column(j).iter()) {
                *o += g * x;
            }
        }
        out
    }
}

fn add_modes(mut out: StrainField, coeffs: &[f64], modes: &[StrainField]) -> StrainField {
    for (c, m) in coeffs.iter().zip(modes) {
        if *c != 0.0 {
            for (o, x) in out.iter_mut().zip(m) {
                *o += x * *c;
            }
        }
    }
    out
}
