//! Structured triangulation of a rectangle, triangle quadrature and P1
//! assembly kernels.

use crate::error::{Error, Result};
use crate::linalg::BandMatrix;

pub type Point2 = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub fn outward_normal(self) -> [f64; 2] {
        match self {
            Side::Bottom => [0.0, -1.0],
            Side::Right => [1.0, 0.0],
            Side::Top => [0.0, 1.0],
            Side::Left => [-1.0, 0.0],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Element {
    pub nodes: [usize; 3],
    pub area: f64,
    /// Constant gradients of the three P1 shape functions.
    pub grads: [[f64; 2]; 3],
    pub centroid: Point2,
}

#[derive(Debug, Clone)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub side: Side,
    pub length: f64,
}

/// Triangle quadrature rule in barycentric coordinates; weights sum to one.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Symmetric rule exact for polynomials of the given degree (1, 2 or 4).
    pub fn of_degree(degree: usize) -> Result<Self> {
        match degree {
            1 => Ok(TriangleRule {
                points: vec![[1.0 / 3.0; 3]],
                weights: vec![1.0],
            }),
            2 => {
                let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
                Ok(TriangleRule {
                    points: vec![[a, b, b], [b, a, b], [b, b, a]],
                    weights: vec![1.0 / 3.0; 3],
                })
            }
            4 => {
                let a = 0.445_948_490_915_965;
                let wa = 0.223_381_589_678_011;
                let b = 0.091_576_213_509_771;
                let wb = 0.109_951_743_655_322;
                let (ca, cb) = (1.0 - 2.0 * a, 1.0 - 2.0 * b);
                Ok(TriangleRule {
                    points: vec![[a, a, ca], [a, ca, a], [ca, a, a], [b, b, cb], [b, cb, b], [cb, b, b]],
                    weights: vec![wa, wa, wa, wb, wb, wb],
                })
            }
            _ => Err(Error::Config(format!(
                "no triangle rule of degree {degree} (supported: 1, 2, 4)"
            ))),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Global list of quadrature points over the whole mesh.
#[derive(Debug, Clone)]
pub struct QuadPoints {
    pub per_element: usize,
    pub points: Vec<Point2>,
    /// Physical weights (include the element area).
    pub weights: Vec<f64>,
    pub bary: Vec<[f64; 3]>,
}

impl QuadPoints {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn element_of(&self, q: usize) -> usize {
        q / self.per_element
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub nodes: Vec<Point2>,
    pub elements: Vec<Element>,
    pub boundary: Vec<BoundaryEdge>,
}

impl Mesh {
    /// Structured triangulation: each of the `nx × ny` cells is split along
    /// its lower-left to upper-right diagonal.
    pub fn build(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        let mut problems = vec![];
        if !(lx > 0.0 && lx.is_finite()) {
            problems.push(format!("Lx must be positive, got {lx}"));
        }
        if !(ly > 0.0 && ly.is_finite()) {
            problems.push(format!("Ly must be positive, got {ly}"));
        }
        if nx < 2 {
            problems.push(format!("nx must be at least 2, got {nx}"));
        }
        if ny < 2 {
            problems.push(format!("ny must be at least 2, got {ny}"));
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems.join("; ")));
        }
        let (hx, hy) = (lx / nx as f64, ly / ny as f64);
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push([i as f64 * hx, j as f64 * hy]);
            }
        }
        let mut elements = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (n00, n10, n01, n11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
                for tri in [[n00, n10, n11], [n00, n11, n01]] {
                    elements.push(make_element(&nodes, tri));
                }
            }
        }
        let mut boundary = vec![];
        for i in 0..nx {
            boundary.push(BoundaryEdge { nodes: [id(i, 0), id(i + 1, 0)], side: Side::Bottom, length: hx });
        }
        for j in 0..ny {
            boundary.push(BoundaryEdge { nodes: [id(nx, j), id(nx, j + 1)], side: Side::Right, length: hy });
        }
        for i in (0..nx).rev() {
            boundary.push(BoundaryEdge { nodes: [id(i + 1, ny), id(i, ny)], side: Side::Top, length: hx });
        }
        for j in (0..ny).rev() {
            boundary.push(BoundaryEdge { nodes: [id(0, j + 1), id(0, j)], side: Side::Left, length: hy });
        }
        Ok(Mesh { lx, ly, nx, ny, nodes, elements, boundary })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn h(&self) -> f64 {
        (self.lx / self.nx as f64).max(self.ly / self.ny as f64)
    }

    pub fn is_boundary_node(&self, n: usize) -> bool {
        let (i, j) = (n % (self.nx + 1), n / (self.nx + 1));
        i == 0 || j == 0 || i == self.nx || j == self.ny
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&n| !self.is_boundary_node(n)).collect()
    }

    /// Bandwidth of scalar P1 matrices in the natural node numbering.
    pub fn scalar_bandwidth(&self) -> usize {
        self.nx + 2
    }

    /// Element containing `p` and the barycentric coordinates of `p` in it.
    pub fn locate(&self, p: Point2) -> Result<(usize, [f64; 3])> {
        let tol = 1e-12 * (self.lx + self.ly);
        if !(p[0] >= -tol && p[0] <= self.lx + tol && p[1] >= -tol && p[1] <= self.ly + tol) {
            return Err(Error::Domain { x: p[0], y: p[1] });
        }
        let (hx, hy) = (self.lx / self.nx as f64, self.ly / self.ny as f64);
        let i = ((p[0] / hx).floor().max(0.0) as usize).min(self.nx - 1);
        let j = ((p[1] / hy).floor().max(0.0) as usize).min(self.ny - 1);
        let s = (p[0] - i as f64 * hx) / hx;
        let t = (p[1] - j as f64 * hy) / hy;
        let cell = 2 * (j * self.nx + i);
        if s >= t {
            // (n00, n10, n11)
            Ok((cell, [1.0 - s, s - t, t]))
        } else {
            // (n00, n11, n01)
            Ok((cell + 1, [1.0 - t, s, t - s]))
        }
    }

    /// Interpolates a nodal field at an arbitrary point.
    pub fn interpolate(&self, nodal: &[f64], p: Point2) -> Result<f64> {
        let (e, b) = self.locate(p)?;
        let n = self.elements[e].nodes;
        Ok(b[0] * nodal[n[0]] + b[1] * nodal[n[1]] + b[2] * nodal[n[2]])
    }

    pub fn quad_points(&self, rule: &TriangleRule) -> QuadPoints {
        let mut points = Vec::with_capacity(self.element_count() * rule.len());
        let mut weights = Vec::with_capacity(points.capacity());
        let mut bary = Vec::with_capacity(points.capacity());
        for el in &self.elements {
            let [a, b, c] = el.nodes.map(|n| self.nodes[n]);
            for (lam, w) in rule.points.iter().zip(&rule.weights) {
                points.push([
                    lam[0] * a[0] + lam[1] * b[0] + lam[2] * c[0],
                    lam[0] * a[1] + lam[1] * b[1] + lam[2] * c[1],
                ]);
                weights.push(w * el.area);
                bary.push(*lam);
            }
        }
        QuadPoints { per_element: rule.len(), points, weights, bary }
    }

    /// Values of a nodal field at every quadrature point.
    pub fn at_quad(&self, qp: &QuadPoints, nodal: &[f64]) -> Vec<f64> {
        (0..qp.len())
            .map(|q| {
                let n = self.elements[qp.element_of(q)].nodes;
                let b = qp.bary[q];
                b[0] * nodal[n[0]] + b[1] * nodal[n[1]] + b[2] * nodal[n[2]]
            })
            .collect()
    }

    /// Integral of a nodal field (exact for P1).
    pub fn integrate_nodal(&self, nodal: &[f64]) -> f64 {
        self.elements
            .iter()
            .map(|e| e.area * (nodal[e.nodes[0]] + nodal[e.nodes[1]] + nodal[e.nodes[2]]) / 3.0)
            .sum()
    }

    /// Scalar P1 stiffness matrix `∫ ∇φ_i · ∇φ_j`.
    pub fn stiffness(&self) -> BandMatrix {
        let mut k = BandMatrix::zeros(self.node_count(), self.scalar_bandwidth());
        for el in &self.elements {
            for a in 0..3 {
                for b in 0..=a {
                    let g = &el.grads;
                    let v = el.area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                    if a == b {
                        k.add(el.nodes[a], el.nodes[a], v);
                    } else {
                        k.add(el.nodes[a], el.nodes[b], v);
                    }
                }
            }
        }
        k
    }

    /// Consistent P1 mass matrix `∫ φ_i φ_j`.
    pub fn mass(&self) -> BandMatrix {
        let mut m = BandMatrix::zeros(self.node_count(), self.scalar_bandwidth());
        for el in &self.elements {
            for a in 0..3 {
                m.add(el.nodes[a], el.nodes[a], el.area / 6.0);
                for b in 0..a {
                    m.add(el.nodes[a], el.nodes[b], el.area / 12.0);
                }
            }
        }
        m
    }

    /// Row-sum lumped mass (diagonal).
    pub fn lumped_mass(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.node_count()];
        for el in &self.elements {
            for n in el.nodes {
                m[n] += el.area / 3.0;
            }
        }
        m
    }

    /// Load vector `∫ f φ_i` with `f` sampled at quadrature points.
    pub fn load_vector(&self, qp: &QuadPoints, f_at_q: &[f64]) -> Vec<f64> {
        let mut b = vec![0.0; self.node_count()];
        for q in 0..qp.len() {
            let n = self.elements[qp.element_of(q)].nodes;
            let w = qp.weights[q] * f_at_q[q];
            for a in 0..3 {
                b[n[a]] += w * qp.bary[q][a];
            }
        }
        b
    }

    /// Boundary load `∫_∂Ω g φ_i` with three-point Gauss rule per edge;
    /// `g` receives the point and the outward normal.
    pub fn boundary_load(&self, g: impl Fn(Point2, [f64; 2]) -> f64) -> Vec<f64> {
        let gl = [(0.5 - 0.5 * (0.6f64).sqrt(), 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + 0.5 * (0.6f64).sqrt(), 5.0 / 18.0)];
        let mut b = vec![0.0; self.node_count()];
        for edge in &self.boundary {
            let (p0, p1) = (self.nodes[edge.nodes[0]], self.nodes[edge.nodes[1]]);
            let normal = edge.side.outward_normal();
            for (s, w) in gl {
                let p = [p0[0] + s * (p1[0] - p0[0]), p0[1] + s * (p1[1] - p0[1])];
                let v = w * edge.length * g(p, normal);
                b[edge.nodes[0]] += v * (1.0 - s);
                b[edge.nodes[1]] += v * s;
            }
        }
        b
    }

    /// Element-wise constant gradient of a nodal field.
    pub fn gradient(&self, e: usize, nodal: &[f64]) -> [f64; 2] {
        let el = &self.elements[e];
        let mut g = [0.0; 2];
        for a in 0..3 {
            g[0] += el.grads[a][0] * nodal[el.nodes[a]];
            g[1] += el.grads[a][1] * nodal[el.nodes[a]];
        }
        g
    }
}

fn make_element(nodes: &[Point2], tri: [usize; 3]) -> Element {
    let [a, b, c] = tri.map(|n| nodes[n]);
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let area = 0.5 * det;
    // ∇λ_i = perp(opposite edge) / (2 area)
    let grads = [
        [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
        [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
        [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
    ];
    let centroid = [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0];
    Element { nodes: tri, area, grads, centroid }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_for_two_by_two() {
        let m = Mesh::build(1.0, 1.0, 2, 2).unwrap();
        assert_eq!(m.node_count(), 9);
        assert_eq!(m.element_count(), 8);
        assert_eq!(m.boundary.len(), 8);
    }

    #[test]
    fn node_count_formula_and_total_area() {
        for (nx, ny) in [(3, 5), (7, 2), (16, 16)] {
            let m = Mesh::build(2.0, 0.5, nx, ny).unwrap();
            assert_eq!(m.node_count(), (nx + 1) * (ny + 1));
            assert_eq!(m.element_count(), 2 * nx * ny);
            let area: f64 = m.elements.iter().map(|e| e.area).sum();
            assert!((area - 1.0).abs() < 1e-12);
            assert!(m.elements.iter().all(|e| e.area > 0.0));
        }
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(Mesh::build(0.0, 1.0, 2, 2).is_err());
        assert!(Mesh::build(1.0, -1.0, 2, 2).is_err());
        assert!(Mesh::build(1.0, 1.0, 1, 2).is_err());
    }

    #[test]
    fn boundary_edges_cover_perimeter_once_per_side() {
        let m = Mesh::build(2.0, 1.0, 4, 3).unwrap();
        let per = |s: Side| m.boundary.iter().filter(|e| e.side == s).map(|e| e.length).sum::<f64>();
        assert!((per(Side::Bottom) - 2.0).abs() < 1e-14);
        assert!((per(Side::Top) - 2.0).abs() < 1e-14);
        assert!((per(Side::Left) - 1.0).abs() < 1e-14);
        assert!((per(Side::Right) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn quadrature_integrates_quartic_exactly() {
        let m = Mesh::build(1.0, 1.0, 3, 3).unwrap();
        let qp = m.quad_points(&TriangleRule::of_degree(4).unwrap());
        let v: f64 = qp.points.iter().zip(&qp.weights).map(|(p, w)| w * p[0].powi(4) * p[1].powi(0)).sum();
        assert!((v - 0.2).abs() < 1e-13);
        let v: f64 = qp.points.iter().zip(&qp.weights).map(|(p, w)| w * p[0].powi(2) * p[1].powi(2)).sum();
        assert!((v - 1.0 / 9.0).abs() < 1e-13);
    }

    #[test]
    fn locate_reproduces_linear_fields() {
        let m = Mesh::build(1.5, 1.0, 5, 4).unwrap();
        let nodal: Vec<f64> = m.nodes.iter().map(|p| 2.0 * p[0] - 3.0 * p[1] + 1.0).collect();
        for p in [[0.0, 0.0], [1.5, 1.0], [0.37, 0.81], [1.2, 0.05]] {
            let v = m.interpolate(&nodal, p).unwrap();
            assert!((v - (2.0 * p[0] - 3.0 * p[1] + 1.0)).abs() < 1e-12);
        }
        assert!(matches!(m.locate([2.0, 0.5]), Err(Error::Domain { .. })));
    }

    #[test]
    fn stiffness_rows_sum_to_zero_and_mass_to_area() {
        let m = Mesh::build(1.0, 2.0, 4, 4).unwrap();
        let k = m.stiffness();
        assert!(k.row_sums().iter().all(|s| s.abs() < 1e-12));
        let total: f64 = m.mass().row_sums().iter().sum();
        assert!((total - 2.0).abs() < 1e-12);
        let lumped: f64 = m.lumped_mass().iter().sum();
        assert!((lumped - 2.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_load_of_unit_flux_is_perimeter() {
        let m = Mesh::build(1.0, 1.0, 4, 4).unwrap();
        let b = m.boundary_load(|_, _| 1.0);
        assert!((b.iter().sum::<f64>() - 4.0).abs() < 1e-13);
        let b = m.boundary_load(|_, n| n[0]);
        assert!(b.iter().sum::<f64>().abs() < 1e-13);
    }
}
