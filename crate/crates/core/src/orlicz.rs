//! Generalized Orlicz kernel.
//!
//! An N-function `M(x, ξ)` is stored through its radial profile
//! `m(x, r)` with `r = |ξ|`. Two families exist: the variable-exponent
//! power `|ξ|^{p(x)}/p(x)`, whose conjugate is known in closed form, and
//! user-supplied radial profiles, whose conjugate is tabulated by a
//! one-dimensional Legendre transform on a logarithmic grid.
//!
//! Everything here works on [`SampledField`]s: tensor values attached to
//! quadrature points with physical weights, so modulars and norms are
//! plain weighted sums.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::expr::{Env, Expr, Var};
use crate::mesh::{Mesh, Point2, QuadPoints};
use crate::tensor::SymTensor3;

/// Spatially varying growth exponent `p(x)`.
#[derive(Debug, Clone)]
pub enum ExponentField {
    Constant(f64),
    /// Values at mesh nodes, interpolated linearly inside elements.
    Nodal { mesh: Arc<Mesh>, values: Vec<f64> },
}

impl ExponentField {
    pub fn at(&self, x: Point2) -> Result<f64> {
        match self {
            ExponentField::Constant(p) => Ok(*p),
            ExponentField::Nodal { mesh, values } => mesh.interpolate(values, x),
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match self {
            ExponentField::Constant(p) => (*p, *p),
            ExponentField::Nodal { values, .. } => values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v))),
        }
    }

    /// Nodal values on `mesh` (constants are broadcast).
    pub fn nodal_values(&self, mesh: &Mesh) -> Vec<f64> {
        match self {
            ExponentField::Constant(p) => vec![*p; mesh.node_count()],
            ExponentField::Nodal { values, .. } => values.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bounds();
        if !(lo > 1.0 && hi.is_finite()) {
            return Err(Error::Config(format!(
                "growth exponent must lie in (1, ∞), got range [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

/// Something that can be integrated as a modular: a radial integrand in the
/// tensor argument with optional spatial dependence.
pub trait Integrand: Send + Sync {
    /// Value at `x` for a tensor of norm `r ≥ 0`.
    fn radial(&self, x: Point2, r: f64) -> Result<f64>;

    fn eval(&self, x: Point2, xi: &SymTensor3) -> Result<f64> {
        self.radial(x, xi.norm())
    }
}

#[derive(Debug, Clone)]
enum NKind {
    Power(ExponentField),
    Radial(Expr),
}

#[derive(Debug, Clone)]
pub struct NFunction {
    kind: NKind,
    domain: Option<Arc<Mesh>>,
}

/// `|r|^p / p`.
#[inline]
pub fn power_profile(p: f64, r: f64) -> f64 {
    r.abs().powf(p) / p
}

/// Conjugate exponent `p/(p-1)`.
#[inline]
pub fn conjugate_exponent(p: f64) -> f64 {
    p / (p - 1.0)
}

impl NFunction {
    pub fn power(exponent: ExponentField) -> Result<Self> {
        exponent.validate()?;
        let domain = match &exponent {
            ExponentField::Nodal { mesh, .. } => Some(mesh.clone()),
            ExponentField::Constant(_) => None,
        };
        Ok(NFunction { kind: NKind::Power(exponent), domain })
    }

    pub fn power_constant(p: f64) -> Result<Self> {
        Self::power(ExponentField::Constant(p))
    }

    /// User radial profile `m(x, y, r)`; must be an N-function in `r`.
    pub fn radial(profile: Expr) -> Self {
        NFunction { kind: NKind::Radial(profile), domain: None }
    }

    /// Restricts evaluation to the rectangle covered by `mesh`.
    pub fn on_domain(mut self, mesh: Arc<Mesh>) -> Self {
        self.domain = Some(mesh);
        self
    }

    pub fn domain(&self) -> Option<&Arc<Mesh>> {
        self.domain.as_ref()
    }

    pub fn exponent(&self) -> Option<&ExponentField> {
        match &self.kind {
            NKind::Power(e) => Some(e),
            NKind::Radial(_) => None,
        }
    }

    pub fn profile(&self) -> Option<&Expr> {
        match &self.kind {
            NKind::Radial(e) => Some(e),
            NKind::Power(_) => None,
        }
    }

    fn check_domain(&self, x: Point2) -> Result<()> {
        if let Some(mesh) = &self.domain {
            mesh.locate(x)?;
        }
        Ok(())
    }
}

impl Integrand for NFunction {
    fn radial(&self, x: Point2, r: f64) -> Result<f64> {
        self.check_domain(x)?;
        match &self.kind {
            NKind::Power(e) => Ok(power_profile(e.at(x)?, r)),
            NKind::Radial(expr) => Ok(expr.eval(&Env { x: x[0], y: x[1], r: r.abs(), ..Default::default() })),
        }
    }
}

/// `M(x, ξ)`; fails outside the domain.
pub fn eval_m(m: &NFunction, x: Point2, xi: &SymTensor3) -> Result<f64> {
    m.eval(x, xi)
}

/// Logarithmically spaced radial grid.
#[derive(Debug, Clone)]
pub struct RadialGrid {
    pub points: Vec<f64>,
}

impl RadialGrid {
    pub fn logarithmic(min: f64, max: f64, n: usize) -> Result<Self> {
        if !(min > 0.0 && max > min && n >= 2) {
            return Err(Error::Config(format!(
                "radial grid needs 0 < min < max and at least two points (got {min}, {max}, {n})"
            )));
        }
        let (lmin, lmax) = (min.ln(), max.ln());
        let points = (0..n)
            .map(|i| (lmin + (lmax - lmin) * i as f64 / (n - 1) as f64).exp())
            .collect();
        Ok(RadialGrid { points })
    }
}

impl Default for RadialGrid {
    fn default() -> Self {
        RadialGrid::logarithmic(1e-8, 1e8, 2048).expect("static grid")
    }
}

/// Radial function tabulated on a logarithmic grid, interpolated linearly in
/// log-log coordinates (exact for pure powers).
#[derive(Debug, Clone)]
pub struct RadialTable {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl RadialTable {
    pub fn eval(&self, r: f64) -> f64 {
        let r = r.abs();
        if r == 0.0 {
            return 0.0;
        }
        let g = &self.grid;
        let n = g.len();
        let seg = if r <= g[0] {
            0
        } else if r >= g[n - 1] {
            n - 2
        } else {
            g.partition_point(|v| *v <= r).saturating_sub(1).min(n - 2)
        };
        let (r0, r1, v0, v1) = (g[seg], g[seg + 1], self.values[seg], self.values[seg + 1]);
        if v0 > 0.0 && v1 > 0.0 {
            let slope = (v1 / v0).ln() / (r1 / r0).ln();
            v0 * (r / r0).powf(slope)
        } else {
            v0 + (v1 - v0) * (r - r0) / (r1 - r0)
        }
    }
}

/// `sup_{s ≥ 0} (η s − m(s))` for convex `m`, located on `grid` and refined
/// by golden-section search. `hint` is the grid index to start the hill
/// climb from; the index of the grid maximizer is returned with the value.
pub fn legendre_sup(m: &dyn Fn(f64) -> f64, eta: f64, grid: &[f64], hint: usize) -> (f64, usize) {
    let eta = eta.abs();
    if eta == 0.0 {
        return (0.0, 0);
    }
    let obj = |s: f64| eta * s - m(s);
    let n = grid.len();
    let mut i = hint.min(n - 1);
    let mut best = obj(grid[i]);
    while i + 1 < n {
        let v = obj(grid[i + 1]);
        if v >= best {
            best = v;
            i += 1;
        } else {
            break;
        }
    }
    while i > 0 {
        let v = obj(grid[i - 1]);
        if v > best {
            best = v;
            i -= 1;
        } else {
            break;
        }
    }
    let (lo, hi) = if i == 0 {
        let mut cur = grid[0];
        let mut vcur = best;
        for _ in 0..4000 {
            let next = 0.5 * cur;
            let vn = obj(next);
            if vn >= vcur && next > 0.0 {
                cur = next;
                vcur = vn;
            } else {
                break;
            }
        }
        (0.5 * cur, if n > 1 { (2.0 * cur).min(grid[1]) } else { 2.0 * cur })
    } else if i == n - 1 {
        let mut cur = grid[n - 1];
        let mut vcur = best;
        for _ in 0..4000 {
            let next = 2.0 * cur;
            let vn = obj(next);
            if vn >= vcur && next.is_finite() {
                cur = next;
                vcur = vn;
            } else {
                break;
            }
        }
        ((0.5 * cur).max(grid[n - 2]), 2.0 * cur)
    } else {
        (grid[i - 1], grid[i + 1])
    };
    let refined = golden_max(&obj, lo, hi);
    (refined.max(best).max(0.0), i)
}

fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..500 {
        if (b - a) <= 1e-14 * c.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd)
}

/// Numeric Legendre transform of a radial profile on every grid point.
pub fn legendre_table(m: &dyn Fn(f64) -> f64, grid: &RadialGrid) -> RadialTable {
    let mut hint = 0;
    let values = grid
        .points
        .iter()
        .map(|&eta| {
            let (v, i) = legendre_sup(m, eta, &grid.points, hint);
            hint = i;
            v
        })
        .collect();
    RadialTable { grid: grid.points.clone(), values }
}

#[derive(Debug, Clone)]
enum ConjKind {
    Power(ExponentField),
    /// One table for an x-independent profile, or one per mesh node.
    Tabulated { tables: Vec<RadialTable>, mesh: Option<Arc<Mesh>> },
}

/// Complementary function `M*(x, η) = sup_ξ (ξ:η − M(x, ξ))`.
#[derive(Debug, Clone)]
pub struct ComplementaryNFunction {
    kind: ConjKind,
    domain: Option<Arc<Mesh>>,
}

impl ComplementaryNFunction {
    pub fn is_closed_form(&self) -> bool {
        matches!(self.kind, ConjKind::Power(_))
    }

    /// Radial table at a node, when tabulated.
    pub fn table(&self, node: usize) -> Option<&RadialTable> {
        match &self.kind {
            ConjKind::Tabulated { tables, .. } => tables.get(node).or(tables.first()),
            ConjKind::Power(_) => None,
        }
    }
}

impl Integrand for ComplementaryNFunction {
    fn radial(&self, x: Point2, r: f64) -> Result<f64> {
        if let Some(mesh) = &self.domain {
            mesh.locate(x)?;
        }
        match &self.kind {
            ConjKind::Power(e) => Ok(power_profile(conjugate_exponent(e.at(x)?), r)),
            ConjKind::Tabulated { tables, mesh } => match mesh {
                None => Ok(tables[0].eval(r)),
                Some(mesh) => {
                    let (e, b) = mesh.locate(x)?;
                    let n = mesh.elements[e].nodes;
                    Ok((0..3).map(|a| b[a] * tables[n[a]].eval(r)).sum())
                }
            },
        }
    }
}

/// Builds the complementary function. The power family uses the closed form
/// with exponent `p' = p/(p-1)`; user profiles are transformed numerically
/// on `grid`, once if the profile ignores `x, y` and otherwise per node of
/// the N-function's domain.
pub fn complementary(m: &NFunction, grid: &RadialGrid) -> Result<ComplementaryNFunction> {
    match &m.kind {
        NKind::Power(e) => Ok(ComplementaryNFunction { kind: ConjKind::Power(e.clone()), domain: m.domain.clone() }),
        NKind::Radial(expr) => {
            let spatial = expr.uses(Var::X) || expr.uses(Var::Y);
            for v in [Var::T, Var::Theta, Var::Nx, Var::Ny] {
                if expr.uses(v) {
                    return Err(Error::Unsupported(format!(
                        "N-function profile '{expr}' must depend on x, y and r only"
                    )));
                }
            }
            let table_at = |x: Point2| {
                let prof = |r: f64| expr.eval(&Env { x: x[0], y: x[1], r, ..Default::default() });
                legendre_table(&prof, grid)
            };
            if !spatial {
                return Ok(ComplementaryNFunction {
                    kind: ConjKind::Tabulated { tables: vec![table_at([0.0, 0.0])], mesh: None },
                    domain: m.domain.clone(),
                });
            }
            let mesh = m.domain.clone().ok_or_else(|| {
                Error::Config("x-dependent profile needs a mesh to tabulate its conjugate".into())
            })?;
            let tables = mesh.nodes.iter().map(|p| table_at(*p)).collect();
            Ok(ComplementaryNFunction {
                kind: ConjKind::Tabulated { tables, mesh: Some(mesh.clone()) },
                domain: Some(mesh),
            })
        }
    }
}

/// Rejects tensor-argument dependence that is not radial. The kernel only
/// represents radial N-functions, so any non-radial user integrand is an
/// unsupported input.
pub fn require_radial(m: &dyn Fn(Point2, &SymTensor3) -> f64, x: Point2, samples: &[SymTensor3]) -> Result<()> {
    for s in samples {
        let r = s.norm();
        let reference = m(x, &(SymTensor3::diag(1.0, 0.0, 0.0) * r));
        let v = m(x, s);
        if (v - reference).abs() > 1e-10 * (1.0 + reference.abs()) {
            return Err(Error::Unsupported(format!(
                "N-function is not radial: M(ξ) = {v} but M(|ξ| e) = {reference} for |ξ| = {r}"
            )));
        }
    }
    Ok(())
}

/// Largest relative biconjugation residual `|(M*)*(r) − M(r)| / (1 + M(r))`
/// over `grid`, at point `x`.
pub fn biconjugation_residual(
    m: &NFunction,
    mstar: &ComplementaryNFunction,
    x: Point2,
    grid: &RadialGrid,
) -> Result<f64> {
    let conj = |r: f64| mstar.radial(x, r).unwrap_or(f64::NAN);
    let back = legendre_table(&conj, grid);
    let mut worst: f64 = 0.0;
    for (r, v) in grid.points.iter().zip(&back.values) {
        let exact = m.radial(x, *r)?;
        worst = worst.max((v - exact).abs() / (1.0 + exact));
    }
    Ok(worst)
}

/// Tensor samples attached to weighted points of `Q` (space, or space-time
/// with the time step folded into the weights).
#[derive(Debug, Clone, Default)]
pub struct SampledField {
    pub points: Vec<Point2>,
    pub weights: Vec<f64>,
    pub values: Vec<SymTensor3>,
}

impl SampledField {
    pub fn new(points: Vec<Point2>, weights: Vec<f64>, values: Vec<SymTensor3>) -> Self {
        assert_eq!(points.len(), weights.len());
        assert_eq!(points.len(), values.len());
        SampledField { points, weights, values }
    }

    /// Field on the quadrature points of a mesh, scaled by a time weight.
    pub fn on_quadrature(qp: &QuadPoints, values: Vec<SymTensor3>, time_weight: f64) -> Self {
        let weights = qp.weights.iter().map(|w| w * time_weight).collect();
        SampledField::new(qp.points.clone(), weights, values)
    }

    /// Appends another sample set (used to accumulate space-time fields).
    pub fn extend(&mut self, other: SampledField) {
        self.points.extend(other.points);
        self.weights.extend(other.weights);
        self.values.extend(other.values);
    }

    pub fn scaled(&self, s: f64) -> Self {
        SampledField {
            points: self.points.clone(),
            weights: self.weights.clone(),
            values: self.values.iter().map(|v| *v * s).collect(),
        }
    }

    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.norm() == 0.0)
    }

    /// `∫ ξ : η` for two fields sampled at the same points.
    pub fn pairing(&self, other: &SampledField) -> f64 {
        self.weights
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(w, (a, b))| w * a.ddot(b))
            .sum()
    }

    pub fn l2_squared(&self) -> f64 {
        self.pairing(self)
    }
}

/// Quadrature approximation of `∫_Q M(x, ξ)`.
pub fn modular(m: &dyn Integrand, field: &SampledField) -> Result<f64> {
    modular_scaled(m, field, 1.0)
}

fn modular_scaled(m: &dyn Integrand, field: &SampledField, s: f64) -> Result<f64> {
    let mut acc = 0.0;
    for ((x, w), v) in field.points.iter().zip(&field.weights).zip(&field.values) {
        acc += w * m.radial(*x, s * v.norm())?;
    }
    Ok(acc)
}

/// Luxemburg norm `inf{λ > 0 : ∫ M(x, ξ/λ) ≤ 1}` by bisection.
pub fn luxemburg_norm(m: &dyn Integrand, field: &SampledField) -> Result<f64> {
    if field.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("field contains non-finite values".into()));
    }
    if field.is_zero() {
        return Ok(0.0);
    }
    let rho = |lambda: f64| modular_scaled(m, field, 1.0 / lambda);
    let mut lo = 1e-12;
    let mut hi = 1.0;
    while rho(hi)? > 1.0 {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Numeric("Luxemburg bracket diverged".into()));
        }
    }
    if rho(lo)? <= 1.0 {
        return Ok(lo);
    }
    while hi - lo > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        if rho(mid)? > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Orlicz norm through the Amemiya formula `inf_{k>0} (1 + ρ(kξ))/k`.
pub fn orlicz_norm(m: &dyn Integrand, field: &SampledField, luxemburg: f64) -> Result<f64> {
    if luxemburg == 0.0 {
        return Ok(0.0);
    }
    // F(u) = u (1 + ρ(ξ/u)) is convex in u; search on log u.
    let f = |lu: f64| -> f64 {
        let u = lu.exp();
        u * (1.0 + modular_scaled(m, field, 1.0 / u).unwrap_or(f64::INFINITY))
    };
    let (mut a, mut b) = ((luxemburg * 1e-3).ln(), (luxemburg * 1e3).ln());
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if b - a < 1e-13 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    Ok(fc.min(fd))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModularReport {
    pub modular: f64,
    pub luxemburg: f64,
    pub orlicz: f64,
    /// A-priori bracket `[‖ξ‖_L, 2‖ξ‖_L]` for the Orlicz norm.
    pub orlicz_bracket: (f64, f64),
}

impl ModularReport {
    pub fn norms_equivalent(&self) -> bool {
        let tol = 1e-8 * self.luxemburg.max(1e-300);
        self.orlicz >= self.orlicz_bracket.0 - tol && self.orlicz <= self.orlicz_bracket.1 + tol
    }
}

pub fn modular_report(m: &dyn Integrand, field: &SampledField) -> Result<ModularReport> {
    let modular = modular(m, field)?;
    let luxemburg = luxemburg_norm(m, field)?;
    let orlicz = orlicz_norm(m, field, luxemburg)?;
    Ok(ModularReport { modular, luxemburg, orlicz, orlicz_bracket: (luxemburg, 2.0 * luxemburg) })
}

/// `M(x, ξ) + M*(x, η) − ξ:η`, nonnegative up to round-off.
pub fn fenchel_young_gap(
    m: &dyn Integrand,
    mstar: &dyn Integrand,
    x: Point2,
    xi: &SymTensor3,
    eta: &SymTensor3,
) -> Result<f64> {
    Ok(m.eval(x, xi)? + mstar.eval(x, eta)? - xi.ddot(eta))
}

#[derive(Debug, Clone)]
pub struct Delta2Report {
    pub c_estimate: f64,
    pub h_integral: f64,
    pub satisfied: bool,
    /// Largest sampled doubling ratio in the lowest and highest magnitude
    /// deciles of the samples.
    pub ratio_low: f64,
    pub ratio_high: f64,
}

/// Doubling-condition `M(x, 2ξ) ≤ c M(x, ξ) + h(x)` estimate.
pub fn check_delta2(m: &NFunction, points: &[Point2], tensors: &[SymTensor3]) -> Result<Delta2Report> {
    if points.is_empty() || tensors.is_empty() {
        return Err(Error::Input("Δ₂ check needs samples".into()));
    }
    let mut ratios = vec![];
    for (i, t) in tensors.iter().enumerate() {
        let r = t.norm();
        if r == 0.0 {
            continue;
        }
        let x = points[i % points.len()];
        let base = m.radial(x, r)?;
        if base > 0.0 {
            ratios.push((r, m.radial(x, 2.0 * r)? / base));
        }
    }
    if ratios.is_empty() {
        return Err(Error::Input("Δ₂ check needs nonzero samples".into()));
    }
    ratios.sort_by(|a, b| a.0.total_cmp(&b.0));
    let decile = (ratios.len() / 10).max(1);
    let ratio_low = ratios[..decile].iter().map(|r| r.1).fold(0.0, f64::max);
    let ratio_high = ratios[ratios.len() - decile..].iter().map(|r| r.1).fold(0.0, f64::max);
    let sampled = ratios.iter().map(|r| r.1).fold(0.0, f64::max);
    match m.exponent() {
        Some(e) => Ok(Delta2Report {
            c_estimate: 2f64.powf(e.bounds().1),
            h_integral: 0.0,
            satisfied: true,
            ratio_low,
            ratio_high,
        }),
        None => Ok(Delta2Report {
            c_estimate: sampled,
            h_integral: 0.0,
            satisfied: ratio_high <= 2.0 * ratio_low,
            ratio_low,
            ratio_high,
        }),
    }
}

/// Outcome of sampling the defining properties of an N-function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NFunctionChecks {
    pub vanishes_only_at_zero: bool,
    pub even: bool,
    pub convex: bool,
    pub sublinear_at_zero: bool,
    pub superlinear_at_infinity: bool,
}

impl NFunctionChecks {
    pub fn all(&self) -> bool {
        self.vanishes_only_at_zero && self.even && self.convex && self.sublinear_at_zero && self.superlinear_at_infinity
    }
}

/// Samples the N-function axioms at the given points and tensors. The growth
/// limits are probed through the slope `M(r)/r`, which must increase from
/// `r = 1e-6` through `r = 1` to `r = 1e6`.
pub fn check_n_function(m: &dyn Integrand, points: &[Point2], tensors: &[SymTensor3]) -> Result<NFunctionChecks> {
    let mut c = NFunctionChecks {
        vanishes_only_at_zero: true,
        even: true,
        convex: true,
        sublinear_at_zero: true,
        superlinear_at_infinity: true,
    };
    for &x in points {
        if m.radial(x, 0.0)? != 0.0 {
            c.vanishes_only_at_zero = false;
        }
        let slope = |r: f64| m.radial(x, r).map(|v| v / r);
        let (s0, s1, s2) = (slope(1e-6)?, slope(1.0)?, slope(1e6)?);
        c.sublinear_at_zero &= s0 < s1;
        c.superlinear_at_infinity &= s2 > s1;
        for (i, xi) in tensors.iter().enumerate() {
            let v = m.eval(x, xi)?;
            if xi.norm() > 0.0 && v <= 0.0 {
                c.vanishes_only_at_zero = false;
            }
            let vn = m.eval(x, &(-*xi))?;
            if (v - vn).abs() > 1e-12 * (1.0 + v.abs()) {
                c.even = false;
            }
            let eta = tensors[(i + 1) % tensors.len()];
            let mid = m.eval(x, &((*xi + eta) * 0.5))?;
            let chord = 0.5 * (v + m.eval(x, &eta)?);
            if mid > chord + 1e-12 * (1.0 + chord) {
                c.convex = false;
            }
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy)]
pub struct QuadraticBoundGate {
    /// Largest sampled ratio `∫M*(A) / ∫|A|²`.
    pub worst_ratio: f64,
    pub passed: bool,
}

/// Samples `∫_Q M*(x, A) ≤ ∫_Q |A|²` on random element-wise constant fields
/// whose pointwise magnitudes are uniform in `[0, eta_cap]`.
pub fn check_quadratic_bound<R: Rng>(
    mstar: &dyn Integrand,
    mesh: &Mesh,
    qp: &QuadPoints,
    eta_cap: f64,
    fields: usize,
    rng: &mut R,
) -> Result<QuadraticBoundGate> {
    let mut worst: f64 = 0.0;
    for _ in 0..fields {
        let per_element: Vec<SymTensor3> = (0..mesh.element_count())
            .map(|_| {
                let dir = random_unit_tensor(rng);
                dir * (eta_cap * rng.gen::<f64>())
            })
            .collect();
        let values = (0..qp.len()).map(|q| per_element[qp.element_of(q)]).collect();
        let field = SampledField::on_quadrature(qp, values, 1.0);
        let lhs = modular(mstar, &field)?;
        let rhs = field.l2_squared();
        if rhs > 0.0 {
            worst = worst.max(lhs / rhs);
        }
    }
    Ok(QuadraticBoundGate { worst_ratio: worst, passed: worst <= 1.0 })
}

/// Uniformly oriented unit-norm symmetric tensor.
pub fn random_unit_tensor<R: Rng>(rng: &mut R) -> SymTensor3 {
    loop {
        let v: [f64; 6] = std::array::from_fn(|_| rng.gen::<f64>() * 2.0 - 1.0);
        let t = SymTensor3::from_mandel(&nalgebra::Vector6::from_row_slice(&v));
        let n = t.norm();
        if n > 1e-3 {
            return t * (1.0 / n);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_field(c: f64) -> SampledField {
        SampledField::new(vec![[0.5, 0.5]], vec![1.0], vec![SymTensor3::diag(c, 0.0, 0.0)])
    }

    #[test]
    fn eval_power_family() {
        let m = NFunction::power_constant(2.0).unwrap();
        let unit = SymTensor3::diag(1.0, 0.0, 0.0);
        assert_eq!(eval_m(&m, [0.0, 0.0], &unit).unwrap(), 0.5);
        assert_eq!(eval_m(&m, [0.0, 0.0], &SymTensor3::ZERO).unwrap(), 0.0);
        let m3 = NFunction::power_constant(3.0).unwrap();
        let v = eval_m(&m3, [0.0, 0.0], &(unit * 2.0)).unwrap();
        assert!((v - 8.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn eval_outside_domain_fails() {
        let mesh = Arc::new(Mesh::build(1.0, 1.0, 2, 2).unwrap());
        let m = NFunction::power_constant(2.0).unwrap().on_domain(mesh);
        assert!(matches!(
            eval_m(&m, [1.5, 0.5], &SymTensor3::ZERO),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn rejects_exponent_at_or_below_one() {
        assert!(NFunction::power_constant(1.0).is_err());
        assert!(NFunction::power_constant(0.5).is_err());
    }

    #[test]
    fn quadratic_is_self_conjugate() {
        let m = NFunction::power_constant(2.0).unwrap();
        let ms = complementary(&m, &RadialGrid::default()).unwrap();
        assert!(ms.is_closed_form());
        assert!((ms.radial([0.0, 0.0], 3.0).unwrap() - 4.5).abs() < 1e-14);
    }

    #[test]
    fn numeric_transform_of_cubic() {
        let grid = RadialGrid::default();
        let table = legendre_table(&|r: f64| r.powi(3) / 3.0, &grid);
        for (eta, v) in grid.points.iter().zip(&table.values) {
            let exact = eta.powf(1.5) / 1.5;
            assert!((v - exact).abs() <= 1e-6 * exact, "eta={eta}: {v} vs {exact}");
        }
    }

    #[test]
    fn user_profile_tabulated_conjugate() {
        let m = NFunction::radial(Expr::parse("r^3/3").unwrap());
        let ms = complementary(&m, &RadialGrid::default()).unwrap();
        assert!(!ms.is_closed_form());
        for eta in [1e-4f64, 0.3, 1.0, 7.5, 1e3] {
            let exact: f64 = eta.powf(1.5) / 1.5;
            let v = ms.radial([0.0, 0.0], eta).unwrap();
            assert!((v - exact).abs() <= 1e-6 * exact);
        }
        let resid = biconjugation_residual(&m, &ms, [0.0, 0.0], &RadialGrid::logarithmic(1e-4, 1e4, 400).unwrap()).unwrap();
        assert!(resid < 1e-6, "{resid}");
    }

    #[test]
    fn non_radial_user_function_is_unsupported() {
        let anisotropic = |_: Point2, t: &SymTensor3| t.a11 * t.a11 + 2.0 * t.a22 * t.a22;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<_> = (0..10).map(|_| random_unit_tensor(&mut rng)).collect();
        assert!(matches!(require_radial(&anisotropic, [0.0, 0.0], &samples), Err(Error::Unsupported(_))));
        let radial = |_: Point2, t: &SymTensor3| t.norm().powi(2);
        assert!(require_radial(&radial, [0.0, 0.0], &samples).is_ok());
    }

    #[test]
    fn modular_examples() {
        let m = NFunction::power_constant(2.0).unwrap();
        assert_eq!(modular(&m, &unit_field(0.0)).unwrap(), 0.0);
        assert!((modular(&m, &unit_field(1.0)).unwrap() - 0.5).abs() < 1e-15);
        let f = unit_field(0.7);
        assert!(modular(&m, &f.scaled(2.0)).unwrap() >= modular(&m, &f).unwrap());
    }

    #[test]
    fn luxemburg_constant_field() {
        let m = NFunction::power_constant(2.0).unwrap();
        assert_eq!(luxemburg_norm(&m, &unit_field(0.0)).unwrap(), 0.0);
        for c in [1e-6, 0.3, 1.0, 42.0] {
            let v = luxemburg_norm(&m, &unit_field(c)).unwrap();
            let exact = c / 2f64.sqrt();
            assert!((v - exact).abs() <= 1e-8 * exact, "{v} vs {exact}");
        }
        let bad = unit_field(f64::NAN);
        assert!(matches!(luxemburg_norm(&m, &bad), Err(Error::Input(_))));
    }

    #[test]
    fn luxemburg_is_homogeneous_for_constant_exponent() {
        let m = NFunction::power_constant(3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let values: Vec<_> = (0..20).map(|_| random_unit_tensor(&mut rng) * rng.gen::<f64>()).collect();
        let f = SampledField::new(vec![[0.0, 0.0]; 20], vec![0.05; 20], values);
        let base = luxemburg_norm(&m, &f).unwrap();
        for a in [0.25, 3.0] {
            let scaled = luxemburg_norm(&m, &f.scaled(a)).unwrap();
            assert!((scaled - a * base).abs() <= 1e-8 * a * base);
        }
    }

    #[test]
    fn orlicz_norm_inside_bracket() {
        for p in [1.5, 2.0, 3.0] {
            let m = NFunction::power_constant(p).unwrap();
            let r = modular_report(&m, &unit_field(2.5)).unwrap();
            assert!(r.norms_equivalent(), "{r:?}");
        }
    }

    #[test]
    fn fenchel_young_equality_case() {
        let m = NFunction::power_constant(2.0).unwrap();
        let ms = complementary(&m, &RadialGrid::default()).unwrap();
        let xi = SymTensor3::new(0.3, -1.0, 0.7, 0.2, 0.0, 0.1);
        assert_eq!(fenchel_young_gap(&m, &ms, [0.0, 0.0], &SymTensor3::ZERO, &SymTensor3::ZERO).unwrap(), 0.0);
        assert!(fenchel_young_gap(&m, &ms, [0.0, 0.0], &xi, &xi).unwrap().abs() < 1e-15);
    }

    #[test]
    fn delta2_reports() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tensors: Vec<_> = (0..200)
            .map(|i| random_unit_tensor(&mut rng) * 10f64.powf(-3.0 + 6.0 * i as f64 / 200.0))
            .collect();
        let pts = vec![[0.0, 0.0]];
        let r = check_delta2(&NFunction::power_constant(2.0).unwrap(), &pts, &tensors).unwrap();
        assert_eq!(r.c_estimate, 4.0);
        assert_eq!(r.h_integral, 0.0);
        assert!(r.satisfied);
        let exp = NFunction::radial(Expr::parse("exp(r) - 1 - r").unwrap());
        let r = check_delta2(&exp, &pts, &tensors).unwrap();
        assert!(!r.satisfied);
        assert!(r.ratio_high > 100.0 * r.ratio_low);
    }

    #[test]
    fn delta2_variable_exponent_bound() {
        let mesh = Arc::new(Mesh::build(1.0, 1.0, 4, 4).unwrap());
        let values = mesh.nodes.iter().map(|p| 1.5 + 1.5 * p[0]).collect();
        let m = NFunction::power(ExponentField::Nodal { mesh: mesh.clone(), values }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Point2> = (0..50).map(|_| [rng.gen(), rng.gen()]).collect();
        let tensors: Vec<_> = (0..50).map(|_| random_unit_tensor(&mut rng) * (0.1 + 5.0 * rng.gen::<f64>())).collect();
        let r = check_delta2(&m, &pts, &tensors).unwrap();
        assert!((r.c_estimate - 8.0).abs() < 1e-12);
        for (x, t) in pts.iter().zip(&tensors) {
            let ratio = m.eval(*x, &(*t * 2.0)).unwrap() / m.eval(*x, t).unwrap();
            assert!(ratio <= 8.0 + 1e-12);
        }
    }

    #[test]
    fn axioms_hold_for_shipped_families() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let tensors: Vec<_> = (0..40).map(|_| random_unit_tensor(&mut rng) * (10.0 * rng.gen::<f64>())).collect();
        for p in [1.2, 2.0, 3.5] {
            let m = NFunction::power_constant(p).unwrap();
            assert!(check_n_function(&m, &[[0.0, 0.0]], &tensors).unwrap().all());
        }
        let not_n = NFunction::radial(Expr::parse("r").unwrap());
        let c = check_n_function(&not_n, &[[0.0, 0.0]], &tensors).unwrap();
        assert!(!c.sublinear_at_zero && !c.superlinear_at_infinity);
    }

    #[test]
    fn quadratic_bound_gate() {
        let mesh = Mesh::build(1.0, 1.0, 4, 4).unwrap();
        let qp = mesh.quad_points(&crate::mesh::TriangleRule::of_degree(4).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for p in [1.5, 2.0, 3.0] {
            let ms = complementary(&NFunction::power_constant(p).unwrap(), &RadialGrid::default()).unwrap();
            let g = check_quadratic_bound(&ms, &mesh, &qp, 2.0, 5, &mut rng).unwrap();
            assert!(g.passed, "p={p}: {g:?}");
        }
        // p = 4 has M*(η) > |η|² for small η; a small cap fails the gate.
        let ms = complementary(&NFunction::power_constant(4.0).unwrap(), &RadialGrid::default()).unwrap();
        let g = check_quadratic_bound(&ms, &mesh, &qp, 0.2, 5, &mut rng).unwrap();
        assert!(!g.passed);
    }
}
