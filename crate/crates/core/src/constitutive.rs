//! Visco-elastic flow laws `εᵖ_t = G(θ, Tᵈ)` and their validators.
//!
//! The shipped family is Norton-Hoff with a bounded temperature factor,
//!
//! ```text
//! G(θ, Tᵈ) = s · φ(θ) · |Tᵈ|^{p(x)−2} · Tᵈ,
//! ```
//!
//! where `φ` is clamped into `[φ⁻, φ⁺]` and evaluated at `max(θ, 0)`. With
//! `a = s φ` one has `G:Tᵈ = a|Tᵈ|^p` and `M*(G) = a^{p'}|Tᵈ|^p / p'`, so the
//! coercivity ratio is `h(a, p) = a / (1/p + a^{p'}/p')`. It equals one at
//! `a = 1` and is quasi-concave in `a`, hence its infimum over the factor
//! range is attained at the endpoints.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::expr::{Env, Expr, Var};
use crate::mesh::Point2;
use crate::orlicz::{conjugate_exponent, random_unit_tensor, ComplementaryNFunction, ExponentField, Integrand, NFunction};
use crate::tensor::SymTensor3;

pub type CustomLaw = Arc<dyn Fn(f64, &SymTensor3, Point2) -> SymTensor3 + Send + Sync>;

#[derive(Clone)]
pub enum Family {
    NortonHoff,
    /// User law, used to exercise the validators.
    Custom { name: String, law: CustomLaw },
}

impl fmt::Debug for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::NortonHoff => write!(f, "NortonHoff"),
            Family::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

/// Scale selection for the Norton-Hoff family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scale {
    Fixed(f64),
    /// `1/√(φ⁻ φ⁺)`, centring the factor range around one.
    Auto,
}

#[derive(Debug, Clone)]
pub struct GModel {
    family: Family,
    exponent: ExponentField,
    phi: Expr,
    phi_min: f64,
    phi_max: f64,
    scale: f64,
    /// Constant factor when `φ` does not depend on temperature.
    phi_const: Option<f64>,
}

/// `a / (1/p + a^{p'}/p')`.
pub fn coercivity_ratio(a: f64, p: f64) -> f64 {
    let q = conjugate_exponent(p);
    a / (1.0 / p + a.powf(q) / q)
}

impl GModel {
    pub fn norton_hoff(exponent: ExponentField, phi: Expr, phi_min: f64, phi_max: f64, scale: Scale) -> Result<Self> {
        let mut problems = vec![];
        let (lo, hi) = exponent.bounds();
        if !(lo > 1.0 && hi.is_finite()) {
            problems.push(format!("constitutive.exponent: range [{lo}, {hi}] must lie in (1, ∞)"));
        }
        if !(phi_min > 0.0 && phi_max >= phi_min && phi_max.is_finite()) {
            problems.push(format!(
                "constitutive.phi_min/phi_max: need 0 < phi_min ≤ phi_max < ∞, got [{phi_min}, {phi_max}]"
            ));
        }
        for v in [Var::X, Var::Y, Var::T, Var::R, Var::Nx, Var::Ny] {
            if phi.uses(v) {
                problems.push(format!("constitutive.phi: '{phi}' may depend on theta only"));
                break;
            }
        }
        let scale = match scale {
            Scale::Fixed(s) if s > 0.0 && s.is_finite() => s,
            Scale::Fixed(s) => {
                problems.push(format!("constitutive.scale: must be positive, got {s}"));
                1.0
            }
            Scale::Auto => 1.0 / (phi_min * phi_max).sqrt(),
        };
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        let phi_const = (!phi.uses(Var::Theta)).then(|| phi.eval(&Env::default()).clamp(phi_min, phi_max));
        Ok(GModel { family: Family::NortonHoff, exponent, phi, phi_min, phi_max, scale, phi_const })
    }

    /// `G(θ, T) = |T|^{p-2} T` with unit factor.
    pub fn norton_hoff_simple(p: f64) -> Result<Self> {
        Self::norton_hoff(ExponentField::Constant(p), Expr::constant(1.0), 1.0, 1.0, Scale::Fixed(1.0))
    }

    pub fn custom(name: &str, exponent: ExponentField, law: CustomLaw) -> Self {
        GModel {
            family: Family::Custom { name: name.into(), law },
            exponent,
            phi: Expr::constant(1.0),
            phi_min: 1.0,
            phi_max: 1.0,
            scale: 1.0,
            phi_const: Some(1.0),
        }
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn exponent(&self) -> &ExponentField {
        &self.exponent
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn phi_bounds(&self) -> (f64, f64) {
        (self.phi_min, self.phi_max)
    }

    /// Temperature factor, clamped and extended to negative temperatures by
    /// `φ(max(θ, 0))`.
    pub fn phi(&self, theta: f64) -> f64 {
        match self.phi_const {
            Some(c) => c,
            None => {
                let v = self.phi.eval(&Env { theta: theta.max(0.0), ..Default::default() });
                if v.is_nan() {
                    self.phi_min
                } else {
                    v.clamp(self.phi_min, self.phi_max)
                }
            }
        }
    }

    /// `G` with the exponent already evaluated at the point. The input is
    /// projected onto its deviatoric part so the output is traceless to
    /// round-off.
    pub fn eval_with_p(&self, theta: f64, td: &SymTensor3, p: f64, x: Point2) -> SymTensor3 {
        match &self.family {
            Family::NortonHoff => {
                let t = td.dev();
                let r = t.norm();
                if r == 0.0 {
                    return SymTensor3::ZERO;
                }
                let a = self.scale * self.phi(theta);
                let f = if p == 2.0 { a } else { a * r.powf(p - 2.0) };
                (t * f).dev()
            }
            Family::Custom { law, .. } => law(theta, td, x),
        }
    }

    pub fn eval(&self, theta: f64, td: &SymTensor3, x: Point2) -> Result<SymTensor3> {
        let tr = td.trace();
        if tr.abs() > 1e-10 * td.norm() {
            return Err(Error::Input(format!(
                "G expects a traceless argument, got trace {tr:e} for |Tᵈ| = {:e}",
                td.norm()
            )));
        }
        Ok(self.eval_with_p(theta, td, self.exponent.at(x)?, x))
    }

    /// Coercivity constant guaranteed by construction for the Norton-Hoff
    /// family against `M = |ξ|^p/p`: the infimum of the ratio over the
    /// factor range and a grid of exponents spanning `[p⁻, p⁺]`.
    pub fn declared_coercivity(&self) -> Option<f64> {
        if !matches!(self.family, Family::NortonHoff) {
            return None;
        }
        let (plo, phi) = self.exponent.bounds();
        let (alo, ahi) = (self.scale * self.phi_min, self.scale * self.phi_max);
        let mut c = f64::INFINITY;
        for i in 0..=64 {
            let p = plo + (phi - plo) * i as f64 / 64.0;
            c = c.min(coercivity_ratio(alo, p)).min(coercivity_ratio(ahi, p));
        }
        Some(c)
    }
}

/// `G(θ, Tᵈ)`; rejects arguments that are not traceless.
pub fn eval_g(model: &GModel, theta: f64, td: &SymTensor3, x: Point2) -> Result<SymTensor3> {
    model.eval(theta, td, x)
}

/// Random traceless plane-or-full tensor with norm in `[0, max_norm)`.
pub fn random_deviator<R: Rng>(rng: &mut R, max_norm: f64) -> SymTensor3 {
    loop {
        let d = random_unit_tensor(rng).dev();
        let n = d.norm();
        if n > 1e-3 {
            return d * (max_norm * rng.gen::<f64>() / n);
        }
    }
}

/// Sampling ranges shared by the validators.
#[derive(Debug, Clone)]
pub struct SampleSpace {
    pub points: Vec<Point2>,
    pub theta: (f64, f64),
    pub max_norm: f64,
}

impl SampleSpace {
    pub fn new(points: Vec<Point2>) -> Self {
        SampleSpace { points, theta: (-1.0, 10.0), max_norm: 4.0 }
    }
}

/// Smallest sampled `(G(θ,T₁) − G(θ,T₂)) : (T₁ − T₂)`.
pub fn check_monotonicity<R: Rng>(model: &GModel, space: &SampleSpace, n: usize, rng: &mut R) -> Result<f64> {
    if n == 0 || space.points.is_empty() {
        return Err(Error::Input("monotonicity check needs at least one sample".into()));
    }
    let mut min_gap = f64::INFINITY;
    for _ in 0..n {
        let x = space.points[rng.gen_range(0..space.points.len())];
        let theta = rng.gen_range(space.theta.0..=space.theta.1);
        let t1 = random_deviator(rng, space.max_norm);
        let t2 = random_deviator(rng, space.max_norm);
        let g1 = model.eval(theta, &t1, x)?;
        let g2 = model.eval(theta, &t2, x)?;
        min_gap = min_gap.min((g1 - g2).ddot(&(t1 - t2)));
    }
    Ok(min_gap)
}

#[derive(Debug, Clone)]
pub struct CoercivityReport {
    pub declared: Option<f64>,
    pub sampled_inf: f64,
    /// Per-temperature infimum over the samples.
    pub per_theta: Vec<(f64, f64)>,
    /// Smallest `G:Tᵈ` seen (dissipation).
    pub min_dissipation: f64,
}

impl CoercivityReport {
    pub fn passed(&self) -> bool {
        let declared_ok = match self.declared {
            Some(c) => self.sampled_inf >= c * (1.0 - 1e-12),
            None => true,
        };
        self.sampled_inf > 0.0 && declared_ok && self.min_dissipation >= 0.0
    }
}

/// Samples `G:Tᵈ / (M(x,Tᵈ) + M*(x,G))` over a grid of temperatures.
pub fn check_coercivity<R: Rng>(
    model: &GModel,
    m: &NFunction,
    mstar: &ComplementaryNFunction,
    space: &SampleSpace,
    thetas: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<CoercivityReport> {
    if n == 0 || thetas.is_empty() || space.points.is_empty() {
        return Err(Error::Input("coercivity check needs samples".into()));
    }
    let mut per_theta = vec![];
    let mut min_dissipation = f64::INFINITY;
    for &theta in thetas {
        let mut inf = f64::INFINITY;
        for _ in 0..n {
            let x = space.points[rng.gen_range(0..space.points.len())];
            let t = random_deviator(rng, space.max_norm);
            if t.norm() < 1e-8 {
                continue;
            }
            let g = model.eval(theta, &t, x)?;
            let diss = g.ddot(&t);
            min_dissipation = min_dissipation.min(diss);
            let denom = m.eval(x, &t)? + mstar.eval(x, &g)?;
            if denom > 0.0 {
                inf = inf.min(diss / denom);
            }
        }
        per_theta.push((theta, inf));
    }
    let sampled_inf = per_theta.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    Ok(CoercivityReport { declared: model.declared_coercivity(), sampled_inf, per_theta, min_dissipation })
}

/// Sampled continuity moduli: largest change of `G` under perturbations of
/// size `h` in `θ` and in `Tᵈ`, relative to `1 + |G|`.
pub fn continuity_moduli<R: Rng>(model: &GModel, space: &SampleSpace, h: f64, n: usize, rng: &mut R) -> Result<(f64, f64)> {
    let (mut wt, mut ws) = (0.0f64, 0.0f64);
    for _ in 0..n {
        let x = space.points[rng.gen_range(0..space.points.len())];
        let theta = rng.gen_range(space.theta.0..=space.theta.1);
        let t = random_deviator(rng, space.max_norm);
        let g = model.eval(theta, &t, x)?;
        let gt = model.eval(theta + h, &t, x)?;
        let gs = model.eval(theta, &(t + random_deviator(rng, h)), x)?;
        wt = wt.max((gt - g).norm() / (1.0 + g.norm()));
        ws = ws.max((gs - g).norm() / (1.0 + g.norm()));
    }
    Ok((wt, ws))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orlicz::{complementary, RadialGrid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn space() -> SampleSpace {
        SampleSpace::new(vec![[0.5, 0.5]])
    }

    #[test]
    fn zero_argument_gives_zero() {
        for p in [1.5, 2.0, 3.0] {
            let g = GModel::norton_hoff_simple(p).unwrap();
            assert_eq!(eval_g(&g, 1.0, &SymTensor3::ZERO, [0.0, 0.0]).unwrap(), SymTensor3::ZERO);
        }
    }

    #[test]
    fn quadratic_law_is_identity_on_deviators() {
        let g = GModel::norton_hoff_simple(2.0).unwrap();
        let t = SymTensor3::new(1.0, -0.5, -0.5, 0.2, 0.1, -0.3);
        let out = eval_g(&g, 3.0, &t, [0.0, 0.0]).unwrap();
        assert!((out - t).norm() < 1e-15);
    }

    #[test]
    fn cubic_law_magnitude() {
        let g = GModel::norton_hoff_simple(3.0).unwrap();
        let t = SymTensor3::diag(1.0, -1.0, 0.0) * (2.0 / 2f64.sqrt());
        let out = eval_g(&g, 0.0, &t, [0.0, 0.0]).unwrap();
        assert!((out.norm() - 4.0).abs() < 1e-13);
        assert!((out.ddot(&t) - 8.0).abs() < 1e-12);
        assert!(out.trace().abs() <= 1e-14 * out.norm());
    }

    #[test]
    fn rejects_non_traceless_argument() {
        let g = GModel::norton_hoff_simple(2.0).unwrap();
        assert!(matches!(eval_g(&g, 0.0, &SymTensor3::identity(), [0.0, 0.0]), Err(Error::Input(_))));
    }

    #[test]
    fn temperature_factor_clamped_and_extended() {
        let g = GModel::norton_hoff(
            ExponentField::Constant(2.0),
            Expr::parse("1 + theta").unwrap(),
            0.5,
            2.0,
            Scale::Fixed(1.0),
        )
        .unwrap();
        assert_eq!(g.phi(-3.0), 1.0);
        assert_eq!(g.phi(0.5), 1.5);
        assert_eq!(g.phi(10.0), 2.0);
        assert!(GModel::norton_hoff(ExponentField::Constant(2.0), Expr::parse("x").unwrap(), 0.5, 2.0, Scale::Auto).is_err());
    }

    #[test]
    fn monotone_for_shipped_exponents() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in [1.5, 2.0, 3.0] {
            let g = GModel::norton_hoff_simple(p).unwrap();
            let gap = check_monotonicity(&g, &space(), 10_000, &mut rng).unwrap();
            assert!(gap >= -1e-12 * g.scale(), "p={p}: {gap}");
        }
    }

    #[test]
    fn validator_catches_non_monotone_law() {
        let law: CustomLaw = Arc::new(|_, t, _| -t.dev());
        let g = GModel::custom("reversed", ExponentField::Constant(2.0), law);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        assert!(check_monotonicity(&g, &space(), 100, &mut rng).unwrap() < 0.0);
    }

    #[test]
    fn unit_factor_coercivity_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for p in [2.0, 3.0] {
            let g = GModel::norton_hoff_simple(p).unwrap();
            let m = NFunction::power_constant(p).unwrap();
            let ms = complementary(&m, &RadialGrid::default()).unwrap();
            let r = check_coercivity(&g, &m, &ms, &space(), &[0.0, 1.0], 2000, &mut rng).unwrap();
            assert_eq!(r.declared, Some(1.0));
            assert!((r.sampled_inf - 1.0).abs() < 1e-12, "{r:?}");
            assert!(r.passed());
        }
    }

    #[test]
    fn bounded_factor_keeps_declared_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let phi = Expr::parse("0.5 + 1.5 * theta / (1 + theta)").unwrap();
        let g = GModel::norton_hoff(ExponentField::Constant(3.0), phi, 0.5, 2.0, Scale::Auto).unwrap();
        let m = NFunction::power_constant(3.0).unwrap();
        let ms = complementary(&m, &RadialGrid::default()).unwrap();
        let thetas: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let r = check_coercivity(&g, &m, &ms, &space(), &thetas, 500, &mut rng).unwrap();
        let c = r.declared.unwrap();
        assert!(c > 0.0 && c < 1.0);
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn continuity_is_small_for_small_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let g = GModel::norton_hoff_simple(1.5).unwrap();
        let (wt, ws) = continuity_moduli(&g, &space(), 1e-8, 200, &mut rng).unwrap();
        assert_eq!(wt, 0.0);
        assert!(ws < 1e-3);
    }
}
