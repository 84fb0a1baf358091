//! Two-level Galerkin system for `(γ, δ, β)`.
//!
//! With `u = Σ γ_n w_n`, `εᵖ = Σ γ_n ε(w_n) + Σ δ_m ζ_m` and
//! `θ = Σ β_m v_m`, the stress is `T = −D Σ δ_m ζ_m` and the system reads
//!
//! ```text
//! γ̇_n = (1/λ_n) ∫ G̃ : D ε(w_n)
//! δ̇_m = ∫ G̃ : D ζ_m
//! β̇_m = ∫ 𝒯_K((T̃ᵈ + Tᵈ) : G̃) v_m − μ_m β_m
//! ```
//!
//! with `G̃ = G(θ̃ + θ, T̃ᵈ + Tᵈ)` at quadrature points. The energy
//! `E = ½ Σ δ_m²` then satisfies `dE/dt = −∫ G̃ : T` exactly in the
//! discrete setting, because the same quadrature feeds both sides.

use std::sync::Arc;

use nalgebra::Vector4;
use rayon::prelude::*;

use crate::constitutive::GModel;
use crate::discretization::{GalerkinBases, StrainField};
use crate::error::{Error, Result};
use crate::lifting::Lifting;
use crate::mesh::QuadPoints;
use crate::orlicz::{conjugate_exponent, power_profile, ComplementaryNFunction, Integrand, NFunction};
use crate::tensor::SymTensor3;

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub gamma: Vec<f64>,
    pub delta: Vec<f64>,
    pub beta: Vec<f64>,
}

impl State {
    pub fn zero(k: usize, l: usize) -> Self {
        State { t: 0.0, gamma: vec![0.0; k], delta: vec![0.0; l], beta: vec![0.0; l] }
    }

    pub fn is_finite(&self) -> bool {
        self.gamma.iter().chain(&self.delta).chain(&self.beta).all(|v| v.is_finite())
    }

    /// `½ Σ δ_m²`.
    pub fn energy(&self) -> f64 {
        0.5 * self.delta.iter().map(|d| d * d).sum::<f64>()
    }
}

/// Clamp to `[−K, K]`.
#[inline]
pub fn truncate(v: f64, k: f64) -> f64 {
    v.clamp(-k, k)
}

/// Initial coefficients: `β` from the `L²` projection of `𝒯_K(θ₀)` and
/// `(γ, δ)` from the `D`-projection of `εᵖ₀`.
pub fn initial_state(theta0: &[f64], eps_p0: &StrainField, bases: &GalerkinBases, k_trunc: f64) -> Result<State> {
    for (e, v) in eps_p0.iter().enumerate() {
        let t = SymTensor3::from_plane(v);
        if t.trace().abs() > 1e-10 * t.norm().max(1e-300) && t.trace().abs() > 1e-14 {
            return Err(Error::Input(format!(
                "initial visco-elastic strain must be traceless; element {e} has trace {:e}",
                t.trace()
            )));
        }
    }
    let truncated: Vec<f64> = theta0.iter().map(|v| truncate(*v, k_trunc)).collect();
    let beta = bases.project_scalar(&truncated);
    let (gamma, delta) = bases.project_strain(eps_p0);
    Ok(State { t: 0.0, gamma, delta, beta })
}

/// Fields assembled from a state.
#[derive(Debug, Clone)]
pub struct Fields {
    /// Interleaved nodal `Σ γ_n w_n`.
    pub u: Vec<f64>,
    pub eps_p: StrainField,
    /// Nodal `Σ β_m v_m`.
    pub theta: Vec<f64>,
    pub stress: StrainField,
    pub stress_dev: StrainField,
}

pub fn reconstruct(state: &State, bases: &GalerkinBases) -> Fields {
    let stress: StrainField = bases.complement_stress(&state.delta).iter().map(|v| -v).collect();
    let stress_dev = stress.iter().map(|s| SymTensor3::from_plane(s).dev().to_plane()).collect();
    Fields {
        u: bases.reconstruct_displacement(&state.gamma),
        eps_p: bases.reconstruct_strain(&state.gamma, &state.delta),
        theta: bases.reconstruct_scalar(&state.beta),
        stress,
        stress_dev,
    }
}

/// `max_n |∫ T : ε(w_n)|` and `‖T‖_{L²}`.
pub fn equilibrium_residual(stress: &StrainField, bases: &GalerkinBases) -> (f64, f64) {
    let mesh = &bases.mesh;
    let inner = |a: &StrainField, b: &StrainField| -> f64 {
        mesh.elements.iter().zip(a.iter().zip(b)).map(|(el, (x, y))| el.area * x.dot(y)).sum()
    };
    let worst = bases.displacement.strains.iter().map(|s| inner(stress, s).abs()).fold(0.0, f64::max);
    (worst, inner(stress, stress).sqrt())
}

#[derive(Debug, Clone, Default)]
pub struct Derivative {
    pub gamma: Vec<f64>,
    pub delta: Vec<f64>,
    /// Source part of `β̇` (without `−μβ`).
    pub beta_source: Vec<f64>,
    pub mu: Vec<f64>,
}

impl Derivative {
    /// Full `β̇ = source − μβ`.
    pub fn beta(&self, state: &State) -> Vec<f64> {
        self.beta_source.iter().zip(&self.mu).zip(&state.beta).map(|((s, m), b)| s - m * b).collect()
    }

    fn is_finite(&self) -> bool {
        self.gamma.iter().chain(&self.delta).chain(&self.beta_source).all(|v| v.is_finite())
    }
}

/// Quadrature integrals recorded at every grid time.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepDiagnostics {
    pub t: f64,
    pub energy: f64,
    /// `∫ G̃ : T` (the energy decays at this rate).
    pub dissipation: f64,
    /// Time integral of `dissipation` over the step ending here, by the
    /// trapezoid rule on the integrator's sub-steps. Zero at the first time.
    pub step_dissipation: f64,
    /// `∫ G̃ : (T̃ᵈ + Tᵈ)`.
    pub work: f64,
    /// `∫ M(x, T̃ᵈ + Tᵈ)`.
    pub modular_m: f64,
    /// `∫ M*(x, G̃)`.
    pub modular_mstar: f64,
    /// `∫ |G̃|²`.
    pub g_l2_squared: f64,
    /// `∫ |G̃ : (T̃ᵈ + Tᵈ)|`.
    pub product_l1: f64,
    /// `∫ |θ|` of the Galerkin temperature.
    pub theta_l1: f64,
    /// `‖θ‖²_{L²} = Σ β_m²`.
    pub theta_l2_squared: f64,
    /// `‖∇θ‖²_{L²} = Σ μ_m β_m²`.
    pub theta_grad_squared: f64,
    /// `max_n |∫ T : ε(w_n)|`.
    pub equilibrium: f64,
    pub stress_l2: f64,
    /// Largest `|∫ 𝒯_K(...) v_m| / ‖v_m‖_{L¹}`.
    pub source_ratio: f64,
    pub substeps: usize,
}

/// Right-hand side evaluation with optional diagnostics.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub derivative: Derivative,
    /// `‖G̃‖_{L²}`.
    pub g_norm: f64,
    /// `∫ G̃ : T`.
    pub dissipation: f64,
    pub diagnostics: Option<StepDiagnostics>,
}

#[derive(Default, Clone, Copy)]
struct ElementSums {
    g: Vector4<f64>,
    g_sq: f64,
    work: f64,
    product_l1: f64,
    m: f64,
    mstar: f64,
    finite: bool,
}

/// The assembled Galerkin system.
#[derive(Debug, Clone)]
pub struct Evolution {
    pub bases: Arc<GalerkinBases>,
    pub model: GModel,
    pub m: NFunction,
    pub mstar: ComplementaryNFunction,
    pub lifting: Lifting,
    pub qp: QuadPoints,
    pub truncation: f64,
    /// Relative per-step energy-identity tolerance; zero disables it.
    pub step_control: f64,
    p_at_q: Vec<f64>,
    /// `v_m` at quadrature points, row per point.
    v_at_q: Vec<Vec<f64>>,
    v_l1: Vec<f64>,
}

impl Evolution {
    pub fn new(
        bases: Arc<GalerkinBases>,
        model: GModel,
        m: NFunction,
        mstar: ComplementaryNFunction,
        lifting: Lifting,
        qp: QuadPoints,
        truncation: f64,
    ) -> Result<Self> {
        if !(truncation > 0.0 && truncation.is_finite()) {
            return Err(Error::Config(format!("truncation level K must be positive and finite, got {truncation}")));
        }
        let p_at_q = qp.points.iter().map(|x| model.exponent().at(*x)).collect::<Result<Vec<_>>>()?;
        let mesh = &bases.mesh;
        let l = bases.temperature.values.len();
        let mut v_at_q = vec![vec![0.0; l]; qp.len()];
        let mut v_l1 = vec![0.0; l];
        for (q, row) in v_at_q.iter_mut().enumerate() {
            let n = mesh.elements[qp.element_of(q)].nodes;
            let b = qp.bary[q];
            for (m, r) in row.iter_mut().enumerate() {
                let col = bases.temperature.modes.column(m);
                *r = b[0] * col[n[0]] + b[1] * col[n[1]] + b[2] * col[n[2]];
                v_l1[m] += qp.weights[q] * r.abs();
            }
        }
        Ok(Evolution { bases, model, m, mstar, lifting, qp, truncation, step_control: 1e-3, p_at_q, v_at_q, v_l1 })
    }

    pub fn k(&self) -> usize {
        self.bases.k()
    }

    pub fn l(&self) -> usize {
        self.bases.l()
    }

    /// Nodal total temperature `θ̃(t) + Σ β_m v_m`.
    fn total_theta(&self, state: &State) -> Vec<f64> {
        let mut theta = self.lifting.theta(state.t).into_owned();
        let v = &self.bases.temperature.modes;
        for (m, b) in state.beta.iter().enumerate() {
            if *b != 0.0 {
                for (o, x) in theta.iter_mut().zip(v.column(m).iter()) {
                    *o += b * x;
                }
            }
        }
        theta
    }

    pub fn evaluate(&self, state: &State, with_diagnostics: bool) -> Result<Evaluation> {
        let bases = &*self.bases;
        let mesh = &*bases.mesh;
        let d = &*bases.elasticity;
        let elastic = self.lifting.elastic(mesh, d, &self.qp, state.t);
        let stress = bases.complement_stress(&state.delta);
        let theta = self.total_theta(state);
        let per = self.qp.per_element;
        let power = self.m.exponent().is_some() && self.mstar.is_closed_form();
        let kt = self.truncation;

        let sums: Vec<(ElementSums, [f64; 3], Vec<f64>)> = (0..mesh.element_count())
            .into_par_iter()
            .map(|e| {
                let el = &mesh.elements[e];
                let td = SymTensor3::from_plane(&(-stress[e])).dev();
                let s = elastic.stress_dev_tensor(e) + td;
                let mut acc = ElementSums { finite: true, ..Default::default() };
                let mut load = [0.0; 3];
                let mut src = vec![];
                for q in e * per..(e + 1) * per {
                    let b = self.qp.bary[q];
                    let w = self.qp.weights[q];
                    let x = self.qp.points[q];
                    let th = b[0] * theta[el.nodes[0]] + b[1] * theta[el.nodes[1]] + b[2] * theta[el.nodes[2]];
                    let p = self.p_at_q[q];
                    let g = self.model.eval_with_p(th, &s, p, x);
                    let gs = g.ddot(&s);
                    acc.g += g.to_plane() * w;
                    acc.g_sq += w * g.ddot(&g);
                    acc.work += w * gs;
                    acc.product_l1 += w * gs.abs();
                    let sq = w * truncate(gs, kt);
                    for a in 0..3 {
                        load[a] += sq * b[a];
                    }
                    src.push(sq);
                    if with_diagnostics {
                        let (mv, msv) = if power {
                            (power_profile(p, s.norm()), power_profile(conjugate_exponent(p), g.norm()))
                        } else {
                            (self.m.radial(x, s.norm()).unwrap_or(f64::NAN), self.mstar.radial(x, g.norm()).unwrap_or(f64::NAN))
                        };
                        acc.m += w * mv;
                        acc.mstar += w * msv;
                    }
                    if !(g.is_finite() && gs.is_finite()) {
                        acc.finite = false;
                    }
                }
                (acc, load, src)
            })
            .collect();

        if let Some(e) = sums.iter().position(|s| !s.0.finite) {
            return Err(Error::Numeric(format!(
                "non-finite constitutive value on element {e} (centroid {:?}) at t = {}",
                mesh.elements[e].centroid, state.t
            )));
        }

        let k = bases.k();
        let l = bases.l();
        let mut gamma = vec![0.0; k];
        let mut delta = vec![0.0; l];
        let mut beta_source = vec![0.0; l];
        let mut tot = ElementSums::default();
        let mut dissipation = 0.0;
        for (e, (s, _, src)) in sums.iter().enumerate() {
            for (n, gd) in gamma.iter_mut().enumerate() {
                *gd += s.g.dot(&bases.displacement.stresses[n][e]);
            }
            for (m, dd) in delta.iter_mut().enumerate() {
                *dd += s.g.dot(&bases.complement.stresses[m][e]);
            }
            for (i, sq) in src.iter().enumerate() {
                let row = &self.v_at_q[e * per + i];
                for (m, bs) in beta_source.iter_mut().enumerate() {
                    *bs += sq * row[m];
                }
            }
            dissipation -= s.g.dot(&stress[e]);
            tot.g_sq += s.g_sq;
            tot.work += s.work;
            tot.product_l1 += s.product_l1;
            tot.m += s.m;
            tot.mstar += s.mstar;
        }
        for (gd, lam) in gamma.iter_mut().zip(&bases.displacement.values) {
            *gd /= lam;
        }
        let derivative = Derivative { gamma, delta, beta_source, mu: bases.temperature.values.clone() };
        if !derivative.is_finite() {
            return Err(Error::Numeric(format!("non-finite right-hand side at t = {}", state.t)));
        }

        let diagnostics = with_diagnostics.then(|| {
            let own_theta = bases.reconstruct_scalar(&state.beta);
            let theta_l1 = mesh.at_quad(&self.qp, &own_theta).iter().zip(&self.qp.weights).map(|(v, w)| w * v.abs()).sum();
            let t_field: StrainField = stress.iter().map(|v| -v).collect();
            let (equilibrium, stress_l2) = equilibrium_residual(&t_field, bases);
            let source_ratio = derivative
                .beta_source
                .iter()
                .zip(&self.v_l1)
                .map(|(s, n)| if *n > 0.0 { s.abs() / n } else { 0.0 })
                .fold(0.0, f64::max);
            StepDiagnostics {
                t: state.t,
                energy: state.energy(),
                dissipation,
                step_dissipation: 0.0,
                work: tot.work,
                modular_m: tot.m,
                modular_mstar: tot.mstar,
                g_l2_squared: tot.g_sq,
                product_l1: tot.product_l1,
                theta_l1,
                theta_l2_squared: state.beta.iter().map(|b| b * b).sum(),
                theta_grad_squared: state.beta.iter().zip(&bases.temperature.values).map(|(b, m)| m * b * b).sum(),
                equilibrium,
                stress_l2,
                source_ratio,
                substeps: 1,
            }
        });
        Ok(Evaluation { derivative, g_norm: tot.g_sq.sqrt(), dissipation, diagnostics })
    }

    /// One Lawson-Heun step from an evaluation at `state`. Returns the new
    /// state and the interior sub-step knots; the step was split into
    /// `knots.len() + 1` sub-steps.
    pub fn step(&self, state: &State, eval0: &Evaluation, dt: f64) -> Result<(State, Vec<PathPoint>)> {
        if !(dt > 0.0) {
            return Err(Error::Input(format!("time step must be positive, got {dt}")));
        }
        let mut knots = vec![];
        let (next, _) = self.step_rec(state, eval0, dt, 0, &mut knots)?;
        Ok((next, knots))
    }

    /// A step is halved when `‖G̃‖` changes by more than 20% across the
    /// predictor, when its own energy-identity defect exceeds `step_control`
    /// times the dissipation it carries, or when an evaluation fails.
    fn step_rec(
        &self,
        state: &State,
        eval0: &Evaluation,
        dt: f64,
        depth: usize,
        knots: &mut Vec<PathPoint>,
    ) -> Result<(State, Evaluation)> {
        const MAX_DEPTH: usize = 12;
        let refine = depth < MAX_DEPTH;
        let attempt = || -> Result<Option<(State, Evaluation)>> {
            let d0 = &eval0.derivative;
            let decay: Vec<f64> = d0.mu.iter().map(|m| (-m * dt).exp()).collect();
            let stage = State {
                t: state.t + dt,
                gamma: axpy(&state.gamma, dt, &d0.gamma),
                delta: axpy(&state.delta, dt, &d0.delta),
                beta: state.beta.iter().zip(&d0.beta_source).zip(&decay).map(|((b, s), e)| e * (b + dt * s)).collect(),
            };
            let e1 = self.evaluate(&stage, false)?;
            let (g0, g1) = (eval0.g_norm, e1.g_norm);
            if refine && (g1 - g0).abs() > 0.2 * g0.max(g1) && (g1 - g0).abs() > 1e-12 {
                return Ok(None);
            }
            let d1 = &e1.derivative;
            let h = 0.5 * dt;
            let next = State {
                t: state.t + dt,
                gamma: state.gamma.iter().zip(d0.gamma.iter().zip(&d1.gamma)).map(|(y, (a, b))| y + h * (a + b)).collect(),
                delta: state.delta.iter().zip(d0.delta.iter().zip(&d1.delta)).map(|(y, (a, b))| y + h * (a + b)).collect(),
                beta: state
                    .beta
                    .iter()
                    .zip(&decay)
                    .zip(d0.beta_source.iter().zip(&d1.beta_source))
                    .map(|((b, e), (s0, s1))| e * b + h * (e * s0 + s1))
                    .collect(),
            };
            if !next.is_finite() {
                return Ok(None);
            }
            let en = self.evaluate(&next, false)?;
            let defect = (next.energy() - state.energy() + h * (eval0.dissipation + en.dissipation)).abs();
            let carried = h * (eval0.dissipation.abs() + en.dissipation.abs());
            if refine && self.step_control > 0.0 && defect > self.step_control * carried && defect > 1e-15 {
                return Ok(None);
            }
            Ok(Some((next, en)))
        };
        match attempt() {
            Ok(Some(done)) => Ok(done),
            Ok(None) | Err(Error::Numeric(_)) if refine => {
                let half = 0.5 * dt;
                let (mid, emid) = self.step_rec(state, eval0, half, depth + 1, knots)?;
                knots.push(PathPoint { t: mid.t, energy: mid.energy(), dissipation: emid.dissipation });
                let (mut end, eend) = self.step_rec(&mid, &emid, half, depth + 1, knots)?;
                end.t = state.t + dt;
                Ok((end, eend))
            }
            Ok(None) => Err(Error::Numeric(format!("step from t = {} did not produce finite values", state.t))),
            Err(e) => Err(e),
        }
    }
}

fn axpy(y: &[f64], a: f64, x: &[f64]) -> Vec<f64> {
    y.iter().zip(x).map(|(y, x)| y + a * x).collect()
}

/// Uniform time grid `0, dt, …, T`; `dt` is shrunk so the grid ends at `T`.
pub fn time_grid(dt: f64, t_final: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(Error::Config(format!("need dt > 0 and T ≥ 0, got dt={dt}, T={t_final}")));
    }
    if t_final == 0.0 {
        return Ok(vec![0.0]);
    }
    let n = (t_final / dt - 1e-9).ceil().max(1.0) as usize;
    let h = t_final / n as f64;
    Ok((0..=n).map(|i| if i == n { t_final } else { i as f64 * h }).collect())
}

/// Energy and dissipation at a grid time or an interior sub-step time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub t: f64,
    pub energy: f64,
    pub dissipation: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// States at output times.
    pub states: Vec<State>,
    /// Diagnostics at every grid time.
    pub diagnostics: Vec<StepDiagnostics>,
    /// Every time the integrator visited, grid and sub-step, in order.
    pub path: Vec<PathPoint>,
    /// Set when integration stopped early.
    pub failure: Option<String>,
}

impl Trajectory {
    pub fn final_state(&self) -> &State {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }
}

/// Integrates over `times`, storing every `stride`-th state (and the last).
pub fn integrate(system: &Evolution, initial: State, times: &[f64], stride: usize) -> Trajectory {
    let stride = stride.max(1);
    let mut states = vec![initial.clone()];
    let mut diagnostics = vec![];
    let mut path = vec![];
    let mut state = initial;
    state.t = times[0];
    let mut eval = match system.evaluate(&state, true) {
        Ok(e) => e,
        Err(e) => return Trajectory { states, diagnostics, path, failure: Some(e.to_string()) },
    };
    diagnostics.push(eval.diagnostics.unwrap());
    path.push(PathPoint { t: state.t, energy: state.energy(), dissipation: eval.dissipation });
    for (i, w) in times.windows(2).enumerate() {
        let dt = w[1] - w[0];
        let stepped = system.step(&state, &eval, dt).and_then(|(mut next, knots)| {
            next.t = w[1];
            let e = system.evaluate(&next, true)?;
            Ok((next, knots, e))
        });
        match stepped {
            Ok((next, knots, e)) => {
                let mut diag = e.diagnostics.unwrap();
                diag.substeps = knots.len() + 1;
                let start = path.len() - 1;
                path.extend(knots);
                path.push(PathPoint { t: w[1], energy: next.energy(), dissipation: e.dissipation });
                diag.step_dissipation = path[start..].windows(2).map(|p| 0.5 * (p[1].t - p[0].t) * (p[0].dissipation + p[1].dissipation)).sum();
                diagnostics.push(diag);
                state = next;
                eval = e;
                if (i + 1) % stride == 0 || i + 2 == times.len() {
                    states.push(state.clone());
                }
            }
            Err(err) => {
                if states.last().map(|s| s.t) != Some(state.t) {
                    states.push(state.clone());
                }
                return Trajectory { states, diagnostics, path, failure: Some(err.to_string()) };
            }
        }
    }
    Trajectory { states, diagnostics, path, failure: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::GModel;
    use crate::discretization::ElasticityTensor;
    use crate::lifting::Loads;
    use crate::linalg::EigenOptions;
    use crate::mesh::{Mesh, TriangleRule};
    use crate::orlicz::{complementary, RadialGrid};

    fn system(p: f64, loads: Loads, times: &[f64]) -> Evolution {
        let mesh = Arc::new(Mesh::build(1.0, 0.8, 5, 4).unwrap());
        let d = Arc::new(ElasticityTensor::uniform(&mesh, 1.0, 1.0).unwrap());
        let qp = mesh.quad_points(&TriangleRule::of_degree(2).unwrap());
        let bases = Arc::new(GalerkinBases::build(mesh.clone(), d.clone(), 4, 4, EigenOptions::default()).unwrap());
        let lifting = Lifting::build(&mesh, &d, &qp, loads, times).unwrap();
        let m = NFunction::power_constant(p).unwrap();
        let ms = complementary(&m, &RadialGrid::default()).unwrap();
        Evolution::new(bases, GModel::norton_hoff_simple(p).unwrap(), m, ms, lifting, qp, 4.0).unwrap()
    }

    #[test]
    fn zero_everything_is_stationary() {
        let times = time_grid(0.1, 0.5).unwrap();
        let sys = system(2.0, Loads::default(), &times);
        let s0 = State::zero(4, 4);
        let ev = sys.evaluate(&s0, true).unwrap();
        assert!(ev.derivative.gamma.iter().chain(&ev.derivative.delta).chain(&ev.derivative.beta_source).all(|v| *v == 0.0));
        let traj = integrate(&sys, s0.clone(), &times, 1);
        assert!(traj.is_complete());
        assert!(traj.states.iter().all(|s| s.gamma == s0.gamma && s.delta == s0.delta && s.beta == s0.beta));
    }

    #[test]
    fn pure_decay_is_exact() {
        let times = time_grid(0.05, 0.5).unwrap();
        let sys = system(2.0, Loads::default(), &times);
        let mut s0 = State::zero(4, 4);
        s0.beta = vec![0.0, 1.0, -0.5, 0.25];
        let traj = integrate(&sys, s0.clone(), &times, 1);
        let last = traj.final_state();
        for (m, (b, b0)) in last.beta.iter().zip(&s0.beta).enumerate() {
            let exact = b0 * (-sys.bases.temperature.values[m] * 0.5).exp();
            assert!((b - exact).abs() <= 1e-12 * (1.0 + exact.abs()), "{b} vs {exact}");
        }
    }

    #[test]
    fn delta_rate_matches_direct_quadrature() {
        let times = time_grid(0.1, 0.1).unwrap();
        let sys = system(2.0, Loads::default(), &times);
        let mut s = State::zero(4, 4);
        s.delta = vec![0.3, -0.2, 0.1, 0.05];
        let ev = sys.evaluate(&s, false).unwrap();
        // p = 2, unit factor: G = dev(T), T = −Σ δ D ζ.
        let mesh = &sys.bases.mesh;
        for m in 0..4 {
            let mut acc = 0.0;
            for (e, el) in mesh.elements.iter().enumerate() {
                let mut t = SymTensor3::ZERO;
                for (j, dj) in s.delta.iter().enumerate() {
                    t -= SymTensor3::from_plane(&sys.bases.complement.stresses[j][e]) * *dj;
                }
                acc += el.area * t.dev().ddot(&SymTensor3::from_plane(&sys.bases.complement.stresses[m][e]));
            }
            assert!((acc - ev.derivative.delta[m]).abs() < 1e-12, "{acc} vs {}", ev.derivative.delta[m]);
        }
    }

    #[test]
    fn equilibrium_and_energy_rate() {
        let times = time_grid(0.1, 0.1).unwrap();
        let sys = system(3.0, Loads::default(), &times);
        let mut s = State::zero(4, 4);
        s.gamma = vec![0.4, 0.1, -0.3, 0.2];
        s.delta = vec![0.3, -0.2, 0.1, 0.05];
        let ev = sys.evaluate(&s, true).unwrap();
        let diag = ev.diagnostics.unwrap();
        assert!(diag.equilibrium <= 1e-10 * (1.0 + diag.stress_l2));
        let rate: f64 = s.delta.iter().zip(&ev.derivative.delta).map(|(a, b)| a * b).sum();
        assert!((rate + diag.dissipation).abs() < 1e-13);
        assert!(diag.work >= 0.0);
    }

    #[test]
    fn reconstructed_stress_vanishes_without_complement() {
        let times = time_grid(0.1, 0.1).unwrap();
        let sys = system(2.0, Loads::default(), &times);
        let mut s = State::zero(4, 4);
        s.gamma = vec![1.0, 2.0, 3.0, 4.0];
        let f = reconstruct(&s, &sys.bases);
        assert!(f.stress.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn truncated_source_is_bounded() {
        let times = time_grid(0.1, 0.1).unwrap();
        let mut loads = Loads::default();
        loads.g = [crate::expr::Expr::parse("0.5*x*y").unwrap(), crate::expr::Expr::parse("-0.3*x").unwrap()];
        let sys = system(3.0, loads, &times);
        let mut s = State::zero(4, 4);
        s.delta = vec![3.0, -2.0, 1.0, 5.0];
        let ev = sys.evaluate(&s, true).unwrap();
        assert!(ev.diagnostics.unwrap().source_ratio <= sys.truncation * (1.0 + 1e-12));
    }

    #[test]
    fn integration_is_deterministic() {
        let times = time_grid(0.01, 0.2).unwrap();
        let mut loads = Loads::default();
        loads.g = [crate::expr::Expr::parse("0.2*x*y").unwrap(), crate::expr::Expr::parse("0").unwrap()];
        let sys = system(3.0, loads, &times);
        let a = integrate(&sys, State::zero(4, 4), &times, 5);
        let b = integrate(&sys, State::zero(4, 4), &times, 5);
        assert_eq!(a.states, b.states);
        assert_eq!(a.diagnostics, b.diagnostics);
        assert_eq!(a.states.len(), 5);
    }

    #[test]
    fn empty_horizon_keeps_initial_state() {
        let times = time_grid(0.1, 0.0).unwrap();
        assert_eq!(times, vec![0.0]);
        let sys = system(2.0, Loads::default(), &[0.0]);
        let traj = integrate(&sys, State::zero(4, 4), &times, 1);
        assert_eq!(traj.states.len(), 1);
        assert_eq!(traj.diagnostics.len(), 1);
    }
}
