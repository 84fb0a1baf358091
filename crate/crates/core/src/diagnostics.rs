//! Energy bookkeeping and the inequality audits of a trajectory.
//!
//! Every report here is a pure function of a [`Trajectory`] (plus the
//! system that produced it, for the lifting and the N-function).

use serde::Serialize;

use crate::discretization::{strain, GalerkinBases, StrainField};
use crate::error::{Error, Result};
use crate::evolution::{reconstruct, Evolution, PathPoint, State, Trajectory};
use crate::orlicz::Integrand;
use crate::tensor::SymTensor3;

/// `½ Σ δ_m²`, the potential energy for `D`-orthonormal complement modes.
pub fn potential_energy(state: &State) -> f64 {
    state.energy()
}

/// `½ ∫ D(ε(u) − εᵖ) : (ε(u) − εᵖ)` by direct quadrature of the fields.
pub fn potential_energy_quadrature(state: &State, bases: &GalerkinBases) -> f64 {
    let fields = reconstruct(state, bases);
    let eps_u = strain(&bases.mesh, &fields.u);
    let elastic: StrainField = eps_u.iter().zip(&fields.eps_p).map(|(a, b)| a - b).collect();
    0.5 * crate::discretization::d_inner(&bases.mesh, &bases.elasticity, &elastic, &elastic)
}

fn trapezoid(t: &[f64], f: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut acc = vec![0.0; t.len()];
    for i in 1..t.len() {
        acc[i] = acc[i - 1] + 0.5 * (t[i] - t[i - 1]) * (f(i - 1) + f(i));
    }
    acc
}

/// One structured pass/fail record.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    /// Short name of the property being verified.
    pub anchor: String,
    pub values: Vec<(String, f64)>,
    pub margin: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: &str, anchor: &str, values: Vec<(&str, f64)>, margin: f64, pass: bool) -> Self {
        Check {
            name: name.into(),
            anchor: anchor.into(),
            values: values.into_iter().map(|(k, v)| (k.into(), v)).collect(),
            margin,
            pass,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    /// `∫₀ᵗ ∫ G̃ : T`.
    pub cumulative_dissipation: Vec<f64>,
    /// `∫₀ᵗ ∫ M(x, T̃ᵈ + Tᵈ)`.
    pub cumulative_m: Vec<f64>,
    /// `∫₀ᵗ ∫ M*(x, G̃)`.
    pub cumulative_mstar: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub margins: Vec<f64>,
    pub c: f64,
    pub d: f64,
    /// `∫_Q M(x, (2/d) T̃ᵈ) + ½ ‖εᵖ₀‖²_D`, independent of the basis sizes.
    pub budget_constant: f64,
    pub min_margin: f64,
}

impl EnergyReport {
    pub fn passed(&self) -> bool {
        self.min_margin >= 0.0 && self.lhs.iter().all(|l| *l <= self.budget_constant * (1.0 + 1e-12) + 1e-14)
    }
}

/// `∫_Ω M(x, s T̃ᵈ(t))` by quadrature.
pub fn lifting_modular(system: &Evolution, t: f64, s: f64) -> Result<f64> {
    let bases = &*system.bases;
    let elastic = system.lifting.elastic(&bases.mesh, &bases.elasticity, &system.qp, t);
    let mut acc = 0.0;
    for q in 0..system.qp.len() {
        let e = system.qp.element_of(q);
        let r = s * elastic.stress_dev_tensor(e).norm();
        acc += system.qp.weights[q] * system.m.radial(system.qp.points[q], r)?;
    }
    Ok(acc)
}

/// Energy budget `E(t) + c⟨M⟩ + ((2c−d)/2)⟨M*⟩ ≤ ∫_Q M(x,(2/d)T̃ᵈ) + E(0)`
/// with `d = min(1, c)` at every grid time. `initial_d_norm_sq` is
/// `‖εᵖ₀‖²_D`, which bounds `2E(0)` for every basis size.
pub fn energy_budget(traj: &Trajectory, system: &Evolution, c: f64, initial_d_norm_sq: f64) -> Result<EnergyReport> {
    let diag = &traj.diagnostics;
    if diag.is_empty() {
        return Err(Error::Input("trajectory carries no diagnostics".into()));
    }
    if !(c > 0.0) {
        return Err(Error::Input(format!("coercivity constant must be positive, got {c}")));
    }
    let d = c.min(1.0);
    let times: Vec<f64> = diag.iter().map(|s| s.t).collect();
    let lift: Vec<f64> = if system.lifting.is_static() {
        vec![lifting_modular(system, 0.0, 2.0 / d)?; times.len()]
    } else {
        times.iter().map(|t| lifting_modular(system, *t, 2.0 / d)).collect::<Result<_>>()?
    };
    let cum_lift = trapezoid(&times, |i| lift[i]);
    let cumulative_dissipation: Vec<f64> = diag
        .iter()
        .scan(0.0, |acc, s| {
            *acc += s.step_dissipation;
            Some(*acc)
        })
        .collect();
    let cumulative_m = trapezoid(&times, |i| diag[i].modular_m);
    let cumulative_mstar = trapezoid(&times, |i| diag[i].modular_mstar);
    let energy: Vec<f64> = diag.iter().map(|s| s.energy).collect();
    let e0 = energy[0];
    let lhs: Vec<f64> = (0..times.len())
        .map(|i| energy[i] + c * cumulative_m[i] + 0.5 * (2.0 * c - d) * cumulative_mstar[i])
        .collect();
    let rhs: Vec<f64> = cum_lift.iter().map(|l| l + e0).collect();
    let margins: Vec<f64> = rhs.iter().zip(&lhs).map(|(r, l)| r - l).collect();
    let min_margin = margins.iter().cloned().fold(f64::INFINITY, f64::min);
    let budget_constant = cum_lift.last().copied().unwrap_or(0.0) + 0.5 * initial_d_norm_sq;
    Ok(EnergyReport {
        times,
        energy,
        cumulative_dissipation,
        cumulative_m,
        cumulative_mstar,
        lhs,
        rhs,
        margins,
        c,
        d,
        budget_constant,
        min_margin,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyIdentity {
    /// `|E(T) − E(0) + ∫₀ᵀ ∫ G̃ : T|` with the trapezoid rule on sub-steps.
    pub global_residual: f64,
    /// Largest residual over single grid intervals.
    pub max_step_residual: f64,
}

pub fn energy_identity(traj: &Trajectory) -> EnergyIdentity {
    let d = &traj.diagnostics;
    let mut cum = 0.0;
    let mut max_step: f64 = 0.0;
    for w in d.windows(2) {
        let step = w[1].step_dissipation;
        cum += step;
        max_step = max_step.max((w[1].energy - w[0].energy + step).abs());
    }
    let global = match (d.first(), d.last()) {
        (Some(a), Some(b)) => (b.energy - a.energy + cum).abs(),
        _ => 0.0,
    };
    EnergyIdentity { global_residual: global, max_step_residual: max_step }
}

/// Weight equal to one on `[0, τ)`, decreasing linearly to zero on
/// `[τ, τ+μ)`, zero afterwards.
pub fn psi(t: f64, mu: f64, tau: f64) -> f64 {
    if t < tau {
        1.0
    } else if t < tau + mu {
        1.0 - (t - tau) / mu
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PsiProbe {
    /// `∫₀ᵀ ψ ∫ G̃ : Tᵈ`.
    pub lhs: f64,
    /// `(1/μ) ∫_τ^{τ+μ} E`.
    pub energy_average: f64,
    pub initial_energy: f64,
    /// `|lhs − (E(0) − energy_average)|`.
    pub defect: f64,
}

fn interp(diag: &[PathPoint], t: f64, f: impl Fn(&PathPoint) -> f64) -> f64 {
    let i = diag.partition_point(|s| s.t <= t).clamp(1, diag.len() - 1);
    let (a, b) = (&diag[i - 1], &diag[i]);
    if b.t == a.t {
        return f(b);
    }
    let s = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
    f(a) + s * (f(b) - f(a))
}

pub fn psi_probe(traj: &Trajectory, mu: f64, tau: f64) -> Result<PsiProbe> {
    let d = &traj.path;
    let t_end = d.last().map(|s| s.t).unwrap_or(0.0);
    if !(mu > 0.0 && tau >= 0.0) || tau + mu > t_end * (1.0 + 1e-12) {
        return Err(Error::Input(format!("ψ-probe needs μ > 0, τ ≥ 0 and τ + μ ≤ T = {t_end} (got μ={mu}, τ={tau})")));
    }
    let mut ts: Vec<f64> = d.iter().map(|s| s.t).collect();
    for extra in [tau, tau + mu] {
        if !ts.iter().any(|t| (t - extra).abs() <= 1e-12 * (1.0 + t_end)) {
            ts.push(extra);
        }
    }
    ts.sort_by(f64::total_cmp);
    let rate: Vec<f64> = ts.iter().map(|t| interp(d, *t, |s| s.dissipation)).collect();
    let energy: Vec<f64> = ts.iter().map(|t| interp(d, *t, |s| s.energy)).collect();
    let lhs = *trapezoid(&ts, |i| psi(ts[i], mu, tau) * rate[i]).last().unwrap();
    let weight = |t: f64| if t >= tau - 1e-12 && t <= tau + mu + 1e-12 { 1.0 } else { 0.0 };
    let mut avg = 0.0;
    for i in 1..ts.len() {
        let mid = 0.5 * (ts[i] + ts[i - 1]);
        if weight(mid) > 0.0 {
            avg += 0.5 * (ts[i] - ts[i - 1]) * (energy[i] + energy[i - 1]);
        }
    }
    let energy_average = avg / mu;
    let initial_energy = d[0].energy;
    Ok(PsiProbe { lhs, energy_average, initial_energy, defect: (lhs - (initial_energy - energy_average)).abs() })
}

#[derive(Debug, Clone, Serialize)]
pub struct OrliczAudit {
    /// `∫_Q M(x, T̃ᵈ + Tᵈ)` and `∫_Q M*(x, G̃)`.
    pub modular_m: f64,
    pub modular_mstar: f64,
    /// `∫_Q |G̃ : (T̃ᵈ + Tᵈ)|`.
    pub product_l1: f64,
    /// `∫_Q |G̃|²`.
    pub g_l2_squared: f64,
    /// Smallest per-step `⟨M⟩ + ⟨M*⟩ − ∫|G̃ : (T̃ᵈ+Tᵈ)|`.
    pub min_fenchel_young_slack: f64,
    /// Whether `⟨M*(G̃)⟩ ≤ ⟨|G̃|²⟩` held at every step (reported only).
    pub quadratic_dominated: bool,
}

impl OrliczAudit {
    pub fn passed(&self) -> bool {
        self.min_fenchel_young_slack >= -1e-10 * (1.0 + self.modular_m + self.modular_mstar)
    }
}

pub fn audit_orlicz(traj: &Trajectory) -> OrliczAudit {
    let d = &traj.diagnostics;
    let times: Vec<f64> = d.iter().map(|s| s.t).collect();
    let last = |f: &dyn Fn(usize) -> f64| *trapezoid(&times, f).last().unwrap_or(&0.0);
    let mut slack = f64::INFINITY;
    let mut quadratic = true;
    for s in d {
        slack = slack.min(s.modular_m + s.modular_mstar - s.product_l1);
        quadratic &= s.modular_mstar <= s.g_l2_squared * (1.0 + 1e-12) + 1e-300;
    }
    OrliczAudit {
        modular_m: last(&|i| d[i].modular_m),
        modular_mstar: last(&|i| d[i].modular_mstar),
        product_l1: last(&|i| d[i].product_l1),
        g_l2_squared: last(&|i| d[i].g_l2_squared),
        min_fenchel_young_slack: if d.is_empty() { 0.0 } else { slack },
        quadratic_dominated: quadratic,
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TemperatureReport {
    pub sup_l1: f64,
    pub sup_l2: f64,
    /// `∫₀ᵀ ‖∇θ‖²`.
    pub grad_l2_squared: f64,
    pub min_dissipation: f64,
    pub max_equilibrium_ratio: f64,
}

pub fn temperature_report(traj: &Trajectory) -> TemperatureReport {
    let d = &traj.diagnostics;
    let times: Vec<f64> = d.iter().map(|s| s.t).collect();
    TemperatureReport {
        sup_l1: d.iter().map(|s| s.theta_l1).fold(0.0, f64::max),
        sup_l2: d.iter().map(|s| s.theta_l2_squared.sqrt()).fold(0.0, f64::max),
        grad_l2_squared: *trapezoid(&times, |i| d[i].theta_grad_squared).last().unwrap_or(&0.0),
        min_dissipation: d.iter().map(|s| s.work).fold(f64::INFINITY, f64::min),
        max_equilibrium_ratio: d.iter().map(|s| s.equilibrium / (1.0 + s.stress_l2)).fold(0.0, f64::max),
    }
}

/// `‖εᵖ₀‖²_D` of an element-wise constant field.
pub fn d_norm_squared(bases: &GalerkinBases, field: &StrainField) -> f64 {
    crate::discretization::d_inner(&bases.mesh, &bases.elasticity, field, field)
}

/// Traceless check used by reports of `G̃`.
pub fn is_traceless(t: &SymTensor3) -> bool {
    t.trace().abs() <= 1e-12 * (1.0 + t.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::StepDiagnostics;

    fn trajectory(states: Vec<State>, diagnostics: Vec<StepDiagnostics>) -> Trajectory {
        let path = diagnostics.iter().map(|d| PathPoint { t: d.t, energy: d.energy, dissipation: d.dissipation }).collect();
        Trajectory { states, diagnostics, path, failure: None }
    }

    fn synthetic(n: usize, dt: f64) -> Trajectory {
        // E(t) = e^{-2t}/2 with dissipation rate e^{-2t}.
        let diagnostics = (0..=n)
            .map(|i| {
                let t = i as f64 * dt;
                let step_dissipation = if i == 0 { 0.0 } else { 0.5 * dt * ((-2.0 * t).exp() + (-2.0 * (t - dt)).exp()) };
                StepDiagnostics { t, energy: 0.5 * (-2.0 * t).exp(), dissipation: (-2.0 * t).exp(), step_dissipation, ..Default::default() }
            })
            .collect();
        trajectory(vec![State::zero(0, 0)], diagnostics)
    }

    #[test]
    fn psi_shape() {
        assert_eq!(psi(0.0, 0.2, 0.5), 1.0);
        assert!((psi(0.6, 0.2, 0.5) - 0.5).abs() < 1e-12);
        assert_eq!(psi(0.8, 0.2, 0.5), 0.0);
    }

    #[test]
    fn identity_residual_is_second_order() {
        let a = energy_identity(&synthetic(20, 0.05)).global_residual;
        let b = energy_identity(&synthetic(40, 0.025)).global_residual;
        let rate = (a / b).log2();
        assert!((rate - 2.0).abs() < 0.1, "{rate}");
    }

    #[test]
    fn probe_defect_shrinks() {
        let a = psi_probe(&synthetic(20, 0.05), 0.2, 0.4).unwrap().defect;
        let b = psi_probe(&synthetic(40, 0.025), 0.2, 0.4).unwrap().defect;
        assert!(b < a / 3.0);
        assert!(psi_probe(&synthetic(20, 0.05), 0.8, 0.4).is_err());
    }

    #[test]
    fn probe_without_flow_is_trivial() {
        let diagnostics = (0..=10)
            .map(|i| StepDiagnostics { t: 0.1 * i as f64, energy: 0.7, ..Default::default() })
            .collect();
        let traj = trajectory(vec![], diagnostics);
        let p = psi_probe(&traj, 0.3, 0.2).unwrap();
        assert_eq!(p.lhs, 0.0);
        assert!((p.energy_average - 0.7).abs() < 1e-14);
        assert!(p.defect < 1e-14);
    }

    #[test]
    fn zero_trajectory_audits_are_zero() {
        let diagnostics = (0..=3).map(|i| StepDiagnostics { t: i as f64, ..Default::default() }).collect();
        let traj = trajectory(vec![], diagnostics);
        let a = audit_orlicz(&traj);
        assert_eq!((a.modular_m, a.modular_mstar, a.product_l1), (0.0, 0.0, 0.0));
        assert!(a.passed());
    }
}
