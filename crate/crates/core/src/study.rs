//! Run orchestration: single runs, refinement sweeps, the renormalization
//! study and basis dumps, each producing check records and files.

use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::constitutive::{check_coercivity, check_monotonicity, SampleSpace};
use crate::diagnostics::{
    audit_orlicz, d_norm_squared, energy_budget, energy_identity, psi_probe, temperature_report, Check, EnergyIdentity,
    EnergyReport, OrliczAudit, PsiProbe, TemperatureReport,
};
use crate::discretization::{ElasticityTensor, GalerkinBases, GramReport};
use crate::error::{Error, Result};
use crate::evolution::{initial_state, integrate, reconstruct, time_grid, Evolution, State, Trajectory};
use crate::lifting::Lifting;
use crate::mesh::{Mesh, TriangleRule};
use crate::orlicz::{check_n_function, complementary, fenchel_young_gap, random_unit_tensor, RadialGrid};
use crate::output::{num, plot_script, vtk, write_atomic, write_json, Csv, VtkData};
use crate::renormheat::{self, HeatProblem, RenormStudy, StudyOptions};
use crate::scenario::{Axis, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CheckSet {
    All,
    Energy,
    Orlicz,
    Renorm,
}

impl FromStr for CheckSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(CheckSet::All),
            "energy" => Ok(CheckSet::Energy),
            "orlicz" => Ok(CheckSet::Orlicz),
            "renorm" => Ok(CheckSet::Renorm),
            other => Err(Error::Input(format!("unknown check set '{other}' (expected all, energy, orlicz or renorm)"))),
        }
    }
}

impl CheckSet {
    pub fn energy(self) -> bool {
        matches!(self, CheckSet::All | CheckSet::Energy)
    }
    pub fn orlicz(self) -> bool {
        matches!(self, CheckSet::All | CheckSet::Orlicz)
    }
    pub fn renorm(self) -> bool {
        matches!(self, CheckSet::All | CheckSet::Renorm)
    }
}

/// Discretization parameters of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunPoint {
    pub k: usize,
    pub l: usize,
    pub truncation: f64,
    pub dt: f64,
}

impl RunPoint {
    pub fn of(scenario: &Scenario) -> Self {
        let d = &scenario.discretization;
        RunPoint { k: d.k, l: d.l, truncation: d.truncation, dt: d.dt }
    }

    pub fn label(&self, axis: Axis) -> String {
        match axis {
            Axis::Kl => format!("kl_{}_{}", self.k, self.l),
            Axis::Dt => format!("dt_{}", num(self.dt)),
            Axis::K => format!("K_{}", num(self.truncation)),
        }
    }
}

/// Everything needed to integrate one run point.
pub struct Prepared {
    pub mesh: Arc<Mesh>,
    pub elasticity: Arc<ElasticityTensor>,
    pub system: Evolution,
    pub times: Vec<f64>,
    pub initial: State,
    /// `‖εᵖ₀‖²_D` of the configured initial strain.
    pub initial_d_norm_sq: f64,
}

pub fn prepare(scenario: &Scenario, point: RunPoint) -> Result<Prepared> {
    let mesh = scenario.build_mesh()?;
    let elasticity = scenario.elasticity(&mesh)?;
    let bases = Arc::new(GalerkinBases::build(mesh.clone(), elasticity.clone(), point.k, point.l, scenario.eigen_options())?);
    let qp = mesh.quad_points(&TriangleRule::of_degree(scenario.discretization.quadrature_degree)?);
    let m = scenario.n_function(&mesh)?;
    let mstar = complementary(&m, &RadialGrid::logarithmic(1e-8, 1e8, scenario.discretization.legendre_points)?)?;
    let model = scenario.g_model(&mesh)?;
    let times = time_grid(point.dt, scenario.discretization.t_final)?;
    let lifting = Lifting::build(&mesh, &elasticity, &qp, scenario.loads.clone(), &times)?;
    let eps_p0 = scenario.initial_plastic_strain(&mesh, &qp);
    let theta0 = scenario.initial_theta(&mesh);
    let mut system = Evolution::new(bases.clone(), model, m, mstar, lifting, qp, point.truncation)?;
    system.step_control = scenario.discretization.step_control;
    let initial = initial_state(&theta0, &eps_p0, &bases, point.truncation)?;
    let initial_d_norm_sq = d_norm_squared(&bases, &eps_p0);
    Ok(Prepared { mesh, elasticity, system, times, initial, initial_d_norm_sq })
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub point: RunPoint,
    pub coercivity: f64,
    pub complete: bool,
    pub failure: Option<String>,
    pub final_energy: f64,
    pub energy: Option<EnergyReport>,
    pub identity: EnergyIdentity,
    pub probe: Option<PsiProbe>,
    pub audit: OrliczAudit,
    pub temperature: TemperatureReport,
    pub checks: Vec<Check>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub struct RunOutcome {
    pub prepared: Prepared,
    pub trajectory: Trajectory,
    pub gram: GramReport,
    pub report: RunReport,
}

fn identity_tolerance(traj: &Trajectory) -> f64 {
    let d = &traj.diagnostics;
    let e0 = d.first().map(|s| s.energy).unwrap_or(0.0);
    let diss: f64 = d.windows(2).map(|w| 0.5 * (w[1].t - w[0].t) * (w[0].dissipation.abs() + w[1].dissipation.abs())).sum();
    // Both the integrator and the trapezoid rule are second order in dt.
    let dt_max = d.windows(2).map(|w| w[1].t - w[0].t).fold(0.0, f64::max);
    (1e-3 + dt_max * dt_max) * (e0 + diss) + 1e-12
}

fn constitutive_checks(scenario: &Scenario, prepared: &Prepared, samples: usize) -> Result<Vec<Check>> {
    let mesh = &prepared.mesh;
    let sys = &prepared.system;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.study.seed);
    let space = SampleSpace::new(mesh.nodes.clone());
    let (_, p_hi) = sys.model.exponent().bounds();
    let (_, phi_hi) = sys.model.phi_bounds();
    let scale = 1.0 + sys.model.scale() * phi_hi * (2.0 * space.max_norm).powf(p_hi);
    let mono = check_monotonicity(&sys.model, &space, samples, &mut rng)?;
    let thetas = [-1.0, 0.0, 1.0, 5.0, 10.0];
    let coer = check_coercivity(&sys.model, &sys.m, &sys.mstar, &space, &thetas, samples.div_ceil(thetas.len()), &mut rng)?;
    let tensors: Vec<_> = (0..64).map(|i| random_unit_tensor(&mut rng) * (0.05 * (i + 1) as f64)).collect();
    let nf = check_n_function(&sys.m, &mesh.nodes, &tensors)?;
    let mut fy = f64::INFINITY;
    for _ in 0..samples {
        let x = mesh.nodes[rand::Rng::gen_range(&mut rng, 0..mesh.nodes.len())];
        let a = random_unit_tensor(&mut rng) * (4.0 * rand::Rng::gen::<f64>(&mut rng));
        let b = random_unit_tensor(&mut rng) * (4.0 * rand::Rng::gen::<f64>(&mut rng));
        fy = fy.min(fenchel_young_gap(&sys.m, &sys.mstar, x, &a, &b)?);
    }
    let declared = coer.declared.unwrap_or(f64::NAN);
    Ok(vec![
        Check::new("constitutive_monotonicity", "monotone constitutive law", vec![("min_gap", mono), ("scale", scale)], mono + 1e-12 * scale, mono >= -1e-12 * scale),
        Check::new(
            "constitutive_coercivity",
            "coercivity against the modulars",
            vec![("sampled_inf", coer.sampled_inf), ("declared", declared), ("min_dissipation", coer.min_dissipation)],
            coer.sampled_inf - declared,
            coer.passed(),
        ),
        Check::new("orlicz_n_function", "N-function axioms", vec![("all", nf.all() as u8 as f64)], 0.0, nf.all()),
        Check::new("orlicz_fenchel_young_samples", "Fenchel-Young inequality", vec![("min_gap", fy)], fy + 1e-10, fy >= -1e-10),
    ])
}

pub fn run_point(scenario: &Scenario, point: RunPoint, checks: CheckSet) -> Result<RunOutcome> {
    let prepared = prepare(scenario, point)?;
    let sys = &prepared.system;
    let trajectory = integrate(sys, prepared.initial.clone(), &prepared.times, scenario.discretization.output_stride);
    let gram = sys.bases.gram_report();
    let c = sys.model.declared_coercivity().unwrap_or(f64::NAN);
    let energy = energy_budget(&trajectory, sys, c, prepared.initial_d_norm_sq).ok();
    let identity = energy_identity(&trajectory);
    let t_end = *prepared.times.last().unwrap();
    let probe = if t_end > 0.0 { psi_probe(&trajectory, scenario.study.psi_mu, scenario.study.psi_tau).ok() } else { None };
    let audit = audit_orlicz(&trajectory);
    let temperature = temperature_report(&trajectory);

    let mut list = vec![Check::new(
        "integration_complete",
        "time integration reached the final time",
        vec![("steps", trajectory.diagnostics.len() as f64)],
        0.0,
        trajectory.is_complete(),
    )];
    if checks.energy() {
        let tol = identity_tolerance(&trajectory);
        let eq = temperature.max_equilibrium_ratio;
        list.push(Check::new("basis_gram", "orthonormality of the Galerkin bases", vec![("max_defect", gram.max())], 1e-8 - gram.max(), gram.max() <= 1e-8));
        list.push(Check::new("discrete_equilibrium", "Galerkin momentum balance", vec![("max_ratio", eq)], 1e-10 - eq, eq <= 1e-10));
        match &energy {
            Some(e) => list.push(Check::new(
                "energy_budget",
                "energy inequality with a basis-independent constant",
                vec![("min_margin", e.min_margin), ("budget_constant", e.budget_constant), ("c", e.c)],
                e.min_margin,
                e.passed(),
            )),
            None => list.push(Check::new("energy_budget", "energy inequality with a basis-independent constant", vec![], f64::NAN, false)),
        }
        list.push(Check::new(
            "energy_identity",
            "energy dissipation identity",
            vec![("global_residual", identity.global_residual), ("max_step_residual", identity.max_step_residual), ("tolerance", tol)],
            tol - identity.global_residual,
            identity.global_residual <= tol,
        ));
        if let Some(p) = &probe {
            list.push(Check::new(
                "psi_probe",
                "weighted limiting energy inequality",
                vec![("lhs", p.lhs), ("energy_average", p.energy_average), ("defect", p.defect), ("tolerance", tol)],
                tol - p.defect,
                p.defect <= tol,
            ));
        }
        list.push(Check::new(
            "temperature_bounds",
            "temperature bounded in sup-L1",
            vec![("sup_l1", temperature.sup_l1), ("sup_l2", temperature.sup_l2), ("grad_l2_squared", temperature.grad_l2_squared)],
            0.0,
            temperature.sup_l1.is_finite() && temperature.grad_l2_squared.is_finite(),
        ));
    }
    if checks.orlicz() {
        list.push(Check::new(
            "orlicz_fenchel_young_audit",
            "product bounded by the modular sum",
            vec![("modular_m", audit.modular_m), ("modular_mstar", audit.modular_mstar), ("product_l1", audit.product_l1)],
            audit.min_fenchel_young_slack,
            audit.passed(),
        ));
        // Recorded only: the quadratic bound is a sampling gate on M*, not
        // a property every trajectory must have.
        list.push(Check::new(
            "orlicz_quadratic_domination",
            "M* of the flow against its squared L2 norm (informational)",
            vec![("dominated", audit.quadratic_dominated as u8 as f64), ("mstar", audit.modular_mstar), ("g_l2_squared", audit.g_l2_squared)],
            audit.g_l2_squared - audit.modular_mstar,
            true,
        ));
        list.extend(constitutive_checks(scenario, &prepared, scenario.study.samples)?);
    }
    let final_energy = trajectory.diagnostics.last().map(|d| d.energy).unwrap_or(0.0);
    let report = RunReport {
        scenario: scenario.name.clone(),
        point,
        coercivity: c,
        complete: trajectory.is_complete(),
        failure: trajectory.failure.clone(),
        final_energy,
        energy,
        identity,
        probe,
        audit,
        temperature,
        checks: list,
    };
    Ok(RunOutcome { prepared, trajectory, gram, report })
}

pub const DIAGNOSTIC_COLUMNS: [&str; 15] = [
    "t",
    "energy",
    "dissipation",
    "work",
    "modular_m",
    "modular_mstar",
    "g_l2_squared",
    "product_l1",
    "theta_l1",
    "theta_l2_squared",
    "theta_grad_squared",
    "equilibrium",
    "stress_l2",
    "source_ratio",
    "substeps",
];

pub fn diagnostics_csv(traj: &Trajectory) -> Csv {
    let mut csv = Csv::new(&DIAGNOSTIC_COLUMNS);
    for d in &traj.diagnostics {
        csv.numbers(&[
            d.t,
            d.energy,
            d.dissipation,
            d.work,
            d.modular_m,
            d.modular_mstar,
            d.g_l2_squared,
            d.product_l1,
            d.theta_l1,
            d.theta_l2_squared,
            d.theta_grad_squared,
            d.equilibrium,
            d.stress_l2,
            d.source_ratio,
            d.substeps as f64,
        ]);
    }
    csv
}

pub fn energy_csv(e: &EnergyReport) -> Csv {
    let mut csv = Csv::new(&["t", "energy", "cumulative_dissipation", "cumulative_m", "cumulative_mstar", "lhs", "rhs", "margin", "budget_constant"]);
    for i in 0..e.times.len() {
        csv.numbers(&[
            e.times[i],
            e.energy[i],
            e.cumulative_dissipation[i],
            e.cumulative_m[i],
            e.cumulative_mstar[i],
            e.lhs[i],
            e.rhs[i],
            e.margins[i],
            e.budget_constant,
        ]);
    }
    csv
}

pub fn states_csv(traj: &Trajectory) -> Csv {
    let s0 = &traj.states[0];
    let mut header = vec!["t".to_string()];
    header.extend((1..=s0.gamma.len()).map(|i| format!("gamma_{i}")));
    header.extend((1..=s0.delta.len()).map(|i| format!("delta_{i}")));
    header.extend((1..=s0.beta.len()).map(|i| format!("beta_{i}")));
    let refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut csv = Csv::new(&refs);
    for s in &traj.states {
        let mut row = vec![s.t];
        row.extend(&s.gamma);
        row.extend(&s.delta);
        row.extend(&s.beta);
        csv.numbers(&row);
    }
    csv
}

pub fn checks_csv(checks: &[Check]) -> Csv {
    let mut csv = Csv::new(&["name", "pass", "margin", "values"]);
    for c in checks {
        let values: Vec<String> = c.values.iter().map(|(k, v)| format!("{k}={}", num(*v))).collect();
        csv.row([c.name.clone(), c.pass.to_string(), num(c.margin), values.join(";")]);
    }
    csv
}

/// Writes every artifact of a run into `dir`.
pub fn write_run(dir: &Path, outcome: &RunOutcome) -> Result<()> {
    diagnostics_csv(&outcome.trajectory).write(&dir.join("diagnostics.csv"))?;
    states_csv(&outcome.trajectory).write(&dir.join("states.csv"))?;
    checks_csv(&outcome.report.checks).write(&dir.join("checks.csv"))?;
    if let Some(e) = &outcome.report.energy {
        energy_csv(e).write(&dir.join("energy.csv"))?;
    }
    let bases = &outcome.prepared.system.bases;
    let system = &outcome.prepared.system;
    for (i, state) in outcome.trajectory.states.iter().enumerate() {
        let f = reconstruct(state, bases);
        let mut theta = system.lifting.theta(state.t).into_owned();
        for (o, v) in theta.iter_mut().zip(&f.theta) {
            *o += v;
        }
        let text = vtk(
            &outcome.prepared.mesh,
            &format!("{} t={}", outcome.report.scenario, num(state.t)),
            &[
                VtkData::PointScalar("theta", &theta),
                VtkData::PointVector("u", &f.u),
                VtkData::CellTensor("eps_p", &f.eps_p),
                VtkData::CellTensor("stress", &f.stress),
            ],
        );
        write_atomic(&dir.join(format!("fields_{i:04}.vtk")), text.as_bytes())?;
    }
    write_json(&dir.join("report.json"), &outcome.report)?;
    let script = plot_script(&[
        ("diagnostics.csv", "t", &["energy", "dissipation", "theta_l1"]),
        ("energy.csv", "t", &["lhs", "rhs", "margin"]),
    ]);
    write_atomic(&dir.join("plots.gp"), script.as_bytes())
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub axis: Axis,
    pub points: Vec<RunPoint>,
    pub final_energy: Vec<f64>,
    /// `|E_final(i) − E_final(i−1)|`, undefined for the first point.
    pub indicator: Vec<Option<f64>>,
    pub budget_constants: Vec<f64>,
    pub passed: Vec<bool>,
    pub checks: Vec<Check>,
}

impl SweepSummary {
    pub fn passed(&self) -> bool {
        self.passed.iter().all(|p| *p) && self.checks.iter().all(|c| c.pass)
    }

    pub fn indicator_monotone(&self) -> bool {
        let v: Vec<f64> = self.indicator.iter().flatten().copied().collect();
        v.windows(2).all(|w| w[1] <= w[0])
    }
}

pub fn sweep_points(scenario: &Scenario, axis: Axis) -> Vec<RunPoint> {
    let base = RunPoint::of(scenario);
    let s = &scenario.study;
    match axis {
        Axis::Kl => s.kl.iter().map(|(k, l)| RunPoint { k: *k, l: *l, ..base }).collect(),
        Axis::Dt => s.dt.iter().map(|dt| RunPoint { dt: *dt, ..base }).collect(),
        Axis::K => s.truncation.iter().map(|k| RunPoint { truncation: *k, ..base }).collect(),
    }
}

/// Runs every point of the sweep in a bounded pool, writing one
/// subdirectory per point and `summary.csv`.
pub fn sweep(scenario: &Scenario, axis: Axis, checks: CheckSet, out: Option<&Path>) -> Result<SweepSummary> {
    let points = sweep_points(scenario, axis);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(scenario.study.workers)
        .build()
        .map_err(|e| Error::Numeric(format!("cannot start worker pool: {e}")))?;
    let reports: Vec<RunReport> = pool.install(|| {
        points
            .par_iter()
            .map(|p| {
                let outcome = run_point(scenario, *p, checks)?;
                if let Some(dir) = out {
                    write_run(&dir.join(p.label(axis)), &outcome)?;
                }
                Ok(outcome.report)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let final_energy: Vec<f64> = reports.iter().map(|r| r.final_energy).collect();
    let indicator: Vec<Option<f64>> =
        (0..final_energy.len()).map(|i| (i > 0).then(|| (final_energy[i] - final_energy[i - 1]).abs())).collect();
    let budget_constants: Vec<f64> = reports.iter().map(|r| r.energy.as_ref().map(|e| e.budget_constant).unwrap_or(f64::NAN)).collect();
    let mut summary_checks = vec![];
    if axis == Axis::Kl && checks.energy() {
        let c0 = budget_constants[0];
        let spread = budget_constants.iter().map(|c| (c - c0).abs()).fold(0.0, f64::max);
        let uniform = spread <= 1e-9 * (1.0 + c0.abs());
        let bounded = reports.iter().all(|r| r.energy.as_ref().is_some_and(|e| e.lhs.iter().all(|l| *l <= c0 * (1.0 + 1e-12) + 1e-14)));
        summary_checks.push(Check::new(
            "budget_constant_uniform",
            "one energy constant for every basis size",
            vec![("constant", c0), ("spread", spread)],
            1e-9 * (1.0 + c0.abs()) - spread,
            uniform && bounded,
        ));
    }
    let summary = SweepSummary {
        axis,
        points: points.clone(),
        final_energy,
        indicator,
        budget_constants,
        passed: reports.iter().map(|r| r.passed()).collect(),
        checks: summary_checks,
    };
    if let Some(dir) = out {
        let mut csv = Csv::new(&[
            "point", "k", "l", "K", "dt", "final_energy", "energy_indicator", "min_margin", "budget_constant", "identity_residual", "theta_sup_l1", "pass",
        ]);
        for (i, r) in reports.iter().enumerate() {
            let p = &points[i];
            csv.row([
                p.label(axis),
                p.k.to_string(),
                p.l.to_string(),
                num(p.truncation),
                num(p.dt),
                num(r.final_energy),
                summary.indicator[i].map(num).unwrap_or_default(),
                num(r.energy.as_ref().map(|e| e.min_margin).unwrap_or(f64::NAN)),
                num(summary.budget_constants[i]),
                num(r.identity.global_residual),
                num(r.temperature.sup_l1),
                r.passed().to_string(),
            ]);
        }
        csv.write(&dir.join("summary.csv"))?;
        write_json(&dir.join("summary.json"), &summary)?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct RenormReport {
    pub study: RenormStudy,
    pub comparison_gap: f64,
    pub checks: Vec<Check>,
}

impl RenormReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub fn renorm_problem(scenario: &Scenario) -> Result<HeatProblem> {
    let r = &scenario.renormheat;
    let mesh = Arc::new(Mesh::build(r.mesh.lx, r.mesh.ly, r.mesh.nx, r.mesh.ny)?);
    HeatProblem::singular(mesh, r.center, r.exponent, time_grid(r.dt, r.t_final)?)
}

pub fn renorm_run(scenario: &Scenario, out: Option<&Path>) -> Result<RenormReport> {
    let r = &scenario.renormheat;
    let problem = renorm_problem(scenario)?;
    let opts = StudyOptions { eps: r.eps.clone(), clamps: r.clamps.clone(), tail_levels: r.tail_levels.clone(), tail_c: r.tail_c };
    let study = renormheat::renorm_study(&problem, &opts)?;

    // Ordered pair: a larger source and a larger initial temperature.
    let base_source = problem.source.clone();
    let upper = HeatProblem::new(
        problem.mesh.clone(),
        Arc::new(move |p, t| base_source(p, t) + 1.0),
        Arc::new(|p| (3.0 * p[0]).sin().abs()),
        problem.times.clone(),
    )?;
    let finest = r.eps.iter().cloned().fold(f64::INFINITY, f64::min);
    let gap = renormheat::comparison(&problem, &upper, Some(finest))?;

    let decay = study.tail_decay();
    let energy_ok = study.energy.iter().all(|e| e.passed());
    let worst_energy = study.energy.iter().map(|e| e.bound - e.max_lhs).fold(f64::INFINITY, f64::min);
    let cauchy_margin = study.cauchy.iter().map(|c| c.data_distance - c.distance).fold(f64::INFINITY, f64::min);
    let checks = vec![
        Check::new("renorm_tail_decay", "truncation tail vanishes at high levels", vec![("ratio", decay)], 0.1 - decay, decay <= 0.1),
        Check::new("renorm_tail_monotone", "truncation tail nonincreasing in K", vec![], 0.0, study.tail_monotone()),
        Check::new("renorm_residual_monotone", "renormalized residual decreasing in ε", vec![], 0.0, study.residual_monotone()),
        Check::new("renorm_cauchy", "Cauchy sequence in C([0,T];L1)", vec![("min_margin", cauchy_margin)], cauchy_margin, study.cauchy_holds()),
        Check::new("renorm_truncation_energy", "energy bound for truncations", vec![("min_margin", worst_energy)], worst_energy, energy_ok),
        Check::new("renorm_comparison", "comparison principle", vec![("min_gap", gap)], gap + 1e-8, gap >= -1e-8),
    ];
    let report = RenormReport { study, comparison_gap: gap, checks };
    if let Some(dir) = out {
        let mut tail = Csv::new(&["K", "tail"]);
        for (k, t) in &report.study.tails {
            tail.numbers(&[*k, *t]);
        }
        tail.write(&dir.join("tail.csv"))?;
        let mut res = Csv::new(&["eps", "M_S", "residual"]);
        for row in &report.study.residuals {
            res.numbers(&[row.eps, row.clamp, row.residual]);
        }
        res.write(&dir.join("residual.csv"))?;
        let mut cau = Csv::new(&["eps", "eta", "distance", "data_distance"]);
        for row in &report.study.cauchy {
            cau.numbers(&[row.eps, row.eta, row.distance, row.data_distance]);
        }
        cau.write(&dir.join("cauchy.csv"))?;
        checks_csv(&report.checks).write(&dir.join("checks.csv"))?;
        write_json(&dir.join("report.json"), &report)?;
        let script = plot_script(&[("tail.csv", "K", &["tail"]), ("residual.csv", "eps", &["residual"])]);
        write_atomic(&dir.join("plots.gp"), script.as_bytes())?;
    }
    Ok(report)
}

/// Writes the eigenvalues, residuals and Gram defects of the bases, and the
/// modes themselves as VTK fields.
pub fn dump_basis(scenario: &Scenario, dir: &Path) -> Result<GramReport> {
    let mesh = scenario.build_mesh()?;
    let d = scenario.elasticity(&mesh)?;
    let p = RunPoint::of(scenario);
    let bases = GalerkinBases::build(mesh.clone(), d, p.k, p.l, scenario.eigen_options())?;
    let mut csv = Csv::new(&["family", "index", "eigenvalue", "residual"]);
    for (i, (v, r)) in bases.temperature.values.iter().zip(&bases.temperature.residuals).enumerate() {
        csv.row(["neumann".into(), (i + 1).to_string(), num(*v), num(*r)]);
    }
    for (i, (v, r)) in bases.displacement.values.iter().zip(&bases.displacement.residuals).enumerate() {
        csv.row(["elastic".into(), (i + 1).to_string(), num(*v), num(*r)]);
    }
    csv.write(&dir.join("eigenvalues.csv"))?;
    let gram = bases.gram_report();
    write_json(&dir.join("gram.json"), &gram)?;

    let scalars: Vec<(String, Vec<f64>)> =
        (0..bases.l()).map(|m| (format!("v_{}", m + 1), bases.temperature.modes.column(m).iter().copied().collect())).collect();
    let vectors: Vec<(String, Vec<f64>)> =
        (0..bases.k()).map(|n| (format!("w_{}", n + 1), bases.displacement.modes.column(n).iter().copied().collect())).collect();
    let tensors: Vec<(String, _)> = bases.complement.modes.iter().enumerate().map(|(m, z)| (format!("zeta_{}", m + 1), z.clone())).collect();
    let mut data: Vec<VtkData<'_>> = scalars.iter().map(|(n, v)| VtkData::PointScalar(n, v)).collect();
    data.extend(vectors.iter().map(|(n, v)| VtkData::PointVector(n, v)));
    data.extend(tensors.iter().map(|(n, z)| VtkData::CellTensor(n, z)));
    write_atomic(&dir.join("basis.vtk"), vtk(&mesh, &format!("{} bases", scenario.name), &data).as_bytes())?;
    Ok(gram)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ZERO: &str = r#"
name = "zero"
[mesh]
lx = 1.0
ly = 1.0
nx = 4
ny = 4
[discretization]
k = 2
l = 2
dt = 0.1
t_final = 0.5
[study]
samples = 200
"#;

    #[test]
    fn zero_scenario_passes_everything() {
        let s: Scenario = ZERO.parse().unwrap();
        let out = run_point(&s, RunPoint::of(&s), CheckSet::Energy).unwrap();
        for c in &out.report.checks {
            assert!(c.pass, "{c:?}");
        }
        assert_eq!(out.report.final_energy, 0.0);
    }

    #[test]
    fn check_set_parsing() {
        assert_eq!("renorm".parse::<CheckSet>().unwrap(), CheckSet::Renorm);
        assert!("bogus".parse::<CheckSet>().is_err());
    }
}
