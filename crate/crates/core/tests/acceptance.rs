//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Positional arguments select criteria by
//! number (`cargo test --test acceptance -- 3 7`).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thermovisco::constitutive::{check_coercivity, check_monotonicity, GModel, SampleSpace};
use thermovisco::discretization::{neumann_eigenbasis, GalerkinBases};
use thermovisco::evolution::time_grid;
use thermovisco::expr::Expr;
use thermovisco::linalg::EigenOptions;
use thermovisco::mesh::{Mesh, TriangleRule};
use thermovisco::orlicz::{
    complementary, conjugate_exponent, fenchel_young_gap, legendre_table, luxemburg_norm, random_unit_tensor, NFunction,
    RadialGrid, SampledField,
};
use thermovisco::renormheat::{self, manufactured_error, HeatProblem, StudyOptions};
use thermovisco::scenario::{Axis, Scenario};
use thermovisco::study::{self, CheckSet, RunPoint};
use thermovisco::SymTensor3;

// Pinned tolerances.
const GRAM_TOL: f64 = 1e-8;
const RATE_TOL: f64 = 0.3;
const EQUILIBRIUM_TOL: f64 = 1e-10;
const IDENTITY_ABS_TOL: f64 = 1e-6;
const BUDGET_SPREAD_TOL: f64 = 1e-9;
const MONOTONE_TOL: f64 = 1e-12;
const COERCIVITY_ROUNDOFF: f64 = 1e-12;
const LEGENDRE_TOL: f64 = 1e-6;
const LUXEMBURG_TOL: f64 = 1e-8;
const FENCHEL_YOUNG_TOL: f64 = 1e-10;
const HEAT_RATE_REL: f64 = 0.15;
const TAIL_RATIO: f64 = 0.1;
const COMPARISON_TOL: f64 = 1e-8;
const CAUCHY_TOL: f64 = 1e-6;
const SAMPLES: usize = 10_000;

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

fn examples_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples")
}

fn load(name: &str) -> Scenario {
    Scenario::load(examples_dir().join(format!("{name}.cfg"))).expect("shipped scenario loads")
}

fn shipped() -> Vec<Scenario> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(examples_dir())
        .expect("examples directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
        .collect();
    paths.sort();
    paths.iter().map(|p| Scenario::load(p).expect("shipped scenario loads")).collect()
}

fn rate(coarse: f64, fine: f64, factor: f64) -> f64 {
    (coarse / fine).ln() / factor.ln()
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn within(value: f64, nominal: f64, tol: f64) -> bool {
    (value - nominal).abs() <= tol
}

fn basis_integrity() -> Outcome {
    let mut worst: f64 = 0.0;
    for s in shipped() {
        let mesh = s.build_mesh()?;
        let d = s.elasticity(&mesh)?;
        for (k, l) in [(s.discretization.k, s.discretization.l), (16, 16)] {
            let bases = GalerkinBases::build(mesh.clone(), d.clone(), k, l, s.eigen_options())?;
            worst = worst.max(bases.gram_report().max());
        }
    }
    // Unit square: nonzero Neumann eigenvalues π²(i² + j²) in increasing order.
    let exact: Vec<f64> = [1.0, 1.0, 2.0, 4.0, 4.0, 5.0, 5.0].iter().map(|v| v * PI * PI).collect();
    let mut errors = vec![];
    for n in [8, 16, 32] {
        let mesh = Mesh::build(1.0, 1.0, n, n)?;
        let basis = neumann_eigenbasis(&mesh, exact.len() + 1, EigenOptions::default())?;
        let err = basis.values[1..].iter().zip(&exact).map(|(a, b)| (a - b).abs() / b).fold(0.0, f64::max);
        errors.push(err);
    }
    let rates = [rate(errors[0], errors[1], 2.0), rate(errors[1], errors[2], 2.0)];
    let pass = worst <= GRAM_TOL && rates.iter().all(|r| within(*r, 2.0, RATE_TOL));
    Ok((pass, format!("max Gram defect {worst:.2e}; eigenvalue errors {}, rates {rates:.3?}", sci(&errors))))
}

fn discrete_equilibrium() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut names = vec![];
    for s in shipped() {
        let out = study::run_point(&s, RunPoint::of(&s), CheckSet::Energy)?;
        if !out.report.complete {
            return Ok((false, format!("{} did not complete", s.name)));
        }
        worst = worst.max(out.report.temperature.max_equilibrium_ratio);
        names.push(s.name.clone());
    }
    Ok((worst <= EQUILIBRIUM_TOL, format!("max |∫T:ε(w)|/(1+‖T‖) = {worst:.2e} over {}", names.join(", "))))
}

fn energy_identity() -> Outcome {
    let mut s = load("norton_hoff_p2");
    s.discretization.output_stride = 1;
    // Convergence order is a property of the fixed-step scheme.
    s.discretization.step_control = 0.0;
    let mut residuals = vec![];
    for dt in [0.04, 0.02, 0.01] {
        let out = study::run_point(&s, RunPoint { dt, ..RunPoint::of(&s) }, CheckSet::Energy)?;
        residuals.push(out.report.identity.global_residual);
    }
    let rates = [rate(residuals[0], residuals[1], 2.0), rate(residuals[1], residuals[2], 2.0)];
    s.discretization.t_final = 1.0;
    let fine = study::run_point(&s, RunPoint { dt: 1e-3, ..RunPoint::of(&s) }, CheckSet::Energy)?;
    let abs = fine.report.identity.global_residual;
    let pass = rates.iter().all(|r| within(*r, 2.0, RATE_TOL)) && abs <= IDENTITY_ABS_TOL && fine.report.complete;
    Ok((pass, format!("residuals {}, rates {rates:.3?}; residual at dt=1e-3: {abs:.2e}", sci(&residuals))))
}

fn energy_inequality() -> Outcome {
    let mut details = vec![];
    let mut pass = true;
    for mut s in shipped() {
        s.study.kl = vec![(4, 4), (8, 8), (16, 16)];
        let summary = study::sweep(&s, Axis::Kl, CheckSet::Energy, None)?;
        // The budget is recomputed here rather than read from the checks so
        // that the criterion depends only on the energy reports.
        let mut min_margin = f64::INFINITY;
        for p in &summary.points {
            let out = study::run_point(&s, *p, CheckSet::Energy)?;
            let e = out.report.energy.ok_or("energy report missing")?;
            min_margin = min_margin.min(e.margins.iter().cloned().fold(f64::INFINITY, f64::min));
            pass &= out.report.complete;
        }
        let c = &summary.budget_constants;
        let spread = c.iter().map(|v| (v - c[0]).abs()).fold(0.0, f64::max);
        pass &= min_margin >= 0.0 && spread <= BUDGET_SPREAD_TOL * (1.0 + c[0].abs());
        details.push(format!("{}: min margin {min_margin:.2e}, C {:.4e} (spread {spread:.1e})", s.name, c[0]));
    }
    Ok((pass, details.join("; ")))
}

fn constitutive_validators() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let space = SampleSpace::new((0..25).map(|i| [(i % 5) as f64 / 4.0, (i / 5) as f64 / 4.0]).collect());
    let thetas = [-1.0, 0.0, 1.0, 5.0, 10.0];
    let mut pass = true;
    let mut details = vec![];
    for p in [1.5, 2.0, 3.0] {
        let model = GModel::norton_hoff_simple(p)?;
        let m = NFunction::power_constant(p)?;
        let mstar = complementary(&m, &RadialGrid::default())?;
        let scale = 1.0 + (2.0 * space.max_norm).powf(p);
        let gap = check_monotonicity(&model, &space, SAMPLES, &mut rng)?;
        let coer = check_coercivity(&model, &m, &mstar, &space, &thetas, SAMPLES / thetas.len(), &mut rng)?;
        let declared = coer.declared.ok_or("no declared coercivity constant")?;
        pass &= gap >= -MONOTONE_TOL * scale && declared == 1.0 && coer.sampled_inf >= declared - COERCIVITY_ROUNDOFF;
        details.push(format!("p={p}: min gap {gap:.2e}, inf ratio {:.15} (c={declared})", coer.sampled_inf));
    }
    Ok((pass, details.join("; ")))
}

fn orlicz_kernel() -> Outcome {
    let grid = RadialGrid::default();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mesh = Mesh::build(1.0, 1.0, 4, 4)?;
    let qp = mesh.quad_points(&TriangleRule::of_degree(2)?);
    let mut pass = true;
    let mut details = vec![];
    for p in [1.5, 2.0, 3.0, 4.0] {
        let q = conjugate_exponent(p);
        let table = legendre_table(&|s: f64| s.powf(p) / p, &grid);
        let legendre = grid
            .points
            .iter()
            .zip(&table.values)
            .map(|(eta, v)| {
                let exact = eta.powf(q) / q;
                (v - exact).abs() / exact
            })
            .fold(0.0, f64::max);

        let m = NFunction::power_constant(p)?;
        let a = 2.5;
        let field = SampledField::on_quadrature(&qp, vec![SymTensor3::identity() * (a / 3f64.sqrt()); qp.len()], 1.0);
        let lux = luxemburg_norm(&m, &field)?;
        let lux_exact = a * (mesh.area() / p).powf(1.0 / p);
        let lux_err = (lux - lux_exact).abs() / lux_exact;

        let closed = complementary(&m, &grid)?;
        let tabulated = complementary(&NFunction::radial(Expr::parse(&format!("r^{p}/{p}"))?), &grid)?;
        let mut fy = f64::INFINITY;
        for _ in 0..SAMPLES {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            let xi = random_unit_tensor(&mut rng) * (5.0 * rng.gen::<f64>());
            // Every other pair is exactly dual, where the gap vanishes.
            let eta = if rng.gen::<bool>() {
                xi * xi.norm().powf(p - 2.0)
            } else {
                random_unit_tensor(&mut rng) * (5.0 * rng.gen::<f64>())
            };
            fy = fy.min(fenchel_young_gap(&m, &closed, x, &xi, &eta)?);
            fy = fy.min(fenchel_young_gap(&m, &tabulated, x, &xi, &eta)?);
        }
        pass &= legendre <= LEGENDRE_TOL && lux_err <= LUXEMBURG_TOL && fy >= -FENCHEL_YOUNG_TOL;
        details.push(format!("p={p}: Legendre {legendre:.1e}, Luxemburg {lux_err:.1e}, FY gap {fy:.1e}"));
    }
    Ok((pass, details.join("; ")))
}

fn renormalized_heat() -> Outcome {
    let mut details = vec![];

    // (a) Spatial rate with dt = h², temporal rate on a fine mesh.
    let space_err: Vec<f64> = [4usize, 8, 16]
        .iter()
        .map(|n| {
            let h = 1.0 / *n as f64;
            manufactured_error(Arc::new(Mesh::build(1.0, 1.0, *n, *n)?), time_grid(h * h, 0.5)?)
        })
        .collect::<thermovisco::Result<_>>()?;
    // Time error against a much finer step on the same mesh, so the spatial
    // error does not pollute the rate.
    let mesh = Arc::new(Mesh::build(1.0, 1.0, 32, 32)?);
    let qp = mesh.quad_points(&TriangleRule::of_degree(2)?);
    let final_value = |dt: f64| -> thermovisco::Result<Vec<f64>> {
        let problem = HeatProblem::manufactured(mesh.clone(), time_grid(dt, 0.5)?)?;
        Ok(renormheat::solve_truncated(&problem, None)?.last().to_vec())
    };
    let reference = final_value(0.025 / 64.0)?;
    let time_err: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|dt| {
            let diff: Vec<f64> = final_value(*dt)?.iter().zip(&reference).map(|(a, b)| a - b).collect();
            let at_q = mesh.at_quad(&qp, &diff);
            Ok(at_q.iter().zip(&qp.weights).map(|(v, w)| w * v * v).sum::<f64>().sqrt())
        })
        .collect::<thermovisco::Result<_>>()?;
    let h_rates = [rate(space_err[0], space_err[1], 2.0), rate(space_err[1], space_err[2], 2.0)];
    let t_rates = [rate(time_err[0], time_err[1], 2.0), rate(time_err[1], time_err[2], 2.0)];
    let a = h_rates.iter().all(|r| within(*r, 2.0, 2.0 * HEAT_RATE_REL)) && t_rates.iter().all(|r| within(*r, 1.0, HEAT_RATE_REL));
    details.push(format!("(a) h errors {} rates {h_rates:.3?}, dt errors {} rates {t_rates:.3?}", sci(&space_err), sci(&time_err)));

    // (b), (c) on the shipped singular scenario.
    let s = load("singular_heat");
    let problem = study::renorm_problem(&s)?;
    let r = &s.renormheat;
    let opts = StudyOptions { eps: r.eps.clone(), clamps: r.clamps.clone(), tail_levels: r.tail_levels.clone(), tail_c: r.tail_c };
    let st = renormheat::renorm_study(&problem, &opts)?;
    let tail_at = |k: f64| st.tails.iter().find(|t| t.0 == k).map(|t| t.1);
    let (t1, t32) = (tail_at(1.0).ok_or("no K=1 tail")?, tail_at(32.0).ok_or("no K=32 tail")?);
    let b = t32 <= TAIL_RATIO * t1 && st.tails.windows(2).all(|w| w[1].1 <= w[0].1);
    details.push(format!("(b) tail K=1 {t1:.3e}, K=32 {t32:.3e}"));

    let mut by_clamp: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    for row in &st.residuals {
        by_clamp.entry(row.clamp.to_bits()).or_default().push((row.eps, row.residual));
    }
    let mut c = by_clamp.len() == r.clamps.len();
    for rows in by_clamp.values_mut() {
        rows.sort_by(|x, y| y.0.total_cmp(&x.0));
        c &= rows.len() == r.eps.len() && rows.windows(2).all(|w| w[1].1 < w[0].1);
    }
    let worst_row: Vec<String> = by_clamp
        .iter()
        .map(|(m, rows)| format!("M={}: {:.3?}", f64::from_bits(*m), rows.iter().map(|r| r.1).collect::<Vec<_>>()))
        .collect();
    details.push(format!("(c) residuals {}", worst_row.join(" ")));

    // (d) Random ordered data on several meshes.
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut min_gap = f64::INFINITY;
    for (n, trial) in [(6usize, 0), (12, 1), (17, 2), (24, 3)] {
        let mesh = Arc::new(Mesh::build(1.0 + 0.25 * trial as f64, 1.0, n, n)?);
        let times = time_grid(0.05, 0.5)?;
        let c: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let lift: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
        let f1 = move |p: [f64; 2], t: f64| c[0] * (3.0 * p[0]).sin() + c[1] * (2.0 * p[1] + t).cos() + c[2] / ((p[0] - 0.3).abs() + 0.05);
        let f2 = move |p: [f64; 2], t: f64| f1(p, t) + lift[0] * (1.0 + (5.0 * p[0] * p[1]).sin()) + lift[1] * t;
        let g1 = move |p: [f64; 2]| c[3] * (4.0 * p[1]).cos() + c[4] * p[0] + c[5];
        let g2 = move |p: [f64; 2]| g1(p) + lift[2] * (p[0] - 0.5).powi(2);
        let first = HeatProblem::new(mesh.clone(), Arc::new(f1), Arc::new(g1), times.clone())?;
        let second = HeatProblem::new(mesh.clone(), Arc::new(f2), Arc::new(g2), times)?;
        for eps in [None, Some(0.5)] {
            min_gap = min_gap.min(renormheat::comparison(&first, &second, eps)?);
        }
    }
    let d = min_gap >= -COMPARISON_TOL;
    details.push(format!("(d) min(θ₂−θ₁) {min_gap:.2e}"));
    Ok((a && b && c && d, details.join("; ")))
}

fn cauchy() -> Outcome {
    let s = load("singular_heat");
    let problem = study::renorm_problem(&s)?;
    let r = &s.renormheat;
    let opts = StudyOptions { eps: r.eps.clone(), clamps: vec![r.clamps[0]], tail_levels: vec![1.0], tail_c: r.tail_c };
    let st = renormheat::renorm_study(&problem, &opts)?;
    let expected_pairs = r.eps.len() * (r.eps.len() - 1) / 2;
    let pass = st.cauchy.len() == expected_pairs && st.cauchy.iter().all(|row| row.distance <= row.data_distance + CAUCHY_TOL);
    let rows: Vec<String> =
        st.cauchy.iter().map(|row| format!("({}, {}): {:.4e} ≤ {:.4e}", row.eps, row.eta, row.distance, row.data_distance)).collect();
    Ok((pass, rows.join("; ")))
}

fn collect_files(dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>, root: &Path) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, out, root)?;
        } else {
            out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path)?);
        }
    }
    Ok(())
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_thermovisco");
    let tmp = tempfile::tempdir()?;
    let jobs: [(&str, &[&str]); 3] = [
        ("run", &["run", "--checks", "all", "--config", "norton_hoff_p3.cfg", "--seed", "3"]),
        ("sweep", &["sweep", "--sweep-axis", "dt", "--config", "norton_hoff_p2.cfg", "--seed", "3"]),
        ("renorm", &["renormheat", "--config", "singular_heat.cfg"]),
    ];
    let mut compared = 0;
    for (name, args) in jobs {
        let mut trees = vec![];
        for rep in 0..2 {
            let dir = tmp.path().join(format!("{name}_{rep}"));
            let status = Command::new(bin).current_dir(examples_dir()).args(args).arg("--out").arg(&dir).output()?.status;
            if status.code() != Some(0) {
                return Ok((false, format!("{name} exited with {status}")));
            }
            let mut files = BTreeMap::new();
            collect_files(&dir, &mut files, &dir)?;
            trees.push(files);
        }
        let csv_count = trees[0].keys().filter(|p| p.extension().is_some_and(|e| e == "csv")).count();
        if csv_count == 0 || trees[0] != trees[1] {
            let differing: Vec<String> = trees[0]
                .iter()
                .filter(|(k, v)| trees[1].get(*k) != Some(v))
                .map(|(k, _)| k.display().to_string())
                .collect();
            return Ok((false, format!("{name}: {} CSVs, differing files {differing:?}", csv_count)));
        }
        compared += trees[0].len();
    }
    Ok((true, format!("{compared} files byte-identical across repeated run, sweep and renormheat invocations")))
}

fn refinement_indicator() -> Outcome {
    let s = load("norton_hoff_p2");
    let summary = study::sweep(&s, Axis::Kl, CheckSet::Energy, None)?;
    let ind: Vec<f64> = summary.indicator.iter().flatten().copied().collect();
    let pass = ind.len() >= 2 && ind.windows(2).all(|w| w[1] < w[0]);
    let kl: Vec<String> = summary.points.iter().map(|p| format!("({},{})", p.k, p.l)).collect();
    Ok((pass, format!("points {}; indicator {}", kl.join(" "), sci(&ind))))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "basis integrity", basis_integrity),
        (2, "discrete equilibrium", discrete_equilibrium),
        (3, "energy identity", energy_identity),
        (4, "energy inequality", energy_inequality),
        (5, "constitutive validators", constitutive_validators),
        (6, "Orlicz kernel", orlicz_kernel),
        (7, "renormalized heat", renormalized_heat),
        (8, "Cauchy bound", cauchy),
        (9, "determinism", determinism),
        (10, "refinement indicator", refinement_indicator),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!(
            "criterion {n:>2} {} {name} [{:.1}s]: {detail}",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
