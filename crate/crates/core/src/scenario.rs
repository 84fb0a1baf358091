//! Scenario files: sectioned TOML with closed-form expressions.
//!
//! Loading reports a parse error with its line and column, or every
//! violated rule at once.

use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constitutive::{GModel, Scale};
use crate::discretization::{element_average, ElasticityTensor, StrainField};
use crate::error::{Error, Result};
use crate::expr::{Env, Expr, Var};
use crate::lifting::Loads;
use crate::linalg::EigenOptions;
use crate::mesh::{Mesh, QuadPoints};
use crate::orlicz::{ExponentField, NFunction};
use crate::tensor::SymTensor3;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Source {
    Num(f64),
    Text(String),
}

impl Default for Source {
    fn default() -> Self {
        Source::Num(0.0)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ScaleSource {
    Num(f64),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    name: Option<String>,
    mesh: RawMesh,
    #[serde(default)]
    material: RawMaterial,
    #[serde(default)]
    orlicz: RawOrlicz,
    #[serde(default)]
    constitutive: RawConstitutive,
    #[serde(default)]
    loads: RawLoads,
    #[serde(default)]
    initial: RawInitial,
    discretization: RawDiscretization,
    #[serde(default)]
    study: RawStudy,
    #[serde(default)]
    renormheat: RawRenorm,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    lx: f64,
    ly: f64,
    nx: i64,
    ny: i64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMaterial {
    lambda: Source,
    mu: Source,
}

impl Default for RawMaterial {
    fn default() -> Self {
        RawMaterial { lambda: Source::Num(1.0), mu: Source::Num(1.0) }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOrlicz {
    exponent: Source,
    legendre_points: Option<i64>,
}

impl Default for RawOrlicz {
    fn default() -> Self {
        RawOrlicz { exponent: Source::Num(2.0), legendre_points: None }
    }
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConstitutive {
    family: Option<String>,
    exponent: Option<Source>,
    phi: Option<Source>,
    phi_min: Option<f64>,
    phi_max: Option<f64>,
    scale: Option<ScaleSource>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawLoads {
    f: Option<[Source; 2]>,
    g: Option<[Source; 2]>,
    g_theta: Option<Source>,
    theta_lift0: Option<Source>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    theta0: Option<Source>,
    /// Components `11, 22, 33, 12`.
    eps_p0: Option<[Source; 4]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiscretization {
    k: i64,
    l: i64,
    #[serde(rename = "K")]
    truncation: Option<f64>,
    dt: f64,
    t_final: f64,
    output_stride: Option<i64>,
    quadrature_degree: Option<i64>,
    eigen_tolerance: Option<f64>,
    step_control: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawStudy {
    axis: Option<String>,
    kl: Option<Vec<[i64; 2]>>,
    dt: Option<Vec<f64>>,
    #[serde(rename = "K")]
    truncation: Option<Vec<f64>>,
    psi_mu: Option<f64>,
    psi_tau: Option<f64>,
    seed: Option<u64>,
    samples: Option<i64>,
    workers: Option<i64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawRenorm {
    lx: Option<f64>,
    ly: Option<f64>,
    nx: Option<i64>,
    ny: Option<i64>,
    center: Option<[f64; 2]>,
    exponent: Option<f64>,
    eps: Option<Vec<f64>>,
    clamps: Option<Vec<f64>>,
    tail_levels: Option<Vec<f64>>,
    tail_c: Option<f64>,
    dt: Option<f64>,
    t_final: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Axis {
    Kl,
    Dt,
    K,
}

impl FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kl" => Ok(Axis::Kl),
            "dt" => Ok(Axis::Dt),
            "K" | "k" => Ok(Axis::K),
            other => Err(Error::Input(format!("unknown sweep axis '{other}' (expected kl, dt or K)"))),
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Axis::Kl => "kl",
            Axis::Dt => "dt",
            Axis::K => "K",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeshSpec {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Discretization {
    pub k: usize,
    pub l: usize,
    /// Truncation level of the heat source and the initial temperature.
    pub truncation: f64,
    pub dt: f64,
    pub t_final: f64,
    pub output_stride: usize,
    pub quadrature_degree: usize,
    pub eigen_tolerance: f64,
    /// Relative per-step energy-identity tolerance of the integrator; zero
    /// keeps the time grid fixed.
    pub step_control: f64,
    pub legendre_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudySpec {
    pub axis: Option<Axis>,
    pub kl: Vec<(usize, usize)>,
    pub dt: Vec<f64>,
    pub truncation: Vec<f64>,
    pub psi_mu: f64,
    pub psi_tau: f64,
    pub seed: u64,
    /// Random samples per constitutive and Orlicz property check.
    pub samples: usize,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenormSpec {
    pub mesh: MeshSpec,
    pub center: [f64; 2],
    pub exponent: f64,
    pub eps: Vec<f64>,
    pub clamps: Vec<f64>,
    pub tail_levels: Vec<f64>,
    pub tail_c: f64,
    pub dt: f64,
    pub t_final: f64,
}

#[derive(Debug, Clone)]
pub struct ConstitutiveSpec {
    pub exponent: Expr,
    pub phi: Expr,
    pub phi_min: f64,
    pub phi_max: f64,
    pub scale: Scale,
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub mesh: MeshSpec,
    pub lambda: Expr,
    pub mu: Expr,
    pub exponent: Expr,
    pub constitutive: ConstitutiveSpec,
    pub loads: Loads,
    pub theta0: Expr,
    pub eps_p0: [Expr; 4],
    pub discretization: Discretization,
    pub study: StudySpec,
    pub renormheat: RenormSpec,
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map(|s| s.chars().count()).unwrap_or(0) + 1;
    (line, column)
}

struct Checker {
    problems: Vec<String>,
}

impl Checker {
    fn expr(&mut self, field: &str, src: &Source, allowed: &[Var]) -> Expr {
        let parsed = match src {
            Source::Num(v) => Ok(Expr::constant(*v)),
            Source::Text(s) => Expr::parse(s),
        };
        match parsed {
            Ok(e) => {
                let all = [Var::X, Var::Y, Var::T, Var::R, Var::Theta, Var::Nx, Var::Ny];
                let names = ["x", "y", "t", "r", "theta", "nx", "ny"];
                for (v, n) in all.iter().zip(names) {
                    if e.uses(*v) && !allowed.contains(v) {
                        self.problems.push(format!("{field}: '{e}' may not depend on '{n}'"));
                    }
                }
                e
            }
            Err(err) => {
                self.problems.push(format!("{field}: {err}"));
                Expr::constant(0.0)
            }
        }
    }

    fn require(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.problems.push(msg());
        }
    }

    fn count(&mut self, field: &str, v: i64, min: i64) -> usize {
        self.require(v >= min, || format!("{field}: must be at least {min}, got {v}"));
        v.max(min) as usize
    }

    fn positive_list(&mut self, field: &str, v: &[f64]) {
        self.require(!v.is_empty(), || format!("{field}: must not be empty"));
        for x in v {
            self.require(*x > 0.0 && x.is_finite(), || format!("{field}: entries must be positive and finite, got {x}"));
        }
    }
}

const XY: &[Var] = &[Var::X, Var::Y];
const XYT: &[Var] = &[Var::X, Var::Y, Var::T];

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let raw: Raw = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map(|s| line_column(text, s.start)).unwrap_or((0, 0));
            Error::Parse { line, column, message: e.message().to_string() }
        })?;
        validate(raw)
    }
}

fn validate(raw: Raw) -> Result<Scenario> {
    let mut c = Checker { problems: vec![] };
    let rm = &raw.mesh;
    c.require(rm.lx > 0.0 && rm.lx.is_finite(), || format!("mesh.lx: must be positive, got {}", rm.lx));
    c.require(rm.ly > 0.0 && rm.ly.is_finite(), || format!("mesh.ly: must be positive, got {}", rm.ly));
    let mesh = MeshSpec { lx: rm.lx, ly: rm.ly, nx: c.count("mesh.nx", rm.nx, 2), ny: c.count("mesh.ny", rm.ny, 2) };

    let lambda = c.expr("material.lambda", &raw.material.lambda, XY);
    let mu = c.expr("material.mu", &raw.material.mu, XY);
    let exponent = c.expr("orlicz.exponent", &raw.orlicz.exponent, XY);

    let rc = &raw.constitutive;
    if let Some(f) = &rc.family {
        c.require(f == "norton_hoff", || format!("constitutive.family: only 'norton_hoff' can be configured, got '{f}'"));
    }
    let g_exponent = match &rc.exponent {
        Some(s) => c.expr("constitutive.exponent", s, XY),
        None => exponent.clone(),
    };
    let phi = match &rc.phi {
        Some(s) => c.expr("constitutive.phi", s, &[Var::Theta]),
        None => Expr::constant(1.0),
    };
    let phi_min = rc.phi_min.unwrap_or(1.0);
    let phi_max = rc.phi_max.unwrap_or(phi_min.max(1.0));
    c.require(phi_min > 0.0 && phi_max >= phi_min && phi_max.is_finite(), || {
        format!("constitutive.phi_min/phi_max: need 0 < phi_min ≤ phi_max < ∞, got [{phi_min}, {phi_max}]")
    });
    let scale = match &rc.scale {
        None => Scale::Fixed(1.0),
        Some(ScaleSource::Num(s)) => {
            c.require(*s > 0.0 && s.is_finite(), || format!("constitutive.scale: must be positive, got {s}"));
            Scale::Fixed(*s)
        }
        Some(ScaleSource::Text(s)) if s == "auto" => Scale::Auto,
        Some(ScaleSource::Text(s)) => {
            c.problems.push(format!("constitutive.scale: expected a number or \"auto\", got '{s}'"));
            Scale::Fixed(1.0)
        }
    };

    let rl = &raw.loads;
    let pair = |c: &mut Checker, name: &str, v: &Option<[Source; 2]>| -> [Expr; 2] {
        match v {
            Some([a, b]) => [c.expr(&format!("loads.{name}[0]"), a, XYT), c.expr(&format!("loads.{name}[1]"), b, XYT)],
            None => [Expr::constant(0.0), Expr::constant(0.0)],
        }
    };
    let loads = Loads {
        f: pair(&mut c, "f", &rl.f),
        g: pair(&mut c, "g", &rl.g),
        g_theta: match &rl.g_theta {
            Some(s) => c.expr("loads.g_theta", s, &[Var::X, Var::Y, Var::T, Var::Nx, Var::Ny]),
            None => Expr::constant(0.0),
        },
        theta_lift0: match &rl.theta_lift0 {
            Some(s) => c.expr("loads.theta_lift0", s, XY),
            None => Expr::constant(0.0),
        },
    };
    let theta0 = match &raw.initial.theta0 {
        Some(s) => c.expr("initial.theta0", s, XY),
        None => Expr::constant(0.0),
    };
    let eps_p0 = match &raw.initial.eps_p0 {
        Some(v) => {
            let names = ["11", "22", "33", "12"];
            let e: Vec<Expr> = v.iter().zip(names).map(|(s, n)| c.expr(&format!("initial.eps_p0[{n}]"), s, XY)).collect();
            [e[0].clone(), e[1].clone(), e[2].clone(), e[3].clone()]
        }
        None => std::array::from_fn(|_| Expr::constant(0.0)),
    };

    let rd = &raw.discretization;
    let k = c.count("discretization.k", rd.k, 1);
    let l = c.count("discretization.l", rd.l, 1);
    let truncation = rd.truncation.unwrap_or(k as f64);
    c.require(truncation > 0.0 && truncation.is_finite(), || format!("discretization.K: must be positive, got {truncation}"));
    c.require(rd.dt > 0.0 && rd.dt.is_finite(), || format!("discretization.dt: must be positive, got {}", rd.dt));
    c.require(rd.t_final >= 0.0 && rd.t_final.is_finite(), || format!("discretization.t_final: must be nonnegative, got {}", rd.t_final));
    let output_stride = c.count("discretization.output_stride", rd.output_stride.unwrap_or(1), 1);
    let quadrature_degree = rd.quadrature_degree.unwrap_or(2);
    c.require(matches!(quadrature_degree, 1 | 2 | 4), || format!("discretization.quadrature_degree: must be 1, 2 or 4, got {quadrature_degree}"));
    let eigen_tolerance = rd.eigen_tolerance.unwrap_or(1e-10);
    c.require(eigen_tolerance > 0.0 && eigen_tolerance < 1e-2, || format!("discretization.eigen_tolerance: must lie in (0, 1e-2), got {eigen_tolerance}"));
    let step_control = rd.step_control.unwrap_or(1e-3);
    c.require(step_control >= 0.0 && step_control < 1.0, || format!("discretization.step_control: must lie in [0, 1), got {step_control}"));
    let legendre_points = raw.orlicz.legendre_points.unwrap_or(2048);
    c.require(legendre_points >= 64, || format!("orlicz.legendre_points: must be at least 64, got {legendre_points}"));
    let discretization = Discretization {
        k,
        l,
        truncation,
        dt: rd.dt,
        t_final: rd.t_final,
        output_stride,
        quadrature_degree: quadrature_degree.max(1) as usize,
        eigen_tolerance,
        step_control,
        legendre_points: legendre_points.max(64) as usize,
    };

    let rs = &raw.study;
    let axis = match &rs.axis {
        Some(a) => match a.parse::<Axis>() {
            Ok(a) => Some(a),
            Err(e) => {
                c.problems.push(format!("study.axis: {e}"));
                None
            }
        },
        None => None,
    };
    let kl: Vec<(usize, usize)> = match &rs.kl {
        Some(v) => v.iter().map(|[a, b]| (c.count("study.kl", *a, 1), c.count("study.kl", *b, 1))).collect(),
        None => vec![(4, 4), (8, 8), (16, 16)],
    };
    let dts = rs.dt.clone().unwrap_or_else(|| vec![rd.dt, rd.dt / 2.0, rd.dt / 4.0]);
    c.positive_list("study.dt", &dts);
    let ks = rs.truncation.clone().unwrap_or_else(|| vec![truncation / 4.0, truncation / 2.0, truncation]);
    c.positive_list("study.K", &ks);
    let psi_mu = rs.psi_mu.unwrap_or(0.25 * rd.t_final);
    let psi_tau = rs.psi_tau.unwrap_or(0.5 * rd.t_final);
    if rd.t_final > 0.0 {
        c.require(psi_mu > 0.0 && psi_tau >= 0.0 && psi_tau + psi_mu <= rd.t_final * (1.0 + 1e-12), || {
            format!("study.psi_mu/psi_tau: need μ > 0, τ ≥ 0, τ + μ ≤ t_final, got μ={psi_mu}, τ={psi_tau}")
        });
    }
    let study = StudySpec {
        axis,
        kl,
        dt: dts,
        truncation: ks,
        psi_mu,
        psi_tau,
        seed: rs.seed.unwrap_or(0),
        samples: c.count("study.samples", rs.samples.unwrap_or(2000), 1),
        workers: c.count("study.workers", rs.workers.unwrap_or(2), 1),
    };

    let rr = &raw.renormheat;
    let rmesh = MeshSpec {
        lx: rr.lx.unwrap_or(1.0),
        ly: rr.ly.unwrap_or(1.0),
        nx: c.count("renormheat.nx", rr.nx.unwrap_or(16), 2),
        ny: c.count("renormheat.ny", rr.ny.unwrap_or(16), 2),
    };
    c.require(rmesh.lx > 0.0 && rmesh.ly > 0.0, || "renormheat.lx/ly: must be positive".into());
    let center = rr.center.unwrap_or([0.5 * rmesh.lx, 0.5 * rmesh.ly]);
    let rexp = rr.exponent.unwrap_or(1.5);
    c.require(rexp > 0.0 && rexp < 2.0, || format!("renormheat.exponent: must lie in (0, 2) for an integrable source, got {rexp}"));
    let renormheat = RenormSpec {
        mesh: rmesh,
        center,
        exponent: rexp,
        eps: rr.eps.clone().unwrap_or_else(|| vec![0.25, 1.0 / 16.0, 1.0 / 64.0]),
        clamps: rr.clamps.clone().unwrap_or_else(|| vec![8.0, 16.0, 32.0]),
        tail_levels: rr.tail_levels.clone().unwrap_or_else(|| vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0]),
        tail_c: rr.tail_c.unwrap_or(1.0),
        dt: rr.dt.unwrap_or(1.0 / 32.0),
        t_final: rr.t_final.unwrap_or(1.0),
    };
    c.positive_list("renormheat.eps", &renormheat.eps);
    c.positive_list("renormheat.clamps", &renormheat.clamps);
    c.positive_list("renormheat.tail_levels", &renormheat.tail_levels);
    c.require(renormheat.tail_c > 0.0, || format!("renormheat.tail_c: must be positive, got {}", renormheat.tail_c));
    c.require(renormheat.dt > 0.0 && renormheat.t_final > 0.0, || "renormheat.dt/t_final: must be positive".into());

    // Pointwise rules need the nodes; skip them when the mesh itself is bad.
    if c.problems.is_empty() {
        if let Ok(m) = Mesh::build(mesh.lx, mesh.ly, mesh.nx, mesh.ny) {
            let mut mismatch = None;
            let mut bad_p = None;
            let mut bad_lame = None;
            for p in &m.nodes {
                let env = Env::at(p[0], p[1], 0.0);
                let (pm, pg) = (exponent.eval(&env), g_exponent.eval(&env));
                if mismatch.is_none() && (pm - pg).abs() > 1e-12 * pm.abs().max(1.0) {
                    mismatch = Some((pg, pm, *p));
                }
                if bad_p.is_none() && !(pm > 1.0 && pm.is_finite()) {
                    bad_p = Some((pm, *p));
                }
                let (la, mu_v) = (lambda.eval(&env), mu.eval(&env));
                if bad_lame.is_none() && !(mu_v > 0.0 && 3.0 * la + 2.0 * mu_v > 0.0) {
                    bad_lame = Some((la, mu_v, *p));
                }
            }
            if let Some((pg, pm, p)) = mismatch {
                c.problems.push(format!(
                    "constitutive.exponent: p_G = {pg} differs from orlicz.exponent p_M = {pm} at ({}, {})",
                    p[0], p[1]
                ));
            }
            if let Some((v, p)) = bad_p {
                c.problems.push(format!("orlicz.exponent: must exceed 1, got {v} at ({}, {})", p[0], p[1]));
            }
            if let Some((la, mu_v, p)) = bad_lame {
                c.problems.push(format!(
                    "material: need mu > 0 and 3 lambda + 2 mu > 0, got lambda={la}, mu={mu_v} at ({}, {})",
                    p[0], p[1]
                ));
            }
        }
    }

    if !c.problems.is_empty() {
        return Err(Error::Validation(c.problems));
    }
    Ok(Scenario {
        name: raw.name.unwrap_or_else(|| "scenario".into()),
        mesh,
        lambda,
        mu,
        exponent,
        constitutive: ConstitutiveSpec { exponent: g_exponent, phi, phi_min, phi_max, scale },
        loads,
        theta0,
        eps_p0,
        discretization,
        study,
        renormheat,
    })
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read scenario '{}': {e}", path.display())))?;
        text.parse()
    }

    pub fn build_mesh(&self) -> Result<Arc<Mesh>> {
        Ok(Arc::new(Mesh::build(self.mesh.lx, self.mesh.ly, self.mesh.nx, self.mesh.ny)?))
    }

    fn nodal(mesh: &Mesh, e: &Expr) -> Vec<f64> {
        mesh.nodes.iter().map(|p| e.eval_xyt(p[0], p[1], 0.0)).collect()
    }

    pub fn elasticity(&self, mesh: &Mesh) -> Result<Arc<ElasticityTensor>> {
        Ok(Arc::new(ElasticityTensor::isotropic(mesh, &Self::nodal(mesh, &self.lambda), &Self::nodal(mesh, &self.mu))?))
    }

    fn exponent_field(e: &Expr, mesh: &Arc<Mesh>) -> ExponentField {
        if e.uses(Var::X) || e.uses(Var::Y) {
            ExponentField::Nodal { mesh: mesh.clone(), values: Self::nodal(mesh, e) }
        } else {
            ExponentField::Constant(e.eval(&Env::default()))
        }
    }

    pub fn n_function(&self, mesh: &Arc<Mesh>) -> Result<NFunction> {
        Ok(NFunction::power(Self::exponent_field(&self.exponent, mesh))?.on_domain(mesh.clone()))
    }

    pub fn g_model(&self, mesh: &Arc<Mesh>) -> Result<GModel> {
        let c = &self.constitutive;
        GModel::norton_hoff(Self::exponent_field(&c.exponent, mesh), c.phi.clone(), c.phi_min, c.phi_max, c.scale)
    }

    pub fn eigen_options(&self) -> EigenOptions {
        EigenOptions { tolerance: self.discretization.eigen_tolerance, seed: self.study.seed, ..EigenOptions::default() }
    }

    pub fn initial_theta(&self, mesh: &Mesh) -> Vec<f64> {
        Self::nodal(mesh, &self.theta0)
    }

    pub fn initial_plastic_strain(&self, mesh: &Mesh, qp: &QuadPoints) -> StrainField {
        let e = &self.eps_p0;
        element_average(mesh, qp, |p| {
            let v = |i: usize| e[i].eval_xyt(p[0], p[1], 0.0);
            SymTensor3::plane(v(0), v(1), v(2), v(3))
        })
    }
}
