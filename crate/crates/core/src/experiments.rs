//! Experiment configuration, error metrics and the drivers that write CSV artifacts.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

use crate::bem::{
    assemble_constraints, assemble_robin_operator, assemble_slp, build_rhs_robin, solve_dirichlet, solve_robin, DGSpace,
    QuadOptions,
};
use crate::bem2d::{
    default_grading, h_version_study, hessian_2d_fd, hessian_error, log_data, p_version_study, solve_dirichlet_2d, EnergyStudy,
    Grading, PolygonBoundary,
};
use crate::error::{Error, Result};
use crate::field::{eval_hessian_fd, locate, newton_hessian, FdSteps};
use crate::kernels::{Vec2, MAX_DEGREE_2D};
use crate::iteration::{
    mean_l2, run_observed, smoothed_increment_g, smoothed_increment_w, theta_schedule, IterationConfig, IterationState,
    NewtonPotential, ProblemData, RestartRule, StepDiagnostics, CSV_HEADER,
};
use crate::mesh::{build_cube, build_icosphere, export_mesh, SurfaceField, TriangleMesh, Vec3, MAX_ICOSPHERE_LEVEL};
use crate::smoothing::{
    reference_spectrum, smooth, smoothing_property_report, SmootherParams, SmoothingReport, DEFAULT_INDEX_PAIRS,
};

/// Icosphere level of the exterior evaluation points.
pub const EXTERIOR_LEVEL: usize = 5;
/// Radius of the exterior evaluation points.
pub const EXTERIOR_RADIUS: f64 = 2.0;
/// Largest mesh level accepted by the dense 3D experiments.
pub const MAX_EXPERIMENT_LEVEL: usize = 4;
/// Smoothing parameters of the smoother report.
pub const REPORT_THETAS: [f64; 4] = [2.0, 4.0, 8.0, 16.0];
/// Evaluation point of the 2D Hessian benchmark.
pub const HESSIAN_POINT_2D: [f64; 2] = [0.5, 1.0 / 3.0];
/// Evaluation point of the 3D cube Hessian benchmark.
pub const HESSIAN_POINT_3D: [f64; 3] = [1.0, 1.0 / 3.0, 1.0 / 3.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentId {
    ModelProblem,
    ModelProblemRestarted,
    Bench2d,
    Bench3dCube,
    BenchSphereLinearized,
    SmootherReport,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 6] = [
        ExperimentId::ModelProblem,
        ExperimentId::ModelProblemRestarted,
        ExperimentId::Bench2d,
        ExperimentId::Bench3dCube,
        ExperimentId::BenchSphereLinearized,
        ExperimentId::SmootherReport,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentId::ModelProblem => "model_problem",
            ExperimentId::ModelProblemRestarted => "model_problem_restarted",
            ExperimentId::Bench2d => "bench2d",
            ExperimentId::Bench3dCube => "bench3d_cube",
            ExperimentId::BenchSphereLinearized => "bench_sphere_linearized",
            ExperimentId::SmootherReport => "smoother_report",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentId::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

/// Everything an experiment run depends on.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    /// Mesh levels; for bench2d a single entry holding the number of refinement levels.
    pub levels: Vec<usize>,
    /// Polynomial degrees.
    pub p: Vec<usize>,
    pub theta0: f64,
    pub kappa: f64,
    pub k: u32,
    pub tol: f64,
    pub max_iter: usize,
    pub restart_period: usize,
    /// 1 continues the schedule at a restart, larger values multiply theta.
    pub restart_factor: f64,
    /// Radius of the exact spherical surface of the model problem.
    pub radius: f64,
    pub output: PathBuf,
    pub seed: u64,
}

const KEYS: [&str; 13] = [
    "experiment",
    "levels",
    "p",
    "theta0",
    "kappa",
    "k",
    "tol",
    "max_iter",
    "restart_period",
    "restart_factor",
    "radius",
    "output",
    "seed",
];

impl ExperimentConfig {
    /// Defaults of each experiment.
    pub fn new(experiment: ExperimentId) -> Self {
        let (levels, p, max_iter, restart_period) = match experiment {
            ExperimentId::ModelProblem => (vec![2], vec![2], 10, 0),
            ExperimentId::ModelProblemRestarted => (vec![2], vec![2], 8, 1),
            ExperimentId::Bench2d => (vec![8], vec![0, 1, 2, 3], 0, 0),
            ExperimentId::Bench3dCube => (vec![0, 1, 2, 3], vec![2], 0, 0),
            ExperimentId::BenchSphereLinearized => (vec![0, 1, 2, 3], vec![2], 0, 0),
            ExperimentId::SmootherReport => (vec![3], vec![2], 0, 0),
        };
        Self {
            experiment,
            levels,
            p,
            theta0: 2.6,
            kappa: 6.0,
            k: 1,
            tol: 1e-6,
            max_iter,
            restart_period,
            restart_factor: 1.0,
            radius: 1.1,
            output: PathBuf::from(format!("out/{}", experiment.name())),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.levels.is_empty() || self.p.is_empty() {
            return bad("levels and p need at least one entry".into());
        }
        match self.experiment {
            ExperimentId::Bench2d => {
                if self.levels.len() != 1 || !(2..=10).contains(&self.levels[0]) {
                    return bad("bench2d takes one level count in 2..=10".into());
                }
                if let Some(p) = self.p.iter().find(|&&p| p > 8) {
                    return bad(format!("bench2d degree {p} exceeds 8"));
                }
            }
            _ => {
                if let Some(l) = self.levels.iter().find(|&&l| l > MAX_EXPERIMENT_LEVEL) {
                    return bad(format!("level {l} exceeds {MAX_EXPERIMENT_LEVEL}"));
                }
                if let Some(p) = self.p.iter().find(|&&p| p > crate::kernels::MAX_DEGREE) {
                    return bad(format!("degree {p} exceeds {}", crate::kernels::MAX_DEGREE));
                }
            }
        }
        if theta_schedule(self.theta0, self.kappa, 0).is_err() || self.kappa > 64.0 {
            return bad(format!("need theta0 > 1 and 1 <= kappa <= 64, got {} and {}", self.theta0, self.kappa));
        }
        if !(1..=4).contains(&self.k) {
            return bad(format!("k = {} outside 1..=4", self.k));
        }
        if !(self.tol >= 0.0) || !self.tol.is_finite() {
            return bad(format!("tol = {} must be finite and >= 0", self.tol));
        }
        if self.max_iter > 1000 {
            return bad(format!("max_iter = {} exceeds 1000", self.max_iter));
        }
        if self.experiment == ExperimentId::ModelProblemRestarted && self.restart_period == 0 {
            return bad("restarted run needs restart_period >= 1".into());
        }
        if !(self.restart_factor >= 1.0) || !self.restart_factor.is_finite() {
            return bad(format!("restart_factor = {} must be >= 1", self.restart_factor));
        }
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return bad(format!("radius = {} must be positive", self.radius));
        }
        if self.output.as_os_str().is_empty() {
            return bad("empty output directory".into());
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment. Keys not given keep the experiment defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(Error::Config(format!("line {}: unknown key '{k}'", i + 1)));
            }
            if pairs.iter().any(|(q, _, _)| *q == k) {
                return Err(Error::Config(format!("line {}: duplicate key '{k}'", i + 1)));
            }
            pairs.push((k, v, i + 1));
        }
        let id = pairs
            .iter()
            .find(|(k, _, _)| *k == "experiment")
            .ok_or_else(|| Error::Config("missing key 'experiment'".into()))?
            .1
            .parse::<ExperimentId>()?;
        let mut c = ExperimentConfig::new(id);
        for (k, v, line) in pairs {
            let err = |what: &str| Error::Config(format!("line {line}: {k} expects {what}, got '{v}'"));
            let float = || v.parse::<f64>().map_err(|_| err("a number"));
            let int = || v.parse::<usize>().map_err(|_| err("a non-negative integer"));
            let list = || {
                v.split(',').map(|s| s.trim().parse::<usize>()).collect::<std::result::Result<Vec<_>, _>>().map_err(|_| err("a list of integers"))
            };
            match k {
                "experiment" => {}
                "levels" => c.levels = list()?,
                "p" => c.p = list()?,
                "theta0" => c.theta0 = float()?,
                "kappa" => c.kappa = float()?,
                "k" => c.k = v.parse().map_err(|_| err("a positive integer"))?,
                "tol" => c.tol = float()?,
                "max_iter" => c.max_iter = int()?,
                "restart_period" => c.restart_period = int()?,
                "restart_factor" => c.restart_factor = float()?,
                "radius" => c.radius = float()?,
                "output" => c.output = PathBuf::from(v),
                "seed" => c.seed = v.parse().map_err(|_| err("an unsigned integer"))?,
                _ => unreachable!(),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn iteration_config(&self, degree: usize) -> IterationConfig {
        let mut c = IterationConfig::default();
        c.degree = degree;
        c.schedule.theta0 = self.theta0;
        c.schedule.kappa = self.kappa;
        c.schedule.k = self.k;
        c.schedule.tol = self.tol;
        c.schedule.max_iter = self.max_iter;
        c.schedule.restart_period = if self.experiment == ExperimentId::ModelProblemRestarted { self.restart_period } else { 0 };
        c.schedule.restart_rule =
            if self.restart_factor == 1.0 { RestartRule::Continue } else { RestartRule::Multiply(self.restart_factor) };
        c
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        writeln!(f, "experiment = {}", self.experiment)?;
        writeln!(f, "levels = {}", join(&self.levels))?;
        writeln!(f, "p = {}", join(&self.p))?;
        writeln!(f, "theta0 = {}", self.theta0)?;
        writeln!(f, "kappa = {}", self.kappa)?;
        writeln!(f, "k = {}", self.k)?;
        writeln!(f, "tol = {}", self.tol)?;
        writeln!(f, "max_iter = {}", self.max_iter)?;
        writeln!(f, "restart_period = {}", self.restart_period)?;
        writeln!(f, "restart_factor = {}", self.restart_factor)?;
        writeln!(f, "radius = {}", self.radius)?;
        writeln!(f, "output = {}", self.output.display())?;
        writeln!(f, "seed = {}", self.seed)
    }
}

/// One logged value.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub experiment: ExperimentId,
    pub step: usize,
    pub dof: usize,
    pub metric: String,
    pub value: f64,
}

pub const METRIC_HEADER: &str = "experiment,step,dof,metric,value";

impl MetricRow {
    pub fn new(experiment: ExperimentId, step: usize, dof: usize, metric: &str, value: f64) -> Self {
        Self { experiment, step, dof, metric: metric.into(), value }
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.experiment, self.step, self.dof, self.metric, fmt_f64(self.value))
    }
}

/// Fixed 17-significant-digit formatting used in every CSV.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.16e}")
    }
}

/// Append-only metric log mirrored to a CSV file.
#[derive(Debug)]
pub struct MetricLog {
    rows: Vec<MetricRow>,
    path: Option<PathBuf>,
}

impl MetricLog {
    pub fn in_memory() -> Self {
        Self { rows: Vec::new(), path: None }
    }

    pub fn create(path: &Path) -> Result<Self> {
        fs::write(path, format!("{METRIC_HEADER}\n"))?;
        Ok(Self { rows: Vec::new(), path: Some(path.to_path_buf()) })
    }

    pub fn push(&mut self, row: MetricRow) -> Result<()> {
        if let Some(p) = &self.path {
            use std::io::Write;
            let mut f = fs::OpenOptions::new().append(true).open(p)?;
            writeln!(f, "{}", row.csv_row())?;
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[MetricRow] {
        &self.rows
    }

    pub fn values(&self, metric: &str) -> Vec<(usize, f64)> {
        self.rows.iter().filter(|r| r.metric == metric).map(|r| (r.step, r.value)).collect()
    }
}

/// (1/n) sqrt(sum_i (|x_i| - R)^2) over the mesh nodes.
pub fn l2_surface_error(mesh: &TriangleMesh, radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("target radius {radius} must be positive")));
    }
    Ok(mean_l2(mesh.vertices().iter().map(|v| v.norm() - radius)))
}

/// (1/n) sqrt(sum_i |G_m(x_i) - G(x_i)|^2).
pub fn l2_g_error(g_m: &[Vec3], g: &[Vec3]) -> Result<f64> {
    if g_m.len() != g.len() {
        return Err(Error::InvalidArgument(format!("field lengths differ: {} and {}", g_m.len(), g.len())));
    }
    Ok(mean_l2(g_m.iter().zip(g).map(|(a, b)| (a - b).norm())))
}

/// Solid-angle winding number of a closed triangle mesh around `x`.
pub fn winding_number(mesh: &TriangleMesh, x: &Vec3) -> f64 {
    let mut total = 0.0;
    for t in 0..mesh.n_triangles() {
        let [a, b, c] = mesh.triangle_vertices(t).map(|v| v - x);
        let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
        let num = a.dot(&b.cross(&c));
        let den = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
        total += 2.0 * num.atan2(den);
    }
    total / (4.0 * std::f64::consts::PI)
}

/// Vertices of the level-5 icosphere scaled to radius 2 (M = 10242).
pub fn exterior_points() -> Result<Vec<Vec3>> {
    Ok(build_icosphere(EXTERIOR_LEVEL)?.vertices().iter().map(|v| v * EXTERIOR_RADIUS).collect())
}

/// (1/M) sqrt(sum_i |u_h(x_i) - u(x_i)|^2) over points exterior to `surface`.
pub fn pointwise_exterior_error(
    u_h: &dyn Fn(&Vec3) -> f64,
    u: &dyn Fn(&Vec3) -> f64,
    points: &[Vec3],
    surface: &TriangleMesh,
) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("no evaluation points".into()));
    }
    let r_max = surface.vertices().iter().map(|v| v.norm()).fold(0.0, f64::max);
    for (i, x) in points.iter().enumerate() {
        if x.norm() <= r_max && winding_number(surface, x).abs() > 0.5 {
            return Err(Error::InvalidArgument(format!("evaluation point {i} lies inside the surface")));
        }
    }
    Ok(mean_l2(points.iter().map(|x| u_h(x) - u(x))))
}

/// EOC_i = ln(e_i / e_{i+1}) / ln(DOF_{i+1} / DOF_i).
pub fn eoc(errors: &[f64], dofs: &[usize]) -> Result<Vec<f64>> {
    if errors.len() != dofs.len() || errors.len() < 2 {
        return Err(Error::InvalidArgument(format!("need >= 2 matching levels, got {} errors and {} dofs", errors.len(), dofs.len())));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(Error::InvalidArgument(format!("error {e} is not positive")));
    }
    if dofs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("dofs must increase".into()));
    }
    Ok(errors
        .windows(2)
        .zip(dofs.windows(2))
        .map(|(e, d)| (e[0] / e[1]).ln() / (d[1] as f64 / d[0] as f64).ln())
        .collect())
}

/// Adds an `eoc` column to a CSV holding `dof` and `error_column`.
pub fn eoc_csv(text: &str, error_column: &str) -> Result<String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse { line: 1, msg: "empty csv".into() })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::Parse { line: 1, msg: format!("missing column '{name}'") })
    };
    let (id, ie) = (find("dof")?, find(error_column)?);
    let mut rows = Vec::new();
    let (mut dofs, mut errs) = (Vec::new(), Vec::new());
    for (i, l) in lines.enumerate() {
        let f: Vec<&str> = l.split(',').map(str::trim).collect();
        let parse_err = |what: &str| Error::Parse { line: i + 2, msg: format!("bad {what}") };
        dofs.push(f.get(id).and_then(|s| s.parse::<usize>().ok()).ok_or_else(|| parse_err("dof"))?);
        errs.push(f.get(ie).and_then(|s| s.parse::<f64>().ok()).ok_or_else(|| parse_err(error_column))?);
        rows.push(l.to_string());
    }
    let rates = eoc(&errs, &dofs)?;
    let mut out = format!("{header},eoc\n");
    for (i, r) in rows.iter().enumerate() {
        let e = if i == 0 { "nan".into() } else { fmt_f64(rates[i - 1]) };
        let _ = writeln!(out, "{r},{e}");
    }
    Ok(out)
}

/// One level of the linearized sphere benchmark.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearizedRow {
    pub level: usize,
    pub dof: usize,
    pub error: f64,
    pub multipliers: [f64; 3],
}

/// Exact first-step solution 2 f / |x| of the linearized problem on the unit sphere with h = x/2.
pub fn linearized_exact(radius: f64, config: &IterationConfig) -> Result<impl Fn(&Vec3) -> f64> {
    let s = &config.schedule;
    let (theta, delta) = theta_schedule(s.theta0, s.kappa, 0)?;
    let damp = crate::smoothing::multiplier(2.0, theta, s.k);
    let f = ((1.0 / radius - 1.0) + 0.5 * (1.0 - 1.0 / (radius * radius)) * damp) / delta;
    Ok(move |x: &Vec3| 2.0 * f / x.norm())
}

/// First Robin solve of the model problem started from the unit sphere, measured at the exterior points.
pub fn sphere_linearized(level: usize, radius: f64, config: &IterationConfig, points: &[Vec3]) -> Result<LinearizedRow> {
    let mesh = build_icosphere(level)?;
    let data = ProblemData::sphere(&mesh, radius);
    let mut state = IterationState::initial(&mesh, &NewtonPotential { mass: 1.0 }, config)?;
    let w_dot = smoothed_increment_w(&state, &data.w, config)?;
    let g_dot = smoothed_increment_g(&mut state, &data.g, config)?;
    let space = Arc::new(DGSpace::new(&mesh, config.degree)?);
    let op = assemble_robin_operator(&space, &state.h, &config.quad)?;
    let cons = assemble_constraints(&space)?;
    let f = build_rhs_robin(&mesh, &w_dot, &g_dot, &state.h)?;
    let sol = solve_robin(&space, &op, &cons, &f)?;
    let exact = linearized_exact(radius, config)?;
    let quad = &config.quad;
    let error = pointwise_exterior_error(&|x| sol.density.potential(x, quad), &exact, points, &mesh)?;
    Ok(LinearizedRow { level, dof: space.dim(), error, multipliers: sol.multipliers })
}

/// One level of the cube Hessian benchmark.
#[derive(Clone, Debug, PartialEq)]
pub struct CubeRow {
    pub level: usize,
    pub dof: usize,
    pub error: f64,
    /// |trace H| / |H|.
    pub trace_ratio: f64,
    pub multipliers: [f64; 3],
}

/// Dirichlet problem with u = 1/|x| on the surface of [-1, 1]^3, Hessian error at (1, 1/3, 1/3).
pub fn cube_hessian(level: usize, degree: usize, quad: &QuadOptions) -> Result<CubeRow> {
    let mesh = build_cube(level, 1.0)?;
    let space = Arc::new(DGSpace::new(&mesh, degree)?);
    let v = assemble_slp(&space, quad)?;
    let cons = assemble_constraints(&space)?;
    let sol = solve_dirichlet(&space, &v, &cons, &|_, _, x| 1.0 / x.norm())?;
    let x = Vec3::from(HESSIAN_POINT_3D);
    let (facet, uv) = locate(&mesh, &x, 1e-12).ok_or_else(|| Error::FdGeometry("evaluation point is off the cube".into()))?;
    let h = eval_hessian_fd(&sol.density, facet, uv, FdSteps::default(), quad)?.hessian;
    let norm = h.norm();
    Ok(CubeRow {
        level,
        dof: space.dim(),
        error: (h - newton_hessian(&x)).norm(),
        trace_ratio: if norm > 0.0 { h.trace().abs() / norm } else { 0.0 },
        multipliers: sol.multipliers,
    })
}

/// One mesh of the 2D Hessian benchmark.
#[derive(Clone, Debug, PartialEq)]
pub struct Hessian2dRow {
    pub per_side: usize,
    pub dof: usize,
    pub error: f64,
    pub trace_ratio: f64,
}

/// Hessian error of ln |x| at (1/2, 1/3) on uniform meshes with 2, 4, ..., 2^levels elements per side.
pub fn hessian_2d_study(degree: usize, levels: usize) -> Result<Vec<Hessian2dRow>> {
    if degree > MAX_DEGREE_2D {
        return Err(Error::InvalidArgument(format!("degree {degree} exceeds {MAX_DEGREE_2D}")));
    }
    let x = Vec2::from(HESSIAN_POINT_2D);
    let mut b = PolygonBoundary::unit_square(2, Grading::Uniform, degree)?;
    let mut rows = Vec::with_capacity(levels);
    for l in 0..levels {
        if l > 0 {
            b = b.refined()?;
        }
        let sol = solve_dirichlet_2d(&b, &log_data)?;
        let h = hessian_2d_fd(&sol.density, &x, FdSteps::default(), &b)?;
        let norm = h.norm();
        rows.push(Hessian2dRow {
            per_side: 2 << l,
            dof: sol.dof(),
            error: hessian_error(&h, &x),
            trace_ratio: if norm > 0.0 { h.trace().abs() / norm } else { 0.0 },
        });
    }
    Ok(rows)
}

/// Mesh and p of the 2D p-version study.
pub const P_STUDY_PER_SIDE: usize = 5;
pub const P_STUDY_MAX_DEGREE: usize = 10;

/// Semigroup and constant-field residuals of the smoother on a spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct SmootherChecks {
    /// max |S_a S_b u - S_c u| with c^{-2k} = a^{-2k} + b^{-2k}.
    pub semigroup: f64,
    /// max |S_theta 1 - 1|.
    pub constant: f64,
}

/// Trial fields for the property report: white noise, a low-degree polynomial and a band-limited field.
pub fn report_trials(mesh: &TriangleMesh, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = StdRng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..mesh.n_vertices()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let poly: Vec<f64> = mesh.reference_vertices().iter().map(|x| x.x * x.z + 0.5 * x.y).collect();
    let c: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let band: Vec<f64> = mesh
        .reference_vertices()
        .iter()
        .map(|x| (3.0 * (c[0] * x.x + c[1] * x.y + c[2] * x.z)).sin() + x.x * x.y * x.z)
        .collect();
    vec![noise, poly, band]
}

pub fn smoother_checks(mesh: &TriangleMesh, k: u32, seed: u64) -> Result<SmootherChecks> {
    let spectrum = reference_spectrum(mesh)?;
    let u = SurfaceField::new(mesh, report_trials(mesh, seed).swap_remove(0))?;
    let (a, b) = (3.0f64, 5.0f64);
    let e = -2.0 * k as f64;
    let c = (a.powf(e) + b.powf(e)).powf(1.0 / e);
    let sab = smooth(&smooth(&u, SmootherParams::new(b, k)?, &spectrum)?, SmootherParams::new(a, k)?, &spectrum)?;
    let sc = smooth(&u, SmootherParams::new(c, k)?, &spectrum)?;
    let semigroup = sab.values.iter().zip(&sc.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let mut constant = 0.0f64;
    for theta in REPORT_THETAS {
        let one = smooth(&SurfaceField::constant(mesh, 1.0), SmootherParams::new(theta, k)?, &spectrum)?;
        constant = one.values.iter().map(|v| (v - 1.0).abs()).fold(constant, f64::max);
    }
    Ok(SmootherChecks { semigroup, constant })
}

pub fn smoother_report(mesh: &TriangleMesh, k: u32, seed: u64) -> Result<SmoothingReport> {
    let spectrum = reference_spectrum(mesh)?;
    smoothing_property_report(&spectrum, k, &REPORT_THETAS, &DEFAULT_INDEX_PAIRS, &report_trials(mesh, seed))
}

/// Files written by a run and a short text summary.
#[derive(Clone, Debug, Default)]
pub struct ExperimentOutput {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

impl ExperimentOutput {
    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, text)?;
        self.files.push(path);
        Ok(())
    }
}

/// Runs the experiment and writes its CSV logs, mesh snapshots and report into `config.output`.
/// On a numerical abort the partial outputs are on disk before the error is returned.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    fs::create_dir_all(&config.output)?;
    let mut out = ExperimentOutput { dir: config.output.clone(), ..Default::default() };
    out.write("config.txt", &config.to_string())?;
    let result = match config.experiment {
        ExperimentId::ModelProblem | ExperimentId::ModelProblemRestarted => model_problem(config, &mut out),
        ExperimentId::Bench2d => bench2d(config, &mut out),
        ExperimentId::Bench3dCube => bench3d(config, &mut out),
        ExperimentId::BenchSphereLinearized => bench_linearized(config, &mut out),
        ExperimentId::SmootherReport => smoother(config, &mut out),
    };
    let status = match &result {
        Ok(()) => "status = ok\n".to_string(),
        Err(e) => format!("status = aborted\nreason = {e}\n"),
    };
    out.summary.push_str(&status);
    out.write("report.txt", &out.summary.clone())?;
    result.map(|_| out)
}

fn model_problem(config: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    for &level in &config.levels {
        for &p in &config.p {
            let tag = format!("L{level}_p{p}");
            let mesh = build_icosphere(level)?;
            let data = ProblemData::sphere(&mesh, config.radius);
            let ic = config.iteration_config(p);
            let state = IterationState::initial(&mesh, &NewtonPotential { mass: 1.0 }, &ic)?;
            let dof = DGSpace::new(&mesh, p)?.dim();
            let mesh_dir = out.dir.join(format!("meshes_{tag}"));
            fs::create_dir_all(&mesh_dir)?;
            let diag_path = out.dir.join(format!("diagnostics_{tag}.csv"));
            fs::write(&diag_path, format!("{CSV_HEADER},north_pole_z,radial_spread\n"))?;
            let mut log = MetricLog::create(&out.dir.join(format!("metrics_{tag}.csv")))?;
            let id = config.experiment;
            let mut observe = |s: &IterationState| -> Result<()> {
                let d = s.diagnostics.last().ok_or_else(|| Error::State("no diagnostics".into()))?;
                append_diagnostics(&diag_path, d)?;
                export_mesh(&s.mesh, &mesh_dir.join(format!("step_{:03}.mesh", d.m)))?;
                log.push(MetricRow::new(id, d.m, dof, "phi_error", l2_surface_error(&s.mesh, config.radius)?))?;
                log.push(MetricRow::new(id, d.m, dof, "g_error", l2_g_error(&s.g.values, &data.g.values)?))?;
                log.push(MetricRow::new(id, d.m, dof, "north_pole_z", d.north_pole.z))?;
                log.push(MetricRow::new(id, d.m, dof, "radial_spread", d.radial_spread.unwrap_or(f64::NAN)))?;
                log.push(MetricRow::new(id, d.m, dof, "theta", d.theta))?;
                Ok(())
            };
            let trace = run_observed(state, &data, &ic, &mut observe)?;
            out.files.push(diag_path.clone());
            out.files.push(mesh_dir.clone());
            let last = trace.diagnostics.last().expect("initial row is always present");
            let _ = writeln!(
                out.summary,
                "{tag}: steps = {}, phi_error = {}, g_error = {}, north_pole_z = {}",
                last.m,
                fmt_f64(last.phi_error.unwrap_or(f64::NAN)),
                fmt_f64(last.g_error),
                fmt_f64(last.north_pole.z)
            );
            if let Some(e) = trace.abort {
                return Err(e);
            }
        }
    }
    Ok(())
}

fn append_diagnostics(path: &Path, d: &StepDiagnostics) -> Result<()> {
    use std::io::Write;
    let mut f = fs::OpenOptions::new().append(true).open(path)?;
    writeln!(f, "{},{},{}", d.csv_row(), fmt_f64(d.north_pole.z), fmt_f64(d.radial_spread.unwrap_or(f64::NAN)))?;
    Ok(())
}

fn bench2d(config: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    let levels = config.levels[0];
    let mut h_csv = String::from("p,level,dof,h,energy_error,eoc\n");
    for &p in &config.p {
        let study = h_version_study(p, 2, levels, default_grading(p))?;
        append_study(&mut h_csv, p, &study);
        let eocs = study.final_eocs(2);
        let _ = writeln!(out.summary, "h-version p = {p}: final eocs = {eocs:?}");
    }
    out.write("bench2d_h_version.csv", &h_csv)?;
    let study = p_version_study(P_STUDY_PER_SIDE, 0..=P_STUDY_MAX_DEGREE)?;
    out.write("bench2d_p_version.csv", &study.to_csv())?;
    if let Some(w) = &study.warning {
        let _ = writeln!(out.summary, "p-version warning: {w}");
    }
    let mut hcsv = String::from("p,per_side,dof,hessian_error,trace_ratio\n");
    for &p in config.p.iter().filter(|&&p| p >= 1) {
        for r in hessian_2d_study(p, levels)? {
            let _ = writeln!(hcsv, "{p},{},{},{},{}", r.per_side, r.dof, fmt_f64(r.error), fmt_f64(r.trace_ratio));
        }
    }
    out.write("bench2d_hessian.csv", &hcsv)
}

fn append_study(csv: &mut String, p: usize, study: &EnergyStudy) {
    for r in &study.rows {
        let e = r.eoc.map_or("nan".into(), fmt_f64);
        let _ = writeln!(csv, "{p},{},{},{},{},{e}", r.level, r.dof, fmt_f64(r.h), fmt_f64(r.error));
    }
}

fn bench3d(config: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    let quad = QuadOptions::default();
    let path = out.dir.join("bench3d_cube.csv");
    fs::write(&path, "p,level,dof,hessian_error,trace_ratio\n")?;
    out.files.push(path.clone());
    for &p in &config.p {
        for &l in &config.levels {
            let r = cube_hessian(l, p, &quad)?;
            use std::io::Write;
            let mut f = fs::OpenOptions::new().append(true).open(&path)?;
            writeln!(f, "{p},{},{},{},{}", r.level, r.dof, fmt_f64(r.error), fmt_f64(r.trace_ratio))?;
            let _ = writeln!(out.summary, "p = {p}, level = {l}: hessian error = {}", fmt_f64(r.error));
        }
    }
    Ok(())
}

fn bench_linearized(config: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    let points = exterior_points()?;
    let _ = writeln!(
        out.summary,
        "exterior points: level-{EXTERIOR_LEVEL} icosphere vertices at radius {EXTERIOR_RADIUS} (M = {})",
        points.len()
    );
    for &p in &config.p {
        let ic = config.iteration_config(p);
        let path = out.dir.join(format!("linearized_p{p}.csv"));
        fs::write(&path, "level,dof,error\n")?;
        out.files.push(path.clone());
        let mut rows = Vec::new();
        for &l in &config.levels {
            let r = sphere_linearized(l, config.radius, &ic, &points)?;
            use std::io::Write;
            let mut f = fs::OpenOptions::new().append(true).open(&path)?;
            writeln!(f, "{},{},{}", r.level, r.dof, fmt_f64(r.error))?;
            rows.push(r);
        }
        if rows.len() >= 2 {
            let rates = eoc(&rows.iter().map(|r| r.error).collect::<Vec<_>>(), &rows.iter().map(|r| r.dof).collect::<Vec<_>>())?;
            let _ = writeln!(out.summary, "p = {p}: eocs = {rates:?}");
        }
    }
    Ok(())
}

fn smoother(config: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    for &l in &config.levels {
        let mesh = build_icosphere(l.min(MAX_ICOSPHERE_LEVEL))?;
        let report = smoother_report(&mesh, config.k, config.seed)?;
        out.write(&format!("smoother_L{l}.csv"), &report.to_csv())?;
        let checks = smoother_checks(&mesh, config.k, config.seed)?;
        out.write(
            &format!("smoother_checks_L{l}.csv"),
            &format!("check,value\nsemigroup,{}\nconstant,{}\n", fmt_f64(checks.semigroup), fmt_f64(checks.constant)),
        )?;
        let _ = writeln!(out.summary, "level {l}: semigroup = {:e}, constant = {:e}", checks.semigroup, checks.constant);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        for id in ExperimentId::ALL {
            let c = ExperimentConfig::new(id);
            assert_eq!(ExperimentConfig::parse(&c.to_string()).unwrap(), c);
        }
        let c = ExperimentConfig::parse("experiment = bench3d_cube\nlevels = 0, 1\n# comment\ntheta0 = 3.25\n").unwrap();
        assert_eq!(c.levels, vec![0, 1]);
        assert_eq!(c.theta0, 3.25);
    }

    #[test]
    fn config_rejects() {
        assert!(matches!(ExperimentConfig::parse("experiment = model_problem\ncolour = red"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("levels = 2"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("experiment = model_problem\ntheta0 = 0.5"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("experiment = model_problem\nlevels = 9"), Err(Error::Config(_))));
        assert!(matches!(
            ExperimentConfig::parse("experiment = model_problem_restarted\nrestart_period = 0"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn surface_error_constant_offset() {
        let m = build_icosphere(1).unwrap();
        let n = m.n_vertices() as f64;
        assert!(l2_surface_error(&m.scaled(1.1).unwrap(), 1.1).unwrap() < 1e-15);
        let e = l2_surface_error(&m, 1.1).unwrap();
        assert!((e - 0.1 / n.sqrt()).abs() < 1e-14);
        let g = vec![Vec3::new(1.0, 2.0, 2.0); 10];
        let z = vec![Vec3::zeros(); 10];
        assert!((l2_g_error(&g, &z).unwrap() - 3.0 / 10f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn exterior_error() {
        let m = build_icosphere(1).unwrap();
        let pts = exterior_points().unwrap();
        assert_eq!(pts.len(), 10242);
        let e = pointwise_exterior_error(&|_| 0.25, &|_| 0.0, &pts, &m).unwrap();
        assert!((e - 0.25 / 10242f64.sqrt()).abs() < 1e-15);
        let bad = pointwise_exterior_error(&|_| 0.0, &|_| 0.0, &[Vec3::new(0.1, 0.2, 0.0)], &m);
        assert!(bad.is_err());
        assert!((winding_number(&m, &Vec3::new(0.9, 0.0, 0.0)) - 1.0).abs() < 1e-12);
        assert!(winding_number(&m, &Vec3::new(1.5, 0.0, 0.0)).abs() < 1e-12);
    }

    #[test]
    fn eoc_table_values() {
        let r = eoc(&[0.10170, 0.03850], &[120, 480]).unwrap();
        assert!((r[0] - 0.70).abs() < 5e-3);
        let r = eoc(&[0.56875, 0.03582], &[120, 480]).unwrap();
        assert!((r[0] - 1.99).abs() < 5e-3);
        let r = eoc(&[1.0, 0.25], &[10, 40]).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-15);
        assert!(eoc(&[1.0], &[10]).is_err());
        assert!(eoc(&[1.0, 0.0], &[10, 40]).is_err());
        let csv = eoc_csv("dof,error\n10,1\n40,0.25\n", "error").unwrap();
        assert!(csv.ends_with("40,0.25,1.0000000000000000e0\n"), "{csv}");
    }
}
