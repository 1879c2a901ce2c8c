//! The smoothed Nash-Hormander iteration for the Molodensky problem and its
//! restarted variant.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::Matrix3;

use crate::bem::{
    assemble_constraints, assemble_robin_operator, build_rhs_robin, point_on, solve_dirichlet_values, solve_robin,
    DGSpace, HistoryEntry, QuadOptions,
};
use crate::error::{Error, Result};
use crate::field::{check_marussi, gradient_trace, hessians_at_centroids_with, HessianScheme};
use crate::mesh::{update_surface, FacetField, SurfaceField, TriangleMesh, Vec3};
use crate::smoothing::{reference_spectrum, smooth, smooth_vector, spectrum_of, LBSpectrum, SmootherParams};

/// theta_m = (theta_0^kappa + m)^(1/kappa) and Delta_m = theta_{m+1} - theta_m.
pub fn theta_schedule(theta0: f64, kappa: f64, m: usize) -> Result<(f64, f64)> {
    if !(theta0 > 1.0) || !(kappa >= 1.0) || !theta0.is_finite() || !kappa.is_finite() {
        return Err(Error::InvalidArgument(format!("schedule needs theta0 > 1 and kappa >= 1, got {theta0}, {kappa}")));
    }
    let r = theta0.powf(-kappa);
    let e = |j: usize| (j as f64 * r).ln_1p() / kappa;
    let (a, b) = (e(m), e(m + 1));
    Ok((theta0 * a.exp(), theta0 * a.exp() * (b - a).exp_m1()))
}

/// A potential with closed-form derivatives, used for the initial solution.
pub trait ReferencePotential {
    fn value(&self, x: &Vec3) -> f64;
    fn gradient(&self, x: &Vec3) -> Vec3;
    fn hessian(&self, x: &Vec3) -> Matrix3<f64>;
}

/// mass / |x|.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonPotential {
    pub mass: f64,
}

impl ReferencePotential for NewtonPotential {
    fn value(&self, x: &Vec3) -> f64 {
        self.mass / x.norm()
    }

    fn gradient(&self, x: &Vec3) -> Vec3 {
        -x * (self.mass / x.norm().powi(3))
    }

    fn hessian(&self, x: &Vec3) -> Matrix3<f64> {
        crate::field::newton_hessian(x) * self.mass
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RestartRule {
    /// New theta_0 is the last theta reached by the finished leg.
    Continue,
    /// New theta_0 is rho times that value.
    Multiply(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmootherMetric {
    /// Laplace-Beltrami of the reference sphere positions.
    Reference,
    /// Laplace-Beltrami of the current surface.
    Current,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleParams {
    pub theta0: f64,
    pub kappa: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Order of the heat equation in the smoother.
    pub k: u32,
    /// 0 disables restarts.
    pub restart_period: usize,
    pub restart_rule: RestartRule,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self { theta0: 2.6, kappa: 6.0, tol: 1e-6, max_iter: 10, k: 1, restart_period: 0, restart_rule: RestartRule::Continue }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationConfig {
    pub schedule: ScheduleParams,
    pub degree: usize,
    pub quad: QuadOptions,
    pub hessian: HessianScheme,
    pub marussi_threshold: f64,
    pub smoother_metric: SmootherMetric,
}

impl Default for IterationConfig {
    fn default() -> Self {
        Self {
            schedule: ScheduleParams::default(),
            degree: 2,
            quad: QuadOptions::default(),
            hessian: HessianScheme::default(),
            marussi_threshold: 1e-6,
            smoother_metric: SmootherMetric::Reference,
        }
    }
}

impl IterationConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.schedule;
        theta_schedule(s.theta0, s.kappa, 0)?;
        if !(s.tol >= 0.0) || s.k == 0 {
            return Err(Error::InvalidArgument("tolerance must be >= 0 and k >= 1".into()));
        }
        if let RestartRule::Multiply(rho) = s.restart_rule {
            if !(rho >= 1.0) {
                return Err(Error::InvalidArgument(format!("restart factor {rho} below 1")));
            }
        }
        if self.degree > crate::kernels::MAX_DEGREE {
            return Err(Error::InvalidArgument(format!("degree {} unsupported", self.degree)));
        }
        self.quad.validate()
    }
}

/// Target data on the reference sphere nodes.
#[derive(Clone, Debug)]
pub struct ProblemData {
    pub w: SurfaceField<f64>,
    pub g: SurfaceField<Vec3>,
    /// Radius of the exact surface when it is a sphere, for error reporting.
    pub target_radius: Option<f64>,
}

impl ProblemData {
    /// Data of the sphere of radius `radius` with Newton potential 1/|x|.
    pub fn sphere(mesh: &TriangleMesh, radius: f64) -> Self {
        let w = SurfaceField::constant(mesh, 1.0 / radius);
        let g = SurfaceField::<Vec3>::from_fn(mesh, |x| -x.normalize() / (radius * radius));
        Self { w, g, target_radius: Some(radius) }
    }
}

/// (1/n) sqrt(sum_i e_i^2).
pub fn mean_l2(errors: impl Iterator<Item = f64>) -> f64 {
    let mut n = 0usize;
    let mut s = 0.0;
    for e in errors {
        n += 1;
        s += e * e;
    }
    if n == 0 {
        0.0
    } else {
        s.sqrt() / n as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepDiagnostics {
    /// Completed steps; 0 is the initial state.
    pub m: usize,
    pub theta: f64,
    pub delta: f64,
    pub phi_error: Option<f64>,
    pub g_error: f64,
    pub stop_sum: f64,
    pub min_abs_det: f64,
    pub wall_time: f64,
    pub north_pole: Vec3,
    pub radial_spread: Option<f64>,
    pub robin_multipliers: [f64; 3],
    pub dirichlet_multipliers: [f64; 3],
}

pub const CSV_HEADER: &str = "m,theta_m,delta_m,phi_error,g_error,stop_sum,min_abs_det,wall_time";

impl StepDiagnostics {
    pub fn csv_row(&self) -> String {
        let phi = self.phi_error.map_or("nan".to_string(), |e| format!("{e:.16e}"));
        format!(
            "{},{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.m, self.theta, self.delta, phi, self.g_error, self.stop_sum, self.min_abs_det, self.wall_time
        )
    }
}

pub fn diagnostics_csv(rows: &[StepDiagnostics]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.csv_row());
    }
    s
}

/// Everything carried from one step to the next.
#[derive(Clone, Debug)]
pub struct IterationState {
    /// Steps completed in total.
    pub m: usize,
    /// Steps completed in the current leg.
    pub leg_m: usize,
    pub theta0: f64,
    pub mesh: TriangleMesh,
    /// W_0 of the current leg at the nodes.
    pub w0: SurfaceField<f64>,
    /// G_0 of the current leg at the nodes.
    pub g0: SurfaceField<Vec3>,
    /// W_m at the nodes.
    pub w: SurfaceField<f64>,
    /// G_m at the nodes.
    pub g: SurfaceField<Vec3>,
    /// G_{m-1} of the current leg.
    pub g_prev: Option<SurfaceField<Vec3>>,
    pub h: FacetField<Vec3>,
    /// sum_{j<m} Delta_j G'_j over the current leg.
    pub accumulator: SurfaceField<Vec3>,
    /// sum_{j<m-1} Delta_j G'_j.
    pub accumulator_prev: SurfaceField<Vec3>,
    /// Smoothed G increments of the current leg.
    pub g_increments: Vec<SurfaceField<Vec3>>,
    /// W_{m-1} at the fixed right-hand-side points (facet, uv).
    pub w_points: Vec<f64>,
    pub history: Vec<HistoryEntry>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub spectrum: Arc<LBSpectrum>,
    /// Smallest |det grad g| at the facet centroids of the current surface.
    pub min_abs_det: f64,
}

fn rhs_reference_points(mesh: &TriangleMesh, degree: usize) -> Result<Vec<(usize, [f64; 2])>> {
    let sp = DGSpace::new(mesh, degree)?;
    Ok(sp.rhs_points().into_iter().map(|(t, uv, _, _)| (t, uv)).collect())
}

impl IterationState {
    /// State of a known solution (phi_0, v0) on `mesh`.
    pub fn initial(mesh: &TriangleMesh, v0: &dyn ReferencePotential, config: &IterationConfig) -> Result<Self> {
        config.validate()?;
        let w = SurfaceField::new(mesh, mesh.vertices().iter().map(|x| v0.value(x)).collect())?;
        let g = SurfaceField::new(mesh, mesh.vertices().iter().map(|x| v0.gradient(x)).collect())?;
        let geo = mesh.facet_geometries()?;
        let h = geo
            .iter()
            .enumerate()
            .map(|(t, f)| {
                let hm = v0.hessian(&f.midpoint);
                let inv = hm
                    .try_inverse()
                    .ok_or_else(|| Error::Marussi(format!("singular reference Hessian on facet {t}")))?;
                Ok(-(inv * v0.gradient(&f.midpoint)))
            })
            .collect::<Result<Vec<_>>>()?;
        let h = FacetField::new(mesh, h)?;
        let points = rhs_reference_points(mesh, config.degree)?;
        let w_points = points.iter().map(|&(t, uv)| v0.value(&point_on(mesh, t, uv))).collect();
        let spectrum = Arc::new(match config.smoother_metric {
            SmootherMetric::Reference => reference_spectrum(mesh)?,
            SmootherMetric::Current => spectrum_of(mesh)?,
        });
        let zero = SurfaceField::constant(mesh, Vec3::zeros());
        let mut state = Self {
            m: 0,
            leg_m: 0,
            theta0: config.schedule.theta0,
            mesh: mesh.clone(),
            w0: w.clone(),
            g0: g.clone(),
            w,
            g,
            g_prev: None,
            h,
            accumulator: zero.clone(),
            accumulator_prev: zero,
            g_increments: Vec::new(),
            w_points,
            history: Vec::new(),
            diagnostics: Vec::new(),
            spectrum,
            min_abs_det: f64::NAN,
        };
        let min_abs_det = check_marussi(&geo.iter().map(|f| v0.hessian(&f.midpoint)).collect::<Vec<_>>(), 0.0).min_abs_det;
        state.min_abs_det = min_abs_det;
        Ok(state)
    }

    /// (theta_m, Delta_m) of the current leg.
    pub fn schedule(&self, config: &IterationConfig) -> Result<(f64, f64)> {
        theta_schedule(self.theta0, config.schedule.kappa, self.leg_m)
    }

    fn params(&self, theta: f64, config: &IterationConfig) -> Result<SmootherParams> {
        SmootherParams::new(theta, config.schedule.k)
    }

    /// phi error, G error and stopping sum against the data.
    pub fn errors(&self, data: &ProblemData, w_surface: &SurfaceField<f64>) -> (Option<f64>, f64, f64) {
        let phi = data.target_radius.map(|r| mean_l2(self.mesh.vertices().iter().map(|v| v.norm() - r)));
        let ge = mean_l2(self.g.values.iter().zip(&data.g.values).map(|(a, b)| (a - b).norm()));
        let we = mean_l2(w_surface.values.iter().zip(&data.w.values).map(|(a, b)| a - b));
        (phi, ge, ge + we)
    }

    /// Diagnostics of the current state against the data, with W on the surface given at the nodes.
    fn diagnostics(&self, data: &ProblemData, w_surface: &SurfaceField<f64>, config: &IterationConfig) -> Result<StepDiagnostics> {
        let (theta, delta) = self.schedule(config)?;
        let (phi_error, g_error, stop_sum) = self.errors(data, w_surface);
        Ok(StepDiagnostics {
            m: self.m,
            theta,
            delta,
            phi_error,
            g_error,
            stop_sum,
            min_abs_det: self.min_abs_det,
            wall_time: 0.0,
            north_pole: self.mesh.vertices()[0],
            radial_spread: None,
            robin_multipliers: [0.0; 3],
            dirichlet_multipliers: [0.0; 3],
        })
    }

    /// Starts a new leg from the current state.
    pub fn restart(&mut self, config: &IterationConfig) -> Result<()> {
        let (theta_k, _) = self.schedule(config)?;
        self.theta0 = match config.schedule.restart_rule {
            RestartRule::Continue => theta_k,
            RestartRule::Multiply(rho) => rho * theta_k,
        };
        self.leg_m = 0;
        self.w0 = self.w.clone();
        self.g0 = self.g.clone();
        self.g_prev = None;
        self.accumulator = SurfaceField::constant(&self.mesh, Vec3::zeros());
        self.accumulator_prev = self.accumulator.clone();
        self.g_increments.clear();
        self.history.clear();
        Ok(())
    }
}

fn check_data(state: &IterationState, data: &ProblemData) -> Result<()> {
    let n = state.mesh.n_vertices();
    if data.w.len() != n || data.g.len() != n {
        return Err(Error::InvalidArgument("data and state live on different meshes".into()));
    }
    Ok(())
}

/// Smoothed potential increment of the current step.
pub fn smoothed_increment_w(state: &IterationState, w: &SurfaceField<f64>, config: &IterationConfig) -> Result<SurfaceField<f64>> {
    if w.len() != state.w0.len() {
        return Err(Error::InvalidArgument("potential data do not live on the state mesh".into()));
    }
    let (theta, delta) = state.schedule(config)?;
    let diff = SurfaceField { values: w.values.iter().zip(&state.w0.values).map(|(a, b)| a - b).collect() };
    let s_now = smooth(&diff, state.params(theta, config)?, &state.spectrum)?;
    if state.leg_m == 0 {
        return Ok(SurfaceField { values: s_now.values.iter().map(|v| v / delta).collect() });
    }
    let (theta_prev, _) = theta_schedule(state.theta0, config.schedule.kappa, state.leg_m - 1)?;
    let s_prev = smooth(&diff, state.params(theta_prev, config)?, &state.spectrum)?;
    Ok(SurfaceField { values: s_now.values.iter().zip(&s_prev.values).map(|(a, b)| (a - b) / delta).collect() })
}

fn vsub(a: &SurfaceField<Vec3>, b: &SurfaceField<Vec3>) -> SurfaceField<Vec3> {
    SurfaceField { values: a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect() }
}

fn vadd(a: &SurfaceField<Vec3>, b: &SurfaceField<Vec3>) -> SurfaceField<Vec3> {
    SurfaceField { values: a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect() }
}

/// Smoothed gravity increment of the current step; advances the accumulator.
pub fn smoothed_increment_g(
    state: &mut IterationState,
    g: &SurfaceField<Vec3>,
    config: &IterationConfig,
) -> Result<SurfaceField<Vec3>> {
    if g.len() != state.g.len() {
        return Err(Error::InvalidArgument("gravity data do not live on the state mesh".into()));
    }
    if state.g_increments.len() != state.leg_m {
        return Err(Error::State(format!(
            "accumulator holds {} increments at step {}",
            state.g_increments.len(),
            state.leg_m
        )));
    }
    let (theta, delta) = state.schedule(config)?;
    let inc = if state.leg_m == 0 {
        let s = smooth_vector(&vsub(g, &state.g0), state.params(theta, config)?, &state.spectrum)?;
        SurfaceField { values: s.values.iter().map(|v| v / delta).collect() }
    } else {
        let g_prev = state.g_prev.as_ref().ok_or_else(|| Error::State("missing previous gravity field".into()))?;
        let (theta_prev, _) = theta_schedule(state.theta0, config.schedule.kappa, state.leg_m - 1)?;
        let d_now = vadd(&vsub(g, &state.g), &state.accumulator);
        let d_prev = vadd(&vsub(g, g_prev), &state.accumulator_prev);
        let a = smooth_vector(&d_now, state.params(theta, config)?, &state.spectrum)?;
        let b = smooth_vector(&d_prev, state.params(theta_prev, config)?, &state.spectrum)?;
        SurfaceField { values: a.values.iter().zip(&b.values).map(|(x, y)| (x - y) / delta).collect() }
    };
    state.accumulator_prev = state.accumulator.clone();
    state.accumulator = SurfaceField {
        values: state.accumulator.values.iter().zip(&inc.values).map(|(a, d)| a + d * delta).collect(),
    };
    state.g_increments.push(inc.clone());
    Ok(inc)
}

/// One step of the iteration. On error the state is left untouched.
pub fn iterate_once(state: &mut IterationState, data: &ProblemData, config: &IterationConfig) -> Result<StepDiagnostics> {
    config.validate()?;
    check_data(state, data)?;
    let clock = Instant::now();
    let mut work = state.clone();
    let (theta, delta) = work.schedule(config)?;
    let quad = &config.quad;

    let w_dot = smoothed_increment_w(&work, &data.w, config)?;
    let g_dot = smoothed_increment_g(&mut work, &data.g, config)?;

    // linearized oblique Robin problem on the current surface
    let mesh = work.mesh.clone();
    let space = Arc::new(DGSpace::new(&mesh, config.degree)?);
    let op = assemble_robin_operator(&space, &work.h, quad)?;
    let cons = assemble_constraints(&space)?;
    let h_old = work.h.clone();
    let f = build_rhs_robin(&mesh, &w_dot, &g_dot, &h_old)?;
    let robin = solve_robin(&space, &op, &cons, &f)?;

    // Dirichlet problem for the accumulated potential
    let points = space.rhs_points();
    if points.len() != work.w_points.len() {
        return Err(Error::State("right-hand-side points out of sync".into()));
    }
    let w_vals: Vec<f64> = points
        .iter()
        .zip(&work.w_points)
        .map(|((_, _, x, _), w)| w + delta * robin.density.potential(x, quad))
        .collect();
    let dir = solve_dirichlet_values(&space, &op.v, &cons, &w_vals)?;

    // gravity and its gradient at the facet centroids
    let c = [1.0 / 3.0, 1.0 / 3.0];
    let nt = mesh.n_triangles();
    let g_c = (0..nt).map(|t| gradient_trace(&dir.density, t, c, quad)).collect::<Result<Vec<_>>>()?;
    let grad_u_c = (0..nt).map(|t| gradient_trace(&robin.density, t, c, quad)).collect::<Result<Vec<_>>>()?;
    let hess = hessians_at_centroids_with(&dir.density, config.hessian, quad)?;
    let marussi = check_marussi(&hess.values, config.marussi_threshold);
    if !marussi.passes() {
        return Err(Error::Marussi(format!(
            "|det grad g| = {:e} below {:e} on facet {}",
            marussi.min_abs_det, config.marussi_threshold, marussi.flagged[0]
        )));
    }

    // surface increment at the nodes
    let h_nodes = mesh.facet_to_nodes(&hess.values);
    let grad_u_nodes = mesh.facet_to_nodes(&grad_u_c);
    let mut phi_dot = Vec::with_capacity(mesh.n_vertices());
    for (i, hn) in h_nodes.iter().enumerate() {
        if !(hn.determinant().abs() >= config.marussi_threshold) {
            return Err(Error::Marussi(format!("nodal |det grad g| below threshold at vertex {i}")));
        }
        let inv = hn.try_inverse().ok_or_else(|| Error::Marussi(format!("singular nodal Hessian at vertex {i}")))?;
        phi_dot.push(inv * (g_dot.values[i] - grad_u_nodes[i]));
    }
    let phi_dot = SurfaceField::new(&mesh, phi_dot)?;
    let new_mesh = update_surface(&mesh, &phi_dot, delta)?;

    let h_new = hess
        .values
        .iter()
        .zip(&g_c)
        .enumerate()
        .map(|(t, (hm, g))| {
            hm.try_inverse()
                .map(|inv| -(inv * g))
                .ok_or_else(|| Error::Marussi(format!("singular Hessian on facet {t}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let g_new = SurfaceField::new(&mesh, mesh.facet_to_nodes(&g_c))?;
    let w_nodes =
        SurfaceField { values: mesh.vertices().iter().zip(&work.w.values).map(|(x, w)| w + delta * robin.density.potential(x, quad)).collect() };
    let vbar_nodes = SurfaceField { values: mesh.vertices().iter().map(|x| dir.density.potential(x, quad)).collect() };

    let radial: Vec<f64> = new_mesh.vertices().iter().zip(mesh.vertices()).map(|(a, b)| a.norm() - b.norm()).collect();
    let mean = radial.iter().sum::<f64>() / radial.len() as f64;
    let spread = radial.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - radial.iter().cloned().fold(f64::INFINITY, f64::min);

    work.history.push(HistoryEntry { mesh: mesh.clone(), density: robin.density.clone(), step: delta });
    work.g_prev = Some(std::mem::replace(&mut work.g, g_new));
    work.h = FacetField::new(&new_mesh, h_new)?;
    work.w = w_nodes;
    work.w_points = w_vals;
    work.mesh = new_mesh;
    work.m += 1;
    work.leg_m += 1;
    work.min_abs_det = marussi.min_abs_det;
    if config.smoother_metric == SmootherMetric::Current {
        work.spectrum = Arc::new(spectrum_of(&work.mesh)?);
    }

    let (phi_error, g_error, stop_sum) = work.errors(data, &vbar_nodes);
    let diag = StepDiagnostics {
        m: work.m,
        theta,
        delta,
        phi_error,
        g_error,
        stop_sum,
        min_abs_det: marussi.min_abs_det,
        wall_time: clock.elapsed().as_secs_f64(),
        north_pole: work.mesh.vertices()[0],
        radial_spread: Some(if mean != 0.0 { spread / mean.abs() } else { spread }),
        robin_multipliers: robin.multipliers,
        dirichlet_multipliers: dir.multipliers,
    };
    work.diagnostics.push(diag.clone());
    *state = work;
    Ok(diag)
}

/// Result of a run: per-step diagnostics (row 0 is the initial state) and the final state.
#[derive(Debug)]
pub struct Trace {
    pub diagnostics: Vec<StepDiagnostics>,
    pub state: IterationState,
    /// Numerical failure that ended the run early.
    pub abort: Option<Error>,
}

impl Trace {
    pub fn to_csv(&self) -> String {
        diagnostics_csv(&self.diagnostics)
    }
}

/// Called with the state after the initial row and after every step.
pub type Observer<'a> = &'a mut dyn FnMut(&IterationState) -> Result<()>;

fn drive(
    mut state: IterationState,
    data: &ProblemData,
    config: &IterationConfig,
    restart: usize,
    observer: Observer,
) -> Result<Trace> {
    config.validate()?;
    check_data(&state, data)?;
    if state.diagnostics.is_empty() {
        let d = state.diagnostics(data, &state.w.clone(), config)?;
        state.diagnostics.push(d);
        observer(&state)?;
    }
    let mut abort = None;
    let mut steps = 0;
    while steps < config.schedule.max_iter {
        let last = state.diagnostics.last().map_or(f64::INFINITY, |d| d.stop_sum);
        if last < config.schedule.tol {
            break;
        }
        if let Err(e) = iterate_once(&mut state, data, config) {
            abort = Some(e);
            break;
        }
        steps += 1;
        observer(&state)?;
        if restart > 0 && state.leg_m == restart {
            state.restart(config)?;
        }
    }
    Ok(Trace { diagnostics: state.diagnostics.clone(), state, abort })
}

/// Runs the iteration until the stopping sum falls below tol, max_iter steps, or an abort.
pub fn run(state: IterationState, data: &ProblemData, config: &IterationConfig) -> Result<Trace> {
    drive(state, data, config, 0, &mut |_| Ok(()))
}

/// As [`run`], restarting every `restart_period` steps.
pub fn run_restarted(state: IterationState, data: &ProblemData, config: &IterationConfig) -> Result<Trace> {
    if config.schedule.restart_period == 0 {
        return Err(Error::InvalidArgument("restart period must be at least 1".into()));
    }
    drive(state, data, config, config.schedule.restart_period, &mut |_| Ok(()))
}

/// As [`run`] or [`run_restarted`] depending on `restart_period`, reporting each state to `observer`.
pub fn run_observed(state: IterationState, data: &ProblemData, config: &IterationConfig, observer: Observer) -> Result<Trace> {
    drive(state, data, config, config.schedule.restart_period, observer)
}
