//! Potentials, gradients and finite-difference Hessians of single layers, plus the
//! Marussi check.

use nalgebra::Matrix3;

use crate::bem::{point_on, DGDensity, QuadOptions};
use crate::error::{Error, Result};
use crate::mesh::{FacetField, TriangleMesh, Vec3};

/// Barycentric margin below which a surface point counts as lying on an edge.
pub const EDGE_TOLERANCE: f64 = 1e-9;

/// Where a potential is evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EvalPoint {
    OnSurface { facet: usize, uv: [f64; 2] },
    Exterior(Vec3),
}

impl EvalPoint {
    pub fn position(&self, mesh: &TriangleMesh) -> Result<Vec3> {
        match *self {
            EvalPoint::OnSurface { facet, uv } => {
                if facet >= mesh.n_triangles() {
                    return Err(Error::InvalidArgument(format!("facet {facet} out of range")));
                }
                Ok(point_on(mesh, facet, uv))
            }
            EvalPoint::Exterior(x) => Ok(x),
        }
    }
}

/// Solid angle of triangle (a, b, c) seen from x.
fn solid_angle(x: &Vec3, [a, b, c]: [Vec3; 3]) -> f64 {
    let (a, b, c) = (a - x, b - x, c - x);
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let num = a.dot(&b.cross(&c));
    let den = la * lb * lc + a.dot(&b) * lc + a.dot(&c) * lb + b.dot(&c) * la;
    2.0 * num.atan2(den)
}

/// Winding number of the closed surface around x.
pub fn winding_number(mesh: &TriangleMesh, x: &Vec3) -> f64 {
    (0..mesh.n_triangles()).map(|t| solid_angle(x, mesh.triangle_vertices(t))).sum::<f64>() / (4.0 * std::f64::consts::PI)
}

pub fn is_exterior(mesh: &TriangleMesh, x: &Vec3) -> bool {
    winding_number(mesh, x).abs() < 0.5
}

/// Facet and reference coordinates of a surface point within `tol` of the mesh.
pub fn locate(mesh: &TriangleMesh, x: &Vec3, tol: f64) -> Option<(usize, [f64; 2])> {
    let mut best: Option<(f64, usize, [f64; 2])> = None;
    for t in 0..mesh.n_triangles() {
        let [a, b, c] = mesh.triangle_vertices(t);
        let (e1, e2, d) = (b - a, c - a, x - a);
        let n = e1.cross(&e2);
        let dist = d.dot(&n).abs() / n.norm();
        let (g11, g12, g22) = (e1.dot(&e1), e1.dot(&e2), e2.dot(&e2));
        let det = g11 * g22 - g12 * g12;
        let (r1, r2) = (d.dot(&e1), d.dot(&e2));
        let u = (g22 * r1 - g12 * r2) / det;
        let v = (g11 * r2 - g12 * r1) / det;
        let inside = u >= -1e-12 && v >= -1e-12 && u + v <= 1.0 + 1e-12;
        if inside && dist <= tol && best.map_or(true, |(bd, _, _)| dist < bd) {
            best = Some((dist, t, [u, v]));
        }
    }
    best.map(|(_, t, uv)| (t, uv))
}

fn check_interior(mesh: &TriangleMesh, facet: usize, uv: [f64; 2]) -> Result<()> {
    if facet >= mesh.n_triangles() {
        return Err(Error::InvalidArgument(format!("facet {facet} out of range")));
    }
    let m = uv[0].min(uv[1]).min(1.0 - uv[0] - uv[1]);
    if m < EDGE_TOLERANCE {
        return Err(Error::AmbiguousTrace(format!("point {uv:?} lies on the boundary of facet {facet}")));
    }
    Ok(())
}

/// Single-layer potential of `density`.
pub fn eval_potential(density: &DGDensity, x: &EvalPoint, opts: &QuadOptions) -> Result<f64> {
    let p = x.position(density.space.mesh())?;
    Ok(density.potential(&p, opts))
}

/// Gradient of the single layer at an exterior point.
pub fn eval_gradient_exterior(density: &DGDensity, x: &Vec3, opts: &QuadOptions) -> Result<Vec3> {
    if !is_exterior(density.space.mesh(), x) {
        return Err(Error::InvalidArgument(format!("point {x:?} is not exterior")));
    }
    Ok(density.gradient(x, opts))
}

fn trace_at(density: &DGDensity, facet: usize, x: &Vec3, anchor: &Vec3, opts: &QuadOptions) -> Vec3 {
    let n = density.space.triangle(facet).normal;
    density.gradient_anchored(x, anchor, opts) - n * (0.5 * density.value(facet, x))
}

/// Exterior trace of the full gradient at a facet-interior point.
pub fn gradient_trace(density: &DGDensity, facet: usize, uv: [f64; 2], opts: &QuadOptions) -> Result<Vec3> {
    check_interior(density.space.mesh(), facet, uv)?;
    let x = point_on(density.space.mesh(), facet, uv);
    Ok(trace_at(density, facet, &x, &x, opts))
}

/// e . grad u from the exterior at a facet-interior point, by the jump relation.
pub fn eval_gradient_on_surface(
    density: &DGDensity,
    facet: usize,
    uv: [f64; 2],
    e: &Vec3,
    opts: &QuadOptions,
) -> Result<f64> {
    Ok(gradient_trace(density, facet, uv, opts)?.dot(e))
}

/// Finite-difference step sizes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdSteps {
    pub normal: f64,
    pub tangential: f64,
}

impl Default for FdSteps {
    fn default() -> Self {
        Self { normal: 1e-4, tangential: 1e-5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HessianResult {
    pub hessian: Matrix3<f64>,
    pub delta_n: f64,
    pub delta_t: f64,
}

/// Hessian from gradients: one-sided second-order differences along `frame[2]`
/// (`grad(x, 0)` is the trace, `grad(x, 1)` exterior values), central differences
/// along `frame[0]` and `frame[1]`.
pub fn fd_hessian(
    x: &Vec3,
    frame: [Vec3; 3],
    dn: f64,
    dt: f64,
    grad: &mut dyn FnMut(&Vec3, bool) -> Result<Vec3>,
) -> Result<Matrix3<f64>> {
    let n = frame[2];
    let g0 = grad(x, true)?;
    let g1 = grad(&(x + n * dn), false)?;
    let g2 = grad(&(x + n * (2.0 * dn)), false)?;
    let dnv = (g1 * 4.0 - g0 * 3.0 - g2) / (2.0 * dn);
    let mut h = dnv * n.transpose();
    for t in &frame[..2] {
        let gp = grad(&(x + t * dt), true)?;
        let gm = grad(&(x - t * dt), true)?;
        h += (gp - gm) / (2.0 * dt) * t.transpose();
    }
    Ok(h)
}

/// Finite-difference Hessian of the single layer at a facet-interior point.
pub fn eval_hessian_fd(
    density: &DGDensity,
    facet: usize,
    uv: [f64; 2],
    steps: FdSteps,
    opts: &QuadOptions,
) -> Result<HessianResult> {
    let mesh = density.space.mesh();
    check_interior(mesh, facet, uv)?;
    let tri = density.space.triangle(facet);
    let x = point_on(mesh, facet, uv);
    let dv = mesh.vertices().iter().map(|v| (v - x).norm()).fold(f64::INFINITY, f64::min);
    let dn = steps.normal.min(0.5 * dv);
    let dt = steps.tangential.min(0.5 * dv);
    if !(dn > 0.0 && dt > 0.0) {
        return Err(Error::FdGeometry(format!("no admissible step at facet {facet}")));
    }
    let frame = [tri.e1, tri.e2, tri.normal];
    for t in &frame[..2] {
        for s in [-1.0, 1.0] {
            let y = x + t * (s * dt);
            let inside = locate(mesh, &y, 1e-12 * tri.diam).map_or(false, |(f, uvy)| {
                f == facet && uvy[0].min(uvy[1]).min(1.0 - uvy[0] - uvy[1]) > EDGE_TOLERANCE
            });
            if !inside {
                return Err(Error::FdGeometry(format!("tangential offset leaves facet {facet}")));
            }
        }
    }
    for k in [1.0, 2.0] {
        if !is_exterior(mesh, &(x + tri.normal * (k * dn))) {
            return Err(Error::FdGeometry(format!("normal offset from facet {facet} is not exterior")));
        }
    }
    let mut grad = |y: &Vec3, on_surface: bool| -> Result<Vec3> {
        Ok(if on_surface { trace_at(density, facet, y, &x, opts) } else { density.gradient_anchored(y, &x, opts) })
    };
    let hessian = fd_hessian(&x, frame, dn, dt, &mut grad)?;
    Ok(HessianResult { hessian, delta_n: dn, delta_t: dt })
}

/// Hessians at all facet centroids.
pub fn hessians_at_centroids(density: &DGDensity, steps: FdSteps, opts: &QuadOptions) -> Result<FacetField<Matrix3<f64>>> {
    let mesh = density.space.mesh();
    let c = [1.0 / 3.0, 1.0 / 3.0];
    let values = (0..mesh.n_triangles())
        .map(|t| eval_hessian_fd(density, t, c, steps, opts).map(|r| r.hessian))
        .collect::<Result<Vec<_>>>()?;
    FacetField::new(mesh, values)
}

/// How Hessians are sampled at a facet point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HessianScheme {
    /// Differences of traces and near-surface exterior values at the point itself.
    Surface(FdSteps),
    /// Central differences with step `step` at the exterior points x + s n and x + 2 s n,
    /// s = `offset` times the facet diameter, extrapolated linearly to the surface.
    Extrapolated { offset: f64, step: f64 },
}

impl Default for HessianScheme {
    fn default() -> Self {
        HessianScheme::Extrapolated { offset: 0.5, step: 1e-4 }
    }
}

fn central_hessian(density: &DGDensity, y: &Vec3, e: f64, opts: &QuadOptions) -> Matrix3<f64> {
    let mut h = Matrix3::zeros();
    for k in 0..3 {
        let mut d = Vec3::zeros();
        d[k] = e;
        let col = (density.gradient(&(y + d), opts) - density.gradient(&(y - d), opts)) / (2.0 * e);
        h.set_column(k, &col);
    }
    (h + h.transpose()) * 0.5
}

/// Hessian at a facet-interior point extrapolated from two exterior samples along the normal.
pub fn eval_hessian_extrapolated(
    density: &DGDensity,
    facet: usize,
    uv: [f64; 2],
    offset: f64,
    step: f64,
    opts: &QuadOptions,
) -> Result<Matrix3<f64>> {
    if !(offset > 0.0 && step > 0.0) {
        return Err(Error::InvalidArgument(format!("offset {offset} and step {step} must be positive")));
    }
    let mesh = density.space.mesh();
    check_interior(mesh, facet, uv)?;
    let tri = density.space.triangle(facet);
    let x = point_on(mesh, facet, uv);
    let s = offset * tri.diam;
    if !(step < 0.5 * s) {
        return Err(Error::FdGeometry(format!("step {step} too large for offset {s} at facet {facet}")));
    }
    let y1 = x + tri.normal * s;
    let y2 = x + tri.normal * (2.0 * s);
    for y in [&y1, &y2] {
        if !is_exterior(mesh, y) {
            return Err(Error::FdGeometry(format!("extrapolation point off facet {facet} is not exterior")));
        }
    }
    Ok(central_hessian(density, &y1, step, opts) * 2.0 - central_hessian(density, &y2, step, opts))
}

/// Hessians at all facet centroids by the given scheme.
pub fn hessians_at_centroids_with(density: &DGDensity, scheme: HessianScheme, opts: &QuadOptions) -> Result<FacetField<Matrix3<f64>>> {
    match scheme {
        HessianScheme::Surface(steps) => hessians_at_centroids(density, steps, opts),
        HessianScheme::Extrapolated { offset, step } => {
            let mesh = density.space.mesh();
            let c = [1.0 / 3.0, 1.0 / 3.0];
            let values = (0..mesh.n_triangles())
                .map(|t| eval_hessian_extrapolated(density, t, c, offset, step, opts))
                .collect::<Result<Vec<_>>>()?;
            FacetField::new(mesh, values)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarussiReport {
    pub abs_det: Vec<f64>,
    pub min_abs_det: f64,
    pub flagged: Vec<usize>,
    pub threshold: f64,
}

impl MarussiReport {
    pub fn passes(&self) -> bool {
        self.flagged.is_empty()
    }
}

/// |det| per matrix and the indices below `threshold`.
pub fn check_marussi(hessians: &[Matrix3<f64>], threshold: f64) -> MarussiReport {
    let abs_det: Vec<f64> = hessians.iter().map(|h| h.determinant().abs()).collect();
    let min_abs_det = abs_det.iter().cloned().fold(f64::INFINITY, f64::min);
    let flagged = abs_det.iter().enumerate().filter(|(_, d)| !(**d >= threshold)).map(|(i, _)| i).collect();
    MarussiReport { abs_det, min_abs_det, flagged, threshold }
}

/// Closed-form Hessian of 1/|x|.
pub fn newton_hessian(x: &Vec3) -> Matrix3<f64> {
    let r = x.norm();
    x * x.transpose() * (3.0 / r.powi(5)) - Matrix3::identity() / r.powi(3)
}
