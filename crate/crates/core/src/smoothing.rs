//! Heat-kernel smoothing on triangulated surfaces: P1 Laplace-Beltrami matrices,
//! their generalized eigendecomposition and the spectral smoother
//! S_theta = exp(-theta^{-2k} (-Delta)^k).

use std::fmt::Write as _;

use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::{Mat, Par, Side};

use crate::error::{Error, Result};
use crate::mesh::{SurfaceField, TriangleMesh, Vec3};

/// Cotangent stiffness and consistent mass matrices of piecewise linear elements.
pub fn assemble_laplace_beltrami(mesh: &TriangleMesh) -> Result<(Mat<f64>, Mat<f64>)> {
    let n = mesh.n_vertices();
    let mut k = Mat::<f64>::zeros(n, n);
    let mut m = Mat::<f64>::zeros(n, n);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let g = mesh.facet_geometry(t)?;
        let p = mesh.triangle_vertices(t);
        for c in 0..3 {
            let (i, j) = (tri[(c + 1) % 3], tri[(c + 2) % 3]);
            let e1 = p[(c + 1) % 3] - p[c];
            let e2 = p[(c + 2) % 3] - p[c];
            let cot = e1.dot(&e2) / e1.cross(&e2).norm();
            if !cot.is_finite() {
                return Err(Error::Geometry(format!("cotangent blow-up on facet {t}")));
            }
            let w = 0.5 * cot;
            k[(i, j)] -= w;
            k[(j, i)] -= w;
            k[(i, i)] += w;
            k[(j, j)] += w;
        }
        for a in 0..3 {
            for b in 0..3 {
                m[(tri[a], tri[b])] += g.area / 12.0 * if a == b { 2.0 } else { 1.0 };
            }
        }
    }
    Ok((k, m))
}

/// Mass-orthonormal eigenpairs of the discrete -Delta, ascending.
#[derive(Clone, Debug)]
pub struct LBSpectrum {
    pub eigenvalues: Vec<f64>,
    /// Columns are eigenvectors.
    pub eigenvectors: Mat<f64>,
    pub mass: Mat<f64>,
}

/// Generalized eigenproblem K psi = lambda M psi through M = L L^T.
pub fn compute_spectrum(stiffness: &Mat<f64>, mass: &Mat<f64>, n_modes: Option<usize>) -> Result<LBSpectrum> {
    let n = stiffness.nrows();
    if stiffness.ncols() != n || mass.nrows() != n || mass.ncols() != n || n == 0 {
        return Err(Error::InvalidArgument("stiffness and mass must be square of equal size".into()));
    }
    let modes = n_modes.unwrap_or(n);
    if modes == 0 || modes > n {
        return Err(Error::InvalidArgument(format!("{modes} modes requested from {n}")));
    }
    let llt = mass
        .llt(Side::Lower)
        .map_err(|e| Error::Solver { block: "mass".into(), msg: format!("Cholesky failed: {e:?}") })?;
    let l = llt.L().to_owned();
    let mut x = stiffness.clone();
    solve_lower_triangular_in_place(l.as_ref(), x.as_mut(), Par::Seq);
    let mut c = x.transpose().to_owned();
    solve_lower_triangular_in_place(l.as_ref(), c.as_mut(), Par::Seq);
    let c = Mat::from_fn(n, n, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
    let evd = c
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Solver { block: "laplace-beltrami".into(), msg: format!("eigensolver failed: {e:?}") })?;
    let s = evd.S().column_vector();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    order.truncate(modes);
    let mut q = Mat::from_fn(n, modes, |i, j| evd.U()[(i, order[j])]);
    solve_upper_triangular_in_place(l.transpose(), q.as_mut(), Par::Seq);
    let eigenvalues = order.iter().map(|&i| s[i].max(0.0)).collect();
    Ok(LBSpectrum { eigenvalues, eigenvectors: q, mass: mass.clone() })
}

/// Spectrum of the mesh's own metric.
pub fn spectrum_of(mesh: &TriangleMesh) -> Result<LBSpectrum> {
    let (k, m) = assemble_laplace_beltrami(mesh)?;
    compute_spectrum(&k, &m, None)
}

/// Spectrum on the reference sphere positions of the mesh.
pub fn reference_spectrum(mesh: &TriangleMesh) -> Result<LBSpectrum> {
    spectrum_of(&mesh.with_vertices(mesh.reference_vertices().to_vec())?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmootherParams {
    pub theta: f64,
    pub k: u32,
}

impl SmootherParams {
    pub fn new(theta: f64, k: u32) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() || k == 0 {
            return Err(Error::InvalidArgument(format!("smoother needs theta > 0 and k >= 1, got {theta}, {k}")));
        }
        Ok(Self { theta, k })
    }
}

/// exp(-lambda^k theta^{-2k}).
pub fn multiplier(lambda: f64, theta: f64, k: u32) -> f64 {
    (-(lambda / (theta * theta)).powi(k as i32)).exp()
}

/// d/dtheta of the multiplier.
pub fn multiplier_derivative(lambda: f64, theta: f64, k: u32) -> f64 {
    let x = (lambda / (theta * theta)).powi(k as i32);
    2.0 * k as f64 / theta * x * (-x).exp()
}

impl LBSpectrum {
    pub fn n_vertices(&self) -> usize {
        self.eigenvectors.nrows()
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvectors.ncols()
    }

    /// c_i = psi_i^T M u.
    pub fn coefficients(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n_vertices();
        let mu: Vec<f64> = (0..n).map(|i| (0..n).map(|j| self.mass[(i, j)] * u[j]).sum()).collect();
        (0..self.n_modes()).map(|m| (0..n).map(|i| self.eigenvectors[(i, m)] * mu[i]).sum()).collect()
    }

    pub fn reconstruct(&self, c: &[f64]) -> Vec<f64> {
        let n = self.n_vertices();
        (0..n).map(|i| c.iter().enumerate().map(|(m, cm)| self.eigenvectors[(i, m)] * cm).sum()).collect()
    }

    /// ||u||_s^2 = sum (1 + lambda_i)^s c_i^2.
    pub fn sobolev_norm(&self, c: &[f64], s: f64) -> f64 {
        c.iter().zip(&self.eigenvalues).map(|(c, l)| (1.0 + l).powf(s) * c * c).sum::<f64>().sqrt()
    }

    /// Mass-weighted mean.
    pub fn mean(&self, u: &[f64]) -> f64 {
        let n = self.n_vertices();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            for j in 0..n {
                num += self.mass[(i, j)] * u[j];
                den += self.mass[(i, j)];
            }
        }
        num / den
    }

    fn smooth_values(&self, u: &[f64], p: SmootherParams) -> Vec<f64> {
        let c = self.coefficients(u);
        let d: Vec<f64> = c.iter().zip(&self.eigenvalues).map(|(c, l)| c * multiplier(*l, p.theta, p.k)).collect();
        self.reconstruct(&d)
    }
}

/// S_theta applied to a nodal scalar field.
pub fn smooth(field: &SurfaceField<f64>, params: SmootherParams, spectrum: &LBSpectrum) -> Result<SurfaceField<f64>> {
    SmootherParams::new(params.theta, params.k)?;
    if field.len() != spectrum.n_vertices() {
        return Err(Error::InvalidArgument("field and spectrum live on different meshes".into()));
    }
    Ok(SurfaceField { values: spectrum.smooth_values(&field.values, params) })
}

/// S_theta applied componentwise to a nodal vector field.
pub fn smooth_vector(field: &SurfaceField<Vec3>, params: SmootherParams, spectrum: &LBSpectrum) -> Result<SurfaceField<Vec3>> {
    SmootherParams::new(params.theta, params.k)?;
    if field.len() != spectrum.n_vertices() {
        return Err(Error::InvalidArgument("field and spectrum live on different meshes".into()));
    }
    let comps: Vec<Vec<f64>> =
        (0..3).map(|c| spectrum.smooth_values(&field.values.iter().map(|v| v[c]).collect::<Vec<_>>(), params)).collect();
    Ok(SurfaceField { values: (0..field.len()).map(|i| Vec3::new(comps[0][i], comps[1][i], comps[2][i])).collect() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmoothingProperty {
    /// ||S u||_b <= C ||u||_a, b <= a.
    Bounded,
    /// ||S u||_b <= C theta^{b-a} ||u||_a, a <= b.
    Smoothing,
    /// ||u - S u||_b <= C theta^{b-a} ||u||_a, 0 <= a - b < 2k.
    Approximation,
    /// ||dS/dtheta u||_b <= C theta^{b-a-1} ||u||_a.
    Derivative,
}

impl SmoothingProperty {
    pub fn label(&self) -> &'static str {
        match self {
            SmoothingProperty::Bounded => "i",
            SmoothingProperty::Smoothing => "ii",
            SmoothingProperty::Approximation => "iii'",
            SmoothingProperty::Derivative => "iv",
        }
    }

    pub fn admissible(&self, a: f64, b: f64, k: u32) -> bool {
        match self {
            SmoothingProperty::Bounded => b <= a,
            SmoothingProperty::Smoothing => a <= b,
            SmoothingProperty::Approximation => a - b >= 0.0 && a - b < 2.0 * k as f64,
            SmoothingProperty::Derivative => true,
        }
    }

    /// Per-mode factor whose weighted sup gives the constant.
    fn symbol(&self, lambda: f64, theta: f64, k: u32) -> f64 {
        match self {
            SmoothingProperty::Bounded | SmoothingProperty::Smoothing => multiplier(lambda, theta, k),
            SmoothingProperty::Approximation => 1.0 - multiplier(lambda, theta, k),
            SmoothingProperty::Derivative => multiplier_derivative(lambda, theta, k),
        }
    }

    fn theta_power(&self, a: f64, b: f64) -> f64 {
        match self {
            SmoothingProperty::Bounded => 0.0,
            SmoothingProperty::Smoothing | SmoothingProperty::Approximation => b - a,
            SmoothingProperty::Derivative => b - a - 1.0,
        }
    }

    pub const ALL: [SmoothingProperty; 4] = [
        SmoothingProperty::Bounded,
        SmoothingProperty::Smoothing,
        SmoothingProperty::Approximation,
        SmoothingProperty::Derivative,
    ];
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropertyRow {
    pub property: SmoothingProperty,
    pub a: f64,
    pub b: f64,
    pub theta: f64,
    /// None for the operator bound (sup over all modes), Some(i) for trial field i.
    pub trial: Option<usize>,
    pub constant: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SmoothingReport {
    pub rows: Vec<PropertyRow>,
}

impl SmoothingReport {
    /// CSV with columns property,a,b,theta,trial,C.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("property,a,b,theta,trial,C\n");
        for r in &self.rows {
            let trial = r.trial.map_or("sup".to_string(), |t| t.to_string());
            let _ = writeln!(s, "{},{},{},{},{},{:.16e}", r.property.label(), r.a, r.b, r.theta, trial, r.constant);
        }
        s
    }

    pub fn constants(&self, property: SmoothingProperty, a: f64, b: f64, trial: Option<usize>) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.property == property && r.a == a && r.b == b && r.trial == trial)
            .map(|r| (r.theta, r.constant))
            .collect()
    }
}

/// Default Sobolev index pairs (a, b) of the report.
pub const DEFAULT_INDEX_PAIRS: [(f64, f64); 7] = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (0.0, 1.0), (0.0, 2.0), (1.0, 2.0), (2.0, 1.0)];

/// Smallest admissible constants per property, index pair and theta: the exact operator
/// bound over all modes and the ratio attained by each trial field.
pub fn smoothing_property_report(
    spectrum: &LBSpectrum,
    k: u32,
    thetas: &[f64],
    pairs: &[(f64, f64)],
    trials: &[Vec<f64>],
) -> Result<SmoothingReport> {
    for t in thetas {
        SmootherParams::new(*t, k)?;
    }
    if let Some(i) = trials.iter().position(|t| t.len() != spectrum.n_vertices()) {
        return Err(Error::InvalidArgument(format!("trial field {i} has the wrong length")));
    }
    let coeffs: Vec<Vec<f64>> = trials.iter().map(|t| spectrum.coefficients(t)).collect();
    let mut rows = Vec::new();
    for prop in SmoothingProperty::ALL {
        for &(a, b) in pairs {
            if !prop.admissible(a, b, k) {
                continue;
            }
            for &theta in thetas {
                let scale = theta.powf(-prop.theta_power(a, b));
                let sup = spectrum
                    .eigenvalues
                    .iter()
                    .map(|&l| prop.symbol(l, theta, k).abs() * (1.0 + l).powf(0.5 * (b - a)))
                    .fold(0.0, f64::max);
                rows.push(PropertyRow { property: prop, a, b, theta, trial: None, constant: sup * scale });
                for (i, c) in coeffs.iter().enumerate() {
                    let d: Vec<f64> =
                        c.iter().zip(&spectrum.eigenvalues).map(|(c, l)| c * prop.symbol(*l, theta, k)).collect();
                    let num = spectrum.sobolev_norm(&d, b);
                    let den = spectrum.sobolev_norm(c, a);
                    let constant = if den > 0.0 { num / den * scale } else { 0.0 };
                    rows.push(PropertyRow { property: prop, a, b, theta, trial: Some(i), constant });
                }
            }
        }
    }
    Ok(SmoothingReport { rows })
}
