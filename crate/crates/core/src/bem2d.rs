//! Two-dimensional Galerkin BEM for the logarithmic single layer on polygons,
//! with energy-norm studies and finite-difference Hessians.

use std::fmt::Write as _;
use std::sync::Arc;

use faer::prelude::*;
use faer::{Mat, Side};
use nalgebra::Matrix2;

use crate::error::{Error, Result};
use crate::field::FdSteps;
use crate::kernels::{legendre_values, slp_segment_legendre, slp_segment_legendre_local, Segment, Vec2, MAX_DEGREE_2D};
use crate::quadrature::{gauss_rule, graded_intervals, QuadRule};

const OUTER_SIGMA: f64 = 0.3;
const TOUCH_LEVELS: usize = 21;
const RHS_EXTRA_ORDER: usize = 20;

/// Placement of the nodes along each polygon side.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Grading {
    Uniform,
    /// Nodes at (2i/n)^beta / 2 from each corner.
    Corner(f64),
}

/// Grading exponent used for the h-version benchmark at degree p.
pub fn default_grading(p: usize) -> Grading {
    if p == 0 {
        Grading::Uniform
    } else {
        Grading::Corner(1.0 + 0.5 * p as f64 + 0.25)
    }
}

/// A closed counter-clockwise polygon with per-side subdivision counts.
#[derive(Clone, Debug, PartialEq)]
pub struct PolygonBoundary {
    vertices: Vec<Vec2>,
    subdivisions: Vec<usize>,
    grading: Grading,
    degree: usize,
}

fn segments_cross(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let orient = |p: Vec2, q: Vec2, r: Vec2| (q - p).perp(&(r - p));
    let (o1, o2, o3, o4) = (orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

impl PolygonBoundary {
    pub fn new(vertices: Vec<Vec2>, subdivisions: Vec<usize>, grading: Grading, degree: usize) -> Result<Self> {
        let n = vertices.len();
        if n < 3 || subdivisions.len() != n {
            return Err(Error::Geometry(format!("{n} vertices with {} subdivision counts", subdivisions.len())));
        }
        if subdivisions.iter().any(|&s| s == 0) {
            return Err(Error::InvalidArgument("every side needs at least one element".into()));
        }
        if degree > MAX_DEGREE_2D {
            return Err(Error::InvalidArgument(format!("degree {degree} above {MAX_DEGREE_2D}")));
        }
        if let Grading::Corner(beta) = grading {
            if !(beta >= 1.0) {
                return Err(Error::InvalidArgument(format!("grading exponent {beta} below 1")));
            }
        }
        let area: f64 = (0..n).map(|i| vertices[i].perp(&vertices[(i + 1) % n])).sum::<f64>() * 0.5;
        if !(area > 0.0) {
            return Err(Error::Geometry("polygon is not counter-clockwise".into()));
        }
        for i in 0..n {
            if (vertices[(i + 1) % n] - vertices[i]).norm() == 0.0 {
                return Err(Error::Geometry(format!("side {i} is degenerate")));
            }
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                if segments_cross(vertices[i], vertices[(i + 1) % n], vertices[j], vertices[(j + 1) % n]) {
                    return Err(Error::Geometry(format!("sides {i} and {j} intersect")));
                }
            }
        }
        Ok(Self { vertices, subdivisions, grading, degree })
    }

    /// The square [-1/2, 1/2]^2 with `n` elements per side.
    pub fn unit_square(n: usize, grading: Grading, degree: usize) -> Result<Self> {
        let v = vec![Vec2::new(-0.5, -0.5), Vec2::new(0.5, -0.5), Vec2::new(0.5, 0.5), Vec2::new(-0.5, 0.5)];
        Self::new(v, vec![n; 4], grading, degree)
    }

    /// Regular polygon inscribed in the circle of radius `radius`.
    pub fn regular(sides: usize, radius: f64, per_side: usize, degree: usize) -> Result<Self> {
        let v = (0..sides)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / sides as f64;
                Vec2::new(radius * a.cos(), radius * a.sin())
            })
            .collect();
        Self::new(v, vec![per_side; sides], Grading::Uniform, degree)
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn with_degree(&self, degree: usize) -> Result<Self> {
        Self::new(self.vertices.clone(), self.subdivisions.clone(), self.grading, degree)
    }

    /// Every side split in two (nested for both gradings).
    pub fn refined(&self) -> Result<Self> {
        Self::new(self.vertices.clone(), self.subdivisions.iter().map(|s| 2 * s).collect(), self.grading, self.degree)
    }

    fn side_params(&self, n: usize) -> Vec<f64> {
        match self.grading {
            Grading::Uniform => (0..=n).map(|i| i as f64 / n as f64).collect(),
            Grading::Corner(beta) => (0..=n)
                .map(|i| {
                    let u = 2.0 * i as f64 / n as f64;
                    if u <= 1.0 {
                        0.5 * u.powf(beta)
                    } else {
                        1.0 - 0.5 * (2.0 - u).powf(beta)
                    }
                })
                .collect(),
        }
    }

    pub fn elements(&self) -> Result<Vec<Element2d>> {
        let n = self.vertices.len();
        let mut out = Vec::new();
        for side in 0..n {
            let (a, b) = (self.vertices[side], self.vertices[(side + 1) % n]);
            let s = self.side_params(self.subdivisions[side]);
            for w in s.windows(2) {
                let seg = Segment::new(a + (b - a) * w[0], a + (b - a) * w[1])?;
                out.push(Element2d { seg, side, s0: w[0], s1: w[1] });
            }
        }
        Ok(out)
    }

    /// Largest side length divided by its number of elements.
    pub fn nominal_h(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| (self.vertices[(i + 1) % n] - self.vertices[i]).norm() / self.subdivisions[i] as f64)
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &Vec2) -> bool {
        winding_2d(&self.vertices, x).abs() > 0.5
    }
}

fn winding_2d(v: &[Vec2], x: &Vec2) -> f64 {
    let n = v.len();
    let mut w = 0.0;
    for i in 0..n {
        let a = v[i] - x;
        let b = v[(i + 1) % n] - x;
        w += a.perp(&b).atan2(a.dot(&b));
    }
    w / (2.0 * std::f64::consts::PI)
}

/// One boundary element: part [s0, s1] of polygon side `side`.
#[derive(Clone, Copy, Debug)]
pub struct Element2d {
    pub seg: Segment,
    pub side: usize,
    pub s0: f64,
    pub s1: f64,
}

/// Piecewise Legendre density on a polygon.
#[derive(Clone, Debug)]
pub struct Density2d {
    pub elements: Arc<Vec<Element2d>>,
    pub degree: usize,
    pub coeffs: Vec<f64>,
}

impl Density2d {
    pub fn value(&self, el: usize, t: f64) -> f64 {
        let p = self.degree;
        let mut b = [0.0; MAX_DEGREE_2D + 1];
        legendre_values(t, p, &mut b);
        (0..=p).map(|j| b[j] * self.coeffs[el * (p + 1) + j]).sum()
    }

    pub fn potential(&self, x: &Vec2) -> f64 {
        let p = self.degree;
        let mut pot = [0.0; MAX_DEGREE_2D + 1];
        let mut s = 0.0;
        for (k, e) in self.elements.iter().enumerate() {
            slp_segment_legendre(&e.seg, x, p, &mut pot, None);
            s += (0..=p).map(|j| pot[j] * self.coeffs[k * (p + 1) + j]).sum::<f64>();
        }
        s
    }

    /// Gradient off the boundary, or the principal value on it.
    pub fn gradient(&self, x: &Vec2) -> Vec2 {
        let p = self.degree;
        let mut pot = [0.0; MAX_DEGREE_2D + 1];
        let mut g = [Vec2::zeros(); MAX_DEGREE_2D + 1];
        let mut s = Vec2::zeros();
        for (k, e) in self.elements.iter().enumerate() {
            slp_segment_legendre(&e.seg, x, p, &mut pot, Some(&mut g));
            for j in 0..=p {
                s += g[j] * self.coeffs[k * (p + 1) + j];
            }
        }
        s
    }

    /// Exterior trace of the gradient at local coordinate t of element `el`.
    pub fn gradient_trace(&self, el: usize, t: f64) -> Result<Vec2> {
        if !(t.abs() < 1.0 - 1e-9) {
            return Err(Error::AmbiguousTrace(format!("t = {t} on element {el} is at an endpoint")));
        }
        let e = &self.elements[el];
        let x = e.seg.point(t);
        Ok(self.gradient(&x) - e.seg.normal * (0.5 * self.value(el, t)))
    }

    /// Element and local coordinate of a boundary point.
    pub fn locate(&self, x: &Vec2) -> Option<(usize, f64)> {
        self.elements.iter().enumerate().find_map(|(k, e)| {
            let d = x - e.seg.mid;
            let t = d.dot(&e.seg.tau) / e.seg.half;
            let off = d.dot(&e.seg.normal).abs();
            (off <= 1e-12 * e.seg.half && t.abs() <= 1.0).then_some((k, t))
        })
    }
}

fn outer_rule(
    seg: &Segment,
    target: f64,
    dist: f64,
    order: usize,
) -> Result<Vec<(f64, f64)>> {
    // composite Gauss on [-1, 1] graded toward `target`, layers down to about `dist`
    let g = gauss_rule(order)?;
    let levels = if dist <= 0.0 {
        TOUCH_LEVELS
    } else {
        let r = dist / seg.half;
        (1.0 + (r.ln() / OUTER_SIGMA.ln()).ceil().max(0.0)) as usize
    }
    .clamp(1, TOUCH_LEVELS);
    let mut out = Vec::new();
    for (a, b) in [(-1.0, target), (target, 1.0)] {
        let len = b - a;
        if len <= 1e-15 {
            continue;
        }
        for (lo, hi) in graded_intervals(levels, OUTER_SIGMA) {
            // distances measured from the target end
            let (ta, tb) = if a == target { (a + lo * len, a + hi * len) } else { (b - hi * len, b - lo * len) };
            for (x, w) in g.iter() {
                out.push((ta + (tb - ta) * x, w * (tb - ta)));
            }
        }
    }
    Ok(out)
}

fn far_order(r: f64, p: usize) -> usize {
    let n = (16.0 * std::f64::consts::LN_10 / (2.0 * (1.0 + r).ln())).ceil() as usize;
    (n + p + 1).clamp(p + 2, 48)
}

/// Closest pair of parameters (t on a, point on b) and their distance.
fn closest(a: &Segment, b: &Segment) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0);
    let proj = |s: &Segment, x: &Vec2| ((x - s.mid).dot(&s.tau) / s.half).clamp(-1.0, 1.0);
    for t in [-1.0, 1.0] {
        let x = a.point(t);
        let y = b.point(proj(b, &x));
        best = if (x - y).norm() < best.0 { ((x - y).norm(), t) } else { best };
    }
    for t in [-1.0, 1.0] {
        let y = b.point(t);
        let ta = proj(a, &y);
        let x = a.point(ta);
        best = if (x - y).norm() < best.0 { ((x - y).norm(), ta) } else { best };
    }
    (best.0, best.1)
}

fn pair_rule(outer: &Segment, inner: &Segment, same: bool, p: usize) -> Result<Vec<(f64, f64)>> {
    if same {
        let g = gauss_rule(p + 12)?;
        let mut out = Vec::new();
        for (lo, hi) in crate::quadrature::graded_intervals_both(TOUCH_LEVELS, OUTER_SIGMA) {
            for (x, w) in g.iter() {
                out.push((-1.0 + 2.0 * (lo + (hi - lo) * x), 2.0 * w * (hi - lo)));
            }
        }
        return Ok(out);
    }
    let (dist, target) = closest(outer, inner);
    let scale = dist.max(0.0) / outer.half;
    if dist > 1e-14 * outer.half && scale >= 1.0 {
        let g = gauss_rule(far_order(scale, p))?;
        return Ok(g.iter().map(|(x, w)| (2.0 * x - 1.0, 2.0 * w)).collect());
    }
    let dist = if dist <= 1e-14 * outer.half { 0.0 } else { dist };
    outer_rule(outer, target, dist, p + 12)
}

/// Galerkin matrix of the logarithmic single layer in the Legendre basis.
pub fn assemble_slp_2d(elements: &[Element2d], p: usize) -> Result<Mat<f64>> {
    if p > MAX_DEGREE_2D {
        return Err(Error::InvalidArgument(format!("degree {p} above {MAX_DEGREE_2D}")));
    }
    let m = p + 1;
    let n = elements.len() * m;
    let mut v = Mat::<f64>::zeros(n, n);
    let mut pot = [0.0; MAX_DEGREE_2D + 1];
    let mut b = [0.0; MAX_DEGREE_2D + 1];
    for (k, ek) in elements.iter().enumerate() {
        for (j, ej) in elements.iter().enumerate().skip(k) {
            let rule = pair_rule(&ek.seg, &ej.seg, k == j, p)?;
            let mut block = [[0.0; MAX_DEGREE_2D + 1]; MAX_DEGREE_2D + 1];
            for &(t, w) in &rule {
                if k == j {
                    slp_segment_legendre_local(&ej.seg, t, 0.0, p, &mut pot, None);
                } else {
                    slp_segment_legendre(&ej.seg, &ek.seg.point(t), p, &mut pot, None);
                }
                legendre_values(t, p, &mut b);
                let wt = w * ek.seg.half;
                for a in 0..m {
                    for c in 0..m {
                        block[a][c] += wt * b[a] * pot[c];
                    }
                }
            }
            for a in 0..m {
                for c in 0..m {
                    v[(k * m + a, j * m + c)] = block[a][c];
                    v[(j * m + c, k * m + a)] = block[a][c];
                }
            }
        }
    }
    // the self blocks are symmetric up to quadrature error
    for k in 0..elements.len() {
        for a in 0..m {
            for c in a + 1..m {
                let s = 0.5 * (v[(k * m + a, k * m + c)] + v[(k * m + c, k * m + a)]);
                v[(k * m + a, k * m + c)] = s;
                v[(k * m + c, k * m + a)] = s;
            }
        }
    }
    Ok(v)
}

/// Load vector <f, P_j> on every element.
pub fn rhs_2d(elements: &[Element2d], p: usize, f: &dyn Fn(&Vec2) -> f64) -> Result<Vec<f64>> {
    let g: QuadRule<f64> = gauss_rule(p + RHS_EXTRA_ORDER)?;
    let m = p + 1;
    let mut out = vec![0.0; elements.len() * m];
    let mut b = [0.0; MAX_DEGREE_2D + 1];
    for (k, e) in elements.iter().enumerate() {
        for (x, w) in g.iter() {
            let t = 2.0 * x - 1.0;
            legendre_values(t, p, &mut b);
            let fx = f(&e.seg.point(t));
            for a in 0..m {
                out[k * m + a] += 2.0 * w * e.seg.half * fx * b[a];
            }
        }
    }
    Ok(out)
}

/// Galerkin solution with its matrix and load vector.
#[derive(Clone, Debug)]
pub struct Solution2d {
    pub density: Density2d,
    pub matrix: Mat<f64>,
    pub rhs: Vec<f64>,
    /// <V mu_h, mu_h> = <f, mu_h>.
    pub energy: f64,
    /// Nominal mesh size of the boundary.
    pub mesh_size: f64,
}

impl Solution2d {
    pub fn dof(&self) -> usize {
        self.rhs.len()
    }
}

/// Solves <V mu_h, xi> = <f, xi> in the discontinuous degree-p space.
pub fn solve_dirichlet_2d(boundary: &PolygonBoundary, f: &dyn Fn(&Vec2) -> f64) -> Result<Solution2d> {
    let elements = boundary.elements()?;
    let p = boundary.degree();
    let matrix = assemble_slp_2d(&elements, p)?;
    let rhs = rhs_2d(&elements, p, f)?;
    let llt = matrix
        .llt(Side::Lower)
        .map_err(|_| Error::Capacity("single layer matrix is not positive definite; logarithmic capacity too close to 1".into()))?;
    let b = Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
    let x = llt.solve(&b);
    let coeffs: Vec<f64> = (0..rhs.len()).map(|i| x[(i, 0)]).collect();
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::Capacity("non-finite density".into()));
    }
    let energy = coeffs.iter().zip(&rhs).map(|(c, r)| c * r).sum();
    let mesh_size = boundary.nominal_h();
    Ok(Solution2d { density: Density2d { elements: Arc::new(elements), degree: p, coeffs }, matrix, rhs, energy, mesh_size })
}

/// Coefficients of `coarse` in the space of `fine` (exact for nested spaces).
pub fn prolongate(coarse: &Density2d, fine: &[Element2d], fine_degree: usize) -> Result<Vec<f64>> {
    let m = fine_degree + 1;
    let g = gauss_rule(coarse.degree.max(fine_degree) + 2)?;
    let mut b = [0.0; MAX_DEGREE_2D + 1];
    let mut out = vec![0.0; fine.len() * m];
    for (k, e) in fine.iter().enumerate() {
        let mid = 0.5 * (e.s0 + e.s1);
        let (pk, pe) = coarse
            .elements
            .iter()
            .enumerate()
            .find(|(_, c)| c.side == e.side && c.s0 <= mid && mid <= c.s1)
            .ok_or_else(|| Error::Geometry(format!("fine element {k} has no parent")))?;
        if e.s0 < pe.s0 - 1e-14 || e.s1 > pe.s1 + 1e-14 {
            return Err(Error::Geometry(format!("fine element {k} is not nested")));
        }
        for (x, w) in g.iter() {
            let t = 2.0 * x - 1.0;
            let s = e.s0 + (e.s1 - e.s0) * x;
            let tc = 2.0 * (s - pe.s0) / (pe.s1 - pe.s0) - 1.0;
            let val = coarse.value(pk, tc);
            legendre_values(t, fine_degree, &mut b);
            for a in 0..m {
                // mass of P_a on [-1, 1] is 2 / (2a + 1)
                out[k * m + a] += 2.0 * w * val * b[a] * (2 * a + 1) as f64 / 2.0;
            }
        }
    }
    Ok(out)
}

/// One level of an energy-norm study.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyRow {
    pub level: usize,
    pub dof: usize,
    pub h: f64,
    pub degree: usize,
    pub energy: f64,
    pub error: f64,
    pub eoc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyStudy {
    pub rows: Vec<EnergyRow>,
    /// Extrapolated <V mu, mu> - <V mu_L, mu_L>.
    pub tail: f64,
    pub warning: Option<String>,
}

impl EnergyStudy {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,dof,h,p,energy_error,eoc\n");
        for r in &self.rows {
            let eoc = r.eoc.map_or("nan".into(), |e| format!("{e:.16e}"));
            let _ = writeln!(s, "{},{},{:.16e},{},{:.16e},{}", r.level, r.dof, r.h, r.degree, r.error, eoc);
        }
        s
    }

    /// EOCs of the last `pairs` refinement pairs below the reference level. The finest
    /// level's error is the tail estimate alone, so its EOC repeats the one before it.
    pub fn final_eocs(&self, pairs: usize) -> Vec<f64> {
        let n = self.rows.len().saturating_sub(1);
        let e: Vec<f64> = self.rows[..n].iter().filter_map(|r| r.eoc).collect();
        e[e.len().saturating_sub(pairs)..].to_vec()
    }
}

/// Energy errors ||mu - mu_h||_V of a nested sequence, by Galerkin orthogonality
/// against the finest solution plus an Aitken tail for the finest one.
/// EOCs are taken with respect to the mesh size when it changes, else per level.
pub fn energy_error(solutions: &[Solution2d]) -> Result<EnergyStudy> {
    let n = solutions.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("energy extrapolation needs 3 levels, got {n}")));
    }
    let fine = &solutions[n - 1];
    let fine_el = fine.density.elements.as_slice();
    let v = &fine.matrix;
    let mut d = Vec::with_capacity(n);
    for s in solutions {
        let c = prolongate(&s.density, fine_el, fine.density.degree)?;
        let diff: Vec<f64> = fine.density.coeffs.iter().zip(&c).map(|(a, b)| a - b).collect();
        let mut q = 0.0;
        for i in 0..diff.len() {
            let mut row = 0.0;
            for j in 0..diff.len() {
                row += v[(i, j)] * diff[j];
            }
            q += diff[i] * row;
        }
        d.push(q.max(0.0));
    }
    let mut warning = None;
    for w in solutions.windows(2) {
        if w[1].energy < w[0].energy - 1e-13 * w[0].energy.abs() {
            warning = Some("energies are not monotone".to_string());
        }
    }
    let last = d[n - 2];
    let prev = d[n - 3] - d[n - 2];
    let tail = if last > 0.0 && prev > last {
        let q = last / prev;
        last * q / (1.0 - q)
    } else {
        warning = Some("energy increments do not contract; tail set to zero".to_string());
        0.0
    };
    let mut rows: Vec<EnergyRow> = solutions
        .iter()
        .zip(&d)
        .enumerate()
        .map(|(l, (s, dl))| EnergyRow {
            level: l,
            dof: s.dof(),
            h: s.mesh_size,
            degree: s.density.degree,
            energy: s.energy,
            error: (dl + tail).sqrt(),
            eoc: None,
        })
        .collect();
    for l in 1..n {
        let (a, b) = (&rows[l - 1], &rows[l]);
        let eoc = if (a.h - b.h).abs() > 1e-12 * a.h {
            (a.error / b.error).ln() / (a.h / b.h).ln()
        } else {
            (a.error / b.error).ln()
        };
        rows[l].eoc = Some(eoc);
    }
    Ok(EnergyStudy { rows, tail, warning })
}

/// ln |x| on the boundary of the unit square.
pub fn log_data(x: &Vec2) -> f64 {
    x.norm().ln()
}

/// Hessian of ln |x|.
pub fn log_hessian(x: &Vec2) -> Matrix2<f64> {
    let r2 = x.norm_squared();
    (Matrix2::identity() * r2 - x * x.transpose() * 2.0) / (r2 * r2)
}

/// h-version study on the unit square: `levels` nested meshes starting at `n0` elements per side.
pub fn h_version_study(p: usize, n0: usize, levels: usize, grading: Grading) -> Result<EnergyStudy> {
    let mut b = PolygonBoundary::unit_square(n0, grading, p)?;
    let mut sols = Vec::with_capacity(levels);
    for _ in 0..levels {
        sols.push(solve_dirichlet_2d(&b, &log_data)?);
        b = b.refined()?;
    }
    energy_error(&sols)
}

/// p-version study on the uniform square mesh with `n` elements per side.
pub fn p_version_study(n: usize, degrees: std::ops::RangeInclusive<usize>) -> Result<EnergyStudy> {
    let b = PolygonBoundary::unit_square(n, Grading::Uniform, 0)?;
    let sols = degrees.map(|p| solve_dirichlet_2d(&b.with_degree(p)?, &log_data)).collect::<Result<Vec<_>>>()?;
    energy_error(&sols)
}

/// 2x2 analogue of [`crate::field::fd_hessian`]: one-sided normal and central tangential differences.
pub fn fd_hessian_2d(
    x: &Vec2,
    tangent: &Vec2,
    normal: &Vec2,
    dn: f64,
    dt: f64,
    grad: &mut dyn FnMut(&Vec2, bool) -> Result<Vec2>,
) -> Result<Matrix2<f64>> {
    let g0 = grad(x, true)?;
    let g1 = grad(&(x + normal * dn), false)?;
    let g2 = grad(&(x + normal * (2.0 * dn)), false)?;
    let dnv = (g1 * 4.0 - g0 * 3.0 - g2) / (2.0 * dn);
    let gp = grad(&(x + tangent * dt), true)?;
    let gm = grad(&(x - tangent * dt), true)?;
    let dtv = (gp - gm) / (2.0 * dt);
    Ok(dnv * normal.transpose() + dtv * tangent.transpose())
}

/// Finite-difference Hessian of the exterior potential at a boundary point.
pub fn hessian_2d_fd(density: &Density2d, x: &Vec2, steps: FdSteps, polygon: &PolygonBoundary) -> Result<Matrix2<f64>> {
    let (el, t) = density
        .locate(x)
        .ok_or_else(|| Error::FdGeometry(format!("point {x:?} is not on the boundary")))?;
    let e = density.elements[el];
    let dv = density
        .elements
        .iter()
        .flat_map(|e| [e.seg.a, e.seg.b])
        .map(|v| (v - x).norm())
        .fold(f64::INFINITY, f64::min);
    let dn = steps.normal.min(0.5 * dv);
    let dt = steps.tangential.min(0.5 * dv);
    if !(dn > 0.0 && dt > 0.0) || !(t.abs() < 1.0) {
        return Err(Error::FdGeometry(format!("no admissible step at {x:?}")));
    }
    let half = e.seg.half;
    for s in [-dt, dt] {
        if (t + s / half).abs() >= 1.0 {
            return Err(Error::FdGeometry("tangential offset leaves the element".into()));
        }
    }
    for k in [1.0, 2.0] {
        if polygon.contains(&(x + e.seg.normal * (k * dn))) {
            return Err(Error::FdGeometry("normal offset is not exterior".into()));
        }
    }
    let mut grad = |y: &Vec2, on: bool| -> Result<Vec2> {
        if on {
            let ty = (y - e.seg.mid).dot(&e.seg.tau) / half;
            density.gradient_trace(el, ty)
        } else {
            Ok(density.gradient(y))
        }
    };
    fd_hessian_2d(x, &e.seg.tau, &e.seg.normal, dn, dt, &mut grad)
}

/// Frobenius distance to the exact Hessian of ln |x|.
pub fn hessian_error(h: &Matrix2<f64>, x: &Vec2) -> f64 {
    (h - log_hessian(x)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_data_gives_zero_density() {
        let b = PolygonBoundary::unit_square(2, Grading::Uniform, 1).unwrap();
        let s = solve_dirichlet_2d(&b, &|_| 0.0).unwrap();
        assert!(s.density.coeffs.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn regular_polygon_constant_density() {
        let b = PolygonBoundary::regular(12, 0.4, 1, 0).unwrap();
        let s = solve_dirichlet_2d(&b, &|_| 1.0).unwrap();
        let c0 = s.density.coeffs[0];
        for c in &s.density.coeffs {
            assert!((c - c0).abs() < 1e-12 * c0.abs(), "{c} {c0}");
        }
        // circle of radius R: V 1 = -R ln R
        let r: f64 = 0.4;
        let circle = 1.0 / (-r * r.ln());
        assert!((c0 - circle).abs() < 0.05 * circle);
    }

    #[test]
    fn matrix_symmetric_positive() {
        let b = PolygonBoundary::unit_square(3, Grading::Corner(2.0), 2).unwrap();
        let el = b.elements().unwrap();
        let v = assemble_slp_2d(&el, 2).unwrap();
        let e = v.self_adjoint_eigenvalues(Side::Lower).unwrap();
        assert!(e[0] > 0.0);
        // compare an off-diagonal entry with brute-force quadrature
        let (k, j) = (0usize, 3usize);
        let g = gauss_rule(40).unwrap();
        let mut q = 0.0;
        for (x, wx) in g.iter() {
            for (y, wy) in g.iter() {
                let (s, t) = (2.0 * x - 1.0, 2.0 * y - 1.0);
                let r = (el[k].seg.point(s) - el[j].seg.point(t)).norm();
                q += 4.0 * wx * wy * el[k].seg.half * el[j].seg.half * -(r.ln()) / (2.0 * std::f64::consts::PI) * s * t;
            }
        }
        let a = v[(k * 3 + 1, j * 3 + 1)];
        assert!((a - q).abs() < 1e-6 * q.abs().max(1e-3), "{a} {q}");
    }

    #[test]
    fn exact_density_is_reproduced() {
        // data generated by a discrete density are solved exactly
        let b = PolygonBoundary::unit_square(2, Grading::Uniform, 1).unwrap();
        let el = b.elements().unwrap();
        let m = 2 * el.len();
        let c: Vec<f64> = (0..m).map(|i| ((i * 7) % 5) as f64 * 0.1 - 0.2).collect();
        let d = Density2d { elements: Arc::new(el), degree: 1, coeffs: c.clone() };
        let s = solve_dirichlet_2d(&b, &|x| d.potential(x)).unwrap();
        for (a, b) in s.density.coeffs.iter().zip(&c) {
            assert!((a - b).abs() < 1e-5, "{a} {b}");
        }
    }

    #[test]
    fn linear_rig_hessian_is_zero() {
        let x = Vec2::new(0.5, 0.2);
        let mut grad = |_: &Vec2, _: bool| -> Result<Vec2> { Ok(Vec2::new(0.3, -1.2)) };
        let h = fd_hessian_2d(&x, &Vec2::y(), &Vec2::x(), 1e-4, 1e-5, &mut grad).unwrap();
        assert!(h.norm() < 1e-10, "{h}");
    }

    #[test]
    fn prolongation_is_exact() {
        let b = PolygonBoundary::unit_square(2, Grading::Corner(2.0), 2).unwrap();
        let el = b.elements().unwrap();
        let c: Vec<f64> = (0..3 * el.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let d = Density2d { elements: Arc::new(el), degree: 2, coeffs: c };
        let fine = b.refined().unwrap().elements().unwrap();
        let cf = prolongate(&d, &fine, 3).unwrap();
        let df = Density2d { elements: Arc::new(fine), degree: 3, coeffs: cf };
        for s in [0.1, 0.33, 0.77] {
            let x = Vec2::new(0.5, -0.5 + s);
            let (k1, t1) = d.locate(&x).unwrap();
            let (k2, t2) = df.locate(&x).unwrap();
            assert!((d.value(k1, t1) - df.value(k2, t2)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_polygons() {
        let bow = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
        assert!(PolygonBoundary::new(bow, vec![1; 4], Grading::Uniform, 0).is_err());
        let cw = vec![Vec2::new(0.0, 0.0), Vec2::new(0.0, 1.0), Vec2::new(1.0, 0.0)];
        assert!(PolygonBoundary::new(cw, vec![1; 3], Grading::Uniform, 0).is_err());
    }
}
