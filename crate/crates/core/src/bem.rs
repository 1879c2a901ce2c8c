//! Discontinuous Galerkin boundary elements on triangulated surfaces: the single
//! layer V, the oblique adjoint double layer K'(h), the Robin operator, the three
//! constraint rows and the augmented direct solve.

use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use faer::prelude::*;
use faer::Mat;

use crate::error::{Error, Result};
use crate::kernels::{dim_p, slp_triangle_batch, PlaneTriangle, FOUR_PI, MAX_DEGREE};
use crate::mesh::{FacetField, SurfaceField, TriangleMesh, Vec3};
use crate::quadrature::{
    boundary_graded_rule, edge_graded_rule, graded_composite_rule, triangle_rule, QuadRule, REF_VERTICES,
};

/// Condition estimate above which a solve is rejected.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Gauss order on the reference triangle used for right-hand sides and moments.
pub const RHS_ORDER: usize = 6;

/// Quadrature parameters for Galerkin assembly and pointwise evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadOptions {
    /// Geometric layers of graded rules.
    pub levels: usize,
    /// Grading factor in (0, 1).
    pub sigma: f64,
    /// Gauss order per graded cell.
    pub order: usize,
    /// Pairs with centroid distance below this multiple of the diameter use closed-form inner integrals.
    pub near_factor: f64,
    /// Decimal digits targeted by the smooth Gauss rules.
    pub digits: f64,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { levels: 8, sigma: 0.2, order: 5, near_factor: 4.0, digits: 10.0 }
    }
}

impl QuadOptions {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || !(self.sigma > 0.0 && self.sigma < 1.0) || self.order == 0 || self.order > 64 {
            return Err(Error::InvalidArgument(format!("invalid quadrature options {self:?}")));
        }
        if !(self.near_factor >= 1.0) || !(self.digits > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid quadrature options {self:?}")));
        }
        Ok(())
    }
}

/// Gauss order on a triangle for a kernel whose singularity sits `ratio` diameters away.
pub fn gauss_order_for_ratio(ratio: f64, digits: f64) -> usize {
    let r = (2.0 * ratio).max(1.5);
    ((digits * std::f64::consts::LN_10 / (2.0 * r.ln())).ceil() as usize).clamp(2, 12)
}

/// Physical quadrature points of one triangle with basis values.
#[derive(Clone, Debug)]
struct TriQuad {
    points: Vec<Vec3>,
    weights: Vec<f64>,
    basis: Vec<f64>,
}

/// Piecewise polynomials of degree p on each triangle of a mesh, in local monomial bases.
#[derive(Clone, Debug)]
pub struct DGSpace {
    mesh: TriangleMesh,
    p: usize,
    tris: Vec<PlaneTriangle>,
    gauss: Vec<Vec<TriQuad>>,
}

impl DGSpace {
    pub fn new(mesh: &TriangleMesh, p: usize) -> Result<Self> {
        if p > MAX_DEGREE {
            return Err(Error::InvalidArgument(format!("degree {p} above {MAX_DEGREE}")));
        }
        let tris = (0..mesh.n_triangles())
            .map(|t| {
                let [a, b, c] = mesh.triangle_vertices(t);
                PlaneTriangle::new(a, b, c)
            })
            .collect::<Result<Vec<_>>>()?;
        let ld = dim_p(p);
        let rules: Vec<QuadRule<[f64; 2]>> = (0..=12).map(|n| triangle_rule(n.max(1))).collect::<Result<_>>()?;
        let gauss = tris
            .iter()
            .map(|tri| {
                rules
                    .iter()
                    .map(|r| {
                        let points: Vec<Vec3> = r.points.iter().map(|uv| tri.point(uv)).collect();
                        let weights = r.weights.iter().map(|w| w * 2.0 * tri.area).collect();
                        let mut basis = vec![0.0; points.len() * ld];
                        for (q, y) in points.iter().enumerate() {
                            tri.basis_values(y, p, &mut basis[q * ld..(q + 1) * ld]);
                        }
                        TriQuad { points, weights, basis }
                    })
                    .collect()
            })
            .collect();
        Ok(Self { mesh: mesh.clone(), p, tris, gauss })
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.p
    }

    pub fn local_dim(&self) -> usize {
        dim_p(self.p)
    }

    pub fn dim(&self) -> usize {
        self.local_dim() * self.tris.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.tris.len()
    }

    pub fn triangle(&self, t: usize) -> &PlaneTriangle {
        &self.tris[t]
    }

    pub fn triangles(&self) -> &[PlaneTriangle] {
        &self.tris
    }

    /// Local mass matrix of triangle t, row-major.
    pub fn mass_block(&self, t: usize) -> Vec<f64> {
        let ld = self.local_dim();
        let g = &self.gauss[t][self.p + 1];
        let mut m = vec![0.0; ld * ld];
        for (q, w) in g.weights.iter().enumerate() {
            let b = &g.basis[q * ld..(q + 1) * ld];
            for a in 0..ld {
                for c in 0..ld {
                    m[a * ld + c] += w * b[a] * b[c];
                }
            }
        }
        m
    }

    /// Value of a coefficient vector at point `y` of triangle `t`.
    pub fn eval(&self, coeffs: &[f64], t: usize, y: &Vec3) -> f64 {
        let ld = self.local_dim();
        let mut b = [0.0; 10];
        self.tris[t].basis_values(y, self.p, &mut b[..ld]);
        b[..ld].iter().zip(&coeffs[t * ld..(t + 1) * ld]).map(|(b, c)| b * c).sum()
    }

    /// Physical quadrature points, weights and facet index of the fixed right-hand-side rule.
    pub fn rhs_points(&self) -> Vec<(usize, [f64; 2], Vec3, f64)> {
        let r = triangle_rule(RHS_ORDER).expect("valid order");
        let mut out = Vec::with_capacity(r.len() * self.tris.len());
        for (t, tri) in self.tris.iter().enumerate() {
            for (uv, w) in r.iter() {
                out.push((t, *uv, tri.point(uv), w * 2.0 * tri.area));
            }
        }
        out
    }

    /// Load vector <f, b_k> for values of f at the points of [`DGSpace::rhs_points`].
    pub fn rhs_from_values(&self, values: &[f64]) -> Result<Vec<f64>> {
        let ld = self.local_dim();
        let g = &self.gauss;
        let nq = g[0][RHS_ORDER].weights.len();
        if values.len() != nq * self.tris.len() {
            return Err(Error::InvalidArgument("value count does not match right-hand-side rule".into()));
        }
        let mut out = vec![0.0; self.dim()];
        for t in 0..self.tris.len() {
            let tq = &g[t][RHS_ORDER];
            for q in 0..nq {
                let fw = values[t * nq + q] * tq.weights[q];
                for a in 0..ld {
                    out[t * ld + a] += fw * tq.basis[q * ld + a];
                }
            }
        }
        Ok(out)
    }

    /// Load vector <f, b_k> for a surface function given by (facet, reference coords, point).
    pub fn rhs_vector(&self, f: &dyn Fn(usize, [f64; 2], &Vec3) -> f64) -> Vec<f64> {
        let vals: Vec<f64> = self.rhs_points().iter().map(|(t, uv, x, _)| f(*t, *uv, x)).collect();
        self.rhs_from_values(&vals).expect("consistent sizes")
    }

    /// Per-triangle L2 projection of a surface function.
    pub fn project(&self, f: &dyn Fn(usize, [f64; 2], &Vec3) -> f64) -> Result<Vec<f64>> {
        let rhs = self.rhs_vector(f);
        self.apply_inverse_mass(&rhs)
    }

    pub fn apply_inverse_mass(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let ld = self.local_dim();
        let mut out = vec![0.0; rhs.len()];
        for t in 0..self.tris.len() {
            let m = nalgebra::DMatrix::from_row_slice(ld, ld, &self.mass_block(t));
            let chol = m
                .cholesky()
                .ok_or_else(|| Error::Geometry(format!("singular local mass matrix on facet {t}")))?;
            let x = chol.solve(&nalgebra::DVector::from_column_slice(&rhs[t * ld..(t + 1) * ld]));
            out[t * ld..(t + 1) * ld].copy_from_slice(x.as_slice());
        }
        Ok(out)
    }

    fn shared_vertices(&self, k: usize, j: usize) -> Vec<(usize, usize)> {
        let tk = self.mesh.triangles()[k];
        let tj = self.mesh.triangles()[j];
        let mut out = Vec::new();
        for (a, vk) in tk.iter().enumerate() {
            if let Some(b) = tj.iter().position(|vj| vj == vk) {
                out.push((a, b));
            }
        }
        out
    }
}

/// Coefficients of a density in a [`DGSpace`].
#[derive(Clone, Debug)]
pub struct DGDensity {
    pub space: Arc<DGSpace>,
    pub coeffs: Vec<f64>,
}

impl DGDensity {
    pub fn new(space: Arc<DGSpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.dim() {
            return Err(Error::InvalidArgument(format!(
                "{} coefficients for a space of dimension {}",
                coeffs.len(),
                space.dim()
            )));
        }
        Ok(Self { space, coeffs })
    }

    pub fn zeros(space: Arc<DGSpace>) -> Self {
        let n = space.dim();
        Self { space, coeffs: vec![0.0; n] }
    }

    /// Value on triangle t at point y.
    pub fn value(&self, t: usize, y: &Vec3) -> f64 {
        self.space.eval(&self.coeffs, t, y)
    }

    /// L2 distance to a surface function.
    pub fn l2_error(&self, f: &dyn Fn(&Vec3) -> f64) -> f64 {
        let mut s = 0.0;
        for (t, _, x, w) in self.space.rhs_points() {
            s += w * (self.value(t, &x) - f(&x)).powi(2);
        }
        s.sqrt()
    }

    /// Single-layer potential at any point, closed-form near the triangles and Gauss rules far away.
    pub fn potential(&self, x: &Vec3, opts: &QuadOptions) -> f64 {
        self.potential_anchored(x, x, opts)
    }

    /// Potential at x with the near/far split and Gauss orders chosen at `anchor`, so
    /// nearby evaluations share one smooth approximation.
    pub fn potential_anchored(&self, x: &Vec3, anchor: &Vec3, opts: &QuadOptions) -> f64 {
        let ld = self.space.local_dim();
        let p = self.space.p;
        let mut pot = [0.0; 10];
        let mut s = 0.0;
        for (t, tri) in self.space.tris.iter().enumerate() {
            let c = &self.coeffs[t * ld..(t + 1) * ld];
            let ratio = (anchor - tri.centroid).norm() / tri.diam;
            if ratio < opts.near_factor {
                slp_triangle_batch(tri, x, p, &mut pot[..ld], None);
                s += pot[..ld].iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            } else {
                let g = &self.space.gauss[t][gauss_order_for_ratio(ratio, opts.digits)];
                for (q, y) in g.points.iter().enumerate() {
                    let mu: f64 = g.basis[q * ld..(q + 1) * ld].iter().zip(c).map(|(a, b)| a * b).sum();
                    s += g.weights[q] * mu / (FOUR_PI * (x - y).norm());
                }
            }
        }
        s
    }

    /// Gradient of the single-layer potential; on the surface the normal part of the
    /// containing facet is the principal value.
    pub fn gradient(&self, x: &Vec3, opts: &QuadOptions) -> Vec3 {
        self.gradient_anchored(x, x, opts)
    }

    pub fn gradient_anchored(&self, x: &Vec3, anchor: &Vec3, opts: &QuadOptions) -> Vec3 {
        let ld = self.space.local_dim();
        let p = self.space.p;
        let mut pot = [0.0; 10];
        let mut grad = [Vec3::zeros(); 10];
        let mut s = Vec3::zeros();
        for (t, tri) in self.space.tris.iter().enumerate() {
            let c = &self.coeffs[t * ld..(t + 1) * ld];
            let ratio = (anchor - tri.centroid).norm() / tri.diam;
            if ratio < opts.near_factor {
                slp_triangle_batch(tri, x, p, &mut pot[..ld], Some(&mut grad[..ld]));
                for (g, b) in grad[..ld].iter().zip(c) {
                    s += g * *b;
                }
            } else {
                let g = &self.space.gauss[t][gauss_order_for_ratio(ratio, opts.digits)];
                for (q, y) in g.points.iter().enumerate() {
                    let mu: f64 = g.basis[q * ld..(q + 1) * ld].iter().zip(c).map(|(a, b)| a * b).sum();
                    let d = x - y;
                    let r = d.norm();
                    s -= d * (g.weights[q] * mu / (FOUR_PI * r * r * r));
                }
            }
        }
        s
    }
}

/// Outer rules for touching triangle pairs.
struct OuterRules {
    self_rule: QuadRule<[f64; 2]>,
    edge: [QuadRule<[f64; 2]>; 3],
    vertex: [QuadRule<[f64; 2]>; 3],
}

impl OuterRules {
    fn new(o: &QuadOptions) -> Result<Self> {
        let edge = [
            edge_graded_rule(0, o.levels, o.sigma, o.order)?,
            edge_graded_rule(1, o.levels, o.sigma, o.order)?,
            edge_graded_rule(2, o.levels, o.sigma, o.order)?,
        ];
        let vertex = [
            graded_composite_rule(REF_VERTICES[0], o.levels, o.sigma, o.order)?,
            graded_composite_rule(REF_VERTICES[1], o.levels, o.sigma, o.order)?,
            graded_composite_rule(REF_VERTICES[2], o.levels, o.sigma, o.order)?,
        ];
        Ok(Self { self_rule: boundary_graded_rule(o.levels, o.sigma, o.order)?, edge, vertex })
    }
}

struct Assembler<'a> {
    space: &'a DGSpace,
    opts: &'a QuadOptions,
    rules: OuterRules,
}

impl<'a> Assembler<'a> {
    fn new(space: &'a DGSpace, opts: &'a QuadOptions) -> Result<Self> {
        opts.validate()?;
        Ok(Self { space, opts, rules: OuterRules::new(opts)? })
    }

    /// Blocks <V b_j, b_k> and <h . grad V b_j, b_k> for test triangle k and trial triangle j.
    fn pair(&self, k: usize, j: usize, h: Option<&Vec3>, vblk: &mut [f64], kblk: &mut [f64]) {
        let sp = self.space;
        let ld = sp.local_dim();
        let p = sp.p;
        vblk.iter_mut().for_each(|x| *x = 0.0);
        kblk.iter_mut().for_each(|x| *x = 0.0);
        let tk = &sp.tris[k];
        let tj = &sp.tris[j];
        let shared = if k == j { Vec::new() } else { sp.shared_vertices(k, j) };
        let ratio = (tk.centroid - tj.centroid).norm() / tk.diam.max(tj.diam);
        let touching = k == j || !shared.is_empty();

        if !touching && ratio >= self.opts.near_factor {
            // smooth kernel: tensor Gauss rules on both triangles
            let n = gauss_order_for_ratio(ratio, self.opts.digits);
            let gk = &sp.gauss[k][n];
            let gj = &sp.gauss[j][n];
            let nq = gk.weights.len();
            let mut kv = vec![0.0; nq];
            let mut kg = vec![0.0; nq];
            for r in 0..nq {
                kv.iter_mut().for_each(|x| *x = 0.0);
                kg.iter_mut().for_each(|x| *x = 0.0);
                let y = &gj.points[r];
                let wy = gj.weights[r];
                for q in 0..nq {
                    let d = gk.points[q] - y;
                    let rr = d.norm();
                    let kern = gk.weights[q] * wy / (FOUR_PI * rr);
                    kv[q] = kern;
                    if let Some(h) = h {
                        kg[q] = -kern * h.dot(&d) / (rr * rr);
                    }
                }
                let bj = &gj.basis[r * ld..(r + 1) * ld];
                for q in 0..nq {
                    let bk = &gk.basis[q * ld..(q + 1) * ld];
                    for a in 0..ld {
                        let fa = bk[a] * kv[q];
                        let ga = bk[a] * kg[q];
                        for b in 0..ld {
                            vblk[a * ld + b] += fa * bj[b];
                            kblk[a * ld + b] += ga * bj[b];
                        }
                    }
                }
            }
            return;
        }

        let rule: &QuadRule<[f64; 2]> = if k == j {
            &self.rules.self_rule
        } else if shared.len() >= 2 {
            let (a, b) = (shared[0].0, shared[1].0);
            let e = if (a + 1) % 3 == b {
                a
            } else {
                b
            };
            &self.rules.edge[e]
        } else if shared.len() == 1 {
            &self.rules.vertex[shared[0].0]
        } else {
            let n = gauss_order_for_ratio((ratio - 0.5).max(0.5), self.opts.digits).max(self.opts.order);
            return self.pair_with_rule(k, j, &triangle_rule(n).expect("valid order"), h, vblk, kblk, p);
        };
        self.pair_with_rule(k, j, rule, h, vblk, kblk, p);
    }

    #[allow(clippy::too_many_arguments)]
    fn pair_with_rule(
        &self,
        k: usize,
        j: usize,
        rule: &QuadRule<[f64; 2]>,
        h: Option<&Vec3>,
        vblk: &mut [f64],
        kblk: &mut [f64],
        p: usize,
    ) {
        let sp = self.space;
        let ld = sp.local_dim();
        let tk = &sp.tris[k];
        let tj = &sp.tris[j];
        let mut bk = [0.0; 10];
        let mut pot = [0.0; 10];
        let mut grad = [Vec3::zeros(); 10];
        let scale = 2.0 * tk.area;
        for (uv, w) in rule.iter() {
            let x = tk.point(uv);
            tk.basis_values(&x, p, &mut bk[..ld]);
            let w = w * scale;
            if let Some(h) = h {
                slp_triangle_batch(tj, &x, p, &mut pot[..ld], Some(&mut grad[..ld]));
                for a in 0..ld {
                    let fa = w * bk[a];
                    for b in 0..ld {
                        vblk[a * ld + b] += fa * pot[b];
                        kblk[a * ld + b] += fa * h.dot(&grad[b]);
                    }
                }
            } else {
                slp_triangle_batch(tj, &x, p, &mut pot[..ld], None);
                for a in 0..ld {
                    let fa = w * bk[a];
                    for b in 0..ld {
                        vblk[a * ld + b] += fa * pot[b];
                    }
                }
            }
        }
    }
}

/// Galerkin matrix <V b_j, b_k> of the single layer, symmetrised.
pub fn assemble_slp(space: &DGSpace, opts: &QuadOptions) -> Result<Mat<f64>> {
    let asm = Assembler::new(space, opts)?;
    let ld = space.local_dim();
    let nt = space.n_triangles();
    let mut v = Mat::<f64>::zeros(space.dim(), space.dim());
    let mut vb = vec![0.0; ld * ld];
    let mut kb = vec![0.0; ld * ld];
    let mut vb2 = vec![0.0; ld * ld];
    for k in 0..nt {
        for j in k..nt {
            asm.pair(k, j, None, &mut vb, &mut kb);
            if k == j {
                for a in 0..ld {
                    for b in 0..ld {
                        v[(k * ld + a, j * ld + b)] = 0.5 * (vb[a * ld + b] + vb[b * ld + a]);
                    }
                }
                continue;
            }
            let touching = !space.shared_vertices(k, j).is_empty();
            if touching {
                // both orientations, each with the outer rule graded on its own side
                asm.pair(j, k, None, &mut vb2, &mut kb);
                for a in 0..ld {
                    for b in 0..ld {
                        vb[a * ld + b] = 0.5 * (vb[a * ld + b] + vb2[b * ld + a]);
                    }
                }
            }
            for a in 0..ld {
                for b in 0..ld {
                    v[(k * ld + a, j * ld + b)] = vb[a * ld + b];
                    v[(j * ld + b, k * ld + a)] = vb[a * ld + b];
                }
            }
        }
    }
    Ok(v)
}

fn check_direction_field(space: &DGSpace, h: &FacetField<Vec3>) -> Result<()> {
    if h.len() != space.n_triangles() {
        return Err(Error::InvalidArgument("direction field does not live on the mesh".into()));
    }
    if let Some(t) = h.values.iter().position(|v| !(v.norm() > 0.0) || !v.iter().all(|x| x.is_finite())) {
        return Err(Error::InvalidArgument(format!("direction field vanishes on facet {t}")));
    }
    Ok(())
}

/// Galerkin matrices of V and K'(h) (principal value) in one sweep over ordered pairs.
pub fn assemble_slp_adlp(space: &DGSpace, h: &FacetField<Vec3>, opts: &QuadOptions) -> Result<(Mat<f64>, Mat<f64>)> {
    check_direction_field(space, h)?;
    let asm = Assembler::new(space, opts)?;
    let ld = space.local_dim();
    let nt = space.n_triangles();
    let n = space.dim();
    let mut v = Mat::<f64>::zeros(n, n);
    let mut kp = Mat::<f64>::zeros(n, n);
    let mut vb = vec![0.0; ld * ld];
    let mut kb = vec![0.0; ld * ld];
    for k in 0..nt {
        for j in 0..nt {
            asm.pair(k, j, Some(&h.values[k]), &mut vb, &mut kb);
            for a in 0..ld {
                for b in 0..ld {
                    v[(k * ld + a, j * ld + b)] = vb[a * ld + b];
                    kp[(k * ld + a, j * ld + b)] = kb[a * ld + b];
                }
            }
        }
    }
    let vs = Mat::from_fn(n, n, |i, j| 0.5 * (v[(i, j)] + v[(j, i)]));
    Ok((vs, kp))
}

/// Robin operator S = V - (1/2)(h . n) I + K'(h) for the exterior trace, together with V.
#[derive(Clone, Debug)]
pub struct RobinOperator {
    pub s: Mat<f64>,
    pub v: Mat<f64>,
}

pub fn assemble_robin_operator(space: &DGSpace, h: &FacetField<Vec3>, opts: &QuadOptions) -> Result<RobinOperator> {
    let (v, kp) = assemble_slp_adlp(space, h, opts)?;
    let ld = space.local_dim();
    let mut s = &v + &kp;
    for t in 0..space.n_triangles() {
        let c = -0.5 * h.values[t].dot(&space.tris[t].normal);
        let m = space.mass_block(t);
        for a in 0..ld {
            for b in 0..ld {
                s[(t * ld + a, t * ld + b)] += c * m[a * ld + b];
            }
        }
    }
    Ok(RobinOperator { s, v })
}

/// A_k(x) = x_k / |x|^3.
pub fn dipole(x: &Vec3, k: usize) -> f64 {
    x[k] / x.norm().powi(3)
}

/// Constraint data: Lambda (3 x N), projections of A_j (N x 3).
#[derive(Clone, Debug)]
pub struct Constraints {
    pub lambda: Mat<f64>,
    pub projection: Mat<f64>,
}

pub fn assemble_constraints(space: &DGSpace) -> Result<Constraints> {
    let min_r = space.rhs_points().iter().map(|(_, _, x, _)| x.norm()).fold(f64::INFINITY, f64::min);
    let scale = space.tris.iter().map(|t| t.diam).fold(0.0, f64::max);
    if !(min_r > 1e-8 * scale.max(1e-300)) {
        return Err(Error::Geometry("surface passes through the origin".into()));
    }
    let n = space.dim();
    let mut lambda = Mat::<f64>::zeros(3, n);
    let mut projection = Mat::<f64>::zeros(n, 3);
    for k in 0..3 {
        let rhs = space.rhs_vector(&|_, _, x| dipole(x, k));
        let proj = space.apply_inverse_mass(&rhs)?;
        for i in 0..n {
            lambda[(k, i)] = rhs[i];
            projection[(i, k)] = proj[i];
        }
    }
    Ok(Constraints { lambda, projection })
}

/// Augmented system [op, op A; Lambda, 0].
#[derive(Clone, Debug)]
pub struct SaddleSystem {
    pub op: Mat<f64>,
    pub tilde: Mat<f64>,
    pub lambda: Mat<f64>,
    pub rhs: Vec<f64>,
    pub symmetric: bool,
    pub block: &'static str,
}

impl SaddleSystem {
    pub fn new(op: &Mat<f64>, cons: &Constraints, load: Vec<f64>, symmetric: bool, block: &'static str) -> Result<Self> {
        let n = op.nrows();
        if op.ncols() != n || cons.lambda.ncols() != n || load.len() != n {
            return Err(Error::InvalidArgument("inconsistent saddle-point block sizes".into()));
        }
        let tilde = op * &cons.projection;
        let mut rhs = load;
        rhs.extend([0.0; 3]);
        Ok(Self { op: op.clone(), tilde, lambda: cons.lambda.clone(), rhs, symmetric, block })
    }

    pub fn full_matrix(&self) -> Mat<f64> {
        let n = self.op.nrows();
        Mat::from_fn(n + 3, n + 3, |i, j| match (i < n, j < n) {
            (true, true) => self.op[(i, j)],
            (true, false) => self.tilde[(i, j - n)],
            (false, true) => self.lambda[(i - n, j)],
            (false, false) => 0.0,
        })
    }

    /// Direct LU solve with a one-norm condition guard; returns (mu, a).
    pub fn solve(&self) -> Result<(Vec<f64>, [f64; 3])> {
        let n = self.op.nrows();
        let mut a = self.full_matrix();
        // equilibrate the constraint rows and multiplier columns against the operator block
        let op_max = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).fold(0.0f64, |m, (i, j)| m.max(self.op[(i, j)].abs()));
        let mut row_s = [1.0; 3];
        let mut col_s = [1.0; 3];
        for k in 0..3 {
            let lmax = (0..n).fold(0.0f64, |m, j| m.max(self.lambda[(k, j)].abs()));
            let tmax = (0..n).fold(0.0f64, |m, i| m.max(self.tilde[(i, k)].abs()));
            if lmax > 0.0 {
                row_s[k] = op_max / lmax;
            }
            if tmax > 0.0 {
                col_s[k] = op_max / tmax;
            }
            for j in 0..n {
                a[(n + k, j)] *= row_s[k];
            }
            for i in 0..n {
                a[(i, n + k)] *= col_s[k];
            }
        }
        if !(0..n + 3).all(|i| (0..n + 3).all(|j| a[(i, j)].is_finite())) {
            return Err(Error::Solver { block: self.block.into(), msg: "non-finite matrix entries".into() });
        }
        let lu = a.partial_piv_lu();
        let cond = one_norm(&a) * inverse_one_norm_estimate(&lu, n + 3);
        if !(cond <= CONDITION_LIMIT) {
            return Err(Error::Solver {
                block: self.block.into(),
                msg: format!("condition estimate {cond:e} exceeds {CONDITION_LIMIT:e}"),
            });
        }
        let mut b = Mat::<f64>::zeros(n + 3, 1);
        for i in 0..n {
            b[(i, 0)] = self.rhs[i];
        }
        for k in 0..3 {
            b[(n + k, 0)] = self.rhs[n + k] * row_s[k];
        }
        let x = lu.solve(&b);
        let mu: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
        let am = [x[(n, 0)] * col_s[0], x[(n + 1, 0)] * col_s[1], x[(n + 2, 0)] * col_s[2]];
        if !mu.iter().chain(am.iter()).all(|v| v.is_finite()) {
            return Err(Error::Solver { block: self.block.into(), msg: "non-finite solution".into() });
        }
        Ok((mu, am))
    }

    /// Max-norm of Lambda mu.
    pub fn constraint_residual(&self, mu: &[f64]) -> f64 {
        (0..3)
            .map(|k| mu.iter().enumerate().map(|(j, m)| self.lambda[(k, j)] * m).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    /// Writes `MOLOSYS1`, then u64 LE dimension and flag, then the full matrix row-major and the rhs as f64 LE.
    pub fn dump(&self, path: &Path) -> Result<()> {
        let a = self.full_matrix();
        let m = a.nrows();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(b"MOLOSYS1")?;
        f.write_all(&(m as u64).to_le_bytes())?;
        f.write_all(&(self.symmetric as u64).to_le_bytes())?;
        for i in 0..m {
            for j in 0..m {
                f.write_all(&a[(i, j)].to_le_bytes())?;
            }
        }
        for v in &self.rhs {
            f.write_all(&v.to_le_bytes())?;
        }
        f.flush()?;
        Ok(())
    }
}

pub fn load_dump(path: &Path) -> Result<(Mat<f64>, Vec<f64>, bool)> {
    let bytes = std::fs::read(path)?;
    let bad = || Error::Parse { line: 0, msg: "malformed system dump".into() };
    if bytes.len() < 24 || &bytes[..8] != b"MOLOSYS1" {
        return Err(bad());
    }
    let m = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let sym = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) != 0;
    if bytes.len() != 24 + 8 * (m * m + m) {
        return Err(bad());
    }
    let f = |k: usize| f64::from_le_bytes(bytes[24 + 8 * k..32 + 8 * k].try_into().unwrap());
    let a = Mat::from_fn(m, m, |i, j| f(i * m + j));
    let rhs = (0..m).map(|i| f(m * m + i)).collect();
    Ok((a, rhs, sym))
}

fn one_norm(a: &Mat<f64>) -> f64 {
    (0..a.ncols()).map(|j| (0..a.nrows()).map(|i| a[(i, j)].abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Hager's estimate of the one-norm of A^{-1} from an LU factorisation.
fn inverse_one_norm_estimate(lu: &faer::linalg::solvers::PartialPivLu<f64>, n: usize) -> f64 {
    let mut x = Mat::<f64>::from_fn(n, 1, |_, _| 1.0 / n as f64);
    let mut est = 0.0;
    for _ in 0..5 {
        let y = lu.solve(&x);
        est = (0..n).map(|i| y[(i, 0)].abs()).sum::<f64>();
        if !est.is_finite() {
            return f64::INFINITY;
        }
        let xi = Mat::<f64>::from_fn(n, 1, |i, _| if y[(i, 0)] >= 0.0 { 1.0 } else { -1.0 });
        let z = lu.solve_transpose(&xi);
        let (jmax, zmax) = (0..n).map(|i| (i, z[(i, 0)].abs())).fold((0, 0.0), |m, c| if c.1 > m.1 { c } else { m });
        let ztx: f64 = (0..n).map(|i| z[(i, 0)] * x[(i, 0)]).sum();
        if zmax <= ztx {
            break;
        }
        x = Mat::<f64>::zeros(n, 1);
        x[(jmax, 0)] = 1.0;
    }
    est
}

/// Solution of an augmented Robin or Dirichlet problem.
#[derive(Clone, Debug)]
pub struct AugmentedSolution {
    pub density: DGDensity,
    pub multipliers: [f64; 3],
    pub constraint_residual: f64,
}

fn solve_augmented(
    space: &Arc<DGSpace>,
    op: &Mat<f64>,
    cons: &Constraints,
    load: Vec<f64>,
    symmetric: bool,
    block: &'static str,
) -> Result<AugmentedSolution> {
    let sys = SaddleSystem::new(op, cons, load, symmetric, block)?;
    let (mu, a) = sys.solve()?;
    let constraint_residual = sys.constraint_residual(&mu);
    Ok(AugmentedSolution { density: DGDensity::new(space.clone(), mu)?, multipliers: a, constraint_residual })
}

/// Galerkin solution of S mu + sum a_j S A_j = f with <mu, A_k> = 0.
pub fn solve_robin(
    space: &Arc<DGSpace>,
    op: &RobinOperator,
    cons: &Constraints,
    f: &dyn Fn(usize, [f64; 2], &Vec3) -> f64,
) -> Result<AugmentedSolution> {
    solve_augmented(space, &op.s, cons, space.rhs_vector(f), false, "robin")
}

/// Galerkin solution of V mu + sum a_j V A_j = w with <mu, A_k> = 0.
pub fn solve_dirichlet(
    space: &Arc<DGSpace>,
    v: &Mat<f64>,
    cons: &Constraints,
    w: &dyn Fn(usize, [f64; 2], &Vec3) -> f64,
) -> Result<AugmentedSolution> {
    solve_augmented(space, v, cons, space.rhs_vector(w), true, "dirichlet")
}

/// Dirichlet solve from values at the right-hand-side points.
pub fn solve_dirichlet_values(
    space: &Arc<DGSpace>,
    v: &Mat<f64>,
    cons: &Constraints,
    values: &[f64],
) -> Result<AugmentedSolution> {
    solve_augmented(space, v, cons, space.rhs_from_values(values)?, true, "dirichlet")
}

/// Linear interpolation of a nodal field at reference coordinates `uv` of facet `t`.
pub fn interpolate<T>(mesh: &TriangleMesh, field: &SurfaceField<T>, t: usize, uv: [f64; 2]) -> T
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    let [a, b, c] = mesh.triangles()[t];
    field.values[a] * (1.0 - uv[0] - uv[1]) + field.values[b] * uv[0] + field.values[c] * uv[1]
}

/// f = W' + G' . h, nodal fields interpolated linearly and h constant per facet.
pub fn build_rhs_robin<'a>(
    mesh: &'a TriangleMesh,
    w_dot: &'a SurfaceField<f64>,
    g_dot: &'a SurfaceField<Vec3>,
    h: &'a FacetField<Vec3>,
) -> Result<impl Fn(usize, [f64; 2], &Vec3) -> f64 + 'a> {
    if w_dot.len() != mesh.n_vertices() || g_dot.len() != mesh.n_vertices() || h.len() != mesh.n_triangles() {
        return Err(Error::InvalidArgument("right-hand-side fields do not live on the mesh".into()));
    }
    Ok(move |t: usize, uv: [f64; 2], _x: &Vec3| interpolate(mesh, w_dot, t, uv) + interpolate(mesh, g_dot, t, uv).dot(&h.values[t]))
}

/// One solved step of the iteration: the surface it lives on, its density and step size.
#[derive(Clone, Debug)]
pub struct HistoryEntry {
    pub mesh: TriangleMesh,
    pub density: DGDensity,
    pub step: f64,
}

/// w at reference points (facet, uv): v0(phi_0) + sum_i step_i (V_i mu_i)(phi_i), evaluated on surface i.
pub fn accumulate_w(
    history: &[HistoryEntry],
    v0: &dyn Fn(&Vec3) -> f64,
    base: &TriangleMesh,
    points: &[(usize, [f64; 2])],
    opts: &QuadOptions,
) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = points.iter().map(|&(t, uv)| v0(&point_on(base, t, uv))).collect();
    for (i, e) in history.iter().enumerate() {
        if e.mesh.n_triangles() != base.n_triangles() || e.density.space.n_triangles() != base.n_triangles() {
            return Err(Error::State(format!("history entry {i} lives on a different triangulation")));
        }
        add_history_term(&mut out, e, points, opts);
    }
    Ok(out)
}

/// Adds step (V mu)(phi(point)) of one history entry to `values`.
pub fn add_history_term(values: &mut [f64], e: &HistoryEntry, points: &[(usize, [f64; 2])], opts: &QuadOptions) {
    for (v, &(t, uv)) in values.iter_mut().zip(points) {
        *v += e.step * e.density.potential(&point_on(&e.mesh, t, uv), opts);
    }
}

pub fn point_on(mesh: &TriangleMesh, t: usize, uv: [f64; 2]) -> Vec3 {
    let [a, b, c] = mesh.triangle_vertices(t);
    a + (b - a) * uv[0] + (c - a) * uv[1]
}
