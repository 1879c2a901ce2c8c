//! Closed-form integrals of the Newton kernel 1/(4 pi |x - y|) over flat triangles
//! against polynomial densities, their gradients, and the 2D log-kernel analogue.
//!
//! Triangle densities are monomials xi^a eta^b in the in-plane Cartesian frame
//! of the triangle, centred at the centroid and scaled by the diameter.

use std::f64::consts::PI;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::mesh::Vec3;

pub type Vec2 = Vector2<f64>;

pub const FOUR_PI: f64 = 4.0 * PI;

/// Largest supported polynomial degree.
pub const MAX_DEGREE: usize = 3;

/// Exponent pairs (a, b) of the local monomial basis of degree p, graded by total degree.
pub fn monomials(p: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity((p + 1) * (p + 2) / 2);
    for d in 0..=p {
        for b in 0..=d {
            out.push((d - b, b));
        }
    }
    out
}

pub fn dim_p(p: usize) -> usize {
    (p + 1) * (p + 2) / 2
}

const BINOM: [[f64; 4]; 4] = [
    [1.0, 0.0, 0.0, 0.0],
    [1.0, 1.0, 0.0, 0.0],
    [1.0, 2.0, 1.0, 0.0],
    [1.0, 3.0, 3.0, 1.0],
];

/// Kernel selector for pointwise evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelId {
    Newton3d,
    Log2d,
    Adlp3d(Vec3),
}

/// Pointwise kernel value; for `Log2d` the third coordinates are ignored.
pub fn kernel(id: KernelId, x: &Vec3, y: &Vec3) -> f64 {
    let d = x - y;
    match id {
        KernelId::Newton3d => 1.0 / (FOUR_PI * d.norm()),
        KernelId::Log2d => -(d.x.hypot(d.y)).ln() / (2.0 * PI),
        KernelId::Adlp3d(h) => -h.dot(&d) / (FOUR_PI * d.norm().powi(3)),
    }
}

/// Flat triangle with its local frame.
#[derive(Clone, Debug)]
pub struct PlaneTriangle {
    pub vertices: [Vec3; 3],
    pub centroid: Vec3,
    pub e1: Vec3,
    pub e2: Vec3,
    pub normal: Vec3,
    pub area: f64,
    pub diam: f64,
    local: [Vec2; 3],
}

impl PlaneTriangle {
    pub fn new(a: Vec3, b: Vec3, c: Vec3) -> Result<Self> {
        let cr = (b - a).cross(&(c - a));
        let diam = (b - a).norm().max((c - b).norm()).max((a - c).norm());
        let area = 0.5 * cr.norm();
        if !(area > 1e-14 * diam * diam) {
            return Err(Error::Geometry(format!("degenerate triangle with area {area:e}")));
        }
        let normal = cr / (2.0 * area);
        let e1 = (b - a).normalize();
        let e2 = normal.cross(&e1);
        let centroid = (a + b + c) / 3.0;
        let loc = |p: &Vec3| Vec2::new((p - centroid).dot(&e1), (p - centroid).dot(&e2));
        let local = [loc(&a), loc(&b), loc(&c)];
        Ok(Self { vertices: [a, b, c], centroid, e1, e2, normal, area, diam, local })
    }

    /// Point with reference coordinates (u, v).
    pub fn point(&self, uv: &[f64; 2]) -> Vec3 {
        let [a, b, c] = &self.vertices;
        a + (b - a) * uv[0] + (c - a) * uv[1]
    }

    /// Scaled local coordinates (xi, eta) of a point in the plane.
    pub fn local_coords(&self, y: &Vec3) -> (f64, f64) {
        let d = y - self.centroid;
        (d.dot(&self.e1) / self.diam, d.dot(&self.e2) / self.diam)
    }

    /// Values of the degree-p monomial basis at `y`.
    pub fn basis_values(&self, y: &Vec3, p: usize, out: &mut [f64]) {
        let (xi, eta) = self.local_coords(y);
        let mut xp = [1.0; 4];
        let mut yp = [1.0; 4];
        for k in 1..=p {
            xp[k] = xp[k - 1] * xi;
            yp[k] = yp[k - 1] * eta;
        }
        for (o, (a, b)) in out.iter_mut().zip(monomials(p)) {
            *o = xp[a] * yp[b];
        }
    }

    /// Distance from `x` to the closest point of the triangle.
    pub fn distance(&self, x: &Vec3) -> f64 {
        (x - closest_point_on_triangle(x, &self.vertices)).norm()
    }
}

/// Closest point of triangle `t` to `p`.
pub fn closest_point_on_triangle(p: &Vec3, t: &[Vec3; 3]) -> Vec3 {
    let [a, b, c] = t;
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// int_{s_a}^{s_b} ds / sqrt(s^2 + w^2) without cancellation.
fn edge_log(sa: f64, sb: f64, ra: f64, rb: f64, w: f64) -> f64 {
    if w == 0.0 {
        return if sa > 0.0 {
            (sb / sa).ln()
        } else if sb < 0.0 {
            (sa / sb).ln()
        } else {
            f64::INFINITY
        };
    }
    if sa >= 0.0 {
        ((sb + rb) / (sa + ra)).ln()
    } else if sb <= 0.0 {
        ((ra - sa) / (rb - sb)).ln()
    } else {
        (sb / w).asinh() + (-sa / w).asinh()
    }
}

/// Moments over the triangle in coordinates (u, v) centred at the projection of x.
struct Moments {
    pot: [[f64; 4]; 4],
    grad: Option<[[Vec3; 4]; 4]>,
}

fn moments(tri: &PlaneTriangle, x: &Vec3, p: usize, with_grad: bool) -> Moments {
    let d = x - tri.centroid;
    let mut z = d.dot(&tri.normal);
    if z.abs() < 1e-12 * tri.diam {
        z = 0.0;
    }
    let x0 = Vec2::new(d.dot(&tri.e1), d.dot(&tri.e2));
    let q = [tri.local[0] - x0, tri.local[1] - x0, tri.local[2] - x0];
    let z2 = z * z;

    // sums over edges: weights d_e, nu_u, nu_v against int P/R and int P R
    let mut eo_u = [[0.0; 4]; 4];
    let mut eo_v = [[0.0; 4]; 4];
    let mut er_d = [[0.0; 4]; 4];
    let mut er_u = [[0.0; 4]; 4];
    let mut er_v = [[0.0; 4]; 4];
    let mut a00_edge = 0.0;

    for e in 0..3 {
        let qa = q[e];
        let qb = q[(e + 1) % 3];
        let len = (qb - qa).norm();
        let tau = (qb - qa) / len;
        let nu = Vec2::new(tau.y, -tau.x);
        let de = qa.dot(&nu);
        let sa = qa.dot(&tau);
        let sb = qb.dot(&tau);
        let w2 = de * de + z2;
        let w = w2.sqrt();
        let ra = (sa * sa + w2).sqrt();
        let rb = (sb * sb + w2).sqrt();

        // J_k = int s^k / R, k <= p + 1
        // w^2 J_k terms vanish in the limit w -> 0 even where J_0 diverges
        let mut jk = [0.0; 6];
        let mut w2jk = [0.0; 6];
        jk[0] = edge_log(sa, sb, ra, rb, w);
        jk[1] = rb - ra;
        let (mut pa, mut pb) = (1.0, 1.0);
        for k in 0..=p + 1 {
            if k >= 2 {
                pa *= sa;
                pb *= sb;
                jk[k] = ((pb * rb - pa * ra) - (k as f64 - 1.0) * w2jk[k - 2]) / k as f64;
            }
            w2jk[k] = if w2 == 0.0 { 0.0 } else { w2 * jk[k] };
        }
        if de.abs() >= 1e-14 * tri.diam {
            a00_edge += de * jk[0];
        }

        // coefficients in s of u^i v^j along the edge
        let mut upow = [[0.0; 4]; 4];
        let mut vpow = [[0.0; 4]; 4];
        upow[0][0] = 1.0;
        vpow[0][0] = 1.0;
        for i in 1..=p {
            for k in 0..=i {
                let prev = if k < i { upow[i - 1][k] } else { 0.0 };
                let prevs = if k > 0 { upow[i - 1][k - 1] } else { 0.0 };
                upow[i][k] = de * nu.x * prev + tau.x * prevs;
                let prev = if k < i { vpow[i - 1][k] } else { 0.0 };
                let prevs = if k > 0 { vpow[i - 1][k - 1] } else { 0.0 };
                vpow[i][k] = de * nu.y * prev + tau.y * prevs;
            }
        }
        for i in 0..=p {
            for j in 0..=(p - i) {
                let mut so = 0.0;
                let mut sr = 0.0;
                for ki in 0..=i {
                    for kj in 0..=j {
                        let c = upow[i][ki] * vpow[j][kj];
                        let k = ki + kj;
                        if c != 0.0 {
                            so += c * jk[k];
                            if i + j < p {
                                sr += c * (jk[k + 2] + w2jk[k]);
                            }
                        }
                    }
                }
                eo_u[i][j] += nu.x * so;
                eo_v[i][j] += nu.y * so;
                er_d[i][j] += de * sr;
                er_u[i][j] += nu.x * sr;
                er_v[i][j] += nu.y * sr;
            }
        }
    }

    let omega = if z == 0.0 {
        0.0
    } else {
        let a = tri.vertices[0] - x;
        let b = tri.vertices[1] - x;
        let c = tri.vertices[2] - x;
        let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
        let num = a.dot(&b.cross(&c));
        let den = la * lb * lc + a.dot(&b) * lc + a.dot(&c) * lb + b.dot(&c) * la;
        -2.0 * num.atan2(den)
    };

    // A[i][j] = int u^i v^j / R, B[i][j] = int u^i v^j R
    let mut a = [[0.0; 4]; 4];
    let mut b = [[0.0; 4]; 4];
    a[0][0] = a00_edge - z * omega;
    for k in 0..=p {
        for j in 0..=k {
            let i = k - j;
            if k > 0 {
                a[i][j] = if i >= 1 {
                    let mut v = er_u[i - 1][j];
                    if i >= 2 {
                        v -= (i - 1) as f64 * b[i - 2][j];
                    }
                    v
                } else {
                    let mut v = er_v[0][j - 1];
                    if j >= 2 {
                        v -= (j - 1) as f64 * b[0][j - 2];
                    }
                    v
                };
            }
            if k + 2 <= p {
                b[i][j] = (er_d[i][j] + z2 * a[i][j]) / (k as f64 + 3.0);
            }
        }
    }

    let grad = with_grad.then(|| {
        let mut g = [[Vec3::zeros(); 4]; 4];
        for i in 0..=p {
            for j in 0..=(p - i) {
                // int P u / R^3 = A[d_u P] - sum nu_u int_e P / R
                let mut gu = -eo_u[i][j];
                if i >= 1 {
                    gu += i as f64 * a[i - 1][j];
                }
                let mut gv = -eo_v[i][j];
                if j >= 1 {
                    gv += j as f64 * a[i][j - 1];
                }
                // -z int P / R^3
                let gn = if z == 0.0 {
                    0.0
                } else if i + j == 0 {
                    -omega
                } else if i >= 1 {
                    let mut c = -eo_u[i - 1][j];
                    if i >= 2 {
                        c += (i - 1) as f64 * a[i - 2][j];
                    }
                    -z * c
                } else {
                    let mut c = -eo_v[0][j - 1];
                    if j >= 2 {
                        c += (j - 1) as f64 * a[0][j - 2];
                    }
                    -z * c
                };
                g[i][j] = tri.e1 * gu + tri.e2 * gv + tri.normal * gn;
            }
        }
        g
    });

    Moments { pot: a, grad }
}

/// Single-layer potential and gradient of the degree-p monomial basis of `tri` at `x`,
/// in closed form. `pot[k]` receives int b_k(y) / (4 pi |x - y|) ds_y and `grad[k]`
/// the x-gradient; on the triangle plane the normal component is the principal value.
pub fn slp_triangle_batch(tri: &PlaneTriangle, x: &Vec3, p: usize, pot: &mut [f64], grad: Option<&mut [Vec3]>) {
    let with_grad = grad.is_some();
    let m = moments(tri, x, p, with_grad);
    let d = x - tri.centroid;
    let x0 = [d.dot(&tri.e1), d.dot(&tri.e2)];
    let mut xp = [1.0; 4];
    let mut yp = [1.0; 4];
    for k in 1..=p {
        xp[k] = xp[k - 1] * x0[0];
        yp[k] = yp[k - 1] * x0[1];
    }
    let inv = 1.0 / tri.diam;
    let mut scale = [1.0; 4];
    for k in 1..=p {
        scale[k] = scale[k - 1] * inv;
    }
    let mons = monomials(p);
    let mut grad = grad;
    for (idx, &(ea, eb)) in mons.iter().enumerate() {
        let mut s = 0.0;
        let mut g = Vec3::zeros();
        for i in 0..=ea {
            for j in 0..=eb {
                let c = BINOM[ea][i] * BINOM[eb][j] * xp[ea - i] * yp[eb - j];
                s += c * m.pot[i][j];
                if let Some(gr) = &m.grad {
                    g += gr[i][j] * c;
                }
            }
        }
        let sc = scale[ea + eb] / FOUR_PI;
        pot[idx] = s * sc;
        if let Some(gout) = grad.as_deref_mut() {
            gout[idx] = g * sc;
        }
    }
}

/// int over `tri` of xi^a eta^b / (4 pi |x - y|), for a + b <= 3.
pub fn slp_triangle_analytic(x: &Vec3, tri: &PlaneTriangle, monomial: (usize, usize)) -> Result<f64> {
    let p = monomial.0 + monomial.1;
    if p > MAX_DEGREE {
        return Err(Error::InvalidArgument(format!("monomial degree {p} above {MAX_DEGREE}")));
    }
    let mut pot = vec![0.0; dim_p(p)];
    slp_triangle_batch(tri, x, p, &mut pot, None);
    let idx = monomials(p).iter().position(|&m| m == monomial).expect("monomial listed");
    Ok(pot[idx])
}

// ---------------------------------------------------------------------------
// 2D log kernel

/// Highest Legendre degree of 2D densities.
pub const MAX_DEGREE_2D: usize = 24;

/// Straight segment with Legendre-parametrised densities y(t) = mid + half t tau, t in [-1, 1].
#[derive(Clone, Copy, Debug)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
    pub mid: Vec2,
    pub tau: Vec2,
    /// Right-hand normal; outward for counter-clockwise polygons.
    pub normal: Vec2,
    pub half: f64,
}

impl Segment {
    pub fn new(a: Vec2, b: Vec2) -> Result<Self> {
        let len = (b - a).norm();
        if !(len > 0.0) || !len.is_finite() {
            return Err(Error::Geometry("degenerate segment".into()));
        }
        let tau = (b - a) / len;
        Ok(Self { a, b, mid: (a + b) * 0.5, tau, normal: Vec2::new(tau.y, -tau.x), half: 0.5 * len })
    }

    pub fn length(&self) -> f64 {
        2.0 * self.half
    }

    pub fn point(&self, t: f64) -> Vec2 {
        self.mid + self.tau * (self.half * t)
    }
}

/// Legendre polynomials P_0..P_n at t.
pub fn legendre_values(t: f64, n: usize, out: &mut [f64]) {
    out[0] = 1.0;
    if n >= 1 {
        out[1] = t;
    }
    for k in 1..n {
        out[k + 1] = ((2 * k + 1) as f64 * t * out[k] - k as f64 * out[k - 1]) / (k + 1) as f64;
    }
}

#[derive(Clone, Copy, Debug)]
struct C64 {
    re: f64,
    im: f64,
}

impl C64 {
    fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }
    fn mul(self, o: C64) -> C64 {
        C64::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
    fn scale(self, s: f64) -> C64 {
        C64::new(self.re * s, self.im * s)
    }
    fn sub(self, o: C64) -> C64 {
        C64::new(self.re - o.re, self.im - o.im)
    }
    fn div(self, o: C64) -> C64 {
        let d = o.re * o.re + o.im * o.im;
        C64::new((self.re * o.re + self.im * o.im) / d, (self.im * o.re - self.re * o.im) / d)
    }
    fn abs(self) -> f64 {
        self.re.hypot(self.im)
    }
    fn sqrt(self) -> C64 {
        let r = self.abs();
        let re = (0.5 * (r + self.re)).max(0.0).sqrt();
        let im = (0.5 * (r - self.re)).max(0.0).sqrt().copysign(self.im);
        C64::new(re, im)
    }
}

/// Legendre functions of the second kind Q_0..Q_n at z = alpha + i beta.
/// On the cut (beta = 0, |alpha| < 1) the imaginary part is the average of both sides.
fn legendre_q(alpha: f64, beta: f64, n: usize, out: &mut [C64]) {
    let z = C64::new(alpha, beta);
    let zp = C64::new(alpha + 1.0, beta);
    let zm = C64::new(alpha - 1.0, beta);
    let on_cut = beta == 0.0 && alpha.abs() < 1.0;
    let q0 = C64::new(
        0.5 * (zp.abs().ln() - zm.abs().ln()),
        if on_cut { 0.0 } else { 0.5 * (beta.atan2(alpha + 1.0) - beta.atan2(alpha - 1.0)) },
    );
    let root = zm.sqrt().mul(zp.sqrt());
    let rho = C64::new(alpha + root.re, beta + root.im).abs();
    let rho = rho.max(1.0 / rho);
    // forward recurrence amplifies errors by about rho^(2n)
    if on_cut || 2.0 * n as f64 * rho.ln() < 7.0 {
        out[0] = q0;
        if n >= 1 {
            out[1] = z.mul(q0).sub(C64::new(1.0, 0.0));
        }
        for k in 1..n {
            let a = z.mul(out[k]).scale((2 * k + 1) as f64);
            out[k + 1] = a.sub(out[k - 1].scale(k as f64)).scale(1.0 / (k + 1) as f64);
        }
    } else {
        // Miller backward recurrence normalised by Q_0
        let big = n + 8 + (40.0 / rho.ln()).ceil() as usize;
        let mut qk1 = C64::new(0.0, 0.0);
        let mut qk = C64::new(1.0, 0.0);
        let mut vals = vec![C64::new(0.0, 0.0); n + 1];
        for k in (1..=big).rev() {
            // Q_{k-1} = ((2k+1) z Q_k - (k+1) Q_{k+1}) / k
            let qm = z.mul(qk).scale((2 * k + 1) as f64).sub(qk1.scale((k + 1) as f64)).scale(1.0 / k as f64);
            qk1 = qk;
            qk = qm;
            if k - 1 <= n {
                vals[k - 1] = qk;
            }
            let mag = qk.abs();
            if mag > 1e200 {
                let s = 1.0 / mag;
                qk = qk.scale(s);
                qk1 = qk1.scale(s);
                for v in vals.iter_mut() {
                    *v = v.scale(s);
                }
            }
        }
        let norm = q0.div(vals[0]);
        for k in 0..=n {
            out[k] = vals[k].mul(norm);
        }
    }
}

/// Potential (and gradient) at `x` of the Legendre densities P_0..P_n on `seg`
/// for the kernel -(1/2 pi) log |x - y|.
pub fn slp_segment_legendre(seg: &Segment, x: &Vec2, n: usize, pot: &mut [f64], grad: Option<&mut [Vec2]>) {
    let d = x - seg.mid;
    let alpha = d.dot(&seg.tau) / seg.half;
    let beta = d.dot(&seg.normal) / seg.half;
    slp_segment_legendre_local(seg, alpha, beta, n, pot, grad)
}

/// As [`slp_segment_legendre`] with x given by local coordinates x = mid + half (alpha tau + beta normal).
pub fn slp_segment_legendre_local(seg: &Segment, alpha: f64, beta: f64, n: usize, pot: &mut [f64], grad: Option<&mut [Vec2]>) {
    let beta = if beta.abs() < 1e-14 { 0.0 } else { beta };
    // the potential is continuous at the endpoints, the Q_k are not
    let alpha = if beta == 0.0 && (alpha.abs() - 1.0).abs() < 1e-15 { alpha.signum() * (1.0 + 1e-15) } else { alpha };
    assert!(n <= MAX_DEGREE_2D, "segment degree {n} above {MAX_DEGREE_2D}");
    let mut q = [C64::new(0.0, 0.0); MAX_DEGREE_2D + 2];
    legendre_q(alpha, beta, n + 1, &mut q);
    let l = seg.half;
    let zp = C64::new(1.0 + alpha, beta);
    let zm = C64::new(1.0 - alpha, -beta);
    let i0 = {
        let lp = if zm.abs() == 0.0 { 0.0 } else { (1.0 - alpha) * zm.abs().ln() };
        let lm = if zp.abs() == 0.0 { 0.0 } else { (1.0 + alpha) * zp.abs().ln() };
        let arg = if beta == 0.0 { 0.0 } else { beta * ((-beta).atan2(1.0 - alpha) - (-beta).atan2(-1.0 - alpha)) };
        lp + lm + arg - 2.0
    };
    for j in 0..=n {
        let ij = if j == 0 { i0 } else { 2.0 * (q[j + 1].re - q[j - 1].re) / (2 * j + 1) as f64 };
        let log_l = if j == 0 { 2.0 * l.ln() } else { 0.0 };
        pot[j] = -(l / (2.0 * PI)) * (log_l + ij);
    }
    if let Some(g) = grad {
        for j in 0..=n {
            g[j] = -(seg.tau * q[j].re - seg.normal * q[j].im) / PI;
        }
    }
}

/// int over `seg` of t^k (-1/2 pi) log |x - y| ds_y, local t in [-1, 1], k <= 3.
pub fn slp_segment_analytic_2d(x: &Vec2, seg: &Segment, degree: usize) -> Result<f64> {
    if degree > MAX_DEGREE {
        return Err(Error::InvalidArgument(format!("monomial degree {degree} above {MAX_DEGREE}")));
    }
    let mut p = [0.0; 4];
    slp_segment_legendre(seg, x, 3, &mut p, None);
    Ok(match degree {
        0 => p[0],
        1 => p[1],
        2 => (2.0 * p[2] + p[0]) / 3.0,
        _ => (2.0 * p[3] + 3.0 * p[1]) / 5.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{gauss_rule_on, graded_composite_rule, triangle_rule};

    fn unit_right() -> PlaneTriangle {
        PlaneTriangle::new(Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)).unwrap()
    }

    fn quad_slp(tri: &PlaneTriangle, x: &Vec3, mon: (usize, usize), target: [f64; 2]) -> f64 {
        let r = graded_composite_rule(target, 16, 0.2, 14).unwrap();
        let mut b = vec![0.0; dim_p(3)];
        let idx = monomials(3).iter().position(|&m| m == mon).unwrap();
        r.iter()
            .map(|(uv, w)| {
                let y = tri.point(uv);
                tri.basis_values(&y, 3, &mut b);
                w * 2.0 * tri.area * b[idx] / (FOUR_PI * (x - y).norm())
            })
            .sum()
    }

    #[test]
    fn vertex_value_matches_graded_quadrature() {
        let t = unit_right();
        let x = Vec3::zeros();
        let a = slp_triangle_analytic(&x, &t, (0, 0)).unwrap();
        let q = quad_slp(&t, &x, (0, 0), [0.0, 0.0]);
        assert!(((a - q) / q).abs() < 1e-10, "{a} {q}");
        // polar coordinates about the vertex
        let exact = 2f64.sqrt() * (1.0 + 2f64.sqrt()).ln() / FOUR_PI;
        assert!((a - exact).abs() < 1e-14, "{a} {exact}");
    }

    #[test]
    fn monomials_match_quadrature_in_plane_and_off_plane() {
        let t = PlaneTriangle::new(Vec3::new(0.1, -0.2, 0.3), Vec3::new(1.2, 0.1, 0.0), Vec3::new(0.3, 0.9, 0.5)).unwrap();
        for target in [[0.3, 0.3], [0.0, 0.5], [1.0, 0.0]] {
            let x = t.point(&target);
            for mon in monomials(3) {
                let a = slp_triangle_analytic(&x, &t, mon).unwrap();
                let q = quad_slp(&t, &x, mon, target);
                assert!((a - q).abs() < 1e-11 * (1.0 + q.abs()), "{mon:?} {a} {q}");
            }
        }
        let g = triangle_rule(12).unwrap();
        for x in [Vec3::new(0.4, 0.3, 0.7), Vec3::new(-0.5, 0.2, 0.1), Vec3::new(2.0, 1.0, -1.0)] {
            let mut b = vec![0.0; 10];
            let mut q = vec![0.0; 10];
            for (uv, w) in g.iter() {
                let y = t.point(uv);
                t.basis_values(&y, 3, &mut b);
                for k in 0..10 {
                    q[k] += w * 2.0 * t.area * b[k] / (FOUR_PI * (x - y).norm());
                }
            }
            let mut a = vec![0.0; 10];
            slp_triangle_batch(&t, &x, 3, &mut a, None);
            for k in 0..10 {
                assert!((a[k] - q[k]).abs() < 1e-8 * q[0].abs(), "x={x:?} k={k} {} {}", a[k], q[k]);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let t = PlaneTriangle::new(Vec3::new(0.1, -0.2, 0.3), Vec3::new(1.2, 0.1, 0.0), Vec3::new(0.3, 0.9, 0.5)).unwrap();
        for x in [Vec3::new(0.4, 0.3, 0.7), Vec3::new(-0.5, 0.2, 0.1), t.centroid + t.normal * 0.01] {
            let mut g = vec![Vec3::zeros(); 10];
            let mut a = vec![0.0; 10];
            slp_triangle_batch(&t, &x, 3, &mut a, Some(&mut g));
            let h = 1e-5;
            for c in 0..3 {
                let mut e = Vec3::zeros();
                e[c] = h;
                let mut ap = vec![0.0; 10];
                let mut am = vec![0.0; 10];
                slp_triangle_batch(&t, &(x + e), 3, &mut ap, None);
                slp_triangle_batch(&t, &(x - e), 3, &mut am, None);
                for k in 0..10 {
                    let fd = (ap[k] - am[k]) / (2.0 * h);
                    assert!((fd - g[k][c]).abs() < 1e-6, "c={c} k={k} {fd} {}", g[k][c]);
                }
            }
        }
    }

    #[test]
    fn solid_angle_sign_and_jump() {
        let t = unit_right();
        let x = t.point(&[0.25, 0.25]);
        let mut g = [Vec3::zeros()];
        let mut a = [0.0];
        slp_triangle_batch(&t, &(x + Vec3::z() * 1e-9), 0, &mut a, Some(&mut g));
        assert!((g[0].z + 0.5).abs() < 1e-6, "{}", g[0].z);
        slp_triangle_batch(&t, &x, 0, &mut a, Some(&mut g));
        assert_eq!(g[0].z, 0.0);
    }

    #[test]
    fn far_field_and_scaling() {
        let t = unit_right();
        let x = Vec3::new(30.0, 10.0, 20.0);
        let a = slp_triangle_analytic(&x, &t, (0, 0)).unwrap();
        let approx = t.area / (FOUR_PI * (x - t.centroid).norm());
        let ratio = (t.diam / (x - t.centroid).norm()).powi(2);
        assert!(((a - approx) / approx).abs() < ratio);
        let s = 3.5;
        let ts = PlaneTriangle::new(t.vertices[0] * s, t.vertices[1] * s, t.vertices[2] * s).unwrap();
        let y = Vec3::new(0.3, 0.2, 0.4);
        let v1 = slp_triangle_analytic(&y, &t, (0, 0)).unwrap();
        let v2 = slp_triangle_analytic(&(y * s), &ts, (0, 0)).unwrap();
        assert!((v2 - s * v1).abs() < 1e-13 * v2);
    }

    #[test]
    fn continuous_across_plane() {
        let t = unit_right();
        let x = t.point(&[0.2, 0.3]);
        let on = slp_triangle_analytic(&x, &t, (1, 1)).unwrap();
        for eps in [1e-6, -1e-6] {
            let off = slp_triangle_analytic(&(x + Vec3::z() * eps), &t, (1, 1)).unwrap();
            assert!((on - off).abs() < 1e-6);
        }
    }

    #[test]
    fn adlp_coplanar_vanishes() {
        let x = Vec3::new(0.2, 0.1, 0.0);
        let y = Vec3::new(-0.5, 0.7, 0.0);
        assert_eq!(kernel(KernelId::Adlp3d(Vec3::z()), &x, &y), 0.0);
    }

    fn quad_log(seg: &Segment, x: &Vec2, k: i32) -> f64 {
        // split at the closest point and grade
        let tc = ((x - seg.mid).dot(&seg.tau) / seg.half).clamp(-1.0, 1.0);
        let mut s = 0.0;
        for (a, b) in [(-1.0, tc), (tc, 1.0)] {
            if b - a < 1e-15 {
                continue;
            }
            for (lo, hi) in crate::quadrature::graded_intervals(18, 0.15) {
                let (ta, tb) = if a == tc { (a + lo * (b - a), a + hi * (b - a)) } else { (b - hi * (b - a), b - lo * (b - a)) };
                let g = gauss_rule_on(20, ta, tb).unwrap();
                s += g.integrate(|t| {
                    let y = seg.point(t);
                    t.powi(k) * -(x - y).norm().ln() / (2.0 * PI) * seg.half
                });
            }
        }
        s
    }

    #[test]
    fn segment_midpoint_value() {
        let seg = Segment::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)).unwrap();
        let v = slp_segment_analytic_2d(&Vec2::new(0.5, 0.0), &seg, 0).unwrap();
        assert!((v - (1.0 + 2f64.ln()) / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn segment_monomials_match_quadrature() {
        let seg = Segment::new(Vec2::new(0.2, -0.1), Vec2::new(0.9, 0.6)).unwrap();
        for x in [Vec2::new(0.4, 0.1), Vec2::new(0.2, -0.1), Vec2::new(0.5, 0.2), Vec2::new(0.7, 0.1), Vec2::new(3.0, -2.0), Vec2::new(-0.1, -0.4)] {
            for k in 0..=3 {
                let a = slp_segment_analytic_2d(&x, &seg, k).unwrap();
                let q = quad_log(&seg, &x, k as i32);
                assert!((a - q).abs() < 1e-12, "x={x:?} k={k} {a} {q}");
            }
        }
    }

    #[test]
    fn segment_gradient_matches_fd() {
        let seg = Segment::new(Vec2::new(0.2, -0.1), Vec2::new(0.9, 0.6)).unwrap();
        for x in [Vec2::new(0.4, 0.15), Vec2::new(3.0, -2.0), Vec2::new(0.6, 0.2), Vec2::new(-0.1, -0.4)] {
            let mut pot = [0.0; 5];
            let mut g = [Vec2::zeros(); 5];
            slp_segment_legendre(&seg, &x, 4, &mut pot, Some(&mut g));
            let h = 1e-6;
            for c in 0..2 {
                let mut e = Vec2::zeros();
                e[c] = h;
                let mut pp = [0.0; 5];
                let mut pm = [0.0; 5];
                slp_segment_legendre(&seg, &(x + e), 4, &mut pp, None);
                slp_segment_legendre(&seg, &(x - e), 4, &mut pm, None);
                for j in 0..5 {
                    let fd = (pp[j] - pm[j]) / (2.0 * h);
                    assert!((fd - g[j][c]).abs() < 1e-7, "x={x:?} j={j} c={c} {fd} {}", g[j][c]);
                }
            }
        }
    }

    #[test]
    fn segment_far_field() {
        let seg = Segment::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)).unwrap();
        let x = Vec2::new(0.5, 200.0);
        let v = slp_segment_analytic_2d(&x, &seg, 0).unwrap();
        let approx = -(1.0 / (2.0 * PI)) * 200f64.ln();
        assert!((v - approx).abs() < 1e-5);
        let x1 = Vec2::new(0.5, 1.0);
        let v1 = slp_segment_analytic_2d(&x1, &seg, 0).unwrap();
        assert!(v1.abs() < 0.05);
    }
}
