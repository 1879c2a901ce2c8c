//! Gauss rules on segments and triangles, and geometrically graded composite rules.
//!
//! Triangle rules live on the reference triangle (0,0), (1,0), (0,1) with
//! weights summing to 1/2; a point `[u, v]` has barycentric coordinates
//! `(1 - u - v, u, v)`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub const MAX_GAUSS_ORDER: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct QuadRule<P> {
    pub points: Vec<P>,
    pub weights: Vec<f64>,
}

impl<P> QuadRule<P> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&P, f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }
}

impl QuadRule<f64> {
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.iter().map(|(&x, w)| w * f(x)).sum()
    }
}

impl QuadRule<[f64; 2]> {
    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.iter().map(|(p, w)| w * f(p[0], p[1])).sum()
    }
}

fn check_order(n: usize) -> Result<()> {
    if n == 0 || n > MAX_GAUSS_ORDER {
        return Err(Error::InvalidArgument(format!("quadrature order {n} outside 1..={MAX_GAUSS_ORDER}")));
    }
    Ok(())
}

fn ln_gamma_int(k: u32) -> f64 {
    (2..k).map(|i| (i as f64).ln()).sum()
}

/// Gauss-Jacobi nodes and weights on [-1, 1] for the weight (1-x)^alpha (1+x)^beta,
/// integer exponents, by the Golub-Welsch eigenvalue method.
pub fn gauss_jacobi(n: usize, alpha: u32, beta: u32) -> Result<(Vec<f64>, Vec<f64>)> {
    check_order(n)?;
    let (a, b) = (alpha as f64, beta as f64);
    let ab = a + b;
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        j[(k, k)] = if k == 0 {
            (b - a) / (ab + 2.0)
        } else {
            (b * b - a * a) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
        };
        if k + 1 < n {
            let m = kf + 1.0;
            let s = 2.0 * m + ab;
            let bk = 4.0 * m * (m + a) * (m + b) * (m + ab) / (s * s * (s + 1.0) * (s - 1.0));
            j[(k, k + 1)] = bk.sqrt();
            j[(k + 1, k)] = bk.sqrt();
        }
    }
    let mu0 = (ab + 1.0) * std::f64::consts::LN_2 + ln_gamma_int(alpha + 1) + ln_gamma_int(beta + 1)
        - ln_gamma_int(alpha + beta + 2);
    let mu0 = mu0.exp();
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    Ok(pairs.into_iter().unzip())
}

/// n-point Gauss-Legendre rule on [0, 1].
pub fn gauss_rule(n: usize) -> Result<QuadRule<f64>> {
    let (x, w) = gauss_jacobi(n, 0, 0)?;
    Ok(QuadRule {
        points: x.iter().map(|x| 0.5 * (x + 1.0)).collect(),
        weights: w.iter().map(|w| 0.5 * w).collect(),
    })
}

/// Gauss-Legendre rule mapped to [a, b].
pub fn gauss_rule_on(n: usize, a: f64, b: f64) -> Result<QuadRule<f64>> {
    let g = gauss_rule(n)?;
    Ok(QuadRule {
        points: g.points.iter().map(|x| a + (b - a) * x).collect(),
        weights: g.weights.iter().map(|w| (b - a) * w).collect(),
    })
}

/// Collapsed Gauss rule on the reference triangle, exact for total degree 2n-1.
pub fn triangle_rule(n: usize) -> Result<QuadRule<[f64; 2]>> {
    let (xj, wj) = gauss_jacobi(n, 1, 0)?;
    let g = gauss_rule(n)?;
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (x, wx) in xj.iter().zip(&wj) {
        let v = 0.5 * (1.0 + x);
        for (s, ws) in g.iter() {
            points.push([s * (1.0 - v), v]);
            weights.push(0.25 * wx * ws);
        }
    }
    Ok(QuadRule { points, weights })
}

/// Intervals of [0, 1] refined geometrically toward 0: [0, s^(L-1)], ..., [s, 1].
pub fn graded_intervals(levels: usize, sigma: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(levels);
    let mut hi = 1.0;
    for _ in 1..levels {
        out.push((hi * sigma, hi));
        hi *= sigma;
    }
    out.push((0.0, hi));
    out.reverse();
    out
}

/// Intervals of [0, 1] refined toward both endpoints.
pub fn graded_intervals_both(levels: usize, sigma: f64) -> Vec<(f64, f64)> {
    let left = graded_intervals(levels, sigma);
    let mut out: Vec<(f64, f64)> = left.iter().map(|&(a, b)| (0.5 * a, 0.5 * b)).collect();
    out.extend(left.iter().rev().map(|&(a, b)| (1.0 - 0.5 * b, 1.0 - 0.5 * a)));
    out
}

fn check_grading(levels: usize, sigma: f64) -> Result<()> {
    if levels == 0 {
        return Err(Error::InvalidArgument("grading needs at least one level".into()));
    }
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::InvalidArgument(format!("grading factor {sigma} outside (0, 1)")));
    }
    Ok(())
}

/// Tensor rule on the sub-triangle (apex, b, c) through y = apex + s (b + t (c - b) - apex).
fn collapsed_rule(
    apex: [f64; 2],
    b: [f64; 2],
    c: [f64; 2],
    s_int: &[(f64, f64)],
    t_int: &[(f64, f64)],
    g: &QuadRule<f64>,
) -> QuadRule<[f64; 2]> {
    let area2 = ((b[0] - apex[0]) * (c[1] - apex[1]) - (b[1] - apex[1]) * (c[0] - apex[0])).abs();
    let mut points = Vec::with_capacity(s_int.len() * t_int.len() * g.len() * g.len());
    let mut weights = Vec::with_capacity(points.capacity());
    for &(s0, s1) in s_int {
        for (gs, ws) in g.iter() {
            let s = s0 + (s1 - s0) * gs;
            let ws = ws * (s1 - s0);
            for &(t0, t1) in t_int {
                for (gt, wt) in g.iter() {
                    let t = t0 + (t1 - t0) * gt;
                    let wt = wt * (t1 - t0);
                    let e = [b[0] + t * (c[0] - b[0]), b[1] + t * (c[1] - b[1])];
                    points.push([apex[0] + s * (e[0] - apex[0]), apex[1] + s * (e[1] - apex[1])]);
                    weights.push(area2 * s * ws * wt);
                }
            }
        }
    }
    QuadRule { points, weights }
}

fn append<P>(acc: &mut QuadRule<P>, r: QuadRule<P>) {
    acc.points.extend(r.points);
    acc.weights.extend(r.weights);
}

pub const REF_VERTICES: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

fn sub_area2(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])).abs()
}

/// Composite rule on the reference triangle refined geometrically toward `target`.
///
/// The triangle is split into sub-triangles with apex at `target`; each is
/// integrated with `levels` geometric layers and an n x n Gauss tensor rule per
/// layer on each half of the base, so the rule has at most 6 levels n^2 points.
pub fn graded_composite_rule(target: [f64; 2], levels: usize, sigma: f64, n: usize) -> Result<QuadRule<[f64; 2]>> {
    check_grading(levels, sigma)?;
    let g = gauss_rule(n)?;
    let inside = target[0] >= -1e-14 && target[1] >= -1e-14 && target[0] + target[1] <= 1.0 + 1e-14;
    if !inside {
        return Err(Error::InvalidArgument("graded rule target outside the reference triangle".into()));
    }
    let s_int = graded_intervals(levels, sigma);
    let mut acc = QuadRule { points: Vec::new(), weights: Vec::new() };
    for k in 0..3 {
        let (b, c) = (REF_VERTICES[k], REF_VERTICES[(k + 1) % 3]);
        if sub_area2(target, b, c) < 1e-14 {
            continue;
        }
        append(&mut acc, collapsed_rule(target, b, c, &s_int, &[(0.0, 0.5), (0.5, 1.0)], &g));
    }
    Ok(acc)
}

/// Rule graded toward edge `k` (from vertex k to vertex k+1) and toward both of its endpoints.
pub fn edge_graded_rule(k: usize, levels: usize, sigma: f64, n: usize) -> Result<QuadRule<[f64; 2]>> {
    check_grading(levels, sigma)?;
    let g = gauss_rule(n)?;
    let apex = REF_VERTICES[(k + 2) % 3];
    Ok(edge_layers(apex, REF_VERTICES[k], REF_VERTICES[(k + 1) % 3], levels, sigma, &g))
}

/// Layers toward the edge (b, c) of the sub-triangle (apex, b, c); the layer at distance
/// sigma^i from the edge is graded toward b and c with i + 2 levels.
fn edge_layers(apex: [f64; 2], b: [f64; 2], c: [f64; 2], levels: usize, sigma: f64, g: &QuadRule<f64>) -> QuadRule<[f64; 2]> {
    let s_int: Vec<(f64, f64)> = graded_intervals(levels, sigma).iter().map(|&(a, b)| (1.0 - b, 1.0 - a)).collect();
    let mut acc = QuadRule { points: Vec::new(), weights: Vec::new() };
    for (i, si) in s_int.iter().enumerate().rev() {
        let depth = (levels - 1 - i + 2).min(levels);
        let t_int = graded_intervals_both(depth, sigma);
        append(&mut acc, collapsed_rule(apex, b, c, std::slice::from_ref(si), &t_int, g));
    }
    acc
}

/// Rule graded toward all three edges and vertices, for self-interaction integrals.
pub fn boundary_graded_rule(levels: usize, sigma: f64, n: usize) -> Result<QuadRule<[f64; 2]>> {
    check_grading(levels, sigma)?;
    let g = gauss_rule(n)?;
    let centroid = [1.0 / 3.0, 1.0 / 3.0];
    let mut acc = QuadRule { points: Vec::new(), weights: Vec::new() };
    for k in 0..3 {
        append(&mut acc, edge_layers(centroid, REF_VERTICES[k], REF_VERTICES[(k + 1) % 3], levels, sigma, &g));
    }
    Ok(acc)
}

/// Default number of grading levels for mesh width `h`.
pub fn default_levels(h: f64) -> usize {
    4.max(h.log2().abs().ceil() as usize + 4)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(k: u32) -> f64 {
        (1..=k).map(|i| i as f64).product()
    }

    #[test]
    fn midpoint_rule() {
        let g = gauss_rule(1).unwrap();
        assert!((g.points[0] - 0.5).abs() < 1e-15);
        assert!((g.weights[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn segment_exactness() {
        let g = gauss_rule(2).unwrap();
        assert!((g.integrate(|x| x * x) - 1.0 / 3.0).abs() < 1e-15);
        for n in [3, 10, 32, 64] {
            let g = gauss_rule(n).unwrap();
            for k in 0..(2 * n as i32) {
                let exact = 1.0 / (k as f64 + 1.0);
                assert!((g.integrate(|x| x.powi(k)) - exact).abs() < 1e-13, "n={n} k={k}");
            }
            assert!((g.total_weight() - 1.0).abs() < 1e-14);
            assert!(g.weights.iter().all(|&w| w > 0.0));
        }
        assert!(gauss_rule(0).is_err());
        assert!(gauss_rule(65).is_err());
    }

    #[test]
    fn triangle_exactness() {
        for n in [1, 2, 4, 7] {
            let r = triangle_rule(n).unwrap();
            assert!((r.total_weight() - 0.5).abs() < 1e-14);
            for a in 0..2 * n as u32 {
                for b in 0..(2 * n as u32 - a) {
                    let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                    let q = r.integrate(|u, v| u.powi(a as i32) * v.powi(b as i32));
                    assert!((q - exact).abs() < 1e-14, "n={n} a={a} b={b}");
                }
            }
        }
    }

    #[test]
    fn graded_rules_integrate_polynomials() {
        let exact = factorial(2) * factorial(1) / factorial(5);
        let f = |u: f64, v: f64| u * u * v;
        for rule in [
            graded_composite_rule([0.2, 0.3], 5, 0.25, 6).unwrap(),
            graded_composite_rule([0.0, 0.0], 5, 0.25, 6).unwrap(),
            graded_composite_rule([0.5, 0.0], 5, 0.25, 6).unwrap(),
            edge_graded_rule(1, 5, 0.2, 5).unwrap(),
            boundary_graded_rule(4, 0.2, 5).unwrap(),
        ] {
            assert!((rule.integrate(f) - exact).abs() < 1e-15);
            assert!((rule.total_weight() - 0.5).abs() < 1e-14);
            assert!(rule.weights.iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn single_level_is_plain_rule_per_subcell() {
        let r = graded_composite_rule([0.0, 0.0], 1, 0.25, 8).unwrap();
        assert_eq!(r.len(), 2 * 64);
    }

    #[test]
    fn graded_rule_resolves_inverse_sqrt() {
        // |y|^{-1/2} over the reference triangle, singular at the origin
        let exact = {
            // polar integration: int_0^{pi/2} int_0^{1/(cos+sin)} r^{1/2} dr dphi
            let g = gauss_rule(40).unwrap();
            let parts = 16;
            let mut s = 0.0;
            for k in 0..parts {
                let a = k as f64 * std::f64::consts::FRAC_PI_2 / parts as f64;
                let b = (k + 1) as f64 * std::f64::consts::FRAC_PI_2 / parts as f64;
                s += g.integrate(|x| {
                    let phi = a + (b - a) * x;
                    (b - a) * (2.0 / 3.0) * (phi.cos() + phi.sin()).powf(-1.5)
                });
            }
            s
        };
        let r = graded_composite_rule([0.0, 0.0], 10, 0.25, 8).unwrap();
        let q = r.integrate(|u, v| (u * u + v * v).powf(-0.25));
        assert!(((q - exact) / exact).abs() < 1e-8, "{q} vs {exact}");
    }
}
