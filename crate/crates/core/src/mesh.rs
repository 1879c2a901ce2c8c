//! Triangulated closed surfaces with a fixed correspondence to a reference sphere.
//!
//! Vertex `i` of every evolved surface is the image of reference vertex `i`, so
//! fields are pulled back by index.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Largest icosphere level accepted by [`build_icosphere`].
pub const MAX_ICOSPHERE_LEVEL: usize = 8;

/// Relative area below which a facet is considered degenerate.
pub const DEGENERATE_AREA_FACTOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    reference_vertices: Vec<Vec3>,
    refinement_level: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct FacetGeometry {
    pub area: f64,
    pub normal: Vec3,
    pub midpoint: Vec3,
}

/// Nodal (continuous piecewise-linear) field.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceField<T> {
    pub values: Vec<T>,
}

/// Facet-wise constant field attached to midpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct FacetField<T> {
    pub values: Vec<T>,
}

impl<T: Clone> SurfaceField<T> {
    pub fn new(mesh: &TriangleMesh, values: Vec<T>) -> Result<Self> {
        if values.len() != mesh.n_vertices() {
            return Err(Error::InvalidArgument(format!(
                "surface field has {} values for {} vertices",
                values.len(),
                mesh.n_vertices()
            )));
        }
        Ok(Self { values })
    }

    pub fn constant(mesh: &TriangleMesh, value: T) -> Self {
        Self { values: vec![value; mesh.n_vertices()] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl<T: Clone> FacetField<T> {
    pub fn new(mesh: &TriangleMesh, values: Vec<T>) -> Result<Self> {
        if values.len() != mesh.n_triangles() {
            return Err(Error::InvalidArgument(format!(
                "facet field has {} values for {} triangles",
                values.len(),
                mesh.n_triangles()
            )));
        }
        Ok(Self { values })
    }

    pub fn constant(mesh: &TriangleMesh, value: T) -> Self {
        Self { values: vec![value; mesh.n_triangles()] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl SurfaceField<f64> {
    pub fn from_fn(mesh: &TriangleMesh, f: impl Fn(&Vec3) -> f64) -> Self {
        Self { values: mesh.reference_vertices.iter().map(f).collect() }
    }
}

impl SurfaceField<Vec3> {
    pub fn from_fn(mesh: &TriangleMesh, f: impl Fn(&Vec3) -> Vec3) -> Self {
        Self { values: mesh.reference_vertices.iter().map(f).collect() }
    }

    /// Scalar field of one ambient component.
    pub fn component(&self, c: usize) -> SurfaceField<f64> {
        SurfaceField { values: self.values.iter().map(|v| v[c]).collect() }
    }

    pub fn from_components(c: [&SurfaceField<f64>; 3]) -> Self {
        let values = (0..c[0].len())
            .map(|i| Vec3::new(c[0].values[i], c[1].values[i], c[2].values[i]))
            .collect();
        Self { values }
    }
}

fn triangle_area_normal(a: &Vec3, b: &Vec3, c: &Vec3) -> (f64, Vec3) {
    let cr = (b - a).cross(&(c - a));
    let norm = cr.norm();
    (0.5 * norm, if norm > 0.0 { cr / norm } else { Vec3::zeros() })
}

impl TriangleMesh {
    /// Builds a mesh, checking indices and facet areas.
    pub fn new(
        vertices: Vec<Vec3>,
        triangles: Vec<[usize; 3]>,
        reference_vertices: Vec<Vec3>,
        refinement_level: usize,
    ) -> Result<Self> {
        if vertices.len() != reference_vertices.len() {
            return Err(Error::InvalidArgument(format!(
                "{} vertices but {} reference vertices",
                vertices.len(),
                reference_vertices.len()
            )));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::InvalidArgument(format!("triangle {t} has a dangling index")));
            }
        }
        let mesh = Self { vertices, triangles, reference_vertices, refinement_level };
        mesh.check_areas()?;
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn reference_vertices(&self) -> &[Vec3] {
        &self.reference_vertices
    }

    pub fn refinement_level(&self) -> usize {
        self.refinement_level
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_vertices(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn mean_area(&self) -> f64 {
        let total: f64 = (0..self.n_triangles())
            .map(|t| {
                let [a, b, c] = self.triangle_vertices(t);
                triangle_area_normal(&a, &b, &c).0
            })
            .sum();
        total / self.n_triangles().max(1) as f64
    }

    fn check_areas(&self) -> Result<()> {
        let mean = self.mean_area();
        for t in 0..self.n_triangles() {
            let [a, b, c] = self.triangle_vertices(t);
            let (area, _) = triangle_area_normal(&a, &b, &c);
            if !(area > DEGENERATE_AREA_FACTOR * mean) {
                return Err(Error::Geometry(format!("facet {t} has area {area:e}")));
            }
        }
        Ok(())
    }

    /// Area, outward unit normal and midpoint of facet `t`.
    pub fn facet_geometry(&self, t: usize) -> Result<FacetGeometry> {
        if t >= self.n_triangles() {
            return Err(Error::InvalidArgument(format!("facet index {t} out of range")));
        }
        let [a, b, c] = self.triangle_vertices(t);
        let (area, normal) = triangle_area_normal(&a, &b, &c);
        let scale = (b - a).norm_squared().max((c - a).norm_squared());
        if !(area > DEGENERATE_AREA_FACTOR * scale) {
            return Err(Error::Geometry(format!("facet {t} has area {area:e}")));
        }
        Ok(FacetGeometry { area, normal, midpoint: (a + b + c) / 3.0 })
    }

    pub fn facet_geometries(&self) -> Result<Vec<FacetGeometry>> {
        (0..self.n_triangles()).map(|t| self.facet_geometry(t)).collect()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.n_triangles())
            .map(|t| {
                let [a, b, c] = self.triangle_vertices(t);
                triangle_area_normal(&a, &b, &c).0
            })
            .sum()
    }

    /// Each undirected edge appears in exactly two facets, once in each direction.
    pub fn is_edge_manifold(&self) -> bool {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                *directed.entry((tri[k], tri[(k + 1) % 3])).or_default() += 1;
            }
        }
        directed.iter().all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
    }

    /// Facets whose normal points away from their centroid direction.
    pub fn is_outward_oriented(&self) -> bool {
        (0..self.n_triangles()).all(|t| {
            let [a, b, c] = self.triangle_vertices(t);
            let (_, n) = triangle_area_normal(&a, &b, &c);
            n.dot(&((a + b + c) / 3.0)) > 0.0
        })
    }

    /// Facets sharing at least one vertex with each facet (excluding itself).
    pub fn vertex_to_triangles(&self) -> Vec<Vec<usize>> {
        let mut map = vec![Vec::new(); self.n_vertices()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                map[v].push(t);
            }
        }
        map
    }

    /// Same combinatorics with new positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self> {
        Self::new(vertices, self.triangles.clone(), self.reference_vertices.clone(), self.refinement_level)
    }

    /// Uniform scaling of the positions (reference positions unchanged).
    pub fn scaled(&self, s: f64) -> Result<Self> {
        self.with_vertices(self.vertices.iter().map(|v| v * s).collect())
    }

    /// Area-weighted average of facet values at the vertices.
    pub fn facet_to_nodes<T>(&self, values: &[T]) -> Vec<T>
    where
        T: Clone + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
    {
        let n = self.n_vertices();
        let mut acc: Vec<Option<T>> = vec![None; n];
        let mut wsum = vec![0.0; n];
        for (t, tri) in self.triangles.iter().enumerate() {
            let [a, b, c] = self.triangle_vertices(t);
            let (area, _) = triangle_area_normal(&a, &b, &c);
            for &v in tri {
                let term = values[t].clone() * area;
                acc[v] = Some(match acc[v].take() {
                    None => term,
                    Some(s) => s + term,
                });
                wsum[v] += area;
            }
        }
        acc.into_iter()
            .zip(wsum)
            .map(|(s, w)| s.expect("isolated vertex") * (1.0 / w))
            .collect()
    }
}

fn icosahedron() -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let z = 1.0 / 5f64.sqrt();
    let r = 2.0 / 5f64.sqrt();
    let mut v = vec![Vec3::new(0.0, 0.0, 1.0)];
    for k in 0..5 {
        let a = 2.0 * std::f64::consts::PI * k as f64 / 5.0;
        v.push(Vec3::new(r * a.cos(), r * a.sin(), z));
    }
    for k in 0..5 {
        let a = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / 5.0;
        v.push(Vec3::new(r * a.cos(), r * a.sin(), -z));
    }
    v.push(Vec3::new(0.0, 0.0, -1.0));
    let up = |k: usize| 1 + k % 5;
    let lo = |k: usize| 6 + k % 5;
    let mut t = Vec::with_capacity(20);
    for k in 0..5 {
        t.push([0, up(k), up(k + 1)]);
        t.push([up(k), lo(k), up(k + 1)]);
        t.push([up(k + 1), lo(k), lo(k + 1)]);
        t.push([11, lo(k + 1), lo(k)]);
    }
    for tri in &mut t {
        let (_, n) = triangle_area_normal(&v[tri[0]], &v[tri[1]], &v[tri[2]]);
        if n.dot(&(v[tri[0]] + v[tri[1]] + v[tri[2]])) < 0.0 {
            tri.swap(1, 2);
        }
    }
    (v, t)
}

/// One 4-to-1 midpoint split; `project` pushes new vertices to the unit sphere.
pub fn subdivide(
    vertices: &[Vec3],
    reference: &[Vec3],
    triangles: &[[usize; 3]],
    project: bool,
) -> (Vec<Vec3>, Vec<Vec3>, Vec<[usize; 3]>) {
    let mut v = vertices.to_vec();
    let mut r = reference.to_vec();
    let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
    let mut out = Vec::with_capacity(4 * triangles.len());
    let mut midpoint = |a: usize, b: usize, v: &mut Vec<Vec3>, r: &mut Vec<Vec3>| -> usize {
        let key = (a.min(b), a.max(b));
        *mid.entry(key).or_insert_with(|| {
            let mut p = (v[a] + v[b]) * 0.5;
            let q = ((r[a] + r[b]) * 0.5).normalize();
            if project {
                p = p.normalize();
            }
            v.push(p);
            r.push(q);
            v.len() - 1
        })
    };
    for &[a, b, c] in triangles {
        let ab = midpoint(a, b, &mut v, &mut r);
        let bc = midpoint(b, c, &mut v, &mut r);
        let ca = midpoint(c, a, &mut v, &mut r);
        out.push([a, ab, ca]);
        out.push([b, bc, ab]);
        out.push([c, ca, bc]);
        out.push([ab, bc, ca]);
    }
    (v, r, out)
}

/// Unit icosphere after `level` midpoint refinements of the icosahedron.
pub fn build_icosphere(level: usize) -> Result<TriangleMesh> {
    if level > MAX_ICOSPHERE_LEVEL {
        return Err(Error::Capacity(format!(
            "icosphere level {level} exceeds maximum {MAX_ICOSPHERE_LEVEL}"
        )));
    }
    let (mut v, mut t) = icosahedron();
    let mut r = v.clone();
    for _ in 0..level {
        let (nv, nr, nt) = subdivide(&v, &r, &t, true);
        v = nv;
        r = nr;
        t = nt;
    }
    TriangleMesh::new(v, t, r, level)
}

/// Surface of the cube `[-half, half]^3` after `level` midpoint refinements.
pub fn build_cube(level: usize, half: f64) -> Result<TriangleMesh> {
    if level > MAX_ICOSPHERE_LEVEL {
        return Err(Error::Capacity(format!("cube level {level} exceeds maximum {MAX_ICOSPHERE_LEVEL}")));
    }
    if !(half > 0.0) {
        return Err(Error::Geometry(format!("cube half-width must be positive, got {half}")));
    }
    let mut v: Vec<Vec3> = (0..8)
        .map(|i| {
            let s = |b: usize| if i & b != 0 { half } else { -half };
            Vec3::new(s(1), s(2), s(4))
        })
        .collect();
    let faces = [[1, 3, 7, 5], [0, 4, 6, 2], [2, 6, 7, 3], [0, 1, 5, 4], [4, 5, 7, 6], [0, 2, 3, 1]];
    let mut t = Vec::with_capacity(12);
    for q in faces {
        for mut tri in [[q[0], q[1], q[3]], [q[1], q[2], q[3]]] {
            let (a, b, c) = (v[tri[0]], v[tri[1]], v[tri[2]]);
            if (b - a).cross(&(c - a)).dot(&(a + b + c)) < 0.0 {
                tri.swap(1, 2);
            }
            t.push(tri);
        }
    }
    let mut r: Vec<Vec3> = v.iter().map(|x| x.normalize()).collect();
    for _ in 0..level {
        let (nv, nr, nt) = subdivide(&v, &r, &t, false);
        v = nv;
        r = nr;
        t = nt;
    }
    TriangleMesh::new(v, t, r, level)
}

/// Moves every vertex by `step * increment`; rejects inverted or non-star-shaped facets.
pub fn update_surface(mesh: &TriangleMesh, increment: &SurfaceField<Vec3>, step: f64) -> Result<TriangleMesh> {
    if increment.len() != mesh.n_vertices() {
        return Err(Error::InvalidArgument("increment does not live on the mesh".into()));
    }
    let vertices: Vec<Vec3> = mesh.vertices.iter().zip(&increment.values).map(|(v, d)| v + d * step).collect();
    if vertices.iter().any(|v| !v.iter().all(|x| x.is_finite())) {
        return Err(Error::SurfaceDegeneracy("non-finite vertex after update".into()));
    }
    let new = TriangleMesh {
        vertices,
        triangles: mesh.triangles.clone(),
        reference_vertices: mesh.reference_vertices.clone(),
        refinement_level: mesh.refinement_level,
    };
    new.check_areas().map_err(|e| Error::SurfaceDegeneracy(e.to_string()))?;
    for t in 0..new.n_triangles() {
        let [a, b, c] = new.triangle_vertices(t);
        let [ra, rb, rc] = {
            let [i, j, k] = new.triangles[t];
            [new.reference_vertices[i], new.reference_vertices[j], new.reference_vertices[k]]
        };
        let (_, n_new) = triangle_area_normal(&a, &b, &c);
        let (_, n_ref) = triangle_area_normal(&ra, &rb, &rc);
        if n_new.dot(&n_ref) <= 0.0 {
            return Err(Error::SurfaceDegeneracy(format!("facet {t} inverted")));
        }
        if Matrix3::from_columns(&[a, b, c]).determinant() <= 0.0 {
            return Err(Error::SurfaceDegeneracy(format!("facet {t} folds over the origin")));
        }
    }
    Ok(new)
}

const MESH_MAGIC: &str = "molodensky-mesh";
const MESH_VERSION: &str = "v1";

pub fn mesh_to_string(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    writeln!(s, "{MESH_MAGIC} {MESH_VERSION} {} {}", mesh.n_vertices(), mesh.n_triangles()).unwrap();
    for (v, r) in mesh.vertices.iter().zip(&mesh.reference_vertices) {
        writeln!(s, "{:e} {:e} {:e} {:e} {:e} {:e}", v.x, v.y, v.z, r.x, r.y, r.z).unwrap();
    }
    for t in &mesh.triangles {
        writeln!(s, "{} {} {}", t[0], t[1], t[2]).unwrap();
    }
    s
}

pub fn mesh_from_str(text: &str) -> Result<TriangleMesh> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let perr = |line: usize, msg: &str| Error::Parse { line: line + 1, msg: msg.to_string() };
    let (hl, header) = lines.next().ok_or_else(|| perr(0, "empty file"))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 4 || h[0] != MESH_MAGIC || h[1] != MESH_VERSION {
        return Err(perr(hl, "bad header"));
    }
    let nv: usize = h[2].parse().map_err(|_| perr(hl, "bad vertex count"))?;
    let nt: usize = h[3].parse().map_err(|_| perr(hl, "bad triangle count"))?;
    let mut vertices = Vec::with_capacity(nv);
    let mut reference = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines.next().ok_or_else(|| perr(usize::MAX - 1, "unexpected end of file"))?;
        let x: Vec<f64> = l
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| perr(ln, "bad coordinate"))?;
        if x.len() != 6 {
            return Err(perr(ln, "expected 6 coordinates"));
        }
        vertices.push(Vec3::new(x[0], x[1], x[2]));
        reference.push(Vec3::new(x[3], x[4], x[5]));
    }
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (ln, l) = lines.next().ok_or_else(|| perr(usize::MAX - 1, "unexpected end of file"))?;
        let idx: Vec<usize> = l
            .split_whitespace()
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| perr(ln, "bad index"))?;
        if idx.len() != 3 {
            return Err(perr(ln, "expected 3 indices"));
        }
        if idx.iter().any(|&i| i >= nv) {
            return Err(perr(ln, "dangling vertex index"));
        }
        triangles.push([idx[0], idx[1], idx[2]]);
    }
    if let Some((ln, _)) = lines.next() {
        return Err(perr(ln, "trailing data"));
    }
    let level = level_from_counts(nv, nt).unwrap_or(0);
    TriangleMesh::new(vertices, triangles, reference, level)
}

fn level_from_counts(nv: usize, nt: usize) -> Option<usize> {
    (0..=MAX_ICOSPHERE_LEVEL).find(|&l| nv == 10 * 4usize.pow(l as u32) + 2 && nt == 20 * 4usize.pow(l as u32))
}

pub fn export_mesh(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    std::fs::write(path, mesh_to_string(mesh))?;
    Ok(())
}

pub fn import_mesh(path: &Path) -> Result<TriangleMesh> {
    mesh_from_str(&std::fs::read_to_string(path)?)
}

/// The 60 rotations of the icosahedral group in the orientation used by [`build_icosphere`].
pub fn icosahedral_rotations() -> Vec<Matrix3<f64>> {
    let (v, _) = icosahedron();
    let rz = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), 2.0 * std::f64::consts::PI / 5.0).into_inner();
    let axis = nalgebra::Unit::new_normalize(v[1]);
    let rv = nalgebra::Rotation3::from_axis_angle(&axis, 2.0 * std::f64::consts::PI / 5.0).into_inner();
    let mut group = vec![Matrix3::identity()];
    let mut frontier = group.clone();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for g in &frontier {
            for h in [&rz, &rv] {
                let p = h * g;
                if !group.iter().any(|q| (q - p).abs().max() < 1e-9) {
                    group.push(p);
                    next.push(p);
                }
            }
        }
        frontier = next;
    }
    group
}

/// Permutation `perm` with `rot * reference[i] == reference[perm[i]]`, if the rotation maps the vertex set onto itself.
pub fn vertex_permutation(mesh: &TriangleMesh, rot: &Matrix3<f64>) -> Option<Vec<usize>> {
    let key = |p: &Vec3| -> (i64, i64, i64) {
        let s = 1e7;
        ((p.x * s).round() as i64, (p.y * s).round() as i64, (p.z * s).round() as i64)
    };
    let lookup: HashMap<_, usize> = mesh.reference_vertices.iter().enumerate().map(|(i, p)| (key(p), i)).collect();
    mesh.reference_vertices.iter().map(|p| lookup.get(&key(&(rot * p))).copied()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_counts_and_area() {
        for level in 0..=3 {
            let m = build_cube(level, 1.0).unwrap();
            assert_eq!(m.n_triangles(), 12 << (2 * level));
            assert_eq!(m.n_vertices(), 6 * (1 << (2 * level)) + 2);
            assert!(m.is_edge_manifold() && m.is_outward_oriented());
            assert!((m.surface_area() - 24.0).abs() < 1e-12);
        }
        assert!(build_cube(1, 0.0).is_err());
    }

    #[test]
    fn icosphere_counts() {
        for level in 0..=4 {
            let m = build_icosphere(level).unwrap();
            assert_eq!(m.n_vertices(), 10 * 4usize.pow(level as u32) + 2);
            assert_eq!(m.n_triangles(), 20 * 4usize.pow(level as u32));
            assert!(m.is_edge_manifold());
            assert!(m.is_outward_oriented());
            assert!(m.reference_vertices().iter().all(|r| (r.norm() - 1.0).abs() < 1e-15));
        }
        assert!(matches!(build_icosphere(MAX_ICOSPHERE_LEVEL + 1), Err(Error::Capacity(_))));
    }

    #[test]
    fn north_pole_is_vertex_zero() {
        let m = build_icosphere(2).unwrap();
        assert_eq!(m.vertices()[0], Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn facet_areas() {
        let s3 = 3f64.sqrt();
        let m = TriangleMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.5, s3 / 2.0, 0.0)],
            vec![[0, 1, 2]],
            vec![Vec3::zeros(); 3],
            0,
        )
        .unwrap();
        let g = m.facet_geometry(0).unwrap();
        assert!((g.area - s3 / 4.0).abs() < 1e-15);
        assert!((g.normal - Vec3::z()).norm() < 1e-15);
        let ico = build_icosphere(0).unwrap();
        assert!(ico.surface_area() < 4.0 * std::f64::consts::PI);
        let scaled = ico.scaled(3.0).unwrap();
        assert!((scaled.surface_area() - 9.0 * ico.surface_area()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_facet_rejected() {
        let r = TriangleMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)],
            vec![[0, 1, 2]],
            vec![Vec3::zeros(); 3],
            0,
        );
        assert!(matches!(r, Err(Error::Geometry(_))));
    }

    #[test]
    fn radial_update_scales_sphere() {
        let m = build_icosphere(1).unwrap();
        let inc = SurfaceField::<Vec3>::from_fn(&m, |x| *x);
        let u = update_surface(&m, &inc, 0.1).unwrap();
        assert!(u.vertices().iter().all(|v| (v.norm() - 1.1).abs() < 1e-14));
        assert_eq!(u.reference_vertices(), m.reference_vertices());
        let zero = SurfaceField::constant(&m, Vec3::zeros());
        assert_eq!(update_surface(&m, &zero, 1.0).unwrap(), m);
    }

    #[test]
    fn inverted_update_rejected() {
        let m = build_icosphere(1).unwrap();
        let inc = SurfaceField::<Vec3>::from_fn(&m, |x| -2.0 * x);
        assert!(matches!(update_surface(&m, &inc, 1.0), Err(Error::SurfaceDegeneracy(_))));
    }

    #[test]
    fn mesh_round_trip() {
        let m = build_icosphere(2).unwrap();
        let back = mesh_from_str(&mesh_to_string(&m)).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.n_triangles(), 320);
    }

    #[test]
    fn mesh_parse_errors_carry_line() {
        let text = "molodensky-mesh v1 3 1\n0 0 0 0 0 0\n1 0 0 1 0 0\n0 1 0 0 1 0\n0 1 7\n";
        match mesh_from_str(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(mesh_from_str("hello"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn icosahedral_group_has_60_elements() {
        let g = icosahedral_rotations();
        assert_eq!(g.len(), 60);
        let m = build_icosphere(2).unwrap();
        for r in &g {
            let p = vertex_permutation(&m, r).expect("rotation maps vertices to vertices");
            let mut sorted = p.clone();
            sorted.sort_unstable();
            assert!(sorted.iter().enumerate().all(|(i, &j)| i == j));
        }
    }

    #[test]
    fn facet_to_nodes_constant() {
        let m = build_icosphere(1).unwrap();
        let v = m.facet_to_nodes(&vec![2.5; m.n_triangles()]);
        assert!(v.iter().all(|x| (x - 2.5).abs() < 1e-14));
    }
}
