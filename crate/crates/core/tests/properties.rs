use std::sync::Arc;

use molodensky::bem::{assemble_constraints, assemble_slp, solve_dirichlet, DGSpace, QuadOptions};
use molodensky::experiments::{eoc, l2_surface_error};
use molodensky::iteration::theta_schedule;
use molodensky::mesh::{
    build_cube, build_icosphere, icosahedral_rotations, mesh_from_str, mesh_to_string, update_surface, vertex_permutation,
    SurfaceField, Vec3,
};
use molodensky::smoothing::{reference_spectrum, smooth, SmootherParams};
use proptest::prelude::*;

fn min_eigenvalue(m: &faer::Mat<f64>) -> f64 {
    let n = m.nrows();
    let sym = faer::Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    sym.self_adjoint_eigenvalues(faer::Side::Lower).unwrap().into_iter().fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn schedule_is_monotone(theta0 in 1.1f64..20.0, kappa in 1.0f64..12.0, m in 0usize..500) {
        let (a, da) = theta_schedule(theta0, kappa, m).unwrap();
        let (b, db) = theta_schedule(theta0, kappa, m + 1).unwrap();
        prop_assert!(a >= theta0 * (1.0 - 1e-15));
        prop_assert!(da > 0.0 && db > 0.0);
        prop_assert!(b > a);
        prop_assert!((a + da - b).abs() <= 1e-12 * b);
        prop_assert!(db <= da * (1.0 + 1e-12));
    }

    #[test]
    fn radial_perturbation_keeps_manifold(level in 0usize..3, amp in 0.0f64..0.05, seed in 0u64..1000) {
        let m = build_icosphere(level).unwrap();
        let inc: Vec<Vec3> = m
            .vertices()
            .iter()
            .enumerate()
            .map(|(i, x)| x * (amp * (((i as u64 * 2654435761 + seed) % 1000) as f64 / 500.0 - 1.0)))
            .collect();
        let moved = update_surface(&m, &SurfaceField::new(&m, inc).unwrap(), 1.0).unwrap();
        prop_assert!(moved.is_edge_manifold());
        prop_assert!(moved.is_outward_oriented());
        let back = mesh_from_str(&mesh_to_string(&moved)).unwrap();
        prop_assert_eq!(back.vertices(), moved.vertices());
        prop_assert!(l2_surface_error(&moved, 1.0).unwrap() <= amp / (m.n_vertices() as f64).sqrt() + 1e-15);
    }

    #[test]
    fn smoother_keeps_constants(c in -10.0f64..10.0, theta in 1.1f64..40.0, k in 1u32..4) {
        let m = build_icosphere(2).unwrap();
        let s = reference_spectrum(&m).unwrap();
        let out = smooth(&SurfaceField::constant(&m, c), SmootherParams::new(theta, k).unwrap(), &s).unwrap();
        for v in out.values {
            prop_assert!((v - c).abs() <= 1e-12 * c.abs().max(1.0));
        }
    }

    #[test]
    fn eoc_of_power_laws(rate in 0.1f64..4.0, c in 1e-3f64..10.0) {
        let dofs = [10usize, 40, 160, 640];
        let errs: Vec<f64> = dofs.iter().map(|&d| c * (d as f64).powf(-rate)).collect();
        for r in eoc(&errs, &dofs).unwrap() {
            prop_assert!((r - rate).abs() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn single_layer_symmetric_positive(level in 0usize..2, p in 0usize..3, scale in 0.5f64..2.0) {
        let m = build_icosphere(level).unwrap().scaled(scale).unwrap();
        let space = DGSpace::new(&m, p).unwrap();
        let v = assemble_slp(&space, &QuadOptions::default()).unwrap();
        let n = v.nrows();
        let mut asym = 0.0f64;
        let mut big = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                asym = asym.max((v[(i, j)] - v[(j, i)]).abs());
                big = big.max(v[(i, j)].abs());
            }
        }
        prop_assert!(asym <= 1e-10 * big, "asymmetry {asym:e}");
        prop_assert!(min_eigenvalue(&v) > 0.0);
    }

    #[test]
    fn dirichlet_constraints_hold(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0) {
        let m = build_cube(1, 1.0).unwrap();
        let space = Arc::new(DGSpace::new(&m, 1).unwrap());
        let v = assemble_slp(&space, &QuadOptions::default()).unwrap();
        let cons = assemble_constraints(&space).unwrap();
        let sol = solve_dirichlet(&space, &v, &cons, &|_, _, x| a + b * x.x + c * x.y * x.z).unwrap();
        prop_assert!(sol.constraint_residual < 1e-10, "residual {:e}", sol.constraint_residual);
    }
}

#[test]
fn meshes_are_closed_manifolds() {
    for level in 0..=4 {
        let m = build_icosphere(level).unwrap();
        assert!(m.is_edge_manifold() && m.is_outward_oriented());
        assert_eq!(m.n_vertices() + m.n_triangles() - 3 * m.n_triangles() / 2, 2);
    }
    for level in 0..=3 {
        let m = build_cube(level, 0.7).unwrap();
        assert!(m.is_edge_manifold() && m.is_outward_oriented());
    }
}

/// Rotating the data by an icosahedral rotation rotates the exterior potential.
#[test]
fn icosahedral_equivariance() {
    let m = build_icosphere(1).unwrap();
    let space = Arc::new(DGSpace::new(&m, 1).unwrap());
    let quad = QuadOptions::default();
    let v = assemble_slp(&space, &quad).unwrap();
    let cons = assemble_constraints(&space).unwrap();
    let f = |x: &Vec3| x.x + 0.3 * x.y * x.z + 0.2 * x.z * x.z;
    let sol = solve_dirichlet(&space, &v, &cons, &|_, _, x| f(x)).unwrap();
    let probes = [Vec3::new(1.7, 0.2, -0.4), Vec3::new(-0.3, 2.5, 0.9), Vec3::new(0.1, -0.2, -1.9)];
    let rots = icosahedral_rotations();
    assert_eq!(rots.len(), 60);
    let mut worst = 0.0f64;
    for r in rots.iter().step_by(7) {
        assert!(vertex_permutation(&m, r).is_some());
        let rt = r.transpose();
        let rotated = solve_dirichlet(&space, &v, &cons, &|_, _, x| f(&(rt * x))).unwrap();
        for y in &probes {
            let a = rotated.density.potential(&(r * y), &quad);
            let b = sol.density.potential(y, &quad);
            worst = worst.max((a - b).abs() / b.abs().max(1e-3));
        }
    }
    assert!(worst < 1e-8, "equivariance defect {worst:e}");
}
