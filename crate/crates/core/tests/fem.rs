use mpet_core::fem::{
    assemble_dg_elasticity, assemble_div, assemble_mass, dg_grams, dg_norms, elementwise_divergence, evaluate_vector,
    interpolate_scalar, interpolate_vector,
};
use mpet_core::quadrature::{barycentric_point, TRIANGLE_DEG4};
use mpet_core::{build_dofmap, build_structured_mesh, DgConfig, SpaceKind};
use nalgebra::SymmetricEigen;
use proptest::prelude::*;

fn min_eig(m: &nalgebra::DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

#[test]
fn p0_mass_is_diagonal_of_areas() {
    let mesh = build_structured_mesh(3, 2).unwrap();
    let p0 = build_dofmap(&mesh, SpaceKind::P0, true);
    let m = assemble_mass(&mesh, &p0, &p0).unwrap();
    assert_eq!(m.nnz(), mesh.n_triangles());
    for t in 0..mesh.n_triangles() {
        assert_eq!(m.get(t, t), mesh.triangle_areas[t]);
    }
}

#[test]
fn rt0_mass_is_spd() {
    let mesh = build_structured_mesh(2, 2).unwrap();
    let rt = build_dofmap(&mesh, SpaceKind::Rt0, true);
    let m = assemble_mass(&mesh, &rt, &rt).unwrap();
    assert!(m.symmetry_defect() < 1e-15);
    assert!(min_eig(&m.to_dense()) > 0.0);
}

#[test]
fn mixed_mass_transposes() {
    let mesh = build_structured_mesh(1, 1).unwrap();
    let bdm = build_dofmap(&mesh, SpaceKind::Bdm1, false);
    let rt = build_dofmap(&mesh, SpaceKind::Rt0, false);
    let a = assemble_mass(&mesh, &bdm, &rt).unwrap();
    let b = assemble_mass(&mesh, &rt, &bdm).unwrap();
    assert!((a.to_dense() - b.transpose().to_dense()).amax() < 1e-15);
    let p0 = build_dofmap(&mesh, SpaceKind::P0, false);
    assert!(assemble_mass(&mesh, &bdm, &p0).is_err());
}

#[test]
fn mass_rejects_foreign_mesh() {
    let m1 = build_structured_mesh(2, 2).unwrap();
    let m2 = build_structured_mesh(3, 2).unwrap();
    let rt = build_dofmap(&m1, SpaceKind::Rt0, true);
    assert!(assemble_mass(&m2, &rt, &rt).is_err());
}

#[test]
fn interpolation_reproduces_space_members() {
    let mesh = build_structured_mesh(3, 2).unwrap();
    let rt = build_dofmap(&mesh, SpaceKind::Rt0, false);
    let bdm = build_dofmap(&mesh, SpaceKind::Bdm1, false);
    let c = interpolate_vector(&mesh, &rt, |_| [1.0, 0.0]).unwrap();
    let l = interpolate_vector(&mesh, &bdm, |x| [x[0], x[1]]).unwrap();
    let g = interpolate_vector(&mesh, &bdm, |x| [2.0 * x[1] - 1.0, 3.0 * x[0] + x[1]]).unwrap();
    for t in 0..mesh.n_triangles() {
        let p = mesh.triangle_coords(t);
        for (bary, _) in &TRIANGLE_DEG4 {
            let x = barycentric_point(p, *bary);
            let v = evaluate_vector(&mesh, &rt, &c, t, x);
            assert!((v[0] - 1.0).abs() < 1e-13 && v[1].abs() < 1e-13);
            let v = evaluate_vector(&mesh, &bdm, &l, t, x);
            assert!((v[0] - x[0]).abs() < 1e-13 && (v[1] - x[1]).abs() < 1e-13);
            let v = evaluate_vector(&mesh, &bdm, &g, t, x);
            assert!((v[0] - (2.0 * x[1] - 1.0)).abs() < 1e-13 && (v[1] - (3.0 * x[0] + x[1])).abs() < 1e-13);
        }
    }
    let p0 = build_dofmap(&mesh, SpaceKind::P0, true);
    assert!(interpolate_scalar(&mesh, &p0, |_| 3.0).unwrap().iter().all(|&v| (v - 3.0).abs() < 1e-15));
}

#[test]
fn divergence_of_linear_fields() {
    let mesh = build_structured_mesh(2, 2).unwrap();
    let bdm = build_dofmap(&mesh, SpaceKind::Bdm1, false);
    let p0 = build_dofmap(&mesh, SpaceKind::P0, false);
    let b = assemble_div(&mesh, &bdm, &p0).unwrap();
    let c = interpolate_vector(&mesh, &bdm, |_| [1.0, 0.0]).unwrap();
    assert!(b.matvec(&c).iter().all(|v| v.abs() < 1e-13));
    let xy = interpolate_vector(&mesh, &bdm, |x| [x[0], x[1]]).unwrap();
    for (t, v) in b.matvec(&xy).iter().enumerate() {
        assert!((v - 2.0 * mesh.triangle_areas[t]).abs() < 1e-13);
    }
    assert!(b.matvec(&vec![0.0; bdm.n_dofs]).iter().all(|&v| v == 0.0));
}

#[test]
fn dg_elasticity_symmetric_and_coercive() {
    let mesh = build_structured_mesh(2, 2).unwrap();
    let bdm = build_dofmap(&mesh, SpaceKind::Bdm1, true);
    let a = assemble_dg_elasticity(&mesh, &bdm, &DgConfig::default()).unwrap();
    assert!(a.symmetry_defect() < 1e-12);
    assert!(min_eig(&a.to_dense()) > 0.0);
    assert!(assemble_dg_elasticity(&mesh, &bdm, &DgConfig { eta: 0.0, quadrature_order: 4 }).is_err());
}

#[test]
fn rigid_motion_only_sees_boundary_penalty() {
    // rigid motions are strain free and continuous, so only the boundary
    // tangential traces (where [u] = u) contribute: a_h(r,r) = η Σ_∂ h⁻¹‖r_t‖²
    let mesh = build_structured_mesh(3, 3).unwrap();
    let bdm = build_dofmap(&mesh, SpaceKind::Bdm1, false);
    let cfg = DgConfig::default();
    let a = assemble_dg_elasticity(&mesh, &bdm, &cfg).unwrap();
    let g = dg_grams(&mesh, &bdm).unwrap();
    for f in [|x: [f64; 2]| [-x[1], x[0]], |_: [f64; 2]| [1.0, 2.0]] {
        let r = interpolate_vector(&mesh, &bdm, f).unwrap();
        assert!(g.strain.bilinear(&r, &r).abs() < 1e-13);
        // side length 1/3 and |r_t| known on each side of the square
        let boundary: f64 = (0..mesh.n_edges())
            .filter(|&e| mesh.boundary_flags[e])
            .map(|e| {
                let [p, q] = mesh.edges[e].map(|v| mesh.vertices[v]);
                let n = mesh.unit_normals[e];
                let t = [-n[1], n[0]];
                // r_t is linear along the edge: Simpson is exact for its square
                let rt = |x: [f64; 2]| { let v = f(x); v[0] * t[0] + v[1] * t[1] };
                let m = [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0];
                (rt(p).powi(2) + 4.0 * rt(m).powi(2) + rt(q).powi(2)) / 6.0
            })
            .sum();
        assert!((g.jump.bilinear(&r, &r) - boundary).abs() < 1e-12);
        assert!((a.bilinear(&r, &r) - cfg.eta * boundary).abs() < 1e-11);
    }
}

#[test]
fn dg_norm_equals_one_h_norm() {
    let mesh = build_structured_mesh(2, 3).unwrap();
    let bdm = build_dofmap(&mesh, SpaceKind::Bdm1, true);
    let z = dg_norms(&mesh, &bdm, &vec![0.0; bdm.n_dofs]).unwrap();
    assert_eq!((z.h, z.one_h, z.dg), (0.0, 0.0, 0.0));
    let u: Vec<f64> = (0..bdm.n_dofs).map(|i| ((i * 7 + 3) as f64).sin()).collect();
    let n = dg_norms(&mesh, &bdm, &u).unwrap();
    assert_eq!(n.dg, n.one_h);
    assert!(n.h > 0.0);
    // ε:ε ≤ ∇:∇ pointwise
    assert!(n.h <= n.one_h * (1.0 + 1e-14));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn divergence_is_elementwise_constant(seed in 0u64..10_000, nx in 1usize..4, ny in 1usize..4) {
        let mesh = build_structured_mesh(nx, ny).unwrap();
        let bdm = build_dofmap(&mesh, SpaceKind::Bdm1, false);
        let p0 = build_dofmap(&mesh, SpaceKind::P0, false);
        let u: Vec<f64> = (0..bdm.n_dofs).map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 500.0 - 1.0).collect();
        let div = elementwise_divergence(&mesh, &bdm, &u);
        let bu = assemble_div(&mesh, &bdm, &p0).unwrap().matvec(&u);
        for t in 0..mesh.n_triangles() {
            prop_assert!((bu[t] - div[t] * mesh.triangle_areas[t]).abs() < 1e-12);
        }
        // normal continuity: evaluate u·n from both sides at an interior edge midpoint
        for e in 0..mesh.n_edges() {
            if let (t1, Some(t2)) = mesh.edge_to_triangles[e] {
                let [a, b] = mesh.edges[e];
                let mid = [(mesh.vertices[a][0] + mesh.vertices[b][0]) / 2.0, (mesh.vertices[a][1] + mesh.vertices[b][1]) / 2.0];
                let n = mesh.unit_normals[e];
                let v1 = evaluate_vector(&mesh, &bdm, &u, t1, mid);
                let v2 = evaluate_vector(&mesh, &bdm, &u, t2, mid);
                prop_assert!(((v1[0] - v2[0]) * n[0] + (v1[1] - v2[1]) * n[1]).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn grams_are_positive_semidefinite(nx in 1usize..4, ny in 1usize..4) {
        let mesh = build_structured_mesh(nx, ny).unwrap();
        let bdm = build_dofmap(&mesh, SpaceKind::Bdm1, true);
        let g = dg_grams(&mesh, &bdm).unwrap();
        for m in [g.strain, g.gradient, g.jump] {
            prop_assert!(m.symmetry_defect() < 1e-13);
            let e = SymmetricEigen::new(m.to_dense()).eigenvalues;
            prop_assert!(e.min() > -1e-12 * e.max().max(1.0));
        }
    }
}
