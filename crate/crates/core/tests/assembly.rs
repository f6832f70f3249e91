use mpet_core::assembly::{export_matrices, history_rhs, norm_terms};
use mpet_core::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn system(nx: usize, n: usize) -> (Mesh, BlockSystem) {
    let mesh = build_structured_mesh(nx, nx).unwrap();
    let mut p = MpetParameters::default_for(n);
    if n > 1 {
        p = p.with_uniform_networks(0.5, 0.3, 2.0);
    }
    let sys = assemble_operator(&mesh, &p).unwrap();
    (mesh, sys)
}

fn random_vec(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn layout_is_contiguous() {
    let (mesh, sys) = system(3, 2);
    let l = sys.layout;
    let blocks = l.blocks();
    assert_eq!(blocks.len(), 1 + 2 + 1 + 2 + 2);
    let mut next = 0;
    for b in &blocks {
        assert_eq!(b.offset, next, "{}", b.name);
        next += b.size;
    }
    assert_eq!(next, l.total());
    assert_eq!(l.p(0).len(), mesh.n_triangles());
    assert_eq!(l.n_primal() + l.n_pressure(), l.total());
}

#[test]
fn operator_and_norm_are_symmetric() {
    for n in [1, 3] {
        let (_, sys) = system(3, n);
        for m in [&sys.a, &sys.w, &sys.b_uv, &sys.b_p] {
            assert!(m.symmetry_defect() <= 1e-12 * m.max_abs(), "defect {}", m.symmetry_defect());
        }
    }
}

#[test]
fn velocities_do_not_couple_to_pressure_or_each_other() {
    let (_, sys) = system(2, 2);
    let l = sys.layout;
    let vel: Vec<std::ops::Range<usize>> = std::iter::once(l.udot()).chain((0..2).map(|i| l.vdot(i))).collect();
    for (a, ra) in vel.iter().enumerate() {
        for i in 0..2 {
            assert_eq!(sys.a.submatrix(ra.clone(), l.p(i)).nnz(), 0);
        }
        for (b, rb) in vel.iter().enumerate() {
            if a != b {
                assert_eq!(sys.a.submatrix(ra.clone(), rb.clone()).max_abs(), 0.0, "blocks {a},{b}");
            }
        }
    }
}

#[test]
fn norm_terms_reproduce_gram() {
    for n in [1, 2] {
        let (_, sys) = system(3, n);
        let mut x = random_vec(sys.layout.total(), 11 + n as u64);
        sys.projector.project(&mut x);
        let t = norm_terms(&sys, &x);
        let g = sys.w.bilinear(&x, &x);
        assert!((t.total() - g).abs() <= 1e-10 * g, "{} vs {g}", t.total());
        assert!(t.elastic > 0.0 && t.mass > 0.0 && t.divergence > 0.0 && t.pressure > 0.0);
    }
}

#[test]
fn norm_is_positive_on_random_vectors() {
    let (_, sys) = system(3, 2);
    for s in 0..20 {
        let mut x = random_vec(sys.layout.total(), s);
        sys.projector.project(&mut x);
        assert!(sys.w.bilinear(&x, &x) > 0.0);
    }
}

#[test]
fn pure_pressure_row() {
    // with u = v = 0 the mass-balance row of the history term is τ²/4 (τ/2 Lβ − c_p) M_p p
    let (_, sys) = system(2, 1);
    let l = sys.layout;
    let mut y = vec![0.0; l.total()];
    for (k, r) in l.p(0).enumerate() {
        y[r] = 1.0 + k as f64;
    }
    let r = history_rhs(&sys, &y).unwrap();
    let q = sys.params.tau.powi(2) / 4.0;
    for (k, row) in l.p(0).enumerate() {
        let want = -q * sys.params.c_p[0] * sys.ops.areas[k] * (1.0 + k as f64);
        assert!((r[row] - want).abs() <= 1e-14 * want.abs().max(1.0));
    }
    assert!(r[l.u()].iter().any(|v| v.abs() > 0.0));
}

#[test]
fn projector_removes_means() {
    let (_, sys) = system(3, 2);
    let mut x = random_vec(sys.layout.total(), 5);
    sys.projector.project(&mut x);
    for i in 0..2 {
        assert!(sys.projector.mean(&x, i).abs() < 1e-14);
    }
    let before = x.clone();
    sys.projector.project(&mut x);
    assert!(before.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-15));
}

#[test]
fn export_writes_all_files() {
    let (_, sys) = system(2, 1);
    let dir = tempfile::tempdir().unwrap();
    export_matrices(&sys, dir.path()).unwrap();
    for f in ["A.mtx", "W.mtx", "B_uv.mtx", "B_p.mtx", "blocks.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let a = std::fs::read_to_string(dir.path().join("A.mtx")).unwrap();
    assert!(a.starts_with("%%MatrixMarket matrix coordinate real symmetric"));
    let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("blocks.json")).unwrap()).unwrap();
    assert_eq!(side["total"].as_u64().unwrap() as usize, sys.layout.total());
}

#[test]
fn rhs_rejects_steps_past_final_time() {
    let (mesh, sys) = system(2, 1);
    let y = vec![0.0; sys.layout.total()];
    let loads = LoadSpec::zero(1);
    assert!(assemble_rhs(&sys, &mesh, &y, &loads, 0.0).is_ok());
    assert!(assemble_rhs(&sys, &mesh, &y, &loads, sys.params.t_final).is_err());
    assert!(assemble_rhs(&sys, &mesh, &y[1..], &loads, 0.0).is_err());
    assert!(assemble_rhs(&sys, &mesh, &y, &LoadSpec::zero(2), 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_admissible_systems_are_symmetric(seed in any::<u64>(), n in 1usize..=3) {
        let p = MpetParameters::random_admissible(&mut ChaCha8Rng::seed_from_u64(seed), n);
        let mesh = build_structured_mesh(2, 2).unwrap();
        let Ok(sys) = assemble_operator(&mesh, &p) else { return Ok(()) };
        prop_assert!(sys.a.symmetry_defect() <= 1e-12 * sys.a.max_abs());
        prop_assert!(sys.w.symmetry_defect() <= 1e-12 * sys.w.max_abs());
        let mut x = random_vec(sys.layout.total(), seed);
        sys.projector.project(&mut x);
        let t = norm_terms(&sys, &x);
        let g = sys.w.bilinear(&x, &x);
        prop_assert!((t.total() - g).abs() <= 1e-9 * g);
    }
}
