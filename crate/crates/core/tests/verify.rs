use mpet_core::verify::{fem_constants, korn_ratio_range, StabilityReport};
use mpet_core::*;

fn small_config() -> SweepConfig {
    SweepConfig {
        mesh: vec![2, 3],
        n: vec![1, 2],
        lambda: vec![1.0, 1e4],
        k: vec![1e-4, 1.0],
        ..SweepConfig::default()
    }
}

#[test]
fn points_follow_axis_order() {
    let pts = small_config().points();
    assert_eq!(pts.len(), 2 * 2 * 2 * 2);
    assert!(pts.iter().enumerate().all(|(i, p)| p.index == i));
    // tau innermost ... mesh outermost
    assert_eq!(pts[0].nx, 2);
    assert_eq!(pts[8].nx, 3);
    assert_eq!(pts[1].params.k[0], 1.0);
    assert_eq!(pts[2].params.lambda, 1e4);
    assert_eq!(pts[4].params.n, 2);
    assert!(pts.iter().all(|p| p.params.t_final == p.params.tau));
}

#[test]
fn config_parsing() {
    let c = SweepConfig::from_toml_str("mesh = [2]\nn = [1, 2]\ntau = [0.1, 1.0]\n").unwrap();
    assert_eq!(c.points().len(), 4);
    assert_eq!(c.seed, 7);
    for bad in ["mesh = []\n", "mesh = [0]\n", "tol = 2.0\n", "meshes = [2]\n", "n = 1\n"] {
        assert!(matches!(SweepConfig::from_toml_str(bad), Err(MpetError::Config(_))), "{bad}");
    }
}

#[test]
fn sweep_is_deterministic_and_job_independent() {
    let c = small_config();
    let a = sweep(&c, Some(1)).unwrap().to_csv_string();
    let b = sweep(&c, Some(2)).unwrap().to_csv_string();
    let d = sweep(&c, None).unwrap().to_csv_string();
    assert_eq!(a, b);
    assert_eq!(a, d);
    let mut lines = a.lines();
    assert_eq!(lines.next(), Some(StabilityReport::CSV_HEADER));
    assert_eq!(lines.count(), 16);
}

#[test]
fn sweep_rows_are_populated() {
    let t = sweep(&small_config(), Some(1)).unwrap();
    assert_eq!(t.failures().count(), 0);
    for r in &t.rows {
        assert!(r.kappa.is_finite() && r.kappa >= 1.0);
        assert!(r.min_abs > 0.0 && r.max_abs >= r.min_abs);
        assert!(r.converged && r.iterations.unwrap() > 0);
        assert!(r.error.is_empty());
    }
    assert!(t.min_inf_sup() > 0.0);
    assert!(t.kappa_spread() >= 1.0);
    assert!(t.max_iterations().unwrap() <= 1000);
}

#[test]
fn identity_hook_gives_unit_condition() {
    let c = SweepConfig { mesh: vec![2], n: vec![1, 2], identity_hook: true, ..SweepConfig::default() };
    for r in sweep(&c, Some(1)).unwrap().rows {
        assert!((r.kappa - 1.0).abs() < 1e-10, "{}", r.kappa);
        assert_eq!(r.iterations, Some(1));
    }
}

#[test]
fn skipped_stages_are_nan() {
    let c = SweepConfig { mesh: vec![2], spectrum: false, minres: false, ..SweepConfig::default() };
    let t = sweep(&c, Some(1)).unwrap();
    assert!(t.rows[0].kappa.is_nan());
    assert_eq!(t.rows[0].iterations, None);
}

#[test]
fn point_errors_are_recorded_not_fatal() {
    // too many DOFs for the dense spectrum on the second mesh
    let c = SweepConfig { mesh: vec![2, 20], minres: false, ..SweepConfig::default() };
    let t = sweep(&c, Some(1)).unwrap();
    assert_eq!(t.rows.len(), 2);
    assert!(t.rows[0].error.is_empty());
    assert!(!t.rows[1].error.is_empty());
    assert_eq!(t.failures().count(), 1);
}

#[test]
fn fem_constants_are_ordered() {
    let dg = DgConfig::default();
    for nx in [2, 4] {
        let c = fem_constants(nx, &dg).unwrap();
        assert!(c.values().iter().all(|v| v.is_finite() && *v > 0.0));
        assert!(c.c1 <= 1.0 + 1e-12 && c.c0 >= 1.0 - 1e-12);
        assert!(c.c2 >= 1.0 - 1e-12);
        assert!(c.beta_s <= 1.0 + 1e-12 && c.beta_v <= 1.0 + 1e-12);
        assert!((c.h - 2f64.sqrt() / nx as f64).abs() < 1e-14);
    }
}

#[test]
fn fem_constant_variation() {
    let r = measure_fem_constants(&[2, 4], &DgConfig::default()).unwrap();
    assert_eq!(r.rows.len(), 2);
    for name in FemConstants::NAMES {
        assert!(r.variation(name).unwrap() >= 0.0);
    }
    assert!(r.variation("nope").is_none());
}

#[test]
fn korn_ratios_are_bounded() {
    let (lo, hi) = korn_ratio_range(3, 20, 1).unwrap();
    assert!(0.0 < lo && lo <= hi && hi <= 1.0 + 1e-12, "({lo}, {hi})");
}

#[test]
fn lemma_checks_pass() {
    let s = randomized_lemma_checks(300, 11);
    assert_eq!(s.draws, 300);
    assert_eq!(s.passed, 300, "{:?}", s.failures);
    assert!(s.failures.is_empty());
    assert_eq!(randomized_lemma_checks(50, 3), randomized_lemma_checks(50, 3));
}
