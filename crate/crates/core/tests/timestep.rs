use std::sync::Arc;

use mpet_core::timestep::w_norm;
use mpet_core::*;

fn params(n: usize, tau: f64, t_final: f64) -> MpetParameters {
    let mut p = MpetParameters::default_for(n);
    p.tau = tau;
    p.t_final = t_final;
    p
}

#[test]
fn zero_state_stays_zero() {
    let mesh = build_structured_mesh(3, 3).unwrap();
    let t = run(&mesh, &params(2, 0.1, 0.5), &LoadSpec::zero(2), &InitialData::zero(2), 5, SolverKind::Direct).unwrap();
    assert!(t.final_state.y.iter().all(|&v| v == 0.0));
    assert_eq!(t.diagnostics.len(), 5);
    assert!((t.final_state.time - 0.5).abs() < 1e-14);
    assert_eq!(t.final_state.step, 5);
}

#[test]
fn zero_steps_return_the_initial_state() {
    let mesh = build_structured_mesh(2, 2).unwrap();
    let t = run(&mesh, &params(1, 0.1, 1.0), &LoadSpec::zero(1), &InitialData::smooth(1), 0, SolverKind::Direct).unwrap();
    assert!(t.diagnostics.is_empty());
    assert_eq!(t.initial.y, t.final_state.y);
}

#[test]
fn constant_pressure_is_projected_away() {
    let mesh = build_structured_mesh(3, 3).unwrap();
    let sys = assemble_operator(&mesh, &MpetParameters::default_for(2)).unwrap();
    let mut data = InitialData::zero(2);
    data.p0 = vec![Arc::new(|_| 3.5), Arc::new(|_| -1.0)];
    let s = initial_state(&mesh, &sys, &data).unwrap();
    assert!(s.y.iter().all(|v| v.abs() < 1e-14));
}

#[test]
fn initial_data_must_match_network_count() {
    let mesh = build_structured_mesh(2, 2).unwrap();
    let sys = assemble_operator(&mesh, &MpetParameters::default_for(2)).unwrap();
    assert!(initial_state(&mesh, &sys, &InitialData::zero(1)).is_err());
}

#[test]
fn mass_balance_holds_with_both_solvers() {
    let mesh = build_structured_mesh(3, 3).unwrap();
    let p = params(2, 0.05, 0.5);
    for kind in [SolverKind::Direct, SolverKind::Minres { tol: 1e-12, max_iter: 500 }] {
        let t = run(&mesh, &p, &LoadSpec::smooth_trig(2), &InitialData::smooth(2), 10, kind).unwrap();
        for d in &t.diagnostics {
            assert!(d.mass_residual_max < 1e-10, "{kind:?} step {}: {:e}", d.step, d.mass_residual_max);
            assert!(d.velocity_residual_max < 1e-10, "{kind:?} step {}: {:e}", d.step, d.velocity_residual_max);
        }
        if let SolverKind::Minres { .. } = kind {
            assert!(t.diagnostics.iter().all(|d| d.iterations > 0 && d.residual <= 1e-12));
        }
    }
}

#[test]
fn direct_and_minres_trajectories_agree() {
    let mesh = build_structured_mesh(3, 3).unwrap();
    let p = params(1, 0.1, 0.5);
    let a = run(&mesh, &p, &LoadSpec::smooth_trig(1), &InitialData::smooth(1), 5, SolverKind::Direct).unwrap();
    let b = run(&mesh, &p, &LoadSpec::smooth_trig(1), &InitialData::smooth(1), 5, SolverKind::Minres { tol: 1e-13, max_iter: 1000 })
        .unwrap();
    let sys = assemble_operator(&mesh, &p).unwrap();
    let d: Vec<f64> = a.final_state.y.iter().zip(&b.final_state.y).map(|(x, y)| x - y).collect();
    assert!(w_norm(&sys, &d) <= 1e-8 * w_norm(&sys, &a.final_state.y));
}

#[test]
fn unforced_evolution_stays_bounded() {
    let mesh = build_structured_mesh(3, 3).unwrap();
    let p = params(1, 0.05, 5.0);
    let t = run(&mesh, &p, &LoadSpec::zero(1), &InitialData::smooth(1), 100, SolverKind::Direct).unwrap();
    let sys = assemble_operator(&mesh, &p).unwrap();
    let w0 = w_norm(&sys, &t.initial.y);
    assert!(w0 > 0.0);
    for d in &t.diagnostics {
        assert!(d.w_norm.is_finite() && d.w_norm <= 10.0 * w0, "step {}: {} vs {w0}", d.step, d.w_norm);
    }
}

#[test]
fn stepping_past_final_time_fails() {
    let mesh = build_structured_mesh(2, 2).unwrap();
    let r = run(&mesh, &params(1, 0.1, 0.2), &LoadSpec::zero(1), &InitialData::zero(1), 3, SolverKind::Direct);
    assert!(r.is_err());
}

#[test]
fn minres_failure_is_an_error() {
    let mesh = build_structured_mesh(3, 3).unwrap();
    let r = run(&mesh, &params(1, 0.1, 0.1), &LoadSpec::smooth_trig(1), &InitialData::smooth(1), 1, SolverKind::Minres {
        tol: 1e-14,
        max_iter: 1,
    });
    assert!(matches!(r, Err(MpetError::Solver(_))));
}

#[test]
fn trajectory_csv_has_one_row_per_step() {
    let mesh = build_structured_mesh(2, 2).unwrap();
    let t = run(&mesh, &params(1, 0.1, 0.3), &LoadSpec::smooth_trig(1), &InitialData::smooth(1), 3, SolverKind::Direct).unwrap();
    let mut buf = Vec::new();
    t.write_csv(&mut buf).unwrap();
    let s = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(lines[0], Trajectory::CSV_HEADER);
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("3,"));
}

#[test]
fn convergence_driver_validates_step_sizes() {
    let mesh = build_structured_mesh(2, 2).unwrap();
    let p = params(1, 0.1, 1.0);
    let (l, d) = (LoadSpec::zero(1), InitialData::smooth(1));
    assert!(run_convergence(&mesh, &p, &l, &d, &[0.1, 0.05], SolverKind::Direct).is_err());
    assert!(run_convergence(&mesh, &p, &l, &d, &[0.1, 0.05, 0.01], SolverKind::Direct).is_err());
    assert!(run_convergence(&mesh, &p, &l, &d, &[0.3, 0.15, 0.075], SolverKind::Direct).is_err());
}

#[test]
fn zero_solution_is_flagged_exact() {
    let mesh = build_structured_mesh(2, 2).unwrap();
    let r = run_convergence(&mesh, &params(1, 0.1, 0.4), &LoadSpec::zero(1), &InitialData::zero(1), &[0.2, 0.1, 0.05], SolverKind::Direct)
        .unwrap();
    assert!(r.exact);
    assert!(r.warning.is_some());
    assert_eq!(r.differences.len(), 2);
    assert_eq!(r.rates.len(), 1);
}

#[test]
fn convergence_differences_shrink() {
    let mesh = build_structured_mesh(2, 2).unwrap();
    let r = run_convergence(
        &mesh,
        &params(1, 0.1, 0.4),
        &LoadSpec::smooth_trig(1),
        &InitialData::smooth(1),
        &[0.1, 0.05, 0.025, 0.0125],
        SolverKind::Direct,
    )
    .unwrap();
    assert!(!r.exact);
    assert!(r.differences.iter().all(|d| d.is_finite() && *d > 0.0));
    assert!(r.differences.last().unwrap() < r.differences.first().unwrap());
}
