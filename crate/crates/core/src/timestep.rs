//! Crank–Nicolson stepping `A y^{k+1} = G^{k+1}` with conservation and
//! accuracy diagnostics.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::assembly::{assemble_operator_with, assemble_rhs, history_rhs, BlockLayout, BlockSystem, LoadSpec};
use crate::error::{MpetError, Result};
use crate::fem::{interpolate_scalar, interpolate_vector, DgConfig};
use crate::mesh::Mesh;
use crate::model::MpetParameters;
use crate::solver::{minres, BlockPreconditioner, DirectSolver};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub time: f64,
    pub iterations: usize,
    pub residual: f64,
    pub mass_residual_max: f64,
    pub velocity_residual_max: f64,
    pub w_norm: f64,
}

#[derive(Debug, Clone)]
pub struct State {
    pub time: f64,
    pub step: usize,
    pub layout: BlockLayout,
    /// Concatenated `(u, v_1..n, u̇, v̇_1..n, p_1..n)` coefficients.
    pub y: Vec<f64>,
    pub diagnostics: Option<StepDiagnostics>,
}

impl State {
    pub fn zero(layout: BlockLayout) -> Self {
        Self { time: 0.0, step: 0, layout, y: vec![0.0; layout.total()], diagnostics: None }
    }
    pub fn u(&self) -> &[f64] {
        &self.y[self.layout.u()]
    }
    pub fn v(&self, i: usize) -> &[f64] {
        &self.y[self.layout.v(i)]
    }
    pub fn udot(&self) -> &[f64] {
        &self.y[self.layout.udot()]
    }
    pub fn vdot(&self, i: usize) -> &[f64] {
        &self.y[self.layout.vdot(i)]
    }
    pub fn p(&self, i: usize) -> &[f64] {
        &self.y[self.layout.p(i)]
    }
}

type Vf = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;
type Sf = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;

/// Initial displacements `u⁰, v⁰`, velocities `u¹, v¹` and pressures `p⁰`.
#[derive(Clone)]
pub struct InitialData {
    pub u0: Vf,
    pub v0: Vec<Vf>,
    pub u1: Vf,
    pub v1: Vec<Vf>,
    pub p0: Vec<Sf>,
}

impl std::fmt::Debug for InitialData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "InitialData {{ networks: {} }}", self.p0.len())
    }
}

impl InitialData {
    pub fn zero(n: usize) -> Self {
        let zv: Vf = Arc::new(|_| [0.0, 0.0]);
        let zs: Sf = Arc::new(|_| 0.0);
        Self { u0: zv.clone(), v0: vec![zv.clone(); n], u1: zv.clone(), v1: vec![zv; n], p0: vec![zs; n] }
    }

    /// Smooth fields compatible with `u·n = v·n = 0`.
    pub fn smooth(n: usize) -> Self {
        use std::f64::consts::PI;
        let u0: Vf = Arc::new(|x| [0.1 * (PI * x[0]).sin() * (PI * x[1]).cos(), 0.1 * (PI * x[0]).cos() * (PI * x[1]).sin()]);
        let v0 = (0..n)
            .map(|i| {
                let s = 0.05 / (1.0 + i as f64);
                Arc::new(move |x: [f64; 2]| [s * (PI * x[0]).sin() * (PI * x[1]).sin(), -s * (2.0 * PI * x[1]).sin() * x[0]])
                    as Vf
            })
            .collect();
        let zv: Vf = Arc::new(|_| [0.0, 0.0]);
        let p0 = (0..n)
            .map(|i| {
                let k = 1.0 + i as f64;
                Arc::new(move |x: [f64; 2]| (k * PI * x[0]).cos() * (PI * x[1]).cos()) as Sf
            })
            .collect();
        Self { u0, v0, u1: zv.clone(), v1: vec![zv; n], p0 }
    }
}

pub fn initial_state(mesh: &Mesh, sys: &BlockSystem, data: &InitialData) -> Result<State> {
    let l = sys.layout;
    let n = l.n;
    if data.v0.len() != n || data.v1.len() != n || data.p0.len() != n {
        return Err(MpetError::Dimension(format!("initial data for {} networks, expected {n}", data.p0.len())));
    }
    let ops = &sys.ops;
    let mut s = State::zero(l);
    s.y[l.u()].copy_from_slice(&interpolate_vector(mesh, &ops.bdm, &*data.u0)?);
    s.y[l.udot()].copy_from_slice(&interpolate_vector(mesh, &ops.rt, &*data.u1)?);
    for i in 0..n {
        s.y[l.v(i)].copy_from_slice(&interpolate_vector(mesh, &ops.bdm, &*data.v0[i])?);
        s.y[l.vdot(i)].copy_from_slice(&interpolate_vector(mesh, &ops.rt, &*data.v1[i])?);
        s.y[l.p(i)].copy_from_slice(&interpolate_scalar(mesh, &ops.p0, &*data.p0[i])?);
    }
    sys.projector.project(&mut s.y);
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SolverKind {
    Direct,
    Minres { tol: f64, max_iter: usize },
}

impl Default for SolverKind {
    fn default() -> Self {
        SolverKind::Direct
    }
}

/// A system, its loads and a factored solver, ready to advance states.
pub struct TimeStepper {
    pub system: BlockSystem,
    pub mesh: Mesh,
    pub loads: LoadSpec,
    pub kind: SolverKind,
    direct: Option<DirectSolver>,
    precond: Option<BlockPreconditioner>,
}

impl TimeStepper {
    pub fn new(mesh: &Mesh, system: BlockSystem, loads: LoadSpec, kind: SolverKind) -> Result<Self> {
        let (direct, precond) = match kind {
            SolverKind::Direct => (Some(DirectSolver::new(&system)?), None),
            SolverKind::Minres { .. } => (None, Some(BlockPreconditioner::new(&system)?)),
        };
        Ok(Self { system, mesh: mesh.clone(), loads, kind, direct, precond })
    }

    pub fn step(&self, state: &State) -> Result<State> {
        step(state, self)
    }
}

pub fn step(state: &State, st: &TimeStepper) -> Result<State> {
    let sys = &st.system;
    if state.layout != sys.layout {
        return Err(MpetError::Dimension("state layout does not match the system".into()));
    }
    let rhs = assemble_rhs(sys, &st.mesh, &state.y, &st.loads, state.time)?;
    let fail = |e: MpetError| MpetError::Solver(format!("step {}: {e}", state.step + 1));
    let (y, iterations, residual) = match st.kind {
        SolverKind::Direct => (st.direct.as_ref().unwrap().solve(sys, &rhs).map_err(fail)?, 0, 0.0),
        SolverKind::Minres { tol, max_iter } => {
            let (y, stats) = minres(sys, st.precond.as_ref().unwrap(), &rhs, tol, max_iter).map_err(fail)?;
            if !stats.converged {
                return Err(fail(MpetError::Solver(format!(
                    "MINRES stopped at {} iterations with residual {:e}",
                    stats.iterations, stats.residual
                ))));
            }
            (y, stats.iterations, stats.residual)
        }
    };
    let mut next = State { time: state.time + sys.params.tau, step: state.step + 1, layout: state.layout, y, diagnostics: None };
    let mass = mass_residual(state, &next, sys)?;
    let mass_residual_max = mass.iter().flatten().fold(0.0f64, |m, r| m.max(r.abs()));
    next.diagnostics = Some(StepDiagnostics {
        step: next.step,
        time: next.time,
        iterations,
        residual,
        mass_residual_max,
        velocity_residual_max: velocity_residual(state, &next, sys)?,
        w_norm: w_norm(sys, &next.y),
    });
    Ok(next)
}

pub fn w_norm(sys: &BlockSystem, y: &[f64]) -> f64 {
    sys.w.bilinear(y, y).max(0.0).sqrt()
}

/// Per-network, per-element residual of the discrete mass balance (row 5).
pub fn mass_residual(state_k: &State, state_k1: &State, sys: &BlockSystem) -> Result<Vec<Vec<f64>>> {
    let g = history_rhs(sys, &state_k.y)?;
    let ay = sys.a.matvec(&state_k1.y);
    let l = &sys.layout;
    Ok((0..l.n).map(|i| l.p(i).map(|r| ay[r] - g[r]).collect()).collect())
}

/// Max residual of the velocity-definition rows `τ²/4 u̇ − τ/2 u` (RT0-tested).
pub fn velocity_residual(state_k: &State, state_k1: &State, sys: &BlockSystem) -> Result<f64> {
    let g = history_rhs(sys, &state_k.y)?;
    let ay = sys.a.matvec(&state_k1.y);
    let l = &sys.layout;
    let mut rows: Vec<usize> = l.udot().collect();
    for i in 0..l.n {
        rows.extend(l.vdot(i));
    }
    Ok(rows.into_iter().fold(0.0f64, |m, r| m.max((ay[r] - g[r]).abs())))
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub initial: State,
    pub final_state: State,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl Trajectory {
    pub const CSV_HEADER: &'static str = "step,t,iterations,residual,mass_residual_max,w_norm";

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for d in &self.diagnostics {
            writeln!(
                w,
                "{},{:.12e},{},{:.6e},{:.6e},{:.12e}",
                d.step, d.time, d.iterations, d.residual, d.mass_residual_max, d.w_norm
            )?;
        }
        Ok(())
    }
}

pub fn run(
    mesh: &Mesh,
    params: &MpetParameters,
    loads: &LoadSpec,
    data: &InitialData,
    n_steps: usize,
    kind: SolverKind,
) -> Result<Trajectory> {
    let sys = assemble_operator_with(mesh, params, &DgConfig::default())?;
    let initial = initial_state(mesh, &sys, data)?;
    if n_steps == 0 {
        return Ok(Trajectory { final_state: initial.clone(), initial, diagnostics: Vec::new() });
    }
    let stepper = TimeStepper::new(mesh, sys, loads.clone(), kind)?;
    run_with(&stepper, initial, n_steps)
}

pub fn run_with(stepper: &TimeStepper, initial: State, n_steps: usize) -> Result<Trajectory> {
    let mut s = initial.clone();
    let mut diagnostics = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        s = stepper.step(&s)?;
        diagnostics.push(s.diagnostics.unwrap());
        log::debug!("step {} t = {:.6} |y|_W = {:.6e}", s.step, s.time, diagnostics.last().unwrap().w_norm);
    }
    Ok(Trajectory { initial, final_state: s, diagnostics })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub taus: Vec<f64>,
    /// `‖y_τk − y_τ(k+1)‖_W` at the final time, measured in the finest-τ norm.
    pub differences: Vec<f64>,
    /// Rates from consecutive difference pairs.
    pub rates: Vec<f64>,
    /// Least-squares slope of log(difference) against log(τ).
    pub fitted_rate: f64,
    /// Differences at round-off level: the scheme is exact for the data.
    pub exact: bool,
    pub warning: Option<String>,
}

impl ConvergenceReport {
    /// Observed order from the three coarsest resolutions.
    pub fn rate(&self) -> f64 {
        self.rates.first().copied().unwrap_or(f64::NAN)
    }
}

pub fn run_convergence(
    mesh: &Mesh,
    params: &MpetParameters,
    loads: &LoadSpec,
    data: &InitialData,
    taus: &[f64],
    kind: SolverKind,
) -> Result<ConvergenceReport> {
    if taus.len() < 3 {
        return Err(MpetError::Parameter("self-convergence needs at least three step sizes".into()));
    }
    let q = taus[0] / taus[1];
    for w in taus.windows(2) {
        if !(w[1] > 0.0) || ((w[0] / w[1]) - q).abs() > 1e-9 * q || q <= 1.0 {
            return Err(MpetError::Parameter(format!("step sizes {taus:?} are not a decreasing geometric sequence")));
        }
    }
    let t_final = params.t_final;
    let mut finals = Vec::new();
    let mut norm_sys = None;
    for &tau in taus {
        let steps = (t_final / tau).round() as usize;
        if steps == 0 || ((steps as f64) * tau - t_final).abs() > 1e-9 * t_final.max(tau) {
            return Err(MpetError::Parameter(format!("tau = {tau} does not divide T = {t_final}")));
        }
        let mut p = params.clone();
        p.tau = tau;
        p.t_final = steps as f64 * tau;
        let sys = assemble_operator_with(mesh, &p, &DgConfig::default())?;
        let init = initial_state(mesh, &sys, data)?;
        let stepper = TimeStepper::new(mesh, sys, loads.clone(), kind)?;
        let traj = run_with(&stepper, init, steps)?;
        finals.push(traj.final_state.y);
        norm_sys = Some(stepper.system);
    }
    let sys = norm_sys.unwrap();
    let differences: Vec<f64> = finals
        .windows(2)
        .map(|w| {
            let d: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| a - b).collect();
            w_norm(&sys, &d)
        })
        .collect();
    let scale = finals.iter().map(|y| w_norm(&sys, y)).fold(0.0f64, f64::max);
    let exact = differences.iter().all(|&d| d <= 1e-11 * scale.max(1e-300) || d < 1e-14);
    let rates: Vec<f64> = differences.windows(2).map(|d| (d[0] / d[1]).ln() / q.ln()).collect();
    let xs: Vec<f64> = taus[..differences.len()].iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = differences.iter().map(|d| d.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / xs.len() as f64, ys.iter().sum::<f64>() / ys.len() as f64);
    let fitted_rate = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let warning = if exact {
        Some("differences are at round-off level; the observed rate is meaningless".to_string())
    } else if rates.iter().any(|r| !r.is_finite())
        || rates.iter().fold(f64::NEG_INFINITY, |m, &r| m.max(r)) - rates.iter().fold(f64::INFINITY, |m, &r| m.min(r)) > 0.3
    {
        Some(format!("erratic rates {rates:?}; the data may not be smooth enough"))
    } else {
        None
    };
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(ConvergenceReport { taus: taus.to_vec(), differences, rates, fitted_rate, exact, warning })
}
