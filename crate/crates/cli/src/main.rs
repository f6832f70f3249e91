//! `mpet`: command-line driver for the MPET discretization, solvers and
//! stability experiments.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mpet_core::assembly::export_matrices;
use mpet_core::timestep::{initial_state, run_with};
use mpet_core::*;
use nalgebra::DMatrix;

type CliResult<T> = std::result::Result<T, Failure>;

const CONFIG_DIR_ENV: &str = "MPET_CONFIG_DIR";

#[derive(Parser)]
#[command(name = "mpet", version, about = "MPET poroelasticity solver and stability lab")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Only log errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print derived coefficients and the Λ matrices for a parameter file.
    Derive {
        #[command(flatten)]
        params: ParamArgs,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Randomized determinant identities and G-matrix bounds.
    Lemmas {
        #[arg(long, default_value_t = 1000)]
        draws: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Export A, W, B_uv, B_p as Matrix Market files plus a block sidecar.
    Assemble {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        mesh: MeshArgs,
        /// Output directory.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// One time step from smooth initial data.
    Solve {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        mesh: MeshArgs,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// A trajectory; per-step diagnostics as CSV.
    Run {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        mesh: MeshArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Number of steps (default: T/τ).
        #[arg(long)]
        steps: Option<usize>,
        /// CSV file (default: stdout).
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Parameter-robustness sweep; one CSV row per grid point.
    Sweep {
        /// Sweep TOML (default: sweep_default.toml in the config directory).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// CSV file (default: stdout).
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Measured Korn, continuity, Poincaré, inf-sup and coercivity constants.
    Constants {
        /// Structured mesh sizes.
        #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
        meshes: Vec<usize>,
        /// Interior-penalty parameter.
        #[arg(long, default_value_t = 10.0)]
        eta: f64,
        /// Fail when a tracked constant varies by this fraction or more.
        #[arg(long, default_value_t = 0.3)]
        max_variation: f64,
    },
    /// Temporal self-convergence over a geometric list of step sizes.
    ConvergeTime {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        mesh: MeshArgs,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.025,0.0125")]
        taus: Vec<f64>,
        /// Fail unless the observed order lies within 0.2 of this value.
        #[arg(long)]
        expect_order: Option<f64>,
    },
}

#[derive(Args)]
struct ParamArgs {
    /// Parameter TOML. Relative paths that do not exist are looked up in
    /// $MPET_CONFIG_DIR (default `./configs`).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Networks for the built-in reference parameters (when --params is absent).
    #[arg(long, default_value_t = 1)]
    networks: usize,
}

#[derive(Args)]
struct MeshArgs {
    /// Structured (m, m) mesh of the unit square.
    #[arg(long, default_value_t = 4)]
    mesh: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverChoice {
    Direct,
    Minres,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, value_enum, default_value_t = SolverChoice::Direct)]
    solver: SolverChoice,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
}

impl SolverArgs {
    fn kind(&self) -> SolverKind {
        match self.solver {
            SolverChoice::Direct => SolverKind::Direct,
            SolverChoice::Minres => SolverKind::Minres { tol: self.tol, max_iter: self.max_iter },
        }
    }
}

/// Errors the CLI distinguishes by exit code.
enum Failure {
    /// stdout closed by the reader (e.g. `| head`)
    Pipe,
    Usage(String),
    Check(String),
}

impl From<MpetError> for Failure {
    fn from(e: MpetError) -> Self {
        match e {
            MpetError::Config(_) | MpetError::Parameter(_) | MpetError::Io(_) => Failure::Usage(e.to_string()),
            _ => Failure::Check(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::BrokenPipe {
            return Failure::Pipe;
        }
        Failure::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let result = dispatch(cli.command, &mut out).and_then(|()| Ok(out.flush()?));
    match result {
        Ok(()) | Err(Failure::Pipe) => ExitCode::SUCCESS,
        Err(Failure::Check(m)) => {
            log::error!("{m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            log::error!("{m}");
            ExitCode::from(2)
        }
    }
}

fn resolve(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        return path.to_path_buf();
    }
    let dir = std::env::var_os(CONFIG_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("configs"));
    dir.join(path)
}

fn read(path: &Path) -> CliResult<String> {
    let p = resolve(path);
    std::fs::read_to_string(&p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))
}

fn load_params(a: &ParamArgs) -> CliResult<MpetParameters> {
    match &a.params {
        Some(p) => Ok(MpetParameters::from_toml_str(&read(p)?)?),
        None if a.networks == 0 => Err(Failure::Usage("--networks must be positive".into())),
        None => Ok(MpetParameters::default_for(a.networks)),
    }
}

fn output<'a>(path: &Option<PathBuf>, stdout: &'a mut dyn Write) -> CliResult<Box<dyn Write + 'a>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(stdout),
    })
}

/// Short decimal for moderate magnitudes, scientific otherwise.
fn num(x: f64) -> String {
    if x == 0.0 || (1e-4..1e6).contains(&x.abs()) {
        let s = format!("{x:.10}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" { "0".into() } else { s.to_string() }
    } else {
        format!("{x:.6e}")
    }
}

/// Rows of an `n × m` matrix given by an accessor, one line per row.
fn fmt_matrix(n: usize, m: usize, at: impl Fn(usize, usize) -> f64) -> String {
    (0..n)
        .map(|i| {
            let row: Vec<String> = (0..m).map(|j| format!("{:>14}", num(at(i, j)))).collect();
            format!("  [{}]", row.join(" "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> CliResult<()> {
    match cmd {
        Command::Derive { params, json } => derive(&load_params(&params)?, json, out),
        Command::Lemmas { draws, seed } => {
            let s = randomized_lemma_checks(draws, seed);
            writeln!(out, "{}/{} passed", s.passed, s.draws)?;
            if s.passed == s.draws {
                Ok(())
            } else {
                Err(Failure::Check(s.failures.join("\n")))
            }
        }
        Command::Assemble { params, mesh, out: dir } => {
            let m = build_structured_mesh(mesh.mesh, mesh.mesh)?;
            let sys = assemble_operator(&m, &load_params(&params)?)?;
            export_matrices(&sys, &dir)?;
            writeln!(out, "wrote {} DOFs to {}", sys.layout.total(), dir.display())?;
            Ok(())
        }
        Command::Solve { params, mesh, solver } => {
            let p = load_params(&params)?;
            let m = build_structured_mesh(mesh.mesh, mesh.mesh)?;
            let sys = assemble_operator(&m, &p)?;
            let init = initial_state(&m, &sys, &InitialData::smooth(p.n))?;
            let st = TimeStepper::new(&m, sys, LoadSpec::smooth_trig(p.n), solver.kind())?;
            let next = st.step(&init)?;
            let d = next.diagnostics.expect("step diagnostics");
            writeln!(out, "dofs,iterations,residual,mass_residual_max,velocity_residual_max,w_norm")?;
            writeln!(out, 
                "{},{},{:.6e},{:.6e},{:.6e},{:.12e}",
                next.layout.total(),
                d.iterations,
                d.residual,
                d.mass_residual_max,
                d.velocity_residual_max,
                d.w_norm
            )?;
            Ok(())
        }
        Command::Run { params, mesh, solver, steps, out: out_path } => {
            let mut p = load_params(&params)?;
            let steps = steps.unwrap_or_else(|| (p.t_final / p.tau).round() as usize);
            p.t_final = p.t_final.max(steps as f64 * p.tau);
            let m = build_structured_mesh(mesh.mesh, mesh.mesh)?;
            let sys = assemble_operator(&m, &p)?;
            let init = initial_state(&m, &sys, &InitialData::smooth(p.n))?;
            let st = TimeStepper::new(&m, sys, LoadSpec::smooth_trig(p.n), solver.kind())?;
            let traj = run_with(&st, init, steps)?;
            let mut w = output(&out_path, out)?;
            traj.write_csv(&mut w)?;
            w.flush()?;
            Ok(())
        }
        Command::Sweep { config, jobs, seed, out: out_path } => {
            let path = config.unwrap_or_else(|| PathBuf::from("sweep_default.toml"));
            let mut cfg = SweepConfig::from_toml_str(&read(&path)?)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let table = sweep(&cfg, jobs)?;
            let mut w = output(&out_path, out)?;
            table.write_csv(&mut w)?;
            w.flush()?;
            let failed = table.failures().count();
            log::info!(
                "{} points, kappa spread {:.3}, iteration spread {:.3}",
                table.rows.len(),
                table.kappa_spread(),
                table.iteration_spread()
            );
            if failed > 0 {
                return Err(Failure::Check(format!("{failed} sweep points failed")));
            }
            if table.rows.iter().any(|r| r.min_abs.is_finite() && r.min_abs <= 0.0) {
                return Err(Failure::Check("a sweep point has min |xi| = 0".into()));
            }
            Ok(())
        }
        Command::Constants { meshes, eta, max_variation } => {
            if meshes.is_empty() || meshes.contains(&0) {
                return Err(Failure::Usage("--meshes needs positive sizes".into()));
            }
            let dg = DgConfig { eta, ..DgConfig::default() };
            let r = measure_fem_constants(&meshes, &dg)?;
            r.write_csv(&mut *out)?;
            let mut bad = Vec::new();
            for name in ["c3", "alpha_a", "beta_s", "beta_v"] {
                let k = FemConstants::NAMES.iter().position(|n| *n == name).unwrap();
                if r.rows.iter().any(|row| !(row.values()[k] > 0.0)) {
                    bad.push(format!("{name} not positive"));
                }
                let v = r.variation(name).unwrap();
                if !(v < max_variation) {
                    bad.push(format!("{name} varies by {:.1}%", 100.0 * v));
                }
            }
            if bad.is_empty() { Ok(()) } else { Err(Failure::Check(bad.join(", "))) }
        }
        Command::ConvergeTime { params, mesh, taus, expect_order } => {
            let p = load_params(&params)?;
            let m = build_structured_mesh(mesh.mesh, mesh.mesh)?;
            let r = run_convergence(&m, &p, &LoadSpec::smooth_trig(p.n), &InitialData::smooth(p.n), &taus, SolverKind::Direct)?;
            writeln!(out, "tau,difference_w,rate")?;
            for (i, d) in r.differences.iter().enumerate() {
                let rate = if i == 0 { String::new() } else { format!("{:.6}", r.rates[i - 1]) };
                writeln!(out, "{:.6e},{:.12e},{rate}", r.taus[i], d)?;
            }
            writeln!(out, "# observed order {:.4}, fitted {:.4}", r.rate(), r.fitted_rate)?;
            if let Some(w) = &r.warning {
                writeln!(out, "# warning: {w}")?;
            }
            match expect_order {
                Some(q) if !((r.rate() - q).abs() <= 0.2) => {
                    Err(Failure::Check(format!("observed order {:.3} differs from {q}", r.rate())))
                }
                _ => Ok(()),
            }
        }
    }
}

fn derive(p: &MpetParameters, json: bool, out: &mut dyn Write) -> CliResult<()> {
    let d = derive_coefficients(p)?;
    let w = build_norm_weights(p, &d)?;
    if json {
        let v = serde_json::json!({
            "parameters": p,
            "derived": d,
            "lambda1": rows(&w.lambda1),
            "lambda2": rows(&w.lambda2),
            "lambda3": rows(&w.lambda3),
            "lambda": rows(&w.lambda),
            "lambda_uv": rows(&w.lambda_uv),
        });
        writeln!(out, "{}", serde_json::to_string_pretty(&v).expect("serializable"))?;
        return Ok(());
    }
    let n = p.n;
    for i in 0..n {
        writeln!(out, "alpha_{} = {}", i + 1, num(d.alpha[i]))?;
    }
    for i in 0..n {
        writeln!(out, "gamma_{} = {}", i + 1, num(d.gamma[i]))?;
    }
    writeln!(out, "gamma_u = {}", num(d.gamma_u))?;
    for i in 0..n {
        writeln!(out, "gamma_v{} = {}", i + 1, num(d.gamma_v[i]))?;
    }
    writeln!(out, "gamma = {}", num(d.gamma_max))?;
    writeln!(out, "beta =\n{}", fmt_matrix(n, n, |i, j| d.beta[i][j]))?;
    for (name, m) in [("Lambda1", &w.lambda1), ("Lambda2", &w.lambda2), ("Lambda3", &w.lambda3), ("Lambda", &w.lambda)] {
        writeln!(out, "{name} =\n{}", fmt_matrix(n, n, |i, j| m[(i, j)]))?;
    }
    let k = w.lambda_uv.nrows();
    writeln!(out, "Lambda_uv =\n{}", fmt_matrix(k, k, |i, j| w.lambda_uv[(i, j)]))?;
    writeln!(out, "cond(Lambda) = {}", num(w.lambda_condition))?;
    Ok(())
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}
