//! Parameter-robustness sweeps and measured finite element constants.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_from_operators, SpaceOperators};
use crate::error::{MpetError, Result};
use crate::fem::{dg_grams, DgConfig};
use crate::mesh::build_structured_mesh;
use crate::model::MpetParameters;
use crate::solver::{generalized_eigenvalues, minres_with_operator, spectrum_of, BlockPreconditioner};

/// Cartesian sweep grid. Every list is one axis; scalars are fixed settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Structured `(m, m)` meshes.
    pub mesh: Vec<usize>,
    pub n: Vec<usize>,
    pub mu: Vec<f64>,
    pub lambda: Vec<f64>,
    pub k: Vec<f64>,
    pub c_p: Vec<f64>,
    pub beta_tilde: Vec<f64>,
    pub tau: Vec<f64>,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    /// Dense pencil eigenvalues per point.
    pub spectrum: bool,
    /// Preconditioned MINRES per point.
    pub minres: bool,
    /// Replace `A` by `W` (sanity check: κ = 1, one iteration).
    pub identity_hook: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            mesh: vec![4],
            n: vec![1],
            mu: vec![1.0],
            lambda: vec![1.0],
            k: vec![1.0],
            c_p: vec![1.0],
            beta_tilde: vec![0.0],
            tau: vec![0.1],
            seed: 7,
            tol: 1e-8,
            max_iter: 1000,
            spectrum: true,
            minres: true,
            identity_hook: false,
        }
    }
}

impl SweepConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s).map_err(|e| MpetError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let axes: [(&str, usize); 8] = [
            ("mesh", self.mesh.len()),
            ("n", self.n.len()),
            ("mu", self.mu.len()),
            ("lambda", self.lambda.len()),
            ("k", self.k.len()),
            ("c_p", self.c_p.len()),
            ("beta_tilde", self.beta_tilde.len()),
            ("tau", self.tau.len()),
        ];
        if let Some((name, _)) = axes.iter().find(|(_, l)| *l == 0) {
            return Err(MpetError::Config(format!("sweep axis `{name}` is empty")));
        }
        if self.mesh.contains(&0) || self.n.contains(&0) {
            return Err(MpetError::Config("mesh sizes and n must be positive".into()));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(MpetError::Config(format!("tol = {} must lie in (0, 1)", self.tol)));
        }
        Ok(())
    }

    /// Sweep points in a fixed order (`mesh` outermost, `tau` innermost).
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for &nx in &self.mesh {
            for &n in &self.n {
                for &mu in &self.mu {
                    for &lambda in &self.lambda {
                        for &k in &self.k {
                            for &c_p in &self.c_p {
                                for &beta in &self.beta_tilde {
                                    for &tau in &self.tau {
                                        let mut p = MpetParameters::default_for(n).with_uniform_networks(k, c_p, beta);
                                        p.mu = mu;
                                        p.lambda = lambda;
                                        p.tau = tau;
                                        p.t_final = tau;
                                        out.push(SweepPoint { index: out.len(), nx, params: p });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub index: usize,
    pub nx: usize,
    pub params: MpetParameters,
}

/// One sweep row. Quantities that were not computed are NaN; failures are
/// recorded in `error` and the sweep continues.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub index: usize,
    pub nx: usize,
    pub n: usize,
    pub mu: f64,
    pub lambda: f64,
    pub k: f64,
    pub c_p: f64,
    pub beta_tilde: f64,
    pub tau: f64,
    pub dofs: usize,
    pub kappa: f64,
    pub min_abs: f64,
    pub max_abs: f64,
    pub iterations: Option<usize>,
    pub converged: bool,
    pub error: String,
}

impl StabilityReport {
    pub const CSV_HEADER: &'static str =
        "index,nx,n,mu,lambda,k,c_p,beta_tilde,tau,dofs,kappa,min_abs_xi,max_abs_xi,iterations,converged,error";

    fn csv_line(&self) -> String {
        let it = self.iterations.map(|i| i.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{:.12e},{:.12e},{:.12e},{},{},{}",
            self.index,
            self.nx,
            self.n,
            self.mu,
            self.lambda,
            self.k,
            self.c_p,
            self.beta_tilde,
            self.tau,
            self.dofs,
            self.kappa,
            self.min_abs,
            self.max_abs,
            it,
            self.converged,
            self.error.replace([',', '\n'], ";")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<StabilityReport>,
}

impl SweepTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", StabilityReport::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(w, "{}", r.csv_line())?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii csv")
    }

    pub fn failures(&self) -> impl Iterator<Item = &StabilityReport> {
        self.rows.iter().filter(|r| !r.error.is_empty())
    }

    /// `max κ / min κ` over rows with a computed spectrum.
    pub fn kappa_spread(&self) -> f64 {
        spread(self.rows.iter().map(|r| r.kappa))
    }

    /// `max / min` of MINRES iteration counts.
    pub fn iteration_spread(&self) -> f64 {
        spread(self.rows.iter().filter_map(|r| r.iterations.map(|i| i.max(1) as f64)))
    }

    pub fn max_iterations(&self) -> Option<usize> {
        self.rows.iter().filter_map(|r| r.iterations).max()
    }

    pub fn min_inf_sup(&self) -> f64 {
        self.rows.iter().map(|r| r.min_abs).filter(|x| x.is_finite()).fold(f64::INFINITY, f64::min)
    }
}

fn spread(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values
        .filter(|x| x.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if lo.is_finite() { hi / lo } else { f64::NAN }
}

/// Runs every sweep point, in parallel on `jobs` threads (rayon's default
/// when `None`). Row order and values do not depend on `jobs`.
pub fn sweep(config: &SweepConfig, jobs: Option<usize>) -> Result<SweepTable> {
    config.validate()?;
    let dg = DgConfig::default();
    let mut ops = BTreeMap::new();
    for &nx in &config.mesh {
        let mesh = build_structured_mesh(nx, nx)?;
        ops.insert(nx, SpaceOperators::new(&mesh, &dg)?);
    }
    let points = config.points();
    let run = || points.par_iter().map(|p| sweep_point(config, &ops[&p.nx], &dg, p)).collect::<Vec<_>>();
    let rows = match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| MpetError::Config(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    Ok(SweepTable { rows })
}

fn sweep_point(config: &SweepConfig, ops: &SpaceOperators, dg: &DgConfig, point: &SweepPoint) -> StabilityReport {
    let p = &point.params;
    let mut row = StabilityReport {
        index: point.index,
        nx: point.nx,
        n: p.n,
        mu: p.mu,
        lambda: p.lambda,
        k: p.k[0],
        c_p: p.c_p[0],
        beta_tilde: if p.n > 1 { p.beta_tilde[0][1] } else { 0.0 },
        tau: p.tau,
        dofs: 0,
        kappa: f64::NAN,
        min_abs: f64::NAN,
        max_abs: f64::NAN,
        iterations: None,
        converged: false,
        error: String::new(),
    };
    if let Err(e) = fill_point(config, ops, dg, point, &mut row) {
        log::warn!("sweep point {} failed: {e}", point.index);
        row.error = e.to_string();
    }
    row
}

fn fill_point(
    config: &SweepConfig,
    ops: &SpaceOperators,
    dg: &DgConfig,
    point: &SweepPoint,
    row: &mut StabilityReport,
) -> Result<()> {
    let sys = assemble_from_operators(ops.clone(), &point.params, dg)?;
    row.dofs = sys.layout.total();
    let a = if config.identity_hook { &sys.w } else { &sys.a };
    if config.spectrum {
        let s = spectrum_of(&sys, a)?;
        row.kappa = s.kappa;
        row.min_abs = s.min_abs;
        row.max_abs = s.max_abs;
    }
    if config.minres {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut rhs: Vec<f64> = (0..row.dofs).map(|_| rng.random_range(-1.0..1.0)).collect();
        sys.projector.project_dual(&mut rhs);
        let pc = BlockPreconditioner::new(&sys)?;
        let (_, stats) = minres_with_operator(a, &sys, &pc, &rhs, config.tol, config.max_iter)?;
        row.iterations = Some(stats.iterations);
        row.converged = stats.converged;
    }
    Ok(())
}

/// Measured constants of the discrete Korn, continuity, Poincaré, inf-sup
/// and coercivity estimates on one mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FemConstants {
    pub nx: usize,
    pub h: f64,
    /// `max ‖u‖²_DG / ‖u‖²_{1,h}`
    pub c0: f64,
    /// `min ‖u‖²_h / ‖u‖²_DG`
    pub c1: f64,
    /// `max |a_h(u,w)| / (‖u‖_DG ‖w‖_DG)`
    pub c2: f64,
    /// `max ‖u‖² / ‖u‖²_{1,h}`
    pub c3: f64,
    /// `min a_h(u,u) / ‖u‖²_h`
    pub alpha_a: f64,
    /// `inf_q sup_u (div u, q) / (‖u‖_{1,h} ‖q‖)`, zero-mean `q`
    pub beta_s: f64,
    /// `inf_q sup_v (div v, q) / (‖v‖_div ‖q‖)`, zero-mean `q`
    pub beta_v: f64,
}

impl FemConstants {
    pub const NAMES: [&'static str; 7] = ["c0", "c1", "c2", "c3", "alpha_a", "beta_s", "beta_v"];

    pub fn values(&self) -> [f64; 7] {
        [self.c0, self.c1, self.c2, self.c3, self.alpha_a, self.beta_s, self.beta_v]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FemConstantsReport {
    pub eta: f64,
    pub rows: Vec<FemConstants>,
}

impl FemConstantsReport {
    /// Relative variation `max/min − 1` of a constant across meshes.
    pub fn variation(&self, name: &str) -> Option<f64> {
        let k = FemConstants::NAMES.iter().position(|n| *n == name)?;
        Some(spread(self.rows.iter().map(|r| r.values()[k])) - 1.0)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "nx,h,{}", FemConstants::NAMES.join(","))?;
        for r in &self.rows {
            let v: Vec<String> = r.values().iter().map(|x| format!("{x:.12e}")).collect();
            writeln!(w, "{},{:.12e},{}", r.nx, r.h, v.join(","))?;
        }
        let v: Vec<String> =
            FemConstants::NAMES.iter().map(|n| format!("{:.6e}", self.variation(n).unwrap())).collect();
        writeln!(w, "variation,,{}", v.join(","))
    }
}

pub fn measure_fem_constants(sizes: &[usize], dg: &DgConfig) -> Result<FemConstantsReport> {
    dg.validate()?;
    let rows = sizes.iter().map(|&nx| fem_constants(nx, dg)).collect::<Result<_>>()?;
    Ok(FemConstantsReport { eta: dg.eta, rows })
}

pub fn fem_constants(nx: usize, dg: &DgConfig) -> Result<FemConstants> {
    let mesh = build_structured_mesh(nx, nx)?;
    let ops = SpaceOperators::new(&mesh, dg)?;
    let g = dg_grams(&mesh, &ops.bdm)?;
    let h_norm = g.h_norm().to_dense();
    let one_h = g.one_h_norm().to_dense();
    // for BDM1 the broken second derivatives vanish: ‖·‖_DG = ‖·‖_{1,h}
    let dg_norm = one_h.clone();
    let a_h = ops.a_h.to_dense();
    let mass = ops.m_bb.to_dense();

    let c0 = *generalized_eigenvalues(&dg_norm, &one_h)?.last().unwrap();
    let c1 = generalized_eigenvalues(&h_norm, &dg_norm)?[0];
    let c2 = generalized_eigenvalues(&a_h, &dg_norm)?.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let c3 = *generalized_eigenvalues(&mass, &one_h)?.last().unwrap();
    let alpha_a = generalized_eigenvalues(&a_h, &h_norm)?[0];

    let div = ops.div.to_dense();
    let beta_s = inf_sup(&div, &one_h, &ops.areas)?;
    let div_norm = &mass + ops.div_div.to_dense();
    let beta_v = inf_sup(&div, &div_norm, &ops.areas)?;
    Ok(FemConstants { nx, h: mesh.max_diameter(), c0, c1, c2, c3, alpha_a, beta_s, beta_v })
}

/// `inf_q sup_u (Bu, q) / (‖u‖_G ‖q‖)` over zero-mean P0 `q`: the square root of the
/// smallest eigenvalue of `B G⁻¹ Bᵀ` against the P0 mass on the zero-mean space.
fn inf_sup(b: &DMatrix<f64>, g: &DMatrix<f64>, areas: &[f64]) -> Result<f64> {
    let chol = g.clone().cholesky().ok_or_else(|| MpetError::Singular("norm Gram is not positive definite".into()))?;
    let s = b * chol.solve(&b.transpose());
    // q = M^{-1/2} y with y ⟂ M^{1/2}·1: reduce to S̃ = M^{-1/2} S M^{-1/2} and deflate.
    let m = areas.len();
    let isq: Vec<f64> = areas.iter().map(|a| 1.0 / a.sqrt()).collect();
    let st = DMatrix::from_fn(m, m, |i, j| s[(i, j)] * isq[i] * isq[j]);
    let total: f64 = areas.iter().sum();
    let e = nalgebra::DVector::from_iterator(m, areas.iter().map(|a| (a / total).sqrt()));
    let proj = DMatrix::identity(m, m) - &e * e.transpose();
    let sp = &proj * st * &proj;
    let mut ev: Vec<f64> = sp.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    // the deflated constant contributes the one (near-)zero eigenvalue
    Ok(ev[1].max(0.0).sqrt())
}

/// Extremes of `‖u‖_h / ‖u‖_DG` over random coefficient vectors.
pub fn korn_ratio_range(nx: usize, samples: usize, seed: u64) -> Result<(f64, f64)> {
    let mesh = build_structured_mesh(nx, nx)?;
    let ops = SpaceOperators::new(&mesh, &DgConfig::default())?;
    let g = dg_grams(&mesh, &ops.bdm)?;
    let (h, d) = (g.h_norm(), g.one_h_norm());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut range = (f64::INFINITY, 0.0f64);
    for _ in 0..samples {
        let u: Vec<f64> = (0..ops.bdm.n_dofs).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = (h.bilinear(&u, &u) / d.bilinear(&u, &u)).sqrt();
        range = (range.0.min(r), range.1.max(r));
    }
    Ok(range)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaSummary {
    pub draws: usize,
    pub passed: usize,
    /// First few counterexamples, with the offending inputs.
    pub failures: Vec<String>,
}

/// Randomized determinant identities and G-matrix bounds. Each draw checks
/// both closed-form determinants against dense LU and one random admissible
/// parameter set against the G-matrix bounds.
pub fn randomized_lemma_checks(draws: usize, seed: u64) -> LemmaSummary {
    use crate::model::{derive_coefficients, g_matrix_checks, lemma3_det, lemma4_det};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut passed = 0;
    let mut failures = Vec::new();
    for draw in 0..draws {
        let n = rng.random_range(1..=8);
        let a: f64 = rng.random_range(-2.0..2.0);
        let c: f64 = rng.random_range(-2.0..2.0);
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut problems = Vec::new();

        let mut m3 = DMatrix::zeros(n, n);
        for j in 0..n {
            m3[(0, j)] = -b[j];
        }
        for i in 1..n {
            m3[(i, i - 1)] = a;
        }
        let d3 = m3.lu().determinant();
        let s3 = a.abs().powi(n as i32 - 1) * b[n - 1].abs();
        if (lemma3_det(a, &b) - d3).abs() > 1e-10 * s3.max(f64::MIN_POSITIVE) {
            problems.push(format!("lemma3 a={a} b={b:?}: {} vs {d3}", lemma3_det(a, &b)));
        }

        let mut m4 = DMatrix::identity(n + 1, n + 1) * a;
        m4[(0, 0)] = c;
        for i in 0..n {
            m4[(0, i + 1)] = -b[i];
            m4[(i + 1, 0)] = -b[i];
        }
        let d4 = m4.lu().determinant();
        let s4 = a.abs().powi(n as i32 - 1) * ((a * c).abs() + b.iter().map(|x| x * x).sum::<f64>());
        if (lemma4_det(c, a, &b) - d4).abs() > 1e-10 * s4.max(f64::MIN_POSITIVE) {
            problems.push(format!("lemma4 c={c} a={a} b={b:?}: {} vs {d4}", lemma4_det(c, a, &b)));
        }

        let p = MpetParameters::random_admissible(&mut rng, n);
        if let Err(e) = derive_coefficients(&p).and_then(|d| g_matrix_checks(&p, &d)) {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            passed += 1;
        } else if failures.len() < 5 {
            failures.push(format!("draw {draw}: {}", problems.join("; ")));
        }
    }
    LemmaSummary { draws, passed, failures }
}
