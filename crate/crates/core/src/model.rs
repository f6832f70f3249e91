//! Physical and scheme parameters, the derived time-stepping coefficients,
//! the Λ-family of norm weights, and the small-matrix determinant lemmas.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MpetError, Result};

/// All physical and scheme coefficients. Per-network vectors have length `n`;
/// `beta_tilde` is a symmetric `n×n` transfer matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MpetParameters {
    pub n: usize,
    pub mu: f64,
    pub lambda: f64,
    pub rho_s: f64,
    pub phi: Vec<f64>,
    pub rho: Vec<f64>,
    pub rho_m: Vec<f64>,
    pub k: Vec<f64>,
    pub alpha_tilde: Vec<f64>,
    pub c_p: Vec<f64>,
    pub beta_tilde: Vec<Vec<f64>>,
    pub tau: f64,
    pub t_final: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum PerNetwork {
    Scalar(f64),
    List(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Transfer {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParameters {
    n: usize,
    mu: f64,
    lambda: f64,
    rho_s: f64,
    phi: PerNetwork,
    rho: PerNetwork,
    rho_m: PerNetwork,
    k: PerNetwork,
    alpha_tilde: PerNetwork,
    c_p: PerNetwork,
    #[serde(default)]
    beta_tilde: Option<Transfer>,
    tau: f64,
    #[serde(default)]
    t_final: Option<f64>,
}

fn expand(name: &str, v: PerNetwork, n: usize) -> Result<Vec<f64>> {
    match v {
        PerNetwork::Scalar(x) => Ok(vec![x; n]),
        PerNetwork::List(l) if l.len() == n => Ok(l),
        PerNetwork::List(l) => Err(MpetError::Parameter(format!("{name} has {} entries, expected n = {n}", l.len()))),
    }
}

fn uniform_transfer(n: usize, b: f64) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { b }).collect()).collect()
}

impl<'de> Deserialize<'de> for MpetParameters {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawParameters::deserialize(d)?;
        MpetParameters::from_raw(raw).map_err(serde::de::Error::custom)
    }
}

impl MpetParameters {
    fn from_raw(r: RawParameters) -> Result<Self> {
        let n = r.n;
        let beta_tilde = match r.beta_tilde {
            None => uniform_transfer(n, 0.0),
            Some(Transfer::Scalar(b)) => uniform_transfer(n, b),
            Some(Transfer::Matrix(m)) => m,
        };
        let p = Self {
            n,
            mu: r.mu,
            lambda: r.lambda,
            rho_s: r.rho_s,
            phi: expand("phi", r.phi, n)?,
            rho: expand("rho", r.rho, n)?,
            rho_m: expand("rho_m", r.rho_m, n)?,
            k: expand("k", r.k, n)?,
            alpha_tilde: expand("alpha_tilde", r.alpha_tilde, n)?,
            c_p: expand("c_p", r.c_p, n)?,
            beta_tilde,
            tau: r.tau,
            t_final: r.t_final.unwrap_or(r.tau),
        };
        p.validate()?;
        Ok(p)
    }

    /// Parse a TOML parameter file. Per-network keys accept a scalar (same
    /// value for every network) or a list of length `n`; `beta_tilde`
    /// accepts a scalar (uniform off-diagonal) or a full matrix.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| MpetError::Config(e.to_string()))
    }

    /// Reference parameter set used by the test and sweep drivers.
    pub fn default_for(n: usize) -> Self {
        let phi = 0.4 / n as f64;
        Self {
            n,
            mu: 1.0,
            lambda: 1.0,
            rho_s: 1.0,
            phi: vec![phi; n],
            rho: vec![1.0; n],
            rho_m: vec![1.0 / phi; n],
            k: vec![1.0; n],
            alpha_tilde: vec![1.0; n],
            c_p: vec![1.0; n],
            beta_tilde: uniform_transfer(n, 0.0),
            tau: 0.1,
            t_final: 1.0,
        }
    }

    /// Same network data in every network; transfer uniform off the diagonal.
    pub fn with_uniform_networks(mut self, k: f64, c_p: f64, beta: f64) -> Self {
        self.k = vec![k; self.n];
        self.c_p = vec![c_p; self.n];
        self.beta_tilde = uniform_transfer(self.n, beta);
        self
    }

    /// A random admissible draw spanning many orders of magnitude.
    pub fn random_admissible<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Self {
        let logu = |rng: &mut R, lo: f64, hi: f64| 10f64.powf(rng.random_range(lo..hi));
        let total_phi = rng.random_range(0.05..0.95);
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let ws: f64 = w.iter().sum();
        let phi: Vec<f64> = w.iter().map(|x| total_phi * x / ws).collect();
        let rho: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
        let rho_m = (0..n).map(|i| rho[i] / phi[i] * (1.0 + rng.random_range(0.0..2.0))).collect();
        let alpha_tilde = phi.iter().map(|&p| rng.random_range(p..=1.0)).collect();
        let k = (0..n).map(|_| logu(rng, -8.0, 2.0)).collect();
        let c_p = (0..n).map(|_| if rng.random_bool(0.3) { 0.0 } else { logu(rng, -4.0, 1.0) }).collect();
        let mut beta_tilde = uniform_transfer(n, 0.0);
        for i in 0..n {
            for j in 0..i {
                let b = if rng.random_bool(0.3) { 0.0 } else { logu(rng, -3.0, 4.0) };
                beta_tilde[i][j] = b;
                beta_tilde[j][i] = b;
            }
        }
        Self {
            n,
            mu: logu(rng, -2.0, 4.0),
            lambda: if rng.random_bool(0.1) { 0.0 } else { logu(rng, -2.0, 8.0) },
            rho_s: rng.random_range(0.0..3.0),
            phi,
            rho,
            rho_m,
            k,
            alpha_tilde,
            c_p,
            beta_tilde,
            tau: logu(rng, -4.0, 0.0),
            t_final: 1.0,
        }
    }

    pub fn total_porosity(&self) -> f64 {
        self.phi.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MpetError::Parameter(m));
        let n = self.n;
        if n == 0 {
            return bad("network count n must be >= 1".into());
        }
        for (name, v) in [
            ("phi", &self.phi),
            ("rho", &self.rho),
            ("rho_m", &self.rho_m),
            ("k", &self.k),
            ("alpha_tilde", &self.alpha_tilde),
            ("c_p", &self.c_p),
        ] {
            if v.len() != n {
                return bad(format!("{name} has {} entries, expected n = {n}", v.len()));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return bad(format!("{name} contains a non-finite value"));
            }
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad(format!("mu must be positive, got {}", self.mu));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.rho_s >= 0.0 && self.rho_s.is_finite()) {
            return bad(format!("rho_s must be non-negative, got {}", self.rho_s));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return bad(format!("t_final must be non-negative, got {}", self.t_final));
        }
        let phi = self.total_porosity();
        if !(phi > 0.0 && phi < 1.0) {
            return bad(format!("total porosity sum(phi) = {phi} must lie in (0, 1)"));
        }
        for i in 0..n {
            let tag = |f: &str| format!("{f}[{i}]");
            if !(self.phi[i] > 0.0 && self.phi[i] < 1.0) {
                return bad(format!("{} = {} must lie in (0, 1)", tag("phi"), self.phi[i]));
            }
            if !(self.alpha_tilde[i] >= self.phi[i] && self.alpha_tilde[i] <= 1.0) {
                return bad(format!(
                    "{} = {} must satisfy phi[{i}] = {} <= alpha_tilde <= 1",
                    tag("alpha_tilde"),
                    self.alpha_tilde[i],
                    self.phi[i]
                ));
            }
            if self.rho[i] < 0.0 {
                return bad(format!("{} = {} must be non-negative", tag("rho"), self.rho[i]));
            }
            let min_rho_m = self.rho[i] / self.phi[i];
            if self.rho_m[i] < min_rho_m * (1.0 - 1e-12) {
                return bad(format!(
                    "{} = {} must be >= rho/phi = {min_rho_m}",
                    tag("rho_m"),
                    self.rho_m[i]
                ));
            }
            if !(self.k[i] > 0.0) {
                return bad(format!("{} = {} must be positive", tag("k"), self.k[i]));
            }
            if self.c_p[i] < 0.0 {
                return bad(format!("{} = {} must be non-negative", tag("c_p"), self.c_p[i]));
            }
        }
        if self.beta_tilde.len() != n || self.beta_tilde.iter().any(|r| r.len() != n) {
            return bad(format!("beta_tilde must be {n}x{n}"));
        }
        for i in 0..n {
            if self.beta_tilde[i][i] != 0.0 {
                return bad(format!(
                    "beta_tilde[{i}][{i}] = {} must be 0 (the diagonal is implied by the row sums)",
                    self.beta_tilde[i][i]
                ));
            }
            for j in 0..n {
                let b = self.beta_tilde[i][j];
                if !(b >= 0.0 && b.is_finite()) {
                    return bad(format!("beta_tilde[{i}][{j}] = {b} must be non-negative"));
                }
                if b != self.beta_tilde[j][i] {
                    return bad(format!("beta_tilde is not symmetric at ({i}, {j})"));
                }
            }
        }
        Ok(())
    }

    /// Graph Laplacian of the transfer matrix (row sums on the diagonal).
    pub fn transfer_laplacian(&self) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                (0..n).filter(|&l| l != i).map(|l| self.beta_tilde[i][l]).sum()
            } else {
                -self.beta_tilde[i][j]
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedCoefficients {
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    pub gamma_u: f64,
    pub gamma_v: Vec<f64>,
    /// `β_ij = τ³/8 β̃_ij` off the diagonal, `β_ii = Σ_{j≠i} τ³/8 β̃_ij + τ²/4 c_{p_i}`.
    pub beta: Vec<Vec<f64>>,
    /// `γ = max{τ²μ/2, τ²λ/4, γ_u}`
    pub gamma_max: f64,
    /// Solid-row density coefficient `(1−φ)ρ_s − Σ φ_i(ρ_i − φ_i ρ_{m_i})`.
    pub m11: f64,
    /// Cross density coefficients `ρ_i − φ_i ρ_{m_i}`.
    pub m12: Vec<f64>,
}

pub fn derive_coefficients(params: &MpetParameters) -> Result<DerivedCoefficients> {
    params.validate()?;
    let p = params;
    let n = p.n;
    let tau = p.tau;
    let phi = p.total_porosity();
    let alpha: Vec<f64> = (0..n).map(|i| p.alpha_tilde[i] - p.phi[i]).collect();
    let m12: Vec<f64> = (0..n).map(|i| p.rho[i] - p.phi[i] * p.rho_m[i]).collect();
    let gamma: Vec<f64> = (0..n).map(|i| -(m12[i] - tau / 2.0 * p.phi[i] / p.k[i])).collect();
    let gamma_u = (1.0 - phi) * p.rho_s + 1.0 + (0..n).map(|i| p.phi[i] * gamma[i]).sum::<f64>();
    let gamma_v: Vec<f64> = (0..n).map(|i| (p.rho[i] + gamma[i]) / p.phi[i] + 1.0).collect();
    for i in 0..n {
        let alt = p.rho_m[i] + tau / (2.0 * p.k[i]) + 1.0;
        if (gamma_v[i] - alt).abs() > 1e-13 * alt.abs() {
            return Err(MpetError::Verification(format!(
                "gamma_v[{i}] = {} disagrees with rho_m + tau/(2K) + 1 = {alt}",
                gamma_v[i]
            )));
        }
    }
    let t3 = tau.powi(3) / 8.0;
    let beta = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        (0..n).filter(|&l| l != i).map(|l| t3 * p.beta_tilde[i][l]).sum::<f64>()
                            + tau * tau / 4.0 * p.c_p[i]
                    } else {
                        t3 * p.beta_tilde[i][j]
                    }
                })
                .collect()
        })
        .collect();
    let m11 = (1.0 - phi) * p.rho_s - (0..n).map(|i| p.phi[i] * m12[i]).sum::<f64>();
    let gamma_max = (tau * tau * p.mu / 2.0).max(tau * tau * p.lambda / 4.0).max(gamma_u);
    Ok(DerivedCoefficients { alpha, gamma, gamma_u, gamma_v, beta, gamma_max, m11, m12 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormWeights {
    pub lambda1: DMatrix<f64>,
    pub lambda2: DMatrix<f64>,
    pub lambda3: DMatrix<f64>,
    pub lambda4: DMatrix<f64>,
    pub lambda: DMatrix<f64>,
    pub lambda_inv: DMatrix<f64>,
    /// Ordered `(u, v_1..v_n, u̇, v̇_1..v̇_n)`.
    pub lambda_uv: DMatrix<f64>,
    pub lambda_condition: f64,
}

pub fn build_norm_weights(params: &MpetParameters, d: &DerivedCoefficients) -> Result<NormWeights> {
    let n = params.n;
    let tau = params.tau;
    let lambda1 = params.transfer_laplacian() * (tau / 2.0) + DMatrix::from_diagonal(&params.c_p.clone().into());
    let lambda2 = DMatrix::from_fn(n, n, |i, j| if i == j { tau * tau / 4.0 / d.gamma_v[i] } else { 0.0 });
    let a = nalgebra::DVector::from_vec(d.alpha.clone());
    let lambda3 = &a * a.transpose() * (tau * tau / (4.0 * d.gamma_max));
    let lambda4 = DMatrix::from_element(n, n, 1.0);
    let lambda = &lambda1 + &lambda2 + &lambda3;
    let eig = SymmetricEigen::new(lambda.clone());
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(cond <= 1e15) {
        return Err(MpetError::Singular(format!(
            "network matrix Lambda is numerically singular: eigenvalues in [{lo:e}, {hi:e}], condition {cond:e}"
        )));
    }
    let lambda_inv = lambda.clone().try_inverse().ok_or_else(|| MpetError::Singular("Lambda not invertible".into()))?;
    let lambda_inv = (&lambda_inv + lambda_inv.transpose()) * 0.5;

    let m = 2 * n + 2;
    let mut uv = DMatrix::zeros(m, m);
    let (iu, iud) = (0, n + 1);
    uv[(iu, iu)] = d.gamma_u;
    uv[(iu, iud)] = -tau / 2.0;
    uv[(iud, iu)] = -tau / 2.0;
    uv[(iud, iud)] = tau * tau / 4.0;
    for i in 0..n {
        let (iv, ivd) = (1 + i, n + 2 + i);
        uv[(iu, iv)] = -d.gamma[i];
        uv[(iv, iu)] = -d.gamma[i];
        uv[(iv, iv)] = d.gamma_v[i];
        uv[(iv, ivd)] = -tau / 2.0;
        uv[(ivd, iv)] = -tau / 2.0;
        uv[(ivd, ivd)] = tau * tau / 4.0;
    }
    Ok(NormWeights { lambda1, lambda2, lambda3, lambda4, lambda, lambda_inv, lambda_uv: uv, lambda_condition: cond })
}

/// `det` of the matrix with first row `−b` and `a` on the subdiagonal.
pub fn lemma3_det(a: f64, b: &[f64]) -> f64 {
    let n = b.len();
    assert!(n >= 1, "lemma3_det needs n >= 1");
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    sign * a.powi(n as i32 - 1) * b[n - 1]
}

/// `det [[c, −bᵀ], [−b, a I]] = aⁿ⁻¹ (a c − Σ b_i²)`.
pub fn lemma4_det(c: f64, a: f64, b: &[f64]) -> f64 {
    let n = b.len();
    assert!(n >= 1, "lemma4_det needs n >= 1");
    a.powi(n as i32 - 1) * (a * c - b.iter().map(|x| x * x).sum::<f64>())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GMatrixReport {
    pub b: Vec<f64>,
    pub c: f64,
    pub sum_b2: f64,
    pub lambda_max: f64,
    pub eigenvalues: Vec<f64>,
    pub closed_form: Vec<f64>,
}

/// `G = [[c, −bᵀ], [−b, I]]` with `b_i = γ_i/√(γ_{v,i} γ)`, `c = γ_u/γ`.
pub fn g_matrix(d: &DerivedCoefficients) -> (DMatrix<f64>, Vec<f64>, f64) {
    let n = d.gamma.len();
    let b: Vec<f64> = (0..n).map(|i| d.gamma[i] / (d.gamma_v[i] * d.gamma_max).sqrt()).collect();
    let c = d.gamma_u / d.gamma_max;
    let mut g = DMatrix::identity(n + 1, n + 1);
    g[(0, 0)] = c;
    for i in 0..n {
        g[(0, i + 1)] = -b[i];
        g[(i + 1, 0)] = -b[i];
    }
    (g, b, c)
}

/// Eigenvalues of G in closed form: 1 (multiplicity n−1) and
/// `((1+c) ± √((1−c)² + 4Σb²))/2`, sorted ascending.
pub fn g_matrix_closed_form(c: f64, sum_b2: f64, n: usize) -> Vec<f64> {
    let r = ((1.0 - c).powi(2) + 4.0 * sum_b2).sqrt();
    let mut e = vec![1.0; n.saturating_sub(1)];
    e.push(((1.0 + c) - r) / 2.0);
    e.push(((1.0 + c) + r) / 2.0);
    e.sort_by(f64::total_cmp);
    e
}

pub fn g_matrix_checks(params: &MpetParameters, d: &DerivedCoefficients) -> Result<GMatrixReport> {
    let n = params.n;
    let (g, b, c) = g_matrix(d);
    let sum_b2: f64 = b.iter().map(|x| x * x).sum();
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(g).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let lambda_max = *eigenvalues.last().unwrap();
    let closed_form = g_matrix_closed_form(c, sum_b2, n);
    let report = GMatrixReport { b, c, sum_b2, lambda_max, eigenvalues, closed_form };
    let mut problems = Vec::new();
    if sum_b2 > 1.0 + 1e-12 {
        problems.push(format!("sum b_i^2 = {sum_b2} > 1"));
    }
    if lambda_max > 2.0 + 1e-12 {
        problems.push(format!("lambda_max(G) = {lambda_max} > 2"));
    }
    if c > 1.0 + 1e-15 {
        problems.push(format!("c = gamma_u/gamma = {c} > 1"));
    }
    for (e, f) in report.eigenvalues.iter().zip(&report.closed_form) {
        if (e - f).abs() > 1e-10 * (1.0 + f.abs()) {
            problems.push(format!("eigenvalue {e} disagrees with closed form {f}"));
        }
    }
    for i in 0..n {
        let alt = d.gamma[i].powi(2) * params.phi[i]
            / ((params.rho[i] + d.gamma[i] + params.phi[i]) * d.gamma_max);
        let bi2 = report.b[i].powi(2);
        if (bi2 - alt).abs() > 1e-13 * alt.abs().max(f64::MIN_POSITIVE) && (bi2 - alt).abs() > 1e-300 {
            problems.push(format!("b_{i}^2 = {bi2} disagrees with substituted form {alt}"));
        }
    }
    if problems.is_empty() {
        Ok(report)
    } else {
        Err(MpetError::Verification(format!("G-matrix counterexample: {}; parameters: {params:?}", problems.join("; "))))
    }
}
