//! Preconditioned MINRES, a sparse direct reference solver, and dense
//! generalized-eigenvalue analysis of the pencil `A x = ξ W x`.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::assembly::BlockSystem;
use crate::error::{MpetError, Result};
use crate::sparse::{dot, rcm_grouped, CsrMatrix, EnvelopeLdl, TripletBuilder};

/// Largest total DOF count accepted by [`spectrum`].
pub const DENSE_LIMIT: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final relative preconditioned residual `‖r‖_{B}/‖r₀‖_{B}`.
    pub residual: f64,
    pub wall_time_s: f64,
    pub converged: bool,
}

/// Exact application of `blockdiag(B_uv, B_p)⁻¹` on the zero-mean space.
#[derive(Debug, Clone)]
pub struct BlockPreconditioner {
    uv: EnvelopeLdl,
    p: EnvelopeLdl,
    n_primal: usize,
}

impl BlockPreconditioner {
    pub fn new(sys: &BlockSystem) -> Result<Self> {
        let uv = EnvelopeLdl::new(&sys.b_uv).map_err(|e| MpetError::Singular(format!("B_uv: {e}")))?;
        let p = EnvelopeLdl::new(&sys.b_p).map_err(|e| MpetError::Singular(format!("B_p: {e}")))?;
        if uv.inertia().0 > 0 || p.inertia().0 > 0 {
            return Err(MpetError::Singular("preconditioner block is not positive definite".into()));
        }
        Ok(Self { uv, p, n_primal: sys.layout.n_primal() })
    }

    /// `z = B⁻¹ r` for a residual already in the range of `Πᵀ`.
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut z = self.uv.solve(&r[..self.n_primal]);
        z.extend(self.p.solve(&r[self.n_primal..]));
        z
    }
}

/// Preconditioned MINRES on the deflated system `Πᵀ A Π x = Πᵀ b`.
pub fn minres(
    sys: &BlockSystem,
    precond: &BlockPreconditioner,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    minres_with_operator(&sys.a, sys, precond, rhs, tol, max_iter)
}

/// As [`minres`] but with an arbitrary symmetric operator on the same layout.
pub fn minres_with_operator(
    a: &CsrMatrix,
    sys: &BlockSystem,
    precond: &BlockPreconditioner,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let start = Instant::now();
    let n = sys.layout.total();
    if rhs.len() != n {
        return Err(MpetError::Dimension(format!("rhs of length {} for system of {n}", rhs.len())));
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(MpetError::Parameter(format!("tolerance must lie in (0, 1), got {tol}")));
    }
    let proj = &sys.projector;
    let op = |x: &[f64]| {
        let mut xp = x.to_vec();
        proj.project(&mut xp);
        let mut y = a.matvec(&xp);
        proj.project_dual(&mut y);
        y
    };
    let prec = |r: &[f64]| {
        let mut z = precond.apply(r);
        proj.project(&mut z);
        z
    };
    let mut x = vec![0.0; n];
    let mut v = rhs.to_vec();
    proj.project_dual(&mut v);
    let mut z = prec(&v);
    let mut gamma = dot(&z, &v);
    if gamma < 0.0 {
        return Err(MpetError::Solver("preconditioner is not positive definite".into()));
    }
    gamma = gamma.sqrt();
    let stats = |it, res, conv| SolveStats { iterations: it, residual: res, wall_time_s: start.elapsed().as_secs_f64(), converged: conv };
    if gamma == 0.0 {
        return Ok((x, stats(0, 0.0, true)));
    }
    let gamma0 = gamma;
    let mut v_old = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut w_old = vec![0.0; n];
    let (mut c_old, mut c) = (1.0, 1.0);
    let (mut s_old, mut s) = (0.0, 0.0);
    let mut gamma_old = 1.0;
    let mut eta = gamma;
    for it in 1..=max_iter {
        z.iter_mut().for_each(|zi| *zi /= gamma);
        let az = op(&z);
        let delta = dot(&az, &z);
        let mut v_new: Vec<f64> = (0..n).map(|k| az[k] - delta / gamma * v[k] - gamma / gamma_old * v_old[k]).collect();
        proj.project_dual(&mut v_new);
        let z_new = prec(&v_new);
        let g2 = dot(&z_new, &v_new);
        if g2 < -1e-14 * gamma0 * gamma0 {
            return Err(MpetError::Solver(format!("breakdown at iteration {it}: negative preconditioned norm")));
        }
        let gamma_new = g2.max(0.0).sqrt();
        let alpha0 = c * delta - c_old * s * gamma;
        let alpha1 = alpha0.hypot(gamma_new);
        let alpha2 = s * delta + c_old * c * gamma;
        let alpha3 = s_old * gamma;
        if alpha1 == 0.0 {
            return Err(MpetError::Solver(format!("breakdown at iteration {it}: singular tridiagonal")));
        }
        let (c_new, s_new) = (alpha0 / alpha1, gamma_new / alpha1);
        let w_new: Vec<f64> = (0..n).map(|k| (z[k] - alpha3 * w_old[k] - alpha2 * w[k]) / alpha1).collect();
        for k in 0..n {
            x[k] += c_new * eta * w_new[k];
        }
        eta *= -s_new;
        let res = eta.abs() / gamma0;
        if res <= tol || gamma_new == 0.0 {
            proj.project(&mut x);
            return Ok((x, stats(it, res, true)));
        }
        v_old = std::mem::replace(&mut v, v_new);
        z = z_new;
        w_old = std::mem::replace(&mut w, w_new);
        gamma_old = gamma;
        gamma = gamma_new;
        c_old = c;
        c = c_new;
        s_old = s;
        s = s_new;
    }
    proj.project(&mut x);
    let res = eta.abs() / gamma0;
    Ok((x, stats(max_iter, res, false)))
}

/// Builds the preconditioner and runs [`minres`].
pub fn minres_solve(sys: &BlockSystem, rhs: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolveStats)> {
    let p = BlockPreconditioner::new(sys)?;
    minres(sys, &p, rhs, tol, max_iter)
}

/// Sparse LDLᵀ of `A` with the pressure means pinned by a negative rank-one
/// term per network, ordered primal-first so the factorization is quasi-definite.
#[derive(Debug, Clone)]
pub struct DirectSolver {
    factor: EnvelopeLdl,
}

impl DirectSolver {
    pub fn new(sys: &BlockSystem) -> Result<Self> {
        let l = &sys.layout;
        let areas = sys.projector.areas();
        let aa: f64 = areas.iter().map(|a| a * a).sum();
        let lmax = sys.weights.lambda.symmetric_eigenvalues().max();
        let mean_area = areas.iter().sum::<f64>() / areas.len() as f64;
        let s = sys.params.tau.powi(2) / 4.0 * lmax * mean_area;
        let mut t = TripletBuilder::new(l.total(), l.total());
        t.add_block(0, 0, &sys.a, 1.0);
        for i in 0..l.n {
            let o = l.p(i).start;
            for (r, ar) in areas.iter().enumerate() {
                for (c, ac) in areas.iter().enumerate() {
                    t.push(o + r, o + c, -s * ar * ac / aa);
                }
            }
        }
        let pinned = t.build();
        let groups = vec![(0..l.n_primal()).collect(), (l.n_primal()..l.total()).collect()];
        let perm = rcm_grouped(&pinned, &groups);
        let factor = EnvelopeLdl::with_ordering(&pinned, perm)
            .map_err(|e| MpetError::Singular(format!("time-step operator after deflation ({e}); check for degenerate parameters")))?;
        Ok(Self { factor })
    }

    pub fn solve(&self, sys: &BlockSystem, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.factor.dim() {
            return Err(MpetError::Dimension(format!("rhs of length {} for system of {}", rhs.len(), self.factor.dim())));
        }
        let mut r = rhs.to_vec();
        sys.projector.project_dual(&mut r);
        let mut x = self.factor.solve(&r);
        sys.projector.project(&mut x);
        Ok(x)
    }

    pub fn inertia(&self) -> (usize, usize) {
        self.factor.inertia()
    }
}

pub fn direct_solve(sys: &BlockSystem, rhs: &[f64]) -> Result<Vec<f64>> {
    DirectSolver::new(sys)?.solve(sys, rhs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    /// Ascending generalized eigenvalues on the deflated space.
    pub eigenvalues: Vec<f64>,
    pub kappa: f64,
    pub min_abs: f64,
    pub max_abs: f64,
}

/// Dense matrices restricted to the zero-mean pressure space through one
/// Householder reflection per network (the reflected constant direction is dropped).
pub fn deflate_dense(sys: &BlockSystem, m: &CsrMatrix) -> DMatrix<f64> {
    let l = &sys.layout;
    let mut d = m.to_dense();
    let areas = sys.projector.areas();
    let norm = areas.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut drop = Vec::new();
    for i in 0..l.n {
        let r = l.p(i);
        // v = â + e₁ so that H â = −e₁ with â = a/|a| (all entries positive)
        let mut v = vec![0.0; l.total()];
        for (k, a) in areas.iter().enumerate() {
            v[r.start + k] = a / norm;
        }
        v[r.start] += 1.0;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        let vd = nalgebra::DVector::from_vec(v);
        // H M H with H = I − 2 v vᵀ / vᵀv
        let mv = &d * &vd;
        d -= (&mv * vd.transpose()) * (2.0 / vv);
        let vm = vd.transpose() * &d;
        d -= (&vd * vm) * (2.0 / vv);
        drop.push(r.start);
    }
    d.remove_rows_at(&drop).remove_columns_at(&drop)
}

/// Generalized eigenvalues of `A x = ξ W x` on the deflated space.
pub fn spectrum(sys: &BlockSystem) -> Result<Spectrum> {
    spectrum_of(sys, &sys.a)
}

/// As [`spectrum`] with `A` replaced by another symmetric operator.
pub fn spectrum_of(sys: &BlockSystem, a: &CsrMatrix) -> Result<Spectrum> {
    let total = sys.layout.total();
    if total > DENSE_LIMIT {
        return Err(MpetError::TooLarge { dofs: total, limit: DENSE_LIMIT });
    }
    let ad = deflate_dense(sys, a);
    let wd = deflate_dense(sys, &sys.w);
    let eigenvalues = generalized_eigenvalues(&ad, &wd)?;
    let min_abs = eigenvalues.iter().fold(f64::INFINITY, |m, e| m.min(e.abs()));
    let max_abs = eigenvalues.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    Ok(Spectrum { kappa: max_abs / min_abs, eigenvalues, min_abs, max_abs })
}

/// Eigenvalues of the symmetric-definite pencil `(a, w)`, ascending.
pub fn generalized_eigenvalues(a: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = a.nrows();
    let scale: Vec<f64> = (0..n)
        .map(|i| {
            let d = w[(i, i)];
            if d > 0.0 {
                Ok(1.0 / d.sqrt())
            } else {
                Err(MpetError::Singular(format!("norm matrix has non-positive diagonal {d:e} at {i}")))
            }
        })
        .collect::<Result<_>>()?;
    let ws = DMatrix::from_fn(n, n, |i, j| w[(i, j)] * scale[i] * scale[j]);
    let chol = ws.cholesky().ok_or_else(|| MpetError::Singular("norm matrix is not positive definite".into()))?;
    let l = chol.l();
    let mut c = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * scale[i] * scale[j]);
    l.solve_lower_triangular_mut(&mut c);
    c.transpose_mut();
    l.solve_lower_triangular_mut(&mut c);
    let c = (&c + c.transpose()) * 0.5;
    let mut e: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(f64::total_cmp);
    Ok(e)
}
