//! The symmetric block time-step operator, its right-hand side, the norm
//! Gram matrix W and the block-diagonal preconditioner (B_uv, B_p).

use std::fs::File;
use std::io::BufWriter;
use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{MpetError, Result};
use crate::fem::{self, DgConfig, DofMap, SpaceKind};
use crate::mesh::Mesh;
use crate::model::{build_norm_weights, derive_coefficients, DerivedCoefficients, MpetParameters, NormWeights};
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Offsets of the `(u, v_1..n, u̇, v̇_1..n, p_1..n)` blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BlockLayout {
    pub n: usize,
    pub n_bdm: usize,
    pub n_rt: usize,
    pub n_p0: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockInfo {
    pub name: String,
    pub space: SpaceKind,
    pub offset: usize,
    pub size: usize,
}

impl BlockLayout {
    pub fn u(&self) -> Range<usize> {
        0..self.n_bdm
    }
    pub fn v(&self, i: usize) -> Range<usize> {
        let s = (1 + i) * self.n_bdm;
        s..s + self.n_bdm
    }
    pub fn udot(&self) -> Range<usize> {
        let s = (self.n + 1) * self.n_bdm;
        s..s + self.n_rt
    }
    pub fn vdot(&self, i: usize) -> Range<usize> {
        let s = (self.n + 1) * self.n_bdm + (1 + i) * self.n_rt;
        s..s + self.n_rt
    }
    pub fn p(&self, i: usize) -> Range<usize> {
        let s = self.n_primal() + i * self.n_p0;
        s..s + self.n_p0
    }
    /// Size of the `(u, v, u̇, v̇)` part.
    pub fn n_primal(&self) -> usize {
        (self.n + 1) * (self.n_bdm + self.n_rt)
    }
    pub fn n_pressure(&self) -> usize {
        self.n * self.n_p0
    }
    pub fn total(&self) -> usize {
        self.n_primal() + self.n_pressure()
    }

    pub fn blocks(&self) -> Vec<BlockInfo> {
        let mut b = vec![BlockInfo { name: "u".into(), space: SpaceKind::Bdm1, offset: 0, size: self.n_bdm }];
        let mut push = |name: String, space, r: Range<usize>| b.push(BlockInfo { name, space, offset: r.start, size: r.len() });
        for i in 0..self.n {
            push(format!("v{}", i + 1), SpaceKind::Bdm1, self.v(i));
        }
        push("udot".into(), SpaceKind::Rt0, self.udot());
        for i in 0..self.n {
            push(format!("vdot{}", i + 1), SpaceKind::Rt0, self.vdot(i));
        }
        for i in 0..self.n {
            push(format!("p{}", i + 1), SpaceKind::P0, self.p(i));
        }
        b
    }
}

/// Elementary matrices shared by the operator, the norms and the right-hand side.
#[derive(Debug, Clone)]
pub struct SpaceOperators {
    pub bdm: DofMap,
    pub rt: DofMap,
    pub p0: DofMap,
    /// BDM1 mass
    pub m_bb: CsrMatrix,
    /// BDM1 (rows) × RT0 (columns) mass
    pub m_br: CsrMatrix,
    pub m_rr: CsrMatrix,
    /// P0 × BDM1 divergence, `∫_T div φ`
    pub div: CsrMatrix,
    /// `(div u, div w)` on BDM1
    pub div_div: CsrMatrix,
    /// Interior-penalty elasticity form
    pub a_h: CsrMatrix,
    pub areas: Vec<f64>,
}

impl SpaceOperators {
    pub fn new(mesh: &Mesh, dg: &DgConfig) -> Result<Self> {
        let bdm = fem::build_dofmap(mesh, SpaceKind::Bdm1, true);
        let rt = fem::build_dofmap(mesh, SpaceKind::Rt0, true);
        let p0 = fem::build_dofmap(mesh, SpaceKind::P0, true);
        let m_bb = fem::assemble_mass(mesh, &bdm, &bdm)?;
        let m_br = fem::assemble_mass(mesh, &bdm, &rt)?;
        let m_rr = fem::assemble_mass(mesh, &rt, &rt)?;
        let div = fem::assemble_div(mesh, &bdm, &p0)?;
        let areas = mesh.triangle_areas.clone();
        let inv_area = CsrMatrix::from_diagonal(&areas.iter().map(|a| 1.0 / a).collect::<Vec<_>>());
        let div_div = div.transpose().matmul(&inv_area).matmul(&div);
        let a_h = fem::assemble_dg_elasticity(mesh, &bdm, dg)?;
        Ok(Self { bdm, rt, p0, m_bb, m_br, m_rr, div, div_div, a_h, areas })
    }
}

/// Orthogonal (area-weighted) removal of the per-network pressure mean.
#[derive(Debug, Clone)]
pub struct ZeroMeanProjector {
    layout: BlockLayout,
    areas: Vec<f64>,
    total_area: f64,
}

impl ZeroMeanProjector {
    pub fn new(layout: BlockLayout, areas: Vec<f64>) -> Self {
        let total_area = areas.iter().sum();
        Self { layout, areas, total_area }
    }

    /// Area-weighted mean of pressure block `i`.
    pub fn mean(&self, x: &[f64], i: usize) -> f64 {
        let p = &x[self.layout.p(i)];
        p.iter().zip(&self.areas).map(|(p, a)| p * a).sum::<f64>() / self.total_area
    }

    /// `Π x`: subtract the mean from every pressure block (primal vectors).
    pub fn project(&self, x: &mut [f64]) {
        for i in 0..self.layout.n {
            let m = self.mean(x, i);
            x[self.layout.p(i)].iter_mut().for_each(|p| *p -= m);
        }
    }

    /// `Πᵀ r`: remove the component along the area vector (residual vectors).
    pub fn project_dual(&self, r: &mut [f64]) {
        for i in 0..self.layout.n {
            let range = self.layout.p(i);
            let s: f64 = r[range.clone()].iter().sum();
            for (ri, a) in r[range].iter_mut().zip(&self.areas) {
                *ri -= a * s / self.total_area;
            }
        }
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }
}

#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub layout: BlockLayout,
    pub params: MpetParameters,
    pub derived: DerivedCoefficients,
    pub weights: NormWeights,
    pub dg: DgConfig,
    pub ops: SpaceOperators,
    /// `μτ²/2 a_h + λτ²/4 (div, div)`
    pub elastic: CsrMatrix,
    pub a: CsrMatrix,
    /// `blockdiag(B_uv, B_p)`
    pub w: CsrMatrix,
    pub b_uv: CsrMatrix,
    pub b_p: CsrMatrix,
    pub projector: ZeroMeanProjector,
}

pub fn assemble_operator(mesh: &Mesh, params: &MpetParameters) -> Result<BlockSystem> {
    assemble_operator_with(mesh, params, &DgConfig::default())
}

pub fn assemble_operator_with(mesh: &Mesh, params: &MpetParameters, dg: &DgConfig) -> Result<BlockSystem> {
    let ops = SpaceOperators::new(mesh, dg)?;
    assemble_from_operators(ops, params, dg)
}

/// Reuses already assembled elementary matrices (parameter sweeps on one mesh).
pub fn assemble_from_operators(ops: SpaceOperators, params: &MpetParameters, dg: &DgConfig) -> Result<BlockSystem> {
    let derived = derive_coefficients(params)?;
    let weights = build_norm_weights(params, &derived)?;
    let layout = BlockLayout { n: params.n, n_bdm: ops.bdm.n_dofs, n_rt: ops.rt.n_dofs, n_p0: ops.p0.n_dofs };
    let a = build_a(&layout, &ops, params, &derived, &weights);
    let (b_uv, b_p) = build_preconditioner(&layout, &ops, params, &derived, &weights);
    let mut t = TripletBuilder::new(layout.total(), layout.total());
    t.add_block(0, 0, &b_uv, 1.0);
    t.add_block(layout.n_primal(), layout.n_primal(), &b_p, 1.0);
    let w = t.build();
    let projector = ZeroMeanProjector::new(layout, ops.areas.clone());
    let elastic = elasticity(&ops, params);
    Ok(BlockSystem { layout, params: params.clone(), derived, weights, dg: *dg, ops, elastic, a, w, b_uv, b_p, projector })
}

fn elasticity(ops: &SpaceOperators, p: &MpetParameters) -> CsrMatrix {
    let t2 = p.tau * p.tau;
    ops.a_h.axpby(p.mu * t2 / 2.0, &ops.div_div, p.lambda * t2 / 4.0)
}

/// The `(u, v, u̇, v̇)` block weighted by Λ_uv (masses) plus elasticity.
fn add_primal_block(t: &mut TripletBuilder, l: &BlockLayout, ops: &SpaceOperators, p: &MpetParameters, d: &DerivedCoefficients) {
    let tau = p.tau;
    let (u, ud) = (l.u().start, l.udot().start);
    t.add_block(u, u, &elasticity(ops, p), 1.0);
    t.add_block(u, u, &ops.m_bb, d.gamma_u);
    t.add_block(u, ud, &ops.m_br, -tau / 2.0);
    t.add_block_transposed(ud, u, &ops.m_br, -tau / 2.0);
    t.add_block(ud, ud, &ops.m_rr, tau * tau / 4.0);
    for i in 0..p.n {
        let (v, vd) = (l.v(i).start, l.vdot(i).start);
        t.add_block(u, v, &ops.m_bb, -d.gamma[i]);
        t.add_block(v, u, &ops.m_bb, -d.gamma[i]);
        t.add_block(v, v, &ops.m_bb, d.gamma_v[i]);
        t.add_block(v, vd, &ops.m_br, -tau / 2.0);
        t.add_block_transposed(vd, v, &ops.m_br, -tau / 2.0);
        t.add_block(vd, vd, &ops.m_rr, tau * tau / 4.0);
    }
}

fn build_a(l: &BlockLayout, ops: &SpaceOperators, p: &MpetParameters, d: &DerivedCoefficients, w: &NormWeights) -> CsrMatrix {
    let q = p.tau * p.tau / 4.0;
    let mut t = TripletBuilder::new(l.total(), l.total());
    add_primal_block(&mut t, l, ops, p, d);
    let mp = CsrMatrix::from_diagonal(&ops.areas);
    for i in 0..p.n {
        let pi = l.p(i).start;
        t.add_block(pi, l.u().start, &ops.div, -q * d.alpha[i]);
        t.add_block_transposed(l.u().start, pi, &ops.div, -q * d.alpha[i]);
        t.add_block(pi, l.v(i).start, &ops.div, -q);
        t.add_block_transposed(l.v(i).start, pi, &ops.div, -q);
        for j in 0..p.n {
            t.add_block(pi, l.p(j).start, &mp, -q * w.lambda1[(i, j)]);
        }
    }
    t.build()
}

fn build_preconditioner(
    l: &BlockLayout,
    ops: &SpaceOperators,
    p: &MpetParameters,
    d: &DerivedCoefficients,
    w: &NormWeights,
) -> (CsrMatrix, CsrMatrix) {
    let q = p.tau * p.tau / 4.0;
    let n = p.n;
    let mut t = TripletBuilder::new(l.n_primal(), l.n_primal());
    add_primal_block(&mut t, l, ops, p, d);
    let li = &w.lambda_inv;
    let u = l.u().start;
    let mut uu = 0.0;
    for i in 0..n {
        for j in 0..n {
            uu += d.alpha[i] * li[(i, j)] * d.alpha[j];
        }
    }
    t.add_block(u, u, &ops.div_div, q * uu);
    for j in 0..n {
        let c: f64 = (0..n).map(|i| d.alpha[i] * li[(i, j)]).sum();
        t.add_block(u, l.v(j).start, &ops.div_div, q * c);
        t.add_block(l.v(j).start, u, &ops.div_div, q * c);
        for i in 0..n {
            t.add_block(l.v(i).start, l.v(j).start, &ops.div_div, q * li[(i, j)]);
        }
    }
    let b_uv = t.build();
    let mp = CsrMatrix::from_diagonal(&ops.areas);
    let mut t = TripletBuilder::new(l.n_pressure(), l.n_pressure());
    for i in 0..n {
        for j in 0..n {
            t.add_block(i * l.n_p0, j * l.n_p0, &mp, q * w.lambda[(i, j)]);
        }
    }
    (b_uv, t.build())
}

/// The four contributions to `‖x‖²_W`, evaluated elementwise rather than
/// through the assembled Gram matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormTerms {
    /// `μτ²/2 a_h(u,u) + λτ²/4 ‖div u‖²`
    pub elastic: f64,
    /// Λ_uv-weighted L² masses of `(u, v, u̇, v̇)`
    pub mass: f64,
    /// `τ²/4 Σ_T |T| dᵀ Λ⁻¹ d` with `d_i = α_i div u + div v_i`
    pub divergence: f64,
    /// `τ²/4 Σ_T |T| pᵀ Λ p`
    pub pressure: f64,
}

impl NormTerms {
    pub fn total(&self) -> f64 {
        self.elastic + self.mass + self.divergence + self.pressure
    }
}

pub fn norm_terms(sys: &BlockSystem, x: &[f64]) -> NormTerms {
    let l = &sys.layout;
    let p = &sys.params;
    let d = &sys.derived;
    let ops = &sys.ops;
    let n = p.n;
    let q = p.tau * p.tau / 4.0;
    let u = &x[l.u()];
    let ud = &x[l.udot()];
    let elastic = sys.elastic.bilinear(u, u);
    let lu = &sys.weights.lambda_uv;
    let mut fields: Vec<(&[f64], bool)> = vec![(u, true)];
    for i in 0..n {
        fields.push((&x[l.v(i)], true));
    }
    fields.push((ud, false));
    for i in 0..n {
        fields.push((&x[l.vdot(i)], false));
    }
    let mut mass = 0.0;
    for (a, (xa, ba)) in fields.iter().enumerate() {
        for (b, (xb, bb)) in fields.iter().enumerate() {
            let c = lu[(a, b)];
            if c == 0.0 {
                continue;
            }
            let m = match (ba, bb) {
                (true, true) => ops.m_bb.bilinear(xa, xb),
                (true, false) => ops.m_br.bilinear(xa, xb),
                (false, true) => ops.m_br.bilinear(xb, xa),
                (false, false) => ops.m_rr.bilinear(xa, xb),
            };
            mass += c * m;
        }
    }
    let div_u = ops.div.matvec(u);
    let div_v: Vec<Vec<f64>> = (0..n).map(|i| ops.div.matvec(&x[l.v(i)])).collect();
    let mut divergence = 0.0;
    let mut pressure = 0.0;
    for (t, &area) in ops.areas.iter().enumerate() {
        let dv: Vec<f64> = (0..n).map(|i| (d.alpha[i] * div_u[t] + div_v[i][t]) / area).collect();
        let pt: Vec<f64> = (0..n).map(|i| x[l.p(i)][t]).collect();
        for i in 0..n {
            for j in 0..n {
                divergence += q * area * dv[i] * sys.weights.lambda_inv[(i, j)] * dv[j];
                pressure += q * area * pt[i] * sys.weights.lambda[(i, j)] * pt[j];
            }
        }
    }
    NormTerms { elastic, mass, divergence, pressure }
}

type VectorField = Arc<dyn Fn([f64; 2], f64) -> [f64; 2] + Send + Sync>;

/// Body force `f(x,t)` and per-network sources `g_i(x,t)`.
#[derive(Clone)]
pub struct LoadSpec {
    pub f: VectorField,
    pub g: Vec<VectorField>,
}

impl std::fmt::Debug for LoadSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "LoadSpec {{ networks: {} }}", self.g.len())
    }
}

impl LoadSpec {
    pub fn zero(n: usize) -> Self {
        Self { f: Arc::new(|_, _| [0.0, 0.0]), g: (0..n).map(|_| Arc::new(|_: [f64; 2], _| [0.0, 0.0]) as VectorField).collect() }
    }

    pub fn new(
        f: impl Fn([f64; 2], f64) -> [f64; 2] + Send + Sync + 'static,
        g: Vec<Box<dyn Fn([f64; 2], f64) -> [f64; 2] + Send + Sync>>,
    ) -> Self {
        Self { f: Arc::new(f), g: g.into_iter().map(Arc::from).collect() }
    }

    /// Smooth, time-periodic forcing used by the trajectory and convergence drivers.
    pub fn smooth_trig(n: usize) -> Self {
        use std::f64::consts::PI;
        let f = Arc::new(|x: [f64; 2], t: f64| {
            [(PI * x[1]).sin() * (2.0 * PI * t).cos(), (PI * x[0]).sin() * (2.0 * PI * t).sin()]
        }) as VectorField;
        let g = (0..n)
            .map(|i| {
                let s = 1.0 + i as f64;
                Arc::new(move |x: [f64; 2], t: f64| {
                    [
                        (PI * x[0]).cos() * (PI * x[1]).sin() * (2.0 * PI * t + s).sin(),
                        -(PI * x[0]).sin() * (PI * x[1]).cos() * (2.0 * PI * t).cos() / s,
                    ]
                }) as VectorField
            })
            .collect();
        Self { f, g }
    }

    pub fn moments(&self, mesh: &Mesh, ops: &SpaceOperators, t: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let f = fem::load_vector(mesh, &ops.bdm, |x| (self.f)(x, t))?;
        let g = self.g.iter().map(|g| fem::load_vector(mesh, &ops.bdm, |x| g(x, t))).collect::<Result<_>>()?;
        Ok((f, g))
    }
}

/// Right-hand side `G^{k+1}` of the step from `t_k` to `t_k + τ`.
pub fn assemble_rhs(sys: &BlockSystem, mesh: &Mesh, y_k: &[f64], loads: &LoadSpec, t_k: f64) -> Result<Vec<f64>> {
    let p = &sys.params;
    let tau = p.tau;
    if !(t_k >= 0.0 && t_k + tau <= p.t_final * (1.0 + 1e-10) + 1e-14) {
        return Err(MpetError::Parameter(format!(
            "step from t = {t_k} by tau = {tau} leaves [0, T = {}]",
            p.t_final
        )));
    }
    if loads.g.len() != p.n {
        return Err(MpetError::Dimension(format!("{} network loads for n = {}", loads.g.len(), p.n)));
    }
    let (f0, g0) = loads.moments(mesh, &sys.ops, t_k)?;
    let (f1, g1) = loads.moments(mesh, &sys.ops, t_k + tau)?;
    let mut load = vec![0.0; sys.layout.total()];
    let q = tau * tau / 4.0;
    let l = sys.layout;
    for (k, r) in l.u().enumerate() {
        load[r] = q * (f0[k] + f1[k]);
    }
    for i in 0..p.n {
        for (k, r) in l.v(i).enumerate() {
            load[r] = q * (g0[i][k] + g1[i][k]);
        }
    }
    let mut rhs = history_rhs(sys, y_k)?;
    rhs.iter_mut().zip(&load).for_each(|(r, l)| *r += l);
    Ok(rhs)
}

/// The state-dependent part of `G^{k+1}` (everything but the loads).
pub fn history_rhs(sys: &BlockSystem, y: &[f64]) -> Result<Vec<f64>> {
    let l = &sys.layout;
    if y.len() != l.total() {
        return Err(MpetError::Dimension(format!("state of length {} for layout of {}", y.len(), l.total())));
    }
    let p = &sys.params;
    let d = &sys.derived;
    let ops = &sys.ops;
    let n = p.n;
    let tau = p.tau;
    let q = tau * tau / 4.0;
    let mut r = vec![0.0; l.total()];
    let add = |r: &mut [f64], range: Range<usize>, v: &[f64], s: f64| {
        for (ri, vi) in r[range].iter_mut().zip(v) {
            *ri += s * vi;
        }
    };
    let u = &y[l.u()];
    let ud = &y[l.udot()];
    let m_u = ops.m_bb.matvec(u);
    let mbr_ud = ops.m_br.matvec(ud);

    // momentum (solid)
    add(&mut r, l.u(), &m_u, d.gamma_u);
    add(&mut r, l.u(), &sys.elastic.matvec(u), -1.0);
    add(&mut r, l.u(), &mbr_ud, tau * (d.m11 + 0.5));
    for i in 0..n {
        let vi = &y[l.v(i)];
        add(&mut r, l.u(), &ops.m_bb.matvec(vi), -d.gamma[i]);
        add(&mut r, l.u(), &ops.div.matvec_transpose(&y[l.p(i)]), q * d.alpha[i]);
        add(&mut r, l.u(), &ops.m_br.matvec(&y[l.vdot(i)]), tau * d.m12[i]);
    }
    // momentum (networks)
    for i in 0..n {
        let vi = &y[l.v(i)];
        add(&mut r, l.v(i), &m_u, -d.gamma[i]);
        add(&mut r, l.v(i), &ops.m_bb.matvec(vi), d.gamma_v[i]);
        add(&mut r, l.v(i), &ops.div.matvec_transpose(&y[l.p(i)]), q);
        add(&mut r, l.v(i), &mbr_ud, tau * d.m12[i]);
        add(&mut r, l.v(i), &ops.m_br.matvec(&y[l.vdot(i)]), tau * (p.rho_m[i] + 0.5));
    }
    // velocity definitions
    add(&mut r, l.udot(), &ops.m_br.matvec_transpose(u), -tau / 2.0);
    add(&mut r, l.udot(), &ops.m_rr.matvec(ud), -q);
    for i in 0..n {
        add(&mut r, l.vdot(i), &ops.m_br.matvec_transpose(&y[l.v(i)]), -tau / 2.0);
        add(&mut r, l.vdot(i), &ops.m_rr.matvec(&y[l.vdot(i)]), -q);
    }
    // mass balance
    let div_u = ops.div.matvec(u);
    let lb = p.transfer_laplacian();
    for i in 0..n {
        add(&mut r, l.p(i), &div_u, -q * d.alpha[i]);
        add(&mut r, l.p(i), &ops.div.matvec(&y[l.v(i)]), -q);
        for j in 0..n {
            let c = q * (tau / 2.0 * lb[(i, j)] - if i == j { p.c_p[i] } else { 0.0 });
            if c != 0.0 {
                let mp: Vec<f64> = y[l.p(j)].iter().zip(&ops.areas).map(|(x, a)| x * a).collect();
                add(&mut r, l.p(i), &mp, c);
            }
        }
    }
    Ok(r)
}

#[derive(Serialize)]
struct Sidecar<'a> {
    n_networks: usize,
    total: usize,
    primal: usize,
    blocks: Vec<BlockInfo>,
    files: [&'a str; 4],
    b_uv_offset: usize,
    b_p_offset: usize,
}

/// Writes `A.mtx`, `W.mtx`, `B_uv.mtx`, `B_p.mtx` and `blocks.json` into `dir`.
pub fn export_matrices(sys: &BlockSystem, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, m) in [("A.mtx", &sys.a), ("W.mtx", &sys.w), ("B_uv.mtx", &sys.b_uv), ("B_p.mtx", &sys.b_p)] {
        m.write_matrix_market(BufWriter::new(File::create(dir.join(name))?), true)?;
    }
    let side = Sidecar {
        n_networks: sys.layout.n,
        total: sys.layout.total(),
        primal: sys.layout.n_primal(),
        blocks: sys.layout.blocks(),
        files: ["A.mtx", "W.mtx", "B_uv.mtx", "B_p.mtx"],
        b_uv_offset: 0,
        b_p_offset: sys.layout.n_primal(),
    };
    let json = serde_json::to_string_pretty(&side).map_err(|e| MpetError::Config(e.to_string()))?;
    std::fs::write(dir.join("blocks.json"), json + "\n")?;
    Ok(())
}
