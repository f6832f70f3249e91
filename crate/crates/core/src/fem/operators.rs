use super::{DgConfig, DofMap, ElementBasis, SpaceKind};
use crate::error::{MpetError, Result};
use crate::mesh::Mesh;
use crate::quadrature::{barycentric_point, lerp, EDGE_GAUSS3, TRIANGLE_DEG4};
use crate::sparse::{CsrMatrix, TripletBuilder};

fn bases(mesh: &Mesh, kind: SpaceKind) -> Vec<ElementBasis> {
    (0..mesh.n_triangles()).map(|t| ElementBasis::new(mesh, kind, t)).collect()
}

/// `∫ φ_i·ψ_j` (vector spaces) or `∫ q_i r_j` (P0×P0).
pub fn assemble_mass(mesh: &Mesh, row: &DofMap, col: &DofMap) -> Result<CsrMatrix> {
    row.check_mesh(mesh)?;
    col.check_mesh(mesh)?;
    let mut t = TripletBuilder::new(row.n_dofs, col.n_dofs);
    match (row.kind.is_vector(), col.kind.is_vector()) {
        (false, false) => {
            for (tri, &a) in mesh.triangle_areas.iter().enumerate() {
                t.push(row.local_to_global[tri][0].unwrap(), col.local_to_global[tri][0].unwrap(), a);
            }
        }
        (true, true) => {
            for tri in 0..mesh.n_triangles() {
                let (br, bc) = (ElementBasis::new(mesh, row.kind, tri), ElementBasis::new(mesh, col.kind, tri));
                let p = mesh.triangle_coords(tri);
                let area = mesh.triangle_areas[tri];
                let (nr, nc) = (br.len(), bc.len());
                let mut local = vec![0.0; nr * nc];
                for (l, w) in &TRIANGLE_DEG4 {
                    let x = barycentric_point(p, *l);
                    let (vr, vc) = (br.values(x), bc.values(x));
                    for i in 0..nr {
                        for j in 0..nc {
                            local[i * nc + j] += area * w * (vr[i][0] * vc[j][0] + vr[i][1] * vc[j][1]);
                        }
                    }
                }
                scatter(&mut t, &row.local_to_global[tri], &col.local_to_global[tri], &local);
            }
        }
        _ => {
            return Err(MpetError::Dimension(format!(
                "mass pairing of {:?} with {:?} is not defined",
                row.kind, col.kind
            )))
        }
    }
    Ok(t.build())
}

fn scatter(t: &mut TripletBuilder, rows: &[Option<usize>], cols: &[Option<usize>], local: &[f64]) {
    let nc = cols.len();
    for (i, gi) in rows.iter().enumerate() {
        let Some(gi) = gi else { continue };
        for (j, gj) in cols.iter().enumerate() {
            let Some(gj) = gj else { continue };
            t.push(*gi, *gj, local[i * nc + j]);
        }
    }
}

/// `B[i][j] = ∫_{T_i} div φ_j` with rows on P0 and columns on the vector space.
pub fn assemble_div(mesh: &Mesh, vec_map: &DofMap, p0: &DofMap) -> Result<CsrMatrix> {
    vec_map.check_mesh(mesh)?;
    p0.check_mesh(mesh)?;
    if !vec_map.kind.is_vector() || p0.kind != SpaceKind::P0 {
        return Err(MpetError::Dimension(format!("div needs vector × P0, got {:?} × {:?}", vec_map.kind, p0.kind)));
    }
    let mut t = TripletBuilder::new(p0.n_dofs, vec_map.n_dofs);
    for tri in 0..mesh.n_triangles() {
        let div = ElementBasis::new(mesh, vec_map.kind, tri).divergences();
        let r = p0.local_to_global[tri][0].unwrap();
        for (d, g) in div.iter().zip(&vec_map.local_to_global[tri]) {
            if let Some(g) = g {
                t.push(r, *g, mesh.triangle_areas[tri] * d);
            }
        }
    }
    Ok(t.build())
}

fn strain(g: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let off = 0.5 * (g[0][1] + g[1][0]);
    [[g[0][0], off], [off, g[1][1]]]
}

fn ddot(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> f64 {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}

/// One side's basis functions restricted to an edge.
struct Trace {
    dofs: Vec<Option<usize>>,
    /// `t·φ` at each edge quadrature point, already multiplied by the jump sign.
    jump_t: Vec<[f64; 3]>,
    /// `t·(ε(φ) n)` times the averaging weight.
    avg_t: Vec<f64>,
}

fn edge_traces(mesh: &Mesh, map: &DofMap, bases: &[ElementBasis], e: usize) -> Vec<Trace> {
    let (t1, t2) = mesh.edge_to_triangles[e];
    let [a, b] = mesh.edges[e];
    let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
    let n = mesh.unit_normals[e];
    let tan = [-n[1], n[0]];
    let weight = if t2.is_some() { 0.5 } else { 1.0 };
    let mut sides = vec![(t1, 1.0)];
    if let Some(t2) = t2 {
        sides.push((t2, -1.0));
    }
    sides
        .into_iter()
        .map(|(t, sign)| {
            let basis = &bases[t];
            let nb = basis.len();
            let mut jump_t = vec![[0.0; 3]; nb];
            for (q, &(s, _)) in EDGE_GAUSS3.iter().enumerate() {
                let v = basis.values(lerp(pa, pb, s));
                for i in 0..nb {
                    jump_t[i][q] = sign * (v[i][0] * tan[0] + v[i][1] * tan[1]);
                }
            }
            let avg_t = basis
                .gradients()
                .iter()
                .map(|g| {
                    let e = strain(g);
                    let en = [e[0][0] * n[0] + e[0][1] * n[1], e[1][0] * n[0] + e[1][1] * n[1]];
                    weight * (en[0] * tan[0] + en[1] * tan[1])
                })
                .collect();
            Trace { dofs: map.local_to_global[t].clone(), jump_t, avg_t }
        })
        .collect()
}

/// Interior-penalty form
/// `Σ_T ∫ ε(u):ε(w) − Σ_e ∫ {ε(u)}·[w_t] − Σ_e ∫ {ε(w)}·[u_t] + Σ_e η/h_e ∫ [u_t]·[w_t]`.
pub fn assemble_dg_elasticity(mesh: &Mesh, map: &DofMap, config: &DgConfig) -> Result<CsrMatrix> {
    config.validate()?;
    let g = dg_grams(mesh, map)?;
    let cons = consistency(mesh, map)?;
    Ok(g.strain.axpby(1.0, &cons, -1.0).axpby(1.0, &cons.transpose(), -1.0).axpby(1.0, &g.jump, config.eta))
}

fn consistency(mesh: &Mesh, map: &DofMap) -> Result<CsrMatrix> {
    let bases = bases(mesh, SpaceKind::Bdm1);
    let mut t = TripletBuilder::new(map.n_dofs, map.n_dofs);
    for e in 0..mesh.n_edges() {
        let len = mesh.edge_lengths[e];
        let traces = edge_traces(mesh, map, &bases, e);
        // (row i = test w, col j = trial u): ∫ {ε(u)}·[w_t]
        for ti in &traces {
            for tj in &traces {
                for (i, gi) in ti.dofs.iter().enumerate() {
                    let Some(gi) = gi else { continue };
                    let jw: f64 = EDGE_GAUSS3.iter().enumerate().map(|(q, &(_, w))| w * ti.jump_t[i][q]).sum();
                    for (j, gj) in tj.dofs.iter().enumerate() {
                        let Some(gj) = gj else { continue };
                        t.push(*gi, *gj, len * tj.avg_t[j] * jw);
                    }
                }
            }
        }
    }
    Ok(t.build())
}

/// Gram matrices of the pieces of the mesh-dependent norms.
#[derive(Debug, Clone)]
pub struct DgGrams {
    /// `Σ_T ∫ ε(u):ε(w)`
    pub strain: CsrMatrix,
    /// `Σ_T ∫ ∇u:∇w`
    pub gradient: CsrMatrix,
    /// `Σ_e h_e⁻¹ ∫ [u_t]·[w_t]`
    pub jump: CsrMatrix,
}

impl DgGrams {
    /// Gram of `‖u‖_h² = Σ‖ε(u)‖² + Σ h_e⁻¹‖[u_t]‖²`.
    pub fn h_norm(&self) -> CsrMatrix {
        self.strain.axpby(1.0, &self.jump, 1.0)
    }

    /// Gram of `‖u‖²_{1,h}`; also the DG norm at lowest order.
    pub fn one_h_norm(&self) -> CsrMatrix {
        self.gradient.axpby(1.0, &self.jump, 1.0)
    }
}

pub fn dg_grams(mesh: &Mesh, map: &DofMap) -> Result<DgGrams> {
    map.check_mesh(mesh)?;
    if map.kind != SpaceKind::Bdm1 {
        return Err(MpetError::Dimension(format!("DG forms need BDM1, got {:?}", map.kind)));
    }
    let bases = bases(mesh, SpaceKind::Bdm1);
    let n = map.n_dofs;
    let (mut st, mut gr, mut ju) = (TripletBuilder::new(n, n), TripletBuilder::new(n, n), TripletBuilder::new(n, n));
    for tri in 0..mesh.n_triangles() {
        let g = bases[tri].gradients();
        let e: Vec<_> = g.iter().map(strain).collect();
        let area = mesh.triangle_areas[tri];
        let dofs = &map.local_to_global[tri];
        let mut ls = vec![0.0; 36];
        let mut lg = vec![0.0; 36];
        for i in 0..6 {
            for j in 0..6 {
                ls[i * 6 + j] = area * ddot(&e[i], &e[j]);
                lg[i * 6 + j] = area * ddot(&g[i], &g[j]);
            }
        }
        scatter(&mut st, dofs, dofs, &ls);
        scatter(&mut gr, dofs, dofs, &lg);
    }
    for e in 0..mesh.n_edges() {
        let traces = edge_traces(mesh, map, &bases, e);
        for ti in &traces {
            for tj in &traces {
                for (i, gi) in ti.dofs.iter().enumerate() {
                    let Some(gi) = gi else { continue };
                    for (j, gj) in tj.dofs.iter().enumerate() {
                        let Some(gj) = gj else { continue };
                        let s: f64 = EDGE_GAUSS3
                            .iter()
                            .enumerate()
                            .map(|(q, &(_, w))| w * ti.jump_t[i][q] * tj.jump_t[j][q])
                            .sum();
                        // len · (1/h_e) with h_e = len
                        ju.push(*gi, *gj, s);
                    }
                }
            }
        }
    }
    Ok(DgGrams { strain: st.build(), gradient: gr.build(), jump: ju.build() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgNorms {
    pub h: f64,
    pub one_h: f64,
    pub dg: f64,
}

/// `(‖u‖_h, ‖u‖_{1,h}, ‖u‖_DG)`; the second-derivative term of the DG norm
/// vanishes identically for piecewise linears.
pub fn dg_norms(mesh: &Mesh, map: &DofMap, coeffs: &[f64]) -> Result<DgNorms> {
    if coeffs.len() != map.n_dofs {
        return Err(MpetError::Dimension(format!("{} coefficients for {} dofs", coeffs.len(), map.n_dofs)));
    }
    let g = dg_grams(mesh, map)?;
    let h = g.h_norm().bilinear(coeffs, coeffs).max(0.0).sqrt();
    let one_h = g.one_h_norm().bilinear(coeffs, coeffs).max(0.0).sqrt();
    Ok(DgNorms { h, one_h, dg: one_h })
}

/// Edge-moment interpolation into BDM1/RT0. Eliminated boundary DOFs are dropped.
pub fn interpolate_vector(mesh: &Mesh, map: &DofMap, f: impl Fn([f64; 2]) -> [f64; 2]) -> Result<Vec<f64>> {
    map.check_mesh(mesh)?;
    if !map.kind.is_vector() {
        return Err(MpetError::Dimension("vector interpolation into P0".into()));
    }
    let mut out = vec![0.0; map.n_dofs];
    for tri in 0..mesh.n_triangles() {
        for k in 0..3 {
            let e = mesh.triangle_edges[tri][k];
            let [a, b] = mesh.edges[e];
            let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
            let n = mesh.unit_normals[e];
            let len = mesh.edge_lengths[e];
            let mut m = [0.0; 3];
            for &(s, w) in &EDGE_GAUSS3 {
                let v = f(lerp(pa, pb, s));
                let vn = v[0] * n[0] + v[1] * n[1];
                m[0] += len * w * vn * (1.0 - s);
                m[1] += len * w * vn * s;
                m[2] += len * w * vn;
            }
            let dofs = &map.local_to_global[tri];
            match map.kind {
                SpaceKind::Bdm1 => {
                    if let Some(g) = dofs[2 * k] {
                        out[g] = m[0];
                    }
                    if let Some(g) = dofs[2 * k + 1] {
                        out[g] = m[1];
                    }
                }
                _ => {
                    if let Some(g) = dofs[k] {
                        out[g] = m[2];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Cell averages into P0.
pub fn interpolate_scalar(mesh: &Mesh, map: &DofMap, f: impl Fn([f64; 2]) -> f64) -> Result<Vec<f64>> {
    map.check_mesh(mesh)?;
    if map.kind != SpaceKind::P0 {
        return Err(MpetError::Dimension(format!("scalar interpolation into {:?}", map.kind)));
    }
    Ok((0..mesh.n_triangles())
        .map(|tri| {
            let p = mesh.triangle_coords(tri);
            TRIANGLE_DEG4.iter().map(|(l, w)| w * f(barycentric_point(p, *l))).sum()
        })
        .collect())
}

/// `∫ f·φ_i` for every global DOF of a vector space.
pub fn load_vector(mesh: &Mesh, map: &DofMap, f: impl Fn([f64; 2]) -> [f64; 2]) -> Result<Vec<f64>> {
    map.check_mesh(mesh)?;
    let mut out = vec![0.0; map.n_dofs];
    for tri in 0..mesh.n_triangles() {
        let basis = ElementBasis::new(mesh, map.kind, tri);
        let p = mesh.triangle_coords(tri);
        let area = mesh.triangle_areas[tri];
        for (l, w) in &TRIANGLE_DEG4 {
            let x = barycentric_point(p, *l);
            let fx = f(x);
            let v = basis.values(x);
            for (vi, g) in v.iter().zip(&map.local_to_global[tri]) {
                if let Some(g) = g {
                    out[*g] += area * w * (vi[0] * fx[0] + vi[1] * fx[1]);
                }
            }
        }
    }
    Ok(out)
}

/// Value of a discrete vector field at `x` inside triangle `tri`.
pub fn evaluate_vector(mesh: &Mesh, map: &DofMap, coeffs: &[f64], tri: usize, x: [f64; 2]) -> [f64; 2] {
    let v = ElementBasis::new(mesh, map.kind, tri).values(x);
    let mut out = [0.0; 2];
    for (vi, g) in v.iter().zip(&map.local_to_global[tri]) {
        if let Some(g) = g {
            out[0] += coeffs[*g] * vi[0];
            out[1] += coeffs[*g] * vi[1];
        }
    }
    out
}

/// Per-triangle divergence of a discrete vector field (constant on each triangle).
pub fn elementwise_divergence(mesh: &Mesh, map: &DofMap, coeffs: &[f64]) -> Vec<f64> {
    (0..mesh.n_triangles())
        .map(|tri| {
            let d = ElementBasis::new(mesh, map.kind, tri).divergences();
            d.iter()
                .zip(&map.local_to_global[tri])
                .filter_map(|(di, g)| g.map(|g| di * coeffs[g]))
                .sum()
        })
        .collect()
}
