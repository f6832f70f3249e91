use nalgebra::DMatrix;

use super::SpaceKind;
use crate::mesh::Mesh;
use crate::quadrature::{lerp, EDGE_GAUSS3};

/// Nodal basis of one triangle, obtained by inverting the DOF functionals
/// against centroid-scaled monomials. DOFs use the global edge normal, so
/// neighbouring triangles agree on shared normal moments without sign fixes.
#[derive(Debug, Clone)]
pub struct ElementBasis {
    kind: SpaceKind,
    center: [f64; 2],
    scale: f64,
    /// `coeffs[i * nm + j]`: weight of monomial `j` in basis function `i`.
    coeffs: Vec<f64>,
}

fn n_monomials(kind: SpaceKind) -> usize {
    match kind {
        SpaceKind::Bdm1 => 6,
        SpaceKind::Rt0 => 3,
        SpaceKind::P0 => 1,
    }
}

impl ElementBasis {
    pub fn new(mesh: &Mesh, kind: SpaceKind, t: usize) -> Self {
        let center = mesh.centroid(t);
        let scale = mesh.triangle_diameters[t];
        let nm = n_monomials(kind);
        let mut basis = Self { kind, center, scale, coeffs: vec![0.0; nm * nm] };
        if kind == SpaceKind::P0 {
            basis.coeffs[0] = 1.0;
            return basis;
        }
        let tri = mesh.triangles[t];
        let mut v = DMatrix::<f64>::zeros(nm, nm);
        for k in 0..3 {
            let e = mesh.triangle_edges[t][k];
            let [lo, hi] = mesh.edges[e];
            debug_assert!([tri[(k + 1) % 3], tri[(k + 2) % 3]].contains(&lo));
            let (pa, pb) = (mesh.vertices[lo], mesh.vertices[hi]);
            let n = mesh.unit_normals[e];
            let len = mesh.edge_lengths[e];
            for &(s, w) in &EDGE_GAUSS3 {
                let x = lerp(pa, pb, s);
                for j in 0..nm {
                    let m = basis.monomial(j, x);
                    let mn = m[0] * n[0] + m[1] * n[1];
                    match kind {
                        SpaceKind::Bdm1 => {
                            v[(2 * k, j)] += len * w * mn * (1.0 - s);
                            v[(2 * k + 1, j)] += len * w * mn * s;
                        }
                        _ => v[(k, j)] += len * w * mn,
                    }
                }
            }
        }
        let c = v.try_inverse().expect("unisolvent element");
        for i in 0..nm {
            for j in 0..nm {
                basis.coeffs[i * nm + j] = c[(j, i)];
            }
        }
        basis
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        n_monomials(self.kind)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn monomial(&self, j: usize, x: [f64; 2]) -> [f64; 2] {
        let xi = (x[0] - self.center[0]) / self.scale;
        let eta = (x[1] - self.center[1]) / self.scale;
        match (self.kind, j) {
            (SpaceKind::Bdm1, 0) => [1.0, 0.0],
            (SpaceKind::Bdm1, 1) => [xi, 0.0],
            (SpaceKind::Bdm1, 2) => [eta, 0.0],
            (SpaceKind::Bdm1, 3) => [0.0, 1.0],
            (SpaceKind::Bdm1, 4) => [0.0, xi],
            (SpaceKind::Bdm1, 5) => [0.0, eta],
            (SpaceKind::Rt0, 0) => [1.0, 0.0],
            (SpaceKind::Rt0, 1) => [0.0, 1.0],
            (SpaceKind::Rt0, 2) => [xi, eta],
            (SpaceKind::P0, 0) => [1.0, 0.0],
            _ => unreachable!(),
        }
    }

    /// `∂m_a/∂x_b` of monomial `j`.
    fn monomial_grad(&self, j: usize) -> [[f64; 2]; 2] {
        let s = 1.0 / self.scale;
        match (self.kind, j) {
            (SpaceKind::Bdm1, 1) => [[s, 0.0], [0.0, 0.0]],
            (SpaceKind::Bdm1, 2) => [[0.0, s], [0.0, 0.0]],
            (SpaceKind::Bdm1, 4) => [[0.0, 0.0], [s, 0.0]],
            (SpaceKind::Bdm1, 5) => [[0.0, 0.0], [0.0, s]],
            (SpaceKind::Rt0, 2) => [[s, 0.0], [0.0, s]],
            _ => [[0.0; 2]; 2],
        }
    }

    /// Values of all basis functions at `x` (P0: first component is 1).
    pub fn values(&self, x: [f64; 2]) -> Vec<[f64; 2]> {
        let nm = self.len();
        let mono: Vec<[f64; 2]> = (0..nm).map(|j| self.monomial(j, x)).collect();
        (0..nm)
            .map(|i| {
                let c = &self.coeffs[i * nm..(i + 1) * nm];
                mono.iter().zip(c).fold([0.0, 0.0], |acc, (m, w)| [acc[0] + w * m[0], acc[1] + w * m[1]])
            })
            .collect()
    }

    /// Constant gradients `G[a][b] = ∂φ_a/∂x_b`.
    pub fn gradients(&self) -> Vec<[[f64; 2]; 2]> {
        let nm = self.len();
        let grads: Vec<[[f64; 2]; 2]> = (0..nm).map(|j| self.monomial_grad(j)).collect();
        (0..nm)
            .map(|i| {
                let c = &self.coeffs[i * nm..(i + 1) * nm];
                let mut g = [[0.0; 2]; 2];
                for (gj, w) in grads.iter().zip(c) {
                    for a in 0..2 {
                        for b in 0..2 {
                            g[a][b] += w * gj[a][b];
                        }
                    }
                }
                g
            })
            .collect()
    }

    pub fn divergences(&self) -> Vec<f64> {
        self.gradients().iter().map(|g| g[0][0] + g[1][1]).collect()
    }
}
