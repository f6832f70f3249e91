//! BDM₁, RT₀ and P₀ spaces on triangles: local bases, DOF maps and the
//! elementary operators (mass, divergence, interior-penalty elasticity).

mod basis;
mod operators;

pub use basis::ElementBasis;
pub use operators::{
    assemble_dg_elasticity, assemble_div, assemble_mass, dg_grams, dg_norms, elementwise_divergence, evaluate_vector,
    interpolate_scalar, interpolate_vector, load_vector, DgGrams, DgNorms,
};

use serde::{Deserialize, Serialize};

use crate::error::{MpetError, Result};
use crate::mesh::Mesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpaceKind {
    Bdm1,
    Rt0,
    P0,
}

impl SpaceKind {
    pub fn local_dofs(self) -> usize {
        match self {
            SpaceKind::Bdm1 => 6,
            SpaceKind::Rt0 => 3,
            SpaceKind::P0 => 1,
        }
    }

    pub fn is_vector(self) -> bool {
        !matches!(self, SpaceKind::P0)
    }

    fn dofs_per_edge(self) -> usize {
        match self {
            SpaceKind::Bdm1 => 2,
            SpaceKind::Rt0 => 1,
            SpaceKind::P0 => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgConfig {
    pub eta: f64,
    pub quadrature_order: usize,
}

impl Default for DgConfig {
    fn default() -> Self {
        Self { eta: 10.0, quadrature_order: 4 }
    }
}

impl DgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(MpetError::Parameter(format!("DG penalty must be positive, got {}", self.eta)));
        }
        if self.quadrature_order > 4 {
            return Err(MpetError::Parameter(format!(
                "quadrature order {} not available (rules are exact to degree 4)",
                self.quadrature_order
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DofMap {
    pub kind: SpaceKind,
    pub constrained: bool,
    pub n_dofs: usize,
    /// Per triangle, local DOF → global index (`None` = eliminated boundary DOF).
    pub local_to_global: Vec<Vec<Option<usize>>>,
    /// Per global DOF: lies on ∂Ω (always false once constrained).
    pub boundary_flags: Vec<bool>,
    /// Per triangle and local edge: +1 if the global edge normal is outward.
    pub orientation_signs: Vec<[f64; 3]>,
    mesh_shape: (usize, usize, usize),
}

pub fn build_dofmap(mesh: &Mesh, kind: SpaceKind, constrain_boundary: bool) -> DofMap {
    let mesh_shape = (mesh.nx, mesh.ny, mesh.n_triangles());
    let orientation_signs = (0..mesh.n_triangles())
        .map(|t| std::array::from_fn(|k| mesh.orientation_sign(t, k)))
        .collect();
    if kind == SpaceKind::P0 {
        return DofMap {
            kind,
            constrained: constrain_boundary,
            n_dofs: mesh.n_triangles(),
            local_to_global: (0..mesh.n_triangles()).map(|t| vec![Some(t)]).collect(),
            boundary_flags: vec![false; mesh.n_triangles()],
            orientation_signs,
            mesh_shape,
        };
    }
    let per_edge = kind.dofs_per_edge();
    let mut full_to_reduced = Vec::with_capacity(per_edge * mesh.n_edges());
    let mut boundary_flags = Vec::new();
    let mut next = 0;
    for e in 0..mesh.n_edges() {
        for _ in 0..per_edge {
            if constrain_boundary && mesh.boundary_flags[e] {
                full_to_reduced.push(None);
            } else {
                full_to_reduced.push(Some(next));
                boundary_flags.push(mesh.boundary_flags[e]);
                next += 1;
            }
        }
    }
    let local_to_global = (0..mesh.n_triangles())
        .map(|t| {
            let mut l = Vec::with_capacity(kind.local_dofs());
            for k in 0..3 {
                let e = mesh.triangle_edges[t][k];
                for a in 0..per_edge {
                    l.push(full_to_reduced[per_edge * e + a]);
                }
            }
            l
        })
        .collect();
    DofMap {
        kind,
        constrained: constrain_boundary,
        n_dofs: next,
        local_to_global,
        boundary_flags,
        orientation_signs,
        mesh_shape,
    }
}

impl DofMap {
    pub(crate) fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if self.mesh_shape != (mesh.nx, mesh.ny, mesh.n_triangles()) {
            return Err(MpetError::Dimension(format!(
                "dof map built for mesh {:?}, used with ({}, {}, {})",
                self.mesh_shape,
                mesh.nx,
                mesh.ny,
                mesh.n_triangles()
            )));
        }
        Ok(())
    }
}
