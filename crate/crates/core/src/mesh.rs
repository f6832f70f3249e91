//! Structured triangulations of the unit square with the edge, normal and
//! jump bookkeeping needed by H(div) elements and interior-penalty DG.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{MpetError, Result};

#[derive(Debug, Clone)]
pub struct Mesh {
    pub nx: usize,
    pub ny: usize,
    pub vertices: Vec<[f64; 2]>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    /// `[low, high]` vertex indices; this fixes the edge orientation.
    pub edges: Vec<[usize; 2]>,
    /// `(T1, Some(T2))` for interior edges, `(T, None)` on the boundary.
    /// The stored normal is the outward normal of `T1`.
    pub edge_to_triangles: Vec<(usize, Option<usize>)>,
    pub boundary_flags: Vec<bool>,
    pub edge_lengths: Vec<f64>,
    pub triangle_diameters: Vec<f64>,
    pub triangle_areas: Vec<f64>,
    pub unit_normals: Vec<[f64; 2]>,
    /// Local edge `k` of a triangle is the edge opposite its vertex `k`.
    pub triangle_edges: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeTrace {
    pub t1: usize,
    pub t2: Option<usize>,
    /// Outward normal of `t1` (equals the stored edge normal).
    pub normal: [f64; 2],
    pub h_e: f64,
    pub boundary: bool,
}

pub fn build_structured_mesh(nx: usize, ny: usize) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(MpetError::Mesh(format!("structured mesh needs nx, ny >= 1, got ({nx}, {ny})")));
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([i as f64 / nx as f64, j as f64 / ny as f64]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v11, v01) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }

    let mut edge_ids: BTreeMap<[usize; 2], Vec<usize>> = BTreeMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
            edge_ids.entry([a.min(b), a.max(b)]).or_default().push(t);
        }
    }
    let edges: Vec<[usize; 2]> = edge_ids.keys().copied().collect();
    let lookup: BTreeMap<[usize; 2], usize> = edges.iter().enumerate().map(|(e, &k)| (k, e)).collect();

    let triangle_areas: Vec<f64> = triangles.iter().map(|t| signed_area(&vertices, t)).collect();
    let triangle_edges: Vec<[usize; 3]> = triangles
        .iter()
        .map(|tri| {
            std::array::from_fn(|k| {
                let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
                lookup[&[a.min(b), a.max(b)]]
            })
        })
        .collect();
    let triangle_diameters = triangles
        .iter()
        .map(|tri| (0..3).map(|k| dist(vertices[tri[k]], vertices[tri[(k + 1) % 3]])).fold(0.0, f64::max))
        .collect();

    let mut edge_to_triangles = Vec::with_capacity(edges.len());
    let mut boundary_flags = Vec::with_capacity(edges.len());
    let mut edge_lengths = Vec::with_capacity(edges.len());
    let mut unit_normals = Vec::with_capacity(edges.len());
    for (e, &[a, b]) in edges.iter().enumerate() {
        let ts = &edge_ids[&[a, b]];
        let (pa, pb) = (vertices[a], vertices[b]);
        let len = dist(pa, pb);
        let t = [(pb[0] - pa[0]) / len, (pb[1] - pa[1]) / len];
        let mut n = [t[1], -t[0]];
        let outward_of = |tri: usize, n: [f64; 2]| {
            let c = centroid(&vertices, &triangles[tri]);
            (pa[0] - c[0]) * n[0] + (pa[1] - c[1]) * n[1] > 0.0
        };
        let pair = match ts.as_slice() {
            [t0] => {
                if !outward_of(*t0, n) {
                    n = [-n[0], -n[1]];
                }
                (*t0, None)
            }
            [t0, t1] => {
                if outward_of(*t0, n) {
                    (*t0, Some(*t1))
                } else {
                    (*t1, Some(*t0))
                }
            }
            _ => return Err(MpetError::Mesh(format!("edge {e} shared by {} triangles", ts.len()))),
        };
        edge_to_triangles.push(pair);
        boundary_flags.push(pair.1.is_none());
        edge_lengths.push(len);
        unit_normals.push(n);
    }

    Ok(Mesh {
        nx,
        ny,
        vertices,
        triangles,
        edges,
        edge_to_triangles,
        boundary_flags,
        edge_lengths,
        triangle_diameters,
        triangle_areas,
        unit_normals,
        triangle_edges,
    })
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn signed_area(v: &[[f64; 2]], t: &[usize; 3]) -> f64 {
    let (a, b, c) = (v[t[0]], v[t[1]], v[t[2]]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn centroid(v: &[[f64; 2]], t: &[usize; 3]) -> [f64; 2] {
    let s = t.iter().fold([0.0, 0.0], |acc, &i| [acc[0] + v[i][0], acc[1] + v[i][1]]);
    [s[0] / 3.0, s[1] / 3.0]
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        centroid(&self.vertices, &self.triangles[t])
    }

    pub fn max_diameter(&self) -> f64 {
        self.triangle_diameters.iter().copied().fold(0.0, f64::max)
    }

    /// +1 if the stored normal of local edge `k` of triangle `t` points out of `t`.
    pub fn orientation_sign(&self, t: usize, k: usize) -> f64 {
        let e = self.triangle_edges[t][k];
        if self.edge_to_triangles[e].0 == t {
            1.0
        } else {
            -1.0
        }
    }

    pub fn edge_trace_data(&self, e: usize) -> Result<EdgeTrace> {
        if e >= self.edges.len() {
            return Err(MpetError::Mesh(format!("edge index {e} out of range ({} edges)", self.edges.len())));
        }
        let (t1, t2) = self.edge_to_triangles[e];
        Ok(EdgeTrace {
            t1,
            t2,
            normal: self.unit_normals[e],
            h_e: self.edge_lengths[e],
            boundary: self.boundary_flags[e],
        })
    }

    /// Plain-text dump: vertex, triangle and edge records, one per line.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "vertices {}", self.vertices.len())?;
        for (i, v) in self.vertices.iter().enumerate() {
            writeln!(w, "{i} {:.17e} {:.17e}", v[0], v[1])?;
        }
        writeln!(w, "triangles {}", self.triangles.len())?;
        for (i, t) in self.triangles.iter().enumerate() {
            writeln!(w, "{i} {} {} {}", t[0], t[1], t[2])?;
        }
        writeln!(w, "edges {}", self.edges.len())?;
        for (i, e) in self.edges.iter().enumerate() {
            let (t1, t2) = self.edge_to_triangles[i];
            let t2 = t2.map_or("-".to_string(), |t| t.to_string());
            writeln!(w, "{i} {} {} {} {t1} {t2}", e[0], e[1], u8::from(self.boundary_flags[i]))?;
        }
        Ok(())
    }
}
