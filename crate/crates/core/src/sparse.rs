//! Compressed sparse row storage, triplet assembly, Matrix Market output and an
//! envelope (skyline) LDLᵀ factorization with reverse Cuthill–McKee ordering.

use std::collections::VecDeque;
use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{MpetError, Result};

/// Accumulates `(row, col, value)` entries; duplicates are summed on `build`.
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, entries: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self { nrows, ncols, entries: Vec::with_capacity(cap) }
    }

    #[inline]
    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.nrows && j < self.ncols);
        if v != 0.0 {
            self.entries.push((i, j, v));
        }
    }

    /// Adds `scale * m` with its (0,0) entry placed at `(r0, c0)`.
    pub fn add_block(&mut self, r0: usize, c0: usize, m: &CsrMatrix, scale: f64) {
        if scale == 0.0 {
            return;
        }
        for i in 0..m.nrows {
            for (j, v) in m.row(i) {
                self.push(r0 + i, c0 + j, scale * v);
            }
        }
    }

    /// Adds `scale * mᵀ` with its (0,0) entry placed at `(r0, c0)`.
    pub fn add_block_transposed(&mut self, r0: usize, c0: usize, m: &CsrMatrix, scale: f64) {
        if scale == 0.0 {
            return;
        }
        for i in 0..m.nrows {
            for (j, v) in m.row(i) {
                self.push(r0 + j, c0 + i, scale * v);
            }
        }
    }

    pub fn build(mut self) -> CsrMatrix {
        self.entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.entries.len());
        let mut data: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(i, j, v) in &self.entries {
            if last == Some((i, j)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                data.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.nrows {
            indptr[i + 1] += indptr[i];
        }
        CsrMatrix { nrows: self.nrows, ncols: self.ncols, indptr, indices, data }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), data: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut t = TripletBuilder::new(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            t.push(i, i, v);
        }
        t.build()
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut t = TripletBuilder::new(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                t.push(i, j, m[(i, j)]);
            }
        }
        t.build()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.data[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(k) => self.data[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                s += self.data[k] * x[self.indices[k]];
            }
            *yi = s;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    /// `y = Aᵀ x`
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            for (j, v) in self.row(i) {
                y[j] += v * xi;
            }
        }
        y
    }

    /// `xᵀ A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.matvec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = TripletBuilder::with_capacity(self.ncols, self.nrows, self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                t.push(j, i, v);
            }
        }
        t.build()
    }

    pub fn scaled(&self, s: f64) -> CsrMatrix {
        let mut m = self.clone();
        m.data.iter_mut().for_each(|v| *v *= s);
        m
    }

    /// `a·self + b·other`
    pub fn axpby(&self, a: f64, other: &CsrMatrix, b: f64) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t = TripletBuilder::with_capacity(self.nrows, self.ncols, self.nnz() + other.nnz());
        t.add_block(0, 0, self, a);
        t.add_block(0, 0, other, b);
        t.build()
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, other.nrows);
        let mut t = TripletBuilder::new(self.nrows, other.ncols);
        for i in 0..self.nrows {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    t.push(i, j, a * b);
                }
            }
        }
        t.build()
    }

    /// Rows `r` and columns `c` (half-open ranges) as a new matrix.
    pub fn submatrix(&self, r: std::ops::Range<usize>, c: std::ops::Range<usize>) -> CsrMatrix {
        let mut t = TripletBuilder::new(r.len(), c.len());
        for i in r.clone() {
            for (j, v) in self.row(i) {
                if c.contains(&j) {
                    t.push(i - r.start, j - c.start, v);
                }
            }
        }
        t.build()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `max |A − Aᵀ|` over all entries.
    pub fn symmetry_defect(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        let mut d = 0.0f64;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                d = d.max((v - self.get(j, i)).abs());
            }
        }
        d
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// Matrix Market coordinate format. With `symmetric`, only the lower
    /// triangle is written and the header says so.
    pub fn write_matrix_market<W: Write>(&self, mut w: W, symmetric: bool) -> std::io::Result<()> {
        let kind = if symmetric { "symmetric" } else { "general" };
        writeln!(w, "%%MatrixMarket matrix coordinate real {kind}")?;
        let entries: Vec<(usize, usize, f64)> = (0..self.nrows)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .filter(|&(i, j, _)| !symmetric || j <= i)
            .collect();
        writeln!(w, "{} {} {}", self.nrows, self.ncols, entries.len())?;
        for (i, j, v) in entries {
            writeln!(w, "{} {} {:.17e}", i + 1, j + 1, v)?;
        }
        Ok(())
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nrows];
        for i in 0..self.nrows {
            for (j, _) in self.row(i) {
                if i != j {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }
}

/// Reverse Cuthill–McKee ordering of the symmetric pattern of `a`.
/// Returns `perm` with `perm[new] = old`.
pub fn rcm_ordering(a: &CsrMatrix) -> Vec<usize> {
    let all: Vec<usize> = (0..a.nrows()).collect();
    rcm_grouped(a, &[all])
}

/// RCM applied separately inside each group of indices; groups are
/// concatenated in the given order (used to keep pressure unknowns last).
pub fn rcm_grouped(a: &CsrMatrix, groups: &[Vec<usize>]) -> Vec<usize> {
    let adj = a.adjacency();
    let mut group_of = vec![usize::MAX; a.nrows()];
    for (g, members) in groups.iter().enumerate() {
        for &m in members {
            group_of[m] = g;
        }
    }
    let mut perm = Vec::with_capacity(a.nrows());
    for (g, members) in groups.iter().enumerate() {
        let local: Vec<Vec<usize>> = members
            .iter()
            .map(|&m| adj[m].iter().copied().filter(|&k| group_of[k] == g).collect())
            .collect();
        perm.extend(rcm_subgraph(members, &local, &group_of, g));
    }
    perm
}

fn rcm_subgraph(members: &[usize], adj_of_member: &[Vec<usize>], group_of: &[usize], g: usize) -> Vec<usize> {
    let n = group_of.len();
    let mut slot = vec![usize::MAX; n];
    for (s, &m) in members.iter().enumerate() {
        slot[m] = s;
    }
    let degree = |m: usize| adj_of_member[slot[m]].len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(members.len());
    let mut by_degree: Vec<usize> = members.to_vec();
    by_degree.sort_by_key(|&m| (degree(m), m));
    for &seed in &by_degree {
        if visited[seed] || group_of[seed] != g {
            continue;
        }
        let start = pseudo_peripheral(seed, adj_of_member, &slot, &degree);
        let mut queue = VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj_of_member[slot[v]].iter().copied().filter(|&k| !visited[k]).collect();
            nbrs.sort_by_key(|&k| (degree(k), k));
            for k in nbrs {
                visited[k] = true;
                queue.push_back(k);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(seed: usize, adj: &[Vec<usize>], slot: &[usize], degree: &dyn Fn(usize) -> usize) -> usize {
    let levels = |root: usize| -> (usize, Vec<usize>) {
        let mut dist = std::collections::HashMap::new();
        dist.insert(root, 0usize);
        let mut queue = VecDeque::from([root]);
        let mut last = vec![root];
        let mut depth = 0;
        while let Some(v) = queue.pop_front() {
            let d = dist[&v];
            for &k in &adj[slot[v]] {
                if !dist.contains_key(&k) {
                    dist.insert(k, d + 1);
                    queue.push_back(k);
                    if d + 1 > depth {
                        depth = d + 1;
                        last.clear();
                    }
                    if d + 1 == depth {
                        last.push(k);
                    }
                }
            }
        }
        (depth, last)
    };
    let mut root = seed;
    let (mut ecc, mut last) = levels(root);
    for _ in 0..8 {
        let cand = *last.iter().min_by_key(|&&k| (degree(k), k)).unwrap();
        let (e, l) = levels(cand);
        if e <= ecc {
            break;
        }
        root = cand;
        ecc = e;
        last = l;
    }
    root
}

/// Envelope LDLᵀ factorization of a symmetric matrix without pivoting.
/// Suitable for SPD and symmetric quasi-definite matrices.
#[derive(Debug, Clone)]
pub struct EnvelopeLdl {
    n: usize,
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    lower: Vec<f64>,
    diag: Vec<f64>,
}

impl EnvelopeLdl {
    /// Factor `a` with RCM ordering.
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let perm = rcm_ordering(a);
        Self::with_ordering(a, perm)
    }

    /// Factor `a` with the given ordering (`perm[new] = old`).
    pub fn with_ordering(a: &CsrMatrix, perm: Vec<usize>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || perm.len() != n {
            return Err(MpetError::Dimension(format!("envelope factorization of {}x{} with {} perm", n, a.ncols(), perm.len())));
        }
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for old_i in 0..n {
            let i = inv[old_i];
            for (old_j, _) in a.row(old_i) {
                let j = inv[old_j];
                let (hi, lo) = if i > j { (i, j) } else { (j, i) };
                first[hi] = first[hi].min(lo);
            }
        }
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i]);
        }
        let mut lower = vec![0.0; start[n]];
        let mut diag = vec![0.0; n];
        let mut row_scale = vec![0.0f64; n];
        for old_i in 0..n {
            let i = inv[old_i];
            for (old_j, v) in a.row(old_i) {
                row_scale[i] = row_scale[i].max(v.abs());
                let j = inv[old_j];
                if j < i {
                    lower[start[i] + j - first[i]] += v;
                } else if j == i {
                    diag[i] += v;
                }
            }
        }
        // Row-by-row Crout: the row buffer holds L_ij·D_j until the row is finished.
        for i in 0..n {
            let fi = first[i];
            let (done, row_i) = lower.split_at_mut(start[i]);
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let lj = &done[start[j] + k0 - fj..start[j] + j - fj];
                let ui = &row_i[k0 - fi..j - fi];
                let s: f64 = lj.iter().zip(ui).map(|(a, b)| a * b).sum();
                row_i[j - fi] -= s;
            }
            let mut d = diag[i];
            for j in fi..i {
                let u = row_i[j - fi];
                let l = u / diag[j];
                d -= u * l;
                row_i[j - fi] = l;
            }
            if !(d.abs() > 1e-14 * row_scale[i]) || !d.is_finite() {
                return Err(MpetError::Singular(format!("zero pivot {d:e} at position {i} of {n}")));
            }
            diag[i] = d;
        }
        Ok(Self { n, perm, first, start, lower, diag })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored off-diagonal envelope entries.
    pub fn envelope_size(&self) -> usize {
        self.lower.len()
    }

    /// Counts of (negative, positive) pivots = matrix inertia.
    pub fn inertia(&self) -> (usize, usize) {
        let neg = self.diag.iter().filter(|&&d| d < 0.0).count();
        (neg, self.n - neg)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut x: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.lower[self.start[i]..self.start[i + 1]];
            let s: f64 = row.iter().zip(&x[fi..i]).map(|(l, v)| l * v).sum();
            x[i] -= s;
        }
        for (xi, d) in x.iter_mut().zip(&self.diag) {
            *xi /= d;
        }
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let xi = x[i];
            let row = &self.lower[self.start[i]..self.start[i + 1]];
            for (xj, l) in x[fi..i].iter_mut().zip(row) {
                *xj -= l * xi;
            }
        }
        let mut out = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        out
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
