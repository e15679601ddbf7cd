//! Compressed sparse row storage, the P1 sparsity pattern of a mesh, and
//! Dirichlet elimination.

use crate::mesh::Mesh;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Assemble from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0; n_rows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            assert!(r < n_rows && c < n_cols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `(col, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[range.clone()].binary_search(&c) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        (0..self.n_rows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<(usize, usize, f64)> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.n_cols, self.n_rows, &t)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        self.triplets()
            .map(|(r, c, v)| (v - self.get(c, r)).abs())
            .fold(0.0, f64::max)
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// `self + other`; patterns may differ.
    pub fn add(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        let t: Vec<_> = self.triplets().chain(other.triplets()).collect();
        Self::from_triplets(self.n_rows, self.n_cols, &t)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (r, c, v) in self.triplets() {
            d[r][c] = v;
        }
        d
    }
}

/// Full vertex-by-vertex P1 sparsity pattern with element scatter slots.
#[derive(Clone, Debug)]
pub struct Pattern {
    mesh_id: u64,
    template: CsrMatrix,
    element_slots: Vec<[usize; 9]>,
}

impl Pattern {
    pub fn new(mesh: &Mesh) -> Self {
        let n = mesh.n_vertices();
        let mut neighbors: Vec<Vec<usize>> = (0..n).map(|v| vec![v]).collect();
        for &[a, b] in mesh.edges() {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for nb in &mut neighbors {
            nb.sort_unstable();
            col_idx.extend_from_slice(nb);
            row_ptr.push(col_idx.len());
        }
        let values = vec![0.0; col_idx.len()];
        let template = CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr,
            col_idx,
            values,
        };
        let element_slots = mesh
            .triangles()
            .iter()
            .map(|tri| {
                let mut slots = [0; 9];
                for a in 0..3 {
                    let start = template.row_ptr[tri[a]];
                    let cols = &template.col_idx[start..template.row_ptr[tri[a] + 1]];
                    for b in 0..3 {
                        let k = cols.binary_search(&tri[b]).expect("pattern covers element");
                        slots[3 * a + b] = start + k;
                    }
                }
                slots
            })
            .collect();
        Self {
            mesh_id: mesh.id(),
            template,
            element_slots,
        }
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    /// Scatter element matrices (row-major 3×3, rows = test functions) into a
    /// zeroed copy of the pattern, in element order.
    pub fn scatter(&self, local: &[[[f64; 3]; 3]]) -> CsrMatrix {
        assert_eq!(local.len(), self.element_slots.len());
        let mut m = self.template.clone();
        for (slots, k) in self.element_slots.iter().zip(local) {
            for a in 0..3 {
                for b in 0..3 {
                    m.values[slots[3 * a + b]] += k[a][b];
                }
            }
        }
        m
    }
}

/// Vertex ↔ free-unknown correspondence excluding Dirichlet vertices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FreeDofs {
    free_of_vertex: Vec<Option<usize>>,
    vertex_of_free: Vec<usize>,
}

impl FreeDofs {
    pub fn interior(mesh: &Mesh) -> Self {
        let mut free_of_vertex = vec![None; mesh.n_vertices()];
        let mut vertex_of_free = Vec::new();
        for (v, slot) in free_of_vertex.iter_mut().enumerate() {
            if !mesh.is_boundary_vertex(v) {
                *slot = Some(vertex_of_free.len());
                vertex_of_free.push(v);
            }
        }
        Self {
            free_of_vertex,
            vertex_of_free,
        }
    }

    pub fn n_free(&self) -> usize {
        self.vertex_of_free.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.free_of_vertex.len()
    }

    pub fn free_index(&self, v: usize) -> Option<usize> {
        self.free_of_vertex[v]
    }

    pub fn vertex(&self, i: usize) -> usize {
        self.vertex_of_free[i]
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.vertex_of_free.iter().map(|&v| full[v]).collect()
    }

    /// Full vertex vector with `free` on free vertices and `boundary` elsewhere.
    pub fn extend(&self, free: &[f64], boundary: &[f64]) -> Vec<f64> {
        let mut full = boundary.to_vec();
        for (i, &v) in self.vertex_of_free.iter().enumerate() {
            full[v] = free[i];
        }
        full
    }
}

/// Linear system over the free unknowns.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub dofs: FreeDofs,
}

/// Eliminate Dirichlet rows and columns of a full system; `boundary` holds
/// prescribed values on boundary vertices (other entries are ignored).
pub fn apply_dirichlet(
    full: &CsrMatrix,
    rhs: &[f64],
    mesh: &Mesh,
    boundary: &[f64],
) -> SparseSystem {
    let dofs = FreeDofs::interior(mesh);
    let mut triplets = Vec::with_capacity(full.nnz());
    let mut reduced_rhs = Vec::with_capacity(dofs.n_free());
    for i in 0..dofs.n_free() {
        let v = dofs.vertex(i);
        let mut b = rhs[v];
        for (w, a) in full.row(v) {
            match dofs.free_index(w) {
                Some(j) => triplets.push((i, j, a)),
                None => b -= a * boundary[w],
            }
        }
        reduced_rhs.push(b);
    }
    let n = dofs.n_free();
    SparseSystem {
        matrix: CsrMatrix::from_triplets(n, n, &triplets),
        rhs: reduced_rhs,
        dofs,
    }
}

/// Homogeneous Dirichlet elimination.
pub fn apply_dirichlet_zero(full: &CsrMatrix, rhs: &[f64], mesh: &Mesh) -> SparseSystem {
    let zeros = vec![0.0; mesh.n_vertices()];
    apply_dirichlet(full, rhs, mesh, &zeros)
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
