//! Conforming triangulations of 2D polygonal domains.
//!
//! Triangles are stored with positive orientation and with local vertex 0
//! opposite the *refinement edge*, so the refinement edge of `[v0, v1, v2]`
//! is always `(v1, v2)`. Newest-vertex bisection relies on this layout:
//! bisecting `(v1, v2)` at `m` yields `[m, v0, v1]` and `[m, v2, v0]`, whose
//! refinement edges are the two untouched parent edges.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::{Error, Result};

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

const NO_TRIANGLE: usize = usize::MAX;

#[derive(Clone, Debug)]
pub struct Mesh {
    id: u64,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    edge_triangles: Vec<[usize; 2]>,
    triangle_edges: Vec<[usize; 3]>,
    boundary_vertex: Vec<bool>,
    vertex_parents: Vec<Option<[usize; 2]>>,
    parent_id: Option<u64>,
}

/// Precomputed affine data of one triangle.
#[derive(Clone, Copy, Debug)]
pub struct Geometry {
    pub area: f64,
    /// Gradients of the three barycentric coordinates (constant on the triangle).
    pub grads: [[f64; 2]; 3],
    pub vertices: [[f64; 2]; 3],
}

impl Geometry {
    pub fn point(&self, bary: &[f64; 3]) -> [f64; 2] {
        let v = &self.vertices;
        [
            bary[0] * v[0][0] + bary[1] * v[1][0] + bary[2] * v[2][0],
            bary[0] * v[0][1] + bary[1] * v[1][1] + bary[2] * v[2][1],
        ]
    }

    pub fn centroid(&self) -> [f64; 2] {
        self.point(&[1.0 / 3.0; 3])
    }

    /// Gradient of the linear function with the given vertex values.
    pub fn gradient(&self, values: [f64; 3]) -> [f64; 2] {
        let g = &self.grads;
        [
            values[0] * g[0][0] + values[1] * g[1][0] + values[2] * g[2][0],
            values[0] * g[0][1] + values[1] * g[1][1] + values[2] * g[2][1],
        ]
    }

    /// Longest edge.
    pub fn diameter(&self) -> f64 {
        let v = &self.vertices;
        (0..3)
            .map(|k| dist(v[(k + 1) % 3], v[(k + 2) % 3]))
            .fold(0.0, f64::max)
    }
}

/// Vertex, edge and element patches (ω_z, ω_l, ω_τ).
#[derive(Clone, Debug)]
pub struct PatchIndex {
    pub vertex_to_triangles: Vec<Vec<usize>>,
    pub edge_to_triangles: Vec<Vec<usize>>,
    pub triangle_to_neighbors_sharing_vertex: Vec<Vec<usize>>,
}

impl PatchIndex {
    /// J_z, the number of triangles around vertex `z`.
    pub fn vertex_patch_size(&self, z: usize) -> usize {
        self.vertex_to_triangles[z].len()
    }
}

/// Triangles selected for refinement.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MarkSet(BTreeSet<usize>);

impl MarkSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build a mark set, rejecting indices outside the mesh.
    pub fn from_indices<I: IntoIterator<Item = usize>>(mesh: &Mesh, indices: I) -> Result<Self> {
        let set: BTreeSet<usize> = indices.into_iter().collect();
        if let Some(&bad) = set.iter().find(|&&t| t >= mesh.n_triangles()) {
            return Err(Error::InvalidMesh(format!(
                "marked triangle {bad} out of range ({} triangles)",
                mesh.n_triangles()
            )));
        }
        Ok(Self(set))
    }

    pub fn all(mesh: &Mesh) -> Self {
        Self((0..mesh.n_triangles()).collect())
    }

    pub fn insert(&mut self, t: usize) -> bool {
        self.0.insert(t)
    }

    pub fn contains(&self, t: usize) -> bool {
        self.0.contains(&t)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

fn key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Uniform `n × n` grid on `[0,1]²`, every cell cut by its lower-left to
/// upper-right diagonal.
pub fn make_uniform_unit_square(n: usize) -> Mesh {
    assert!(n >= 1, "grid resolution must be positive");
    let np = n + 1;
    let h = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity(np * np);
    for j in 0..np {
        for i in 0..np {
            vertices.push([i as f64 * h, j as f64 * h]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let a = j * np + i;
            let b = a + 1;
            let c = b + np;
            let d = a + np;
            // local vertex 0 opposite the diagonal a–c
            triangles.push([b, c, a]);
            triangles.push([d, a, c]);
        }
    }
    Mesh::from_oriented(vertices, triangles, None, None).expect("unit square mesh is valid")
}

impl Mesh {
    /// Build a mesh from coordinates and positively oriented triangles.
    /// The refinement edge of every triangle is its longest edge; ties go to
    /// the edge whose opposite vertex has the smallest global index.
    pub fn new(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mut oriented = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} references a missing vertex"
                )));
            }
            let len = |k: usize| dist(vertices[tri[(k + 1) % 3]], vertices[tri[(k + 2) % 3]]);
            let longest = (0..3).map(len).fold(0.0, f64::max);
            let tol = 1e-12 * longest;
            let best = (0..3)
                .filter(|&k| len(k) >= longest - tol)
                .min_by_key(|&k| tri[k])
                .expect("a triangle has edges");
            oriented.push([tri[best], tri[(best + 1) % 3], tri[(best + 2) % 3]]);
        }
        Self::from_oriented(vertices, oriented, None, None)
    }

    fn from_oriented(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        vertex_parents: Option<Vec<Option<[usize; 2]>>>,
        parent_id: Option<u64>,
    ) -> Result<Self> {
        for (t, tri) in triangles.iter().enumerate() {
            let a = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if !(a > 0.0) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} has non-positive signed area {a:e}"
                )));
            }
        }
        let mut edge_index: HashMap<(usize, usize), usize> =
            HashMap::with_capacity(triangles.len() * 3 / 2 + vertices.len());
        let mut edges = Vec::new();
        let mut edge_triangles: Vec<[usize; 2]> = Vec::new();
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut te = [0; 3];
            for k in 0..3 {
                let (a, b) = key(tri[(k + 1) % 3], tri[(k + 2) % 3]);
                let e = *edge_index.entry((a, b)).or_insert_with(|| {
                    edges.push([a, b]);
                    edge_triangles.push([NO_TRIANGLE, NO_TRIANGLE]);
                    edges.len() - 1
                });
                let slot = &mut edge_triangles[e];
                if slot[0] == NO_TRIANGLE {
                    slot[0] = t;
                } else if slot[1] == NO_TRIANGLE {
                    slot[1] = t;
                } else {
                    return Err(Error::InvalidMesh(format!(
                        "edge ({a}, {b}) has more than two incident triangles"
                    )));
                }
                te[k] = e;
            }
            triangle_edges.push(te);
        }
        let mut boundary_vertex = vec![false; vertices.len()];
        for (e, et) in edge_triangles.iter().enumerate() {
            if et[1] == NO_TRIANGLE {
                boundary_vertex[edges[e][0]] = true;
                boundary_vertex[edges[e][1]] = true;
            }
        }
        let vertex_parents = vertex_parents.unwrap_or_else(|| vec![None; vertices.len()]);
        Ok(Self {
            id: NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed),
            vertices,
            triangles,
            edges,
            edge_triangles,
            triangle_edges,
            boundary_vertex,
            vertex_parents,
            parent_id,
        })
    }

    /// Unique identifier; refinement always produces a fresh id.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Degrees of freedom as reported in convergence tables: every vertex,
    /// boundary vertices included.
    pub fn n_dofs(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> [f64; 2] {
        self.vertices[v]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Incident triangles of edge `e`; the second entry is `None` on ∂Ω.
    pub fn edge_triangles(&self, e: usize) -> (usize, Option<usize>) {
        let [a, b] = self.edge_triangles[e];
        (a, (b != NO_TRIANGLE).then_some(b))
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_triangles[e][1] == NO_TRIANGLE
    }

    /// Edge index opposite local vertex `k` of triangle `t`.
    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.triangle_edges[t]
    }

    pub fn boundary_vertex_flags(&self) -> &[bool] {
        &self.boundary_vertex
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    /// For vertices created by the refinement that produced this mesh, the
    /// endpoints of the parent edge they bisect.
    pub fn vertex_parents(&self) -> &[Option<[usize; 2]>] {
        &self.vertex_parents
    }

    /// Id of the mesh this one was refined from.
    pub fn parent_id(&self) -> Option<u64> {
        self.parent_id
    }

    /// Endpoints of the refinement edge of triangle `t`.
    pub fn refinement_edge(&self, t: usize) -> [usize; 2] {
        let tri = self.triangles[t];
        [tri[1], tri[2]]
    }

    pub fn geometry(&self, t: usize) -> Geometry {
        let [i0, i1, i2] = self.triangles[t];
        let (p0, p1, p2) = (self.vertices[i0], self.vertices[i1], self.vertices[i2]);
        let area = signed_area(p0, p1, p2);
        let inv = 1.0 / (2.0 * area);
        // ∇λ_k = rot(p_{k+2} - p_{k+1}) / (2|τ|)
        let grad = |a: [f64; 2], b: [f64; 2]| [(a[1] - b[1]) * inv, (b[0] - a[0]) * inv];
        Geometry {
            area,
            grads: [grad(p1, p2), grad(p2, p0), grad(p0, p1)],
            vertices: [p0, p1, p2],
        }
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        dist(self.vertices[a], self.vertices[b])
    }

    /// `(h_max, h_τ)` with `h_τ` the longest edge of τ.
    pub fn mesh_size(&self) -> (f64, Vec<f64>) {
        let per: Vec<f64> = (0..self.n_triangles())
            .map(|t| self.geometry(t).diameter())
            .collect();
        let h_max = per.iter().copied().fold(0.0, f64::max);
        (h_max, per)
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle_degrees(&self) -> f64 {
        let mut min = f64::INFINITY;
        for tri in &self.triangles {
            for k in 0..3 {
                let p = self.vertices[tri[k]];
                let a = self.vertices[tri[(k + 1) % 3]];
                let b = self.vertices[tri[(k + 2) % 3]];
                let u = [a[0] - p[0], a[1] - p[1]];
                let v = [b[0] - p[0], b[1] - p[1]];
                let cos = (u[0] * v[0] + u[1] * v[1])
                    / ((u[0].hypot(u[1])) * (v[0].hypot(v[1])));
                min = min.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        min
    }

    /// Euler characteristic `V - E + F` (1 for a simply connected domain).
    pub fn euler_characteristic(&self) -> i64 {
        self.n_vertices() as i64 - self.n_edges() as i64 + self.n_triangles() as i64
    }

    /// Edge-incidence audit: every edge has one or two incident triangles,
    /// interior edges are traversed in opposite directions by their two
    /// triangles, and every single-incidence edge lies on the domain boundary
    /// as decided by `on_boundary` (which rules out hanging nodes).
    pub fn audit_conformity<F: Fn([f64; 2]) -> bool>(&self, on_boundary: F) -> Result<()> {
        for (e, &[a, b]) in self.edges.iter().enumerate() {
            let [t0, t1] = self.edge_triangles[e];
            if t0 == NO_TRIANGLE {
                return Err(Error::InvalidMesh(format!("edge {e} has no triangle")));
            }
            if t1 == NO_TRIANGLE {
                let mid = [
                    0.5 * (self.vertices[a][0] + self.vertices[b][0]),
                    0.5 * (self.vertices[a][1] + self.vertices[b][1]),
                ];
                if !(on_boundary(self.vertices[a]) && on_boundary(self.vertices[b]) && on_boundary(mid)) {
                    return Err(Error::InvalidMesh(format!(
                        "edge ({a}, {b}) has one triangle but is not on the boundary (hanging node?)"
                    )));
                }
            } else {
                let dir = |t: usize| {
                    let tri = self.triangles[t];
                    (0..3).find_map(|k| {
                        let (p, q) = (tri[k], tri[(k + 1) % 3]);
                        if (p, q) == (a, b) {
                            Some(true)
                        } else if (p, q) == (b, a) {
                            Some(false)
                        } else {
                            None
                        }
                    })
                };
                match (dir(t0), dir(t1)) {
                    (Some(x), Some(y)) if x != y => {}
                    _ => {
                        return Err(Error::InvalidMesh(format!(
                            "edge ({a}, {b}) is not shared consistently by triangles {t0} and {t1}"
                        )))
                    }
                }
            }
        }
        for t in 0..self.n_triangles() {
            if !(self.area(t) > 0.0) {
                return Err(Error::InvalidMesh(format!("triangle {t} is degenerate")));
            }
        }
        Ok(())
    }

    pub fn patches(&self) -> PatchIndex {
        let mut vertex_to_triangles = vec![Vec::new(); self.n_vertices()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                vertex_to_triangles[v].push(t);
            }
        }
        let edge_to_triangles = self
            .edge_triangles
            .iter()
            .map(|et| et.iter().copied().filter(|&t| t != NO_TRIANGLE).collect())
            .collect();
        let triangle_to_neighbors_sharing_vertex = self
            .triangles
            .iter()
            .map(|tri| {
                let mut set: BTreeSet<usize> = BTreeSet::new();
                for &v in tri {
                    set.extend(vertex_to_triangles[v].iter().copied());
                }
                set.into_iter().collect()
            })
            .collect();
        PatchIndex {
            vertex_to_triangles,
            edge_to_triangles,
            triangle_to_neighbors_sharing_vertex,
        }
    }

    /// Red refinement: every triangle is split into four similar children
    /// through its edge midpoints. New vertex `n_vertices + e` bisects edge `e`.
    pub fn refine_uniform(&self) -> Mesh {
        let nv = self.n_vertices();
        let mut vertices = self.vertices.clone();
        let mut parents = vec![None; nv];
        for &[a, b] in &self.edges {
            let (pa, pb) = (self.vertices[a], self.vertices[b]);
            vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            parents.push(Some([a, b]));
        }
        let mut triangles = Vec::with_capacity(4 * self.n_triangles());
        for (t, &[a, b, c]) in self.triangles.iter().enumerate() {
            let te = self.triangle_edges[t];
            // midpoints opposite a, b, c
            let (m_bc, m_ca, m_ab) = (nv + te[0], nv + te[1], nv + te[2]);
            // children are homothetic to the parent with matching local order,
            // so refinement edges stay parallel to the parent's
            triangles.push([a, m_ab, m_ca]);
            triangles.push([m_ab, b, m_bc]);
            triangles.push([m_ca, m_bc, c]);
            triangles.push([m_bc, m_ca, m_ab]);
        }
        let mesh = Mesh::from_oriented(vertices, triangles, Some(parents), Some(self.id))
            .expect("red refinement preserves validity");
        debug_assert!((mesh.min_angle_degrees() - self.min_angle_degrees()).abs() < 1e-8);
        mesh
    }

    /// Newest-vertex bisection of the marked triangles with conformity closure.
    pub fn refine_marked(&self, marks: &MarkSet) -> Mesh {
        if marks.is_empty() {
            return self.clone();
        }
        let ref_edge = |t: usize| self.triangle_edges[t][0];
        let mut marked = vec![false; self.n_edges()];
        let mut work = Vec::new();
        for t in marks.iter() {
            let e = ref_edge(t);
            if !marked[e] {
                marked[e] = true;
                work.push(e);
            }
        }
        // closure: a triangle with any marked edge must bisect its refinement edge
        while let Some(e) = work.pop() {
            for &t in &self.edge_triangles[e] {
                if t == NO_TRIANGLE {
                    continue;
                }
                let r = ref_edge(t);
                if !marked[r] {
                    marked[r] = true;
                    work.push(r);
                }
            }
        }
        let marked_keys: HashMap<(usize, usize), ()> = marked
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(e, _)| (key(self.edges[e][0], self.edges[e][1]), ()))
            .collect();

        let mut vertices = self.vertices.clone();
        let mut parents: Vec<Option<[usize; 2]>> = vec![None; self.n_vertices()];
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut triangles = Vec::with_capacity(self.n_triangles() + 4 * marked_keys.len());
        let mut stack = Vec::new();
        for &tri in &self.triangles {
            stack.push(tri);
            while let Some([v0, v1, v2]) = stack.pop() {
                let k = key(v1, v2);
                if marked_keys.contains_key(&k) {
                    let m = *midpoints.entry(k).or_insert_with(|| {
                        let (a, b) = (vertices[v1], vertices[v2]);
                        vertices.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
                        parents.push(Some([k.0, k.1]));
                        vertices.len() - 1
                    });
                    // pushed in reverse so children come out in order
                    stack.push([m, v2, v0]);
                    stack.push([m, v0, v1]);
                } else {
                    triangles.push([v0, v1, v2]);
                }
            }
        }
        Mesh::from_oriented(vertices, triangles, Some(parents), Some(self.id))
            .expect("bisection preserves validity")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn on_unit_square(p: [f64; 2]) -> bool {
        let tol = 1e-14;
        p[0].abs() < tol || p[1].abs() < tol || (p[0] - 1.0).abs() < tol || (p[1] - 1.0).abs() < tol
    }

    #[test]
    fn unit_square_counts() {
        let m = make_uniform_unit_square(8);
        assert_eq!(m.n_vertices(), 81);
        assert_eq!(m.n_triangles(), 128);
        let m = make_uniform_unit_square(1);
        assert_eq!((m.n_vertices(), m.n_triangles()), (4, 2));
        // V - E + F = 1 gives E = 9 + 8 - 1
        let m = make_uniform_unit_square(2);
        assert_eq!((m.n_vertices(), m.n_triangles(), m.n_edges()), (9, 8, 16));
        assert_eq!(m.euler_characteristic(), 1);
        m.audit_conformity(on_unit_square).unwrap();
    }

    #[test]
    fn unit_square_orientation_and_boundary() {
        let m = make_uniform_unit_square(4);
        for t in 0..m.n_triangles() {
            assert!(m.area(t) > 0.0);
        }
        for (v, &p) in m.vertices().iter().enumerate() {
            assert_eq!(m.is_boundary_vertex(v), on_unit_square(p));
        }
        // refinement edge is the diagonal
        for t in 0..m.n_triangles() {
            let [a, b] = m.refinement_edge(t);
            let (pa, pb) = (m.vertex(a), m.vertex(b));
            assert!((dist(pa, pb) - 0.25 * 2f64.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn new_assigns_longest_edge() {
        let m = Mesh::new(
            vec![[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let [a, b] = m.refinement_edge(0);
        assert_eq!(key(a, b), (1, 2));
        assert!(Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 2, 1]]).is_err());
    }

    #[test]
    fn new_breaks_ties_by_smallest_opposite_vertex() {
        // equilateral: all edges tie, vertex 0 is the smallest opposite index
        let s = 3f64.sqrt() / 2.0;
        let m = Mesh::new(vec![[0.5, s], [0.0, 0.0], [1.0, 0.0]], vec![[1, 2, 0]]).unwrap();
        assert_eq!(m.triangle(0)[0], 0);
    }

    #[test]
    fn patch_sizes() {
        let m = make_uniform_unit_square(1);
        let p = m.patches();
        // diagonal runs from vertex 0 to vertex 3
        assert_eq!(p.vertex_patch_size(0), 2);
        assert_eq!(p.vertex_patch_size(3), 2);
        assert_eq!(p.vertex_patch_size(1), 1);
        let m = make_uniform_unit_square(2);
        let p = m.patches();
        assert_eq!(p.vertex_patch_size(4), 6);
        let covered: BTreeSet<usize> = p.vertex_to_triangles.iter().flatten().copied().collect();
        assert_eq!(covered.len(), m.n_triangles());
    }

    #[test]
    fn patch_consistency() {
        let m = make_uniform_unit_square(3).refine_marked(&MarkSet::from_indices(&make_uniform_unit_square(3), [0, 5]).unwrap());
        let p = m.patches();
        for (e, &[a, b]) in m.edges().iter().enumerate() {
            for &t in &p.edge_to_triangles[e] {
                assert!(p.vertex_to_triangles[a].contains(&t));
                assert!(p.vertex_to_triangles[b].contains(&t));
            }
        }
        for (t, nbrs) in p.triangle_to_neighbors_sharing_vertex.iter().enumerate() {
            assert!(nbrs.contains(&t));
            for &s in nbrs {
                assert!(p.triangle_to_neighbors_sharing_vertex[s].contains(&t));
                let share = m.triangle(t).iter().any(|v| m.triangle(s).contains(v));
                assert!(share);
            }
        }
    }

    #[test]
    fn uniform_refinement_matches_finer_grid() {
        let coarse = make_uniform_unit_square(8).refine_uniform();
        let fine = make_uniform_unit_square(16);
        assert_eq!(coarse.n_triangles(), fine.n_triangles());
        let canon = |m: &Mesh| {
            let mut tris: Vec<Vec<(i64, i64)>> = m
                .triangles()
                .iter()
                .map(|tri| {
                    let mut v: Vec<(i64, i64)> = tri
                        .iter()
                        .map(|&i| {
                            let p = m.vertex(i);
                            ((p[0] * 64.0).round() as i64, (p[1] * 64.0).round() as i64)
                        })
                        .collect();
                    v.sort();
                    v
                })
                .collect();
            tris.sort();
            tris
        };
        assert_eq!(canon(&coarse), canon(&fine));
        let (h0, _) = make_uniform_unit_square(8).mesh_size();
        let (h1, _) = coarse.mesh_size();
        assert!((h0 / h1 - 2.0).abs() < 1e-14);
    }

    #[test]
    fn red_refinement_keeps_angles() {
        let m = make_uniform_unit_square(1);
        let r = m.refine_uniform();
        assert_eq!(r.n_triangles(), 8);
        assert!((m.min_angle_degrees() - r.min_angle_degrees()).abs() < 1e-10);
        r.audit_conformity(on_unit_square).unwrap();
    }

    #[test]
    fn mesh_size_of_single_cell() {
        let (h, per) = make_uniform_unit_square(1).mesh_size();
        assert!((h - 2f64.sqrt()).abs() < 1e-15);
        assert!(per.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn empty_marks_is_noop() {
        let m = make_uniform_unit_square(2);
        let r = m.refine_marked(&MarkSet::new());
        assert_eq!(r.triangles(), m.triangles());
        assert_eq!(r.vertices(), m.vertices());
    }

    #[test]
    fn single_mark_forces_closure() {
        let m = make_uniform_unit_square(1);
        let r = m.refine_marked(&MarkSet::from_indices(&m, [0]).unwrap());
        assert_eq!(r.n_triangles(), 4);
        assert_eq!(r.n_vertices(), 5);
        r.audit_conformity(on_unit_square).unwrap();
        assert_eq!(r.vertex_parents()[4], Some([0, 3]));
    }

    #[test]
    fn full_marking_doubles() {
        let mut m = make_uniform_unit_square(2);
        for _ in 0..5 {
            let n = m.n_triangles();
            m = m.refine_marked(&MarkSet::all(&m));
            assert_eq!(m.n_triangles(), 2 * n);
            m.audit_conformity(on_unit_square).unwrap();
        }
    }

    #[test]
    fn out_of_range_mark_rejected() {
        let m = make_uniform_unit_square(1);
        assert!(MarkSet::from_indices(&m, [2]).is_err());
    }
}
