//! Patch averaging: the Clément-type interpolants π_h and Π_h and the
//! recovery operators built on them.
//!
//! A recovered field is continuous and piecewise linear, given by one
//! 2-vector per vertex. Its vertex value is a convex combination of the
//! element constants on the vertex star ω_z:
//!
//! ```text
//! G_h v(z) = Σ_j w_j α(z, v(z)) ∇v|τ_j        (flux recovery)
//! G̃_h v(z) = Σ_j w_j ∇v|τ_j                    (gradient recovery)
//! ```
//!
//! with weights `w_j = 1/J_z` or `|τ_j|/|ω_z|`.

use std::fmt;
use std::str::FromStr;

use crate::fem::FeFunction;
use crate::mesh::Mesh;
use crate::par;
use crate::quadrature::QuadratureRule;
use crate::{Error, Result};

/// Averaging weights on a vertex star.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WeightScheme {
    /// `1/J_z`.
    Uniform,
    /// `|τ|/|ω_z|`.
    #[default]
    Area,
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightScheme::Uniform => "uniform",
            WeightScheme::Area => "area",
        })
    }
}

impl FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(WeightScheme::Uniform),
            "area" => Ok(WeightScheme::Area),
            other => Err(Error::InvalidConfig(format!(
                "unknown weight scheme `{other}` (expected `area` or `uniform`)"
            ))),
        }
    }
}

/// Triangles around each vertex, with the local index of the vertex in each.
#[derive(Clone, Debug)]
pub struct VertexStars {
    stars: Vec<Vec<(usize, usize)>>,
}

impl VertexStars {
    pub fn new(mesh: &Mesh) -> Self {
        let mut stars = vec![Vec::new(); mesh.n_vertices()];
        for (t, tri) in mesh.triangles().iter().enumerate() {
            for (k, &v) in tri.iter().enumerate() {
                stars[v].push((t, k));
            }
        }
        Self { stars }
    }

    /// `(triangle, local index)` pairs of the star of `z`.
    pub fn star(&self, z: usize) -> &[(usize, usize)] {
        &self.stars[z]
    }

    /// Averaging weights on the star of `z`, in star order.
    pub fn weights(&self, mesh: &Mesh, z: usize, scheme: WeightScheme) -> Vec<f64> {
        let star = &self.stars[z];
        match scheme {
            WeightScheme::Uniform => vec![1.0 / star.len() as f64; star.len()],
            WeightScheme::Area => {
                let areas: Vec<f64> = star.iter().map(|&(t, _)| mesh.area(t)).collect();
                let total: f64 = areas.iter().sum();
                areas.into_iter().map(|a| a / total).collect()
            }
        }
    }
}

/// Continuous P1 vector field given by its vertex values.
#[derive(Clone, Debug, PartialEq)]
pub struct RecoveredField {
    mesh_id: u64,
    values: Vec<[f64; 2]>,
}

impl RecoveredField {
    pub fn new(mesh: &Mesh, values: Vec<[f64; 2]>) -> Result<Self> {
        if values.len() != mesh.n_vertices() {
            return Err(Error::InvalidConfig(format!(
                "{} vertex vectors for {} vertices",
                values.len(),
                mesh.n_vertices()
            )));
        }
        Ok(Self {
            mesh_id: mesh.id(),
            values,
        })
    }

    /// Nodal interpolant of a vector field.
    pub fn interpolate<F: Fn([f64; 2]) -> [f64; 2]>(mesh: &Mesh, f: F) -> Self {
        Self {
            mesh_id: mesh.id(),
            values: mesh.vertices().iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.values
    }

    pub fn value(&self, z: usize) -> [f64; 2] {
        self.values[z]
    }

    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if self.mesh_id == mesh.id() {
            Ok(())
        } else {
            Err(Error::MeshMismatch {
                expected: mesh.id(),
                found: self.mesh_id,
            })
        }
    }

    pub fn local_values(&self, mesh: &Mesh, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = mesh.triangle(t);
        [self.values[a], self.values[b], self.values[c]]
    }

    pub fn evaluate(&self, mesh: &Mesh, t: usize, bary: &[f64; 3]) -> [f64; 2] {
        let r = self.local_values(mesh, t);
        [
            bary[0] * r[0][0] + bary[1] * r[1][0] + bary[2] * r[2][0],
            bary[0] * r[0][1] + bary[1] * r[1][1] + bary[2] * r[2][1],
        ]
    }

    /// Divergence on triangle `t` (constant).
    pub fn divergence_on(&self, mesh: &Mesh, t: usize) -> f64 {
        let g = mesh.geometry(t).grads;
        let r = self.local_values(mesh, t);
        (0..3).map(|k| r[k][0] * g[k][0] + r[k][1] * g[k][1]).sum()
    }

    /// One component as a scalar P1 function.
    pub fn component(&self, mesh: &Mesh, c: usize) -> Result<FeFunction> {
        self.check_mesh(mesh)?;
        FeFunction::new(mesh, self.values.iter().map(|v| v[c]).collect())
    }
}

/// Exact element-wise divergence of a recovered field.
pub fn recovered_divergence(mesh: &Mesh, r: &RecoveredField) -> Result<Vec<f64>> {
    r.check_mesh(mesh)?;
    Ok(par::map_indices(mesh.n_triangles(), |t| r.divergence_on(mesh, t)))
}

/// Weighted average of one-sided element traces at every vertex.
fn average_traces<T, F>(mesh: &Mesh, stars: &VertexStars, scheme: WeightScheme, trace: F) -> Vec<T>
where
    T: Send + Default + Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    F: Fn(usize, usize) -> T + Sync + Send,
{
    par::map_indices(mesh.n_vertices(), |z| {
        let w = stars.weights(mesh, z, scheme);
        stars
            .star(z)
            .iter()
            .zip(&w)
            .fold(T::default(), |acc, (&(t, k), &wj)| acc + trace(t, k) * wj)
    })
}

#[derive(Clone, Copy, Default)]
struct V2([f64; 2]);

impl std::ops::Add for V2 {
    type Output = V2;
    fn add(self, o: V2) -> V2 {
        V2([self.0[0] + o.0[0], self.0[1] + o.0[1]])
    }
}

impl std::ops::Mul<f64> for V2 {
    type Output = V2;
    fn mul(self, s: f64) -> V2 {
        V2([self.0[0] * s, self.0[1] * s])
    }
}

fn element_gradients(mesh: &Mesh, v: &FeFunction) -> Vec<[f64; 2]> {
    par::map_indices(mesh.n_triangles(), |t| v.gradient(mesh, t))
}

/// Gradient recovery G̃_h.
pub fn gradient_recover(mesh: &Mesh, v: &FeFunction, scheme: WeightScheme) -> Result<RecoveredField> {
    flux_recover(mesh, v, |_, _| 1.0, scheme)
}

/// Flux recovery G_h with the coefficient frozen at the vertex, `α(z, v(z))`.
pub fn flux_recover<A>(mesh: &Mesh, v: &FeFunction, alpha: A, scheme: WeightScheme) -> Result<RecoveredField>
where
    A: Fn([f64; 2], f64) -> f64 + Sync + Send,
{
    v.check_mesh(mesh)?;
    let stars = VertexStars::new(mesh);
    let grads = element_gradients(mesh, v);
    let avg = average_traces(mesh, &stars, scheme, |t, _| V2(grads[t]));
    let c = v.coefficients();
    let values = par::try_map_indices(mesh.n_vertices(), |z| {
        let x = mesh.vertex(z);
        let a = alpha(x, c[z]);
        if !a.is_finite() {
            let triangle = stars.star(z).first().map_or(0, |s| s.0);
            return Err(Error::NonFiniteCoefficient {
                name: "recovery coefficient",
                triangle,
                x: x[0],
                y: x[1],
            });
        }
        Ok([a * avg[z].0[0], a * avg[z].0[1]])
    })?;
    RecoveredField::new(mesh, values)
}

/// Π_h of a vector field given by its one-sided traces: `trace(t, k)` is the
/// limit at local vertex `k` from inside triangle `t`.
pub fn clement_big_pi_vector<F>(mesh: &Mesh, trace: F, scheme: WeightScheme) -> RecoveredField
where
    F: Fn(usize, usize) -> [f64; 2] + Sync + Send,
{
    let stars = VertexStars::new(mesh);
    let values = average_traces(mesh, &stars, scheme, |t, k| V2(trace(t, k)))
        .into_iter()
        .map(|v| v.0)
        .collect();
    RecoveredField {
        mesh_id: mesh.id(),
        values,
    }
}

/// Π_h of a scalar field given by its one-sided traces at vertices.
pub fn clement_big_pi<F>(mesh: &Mesh, trace: F, scheme: WeightScheme) -> FeFunction
where
    F: Fn(usize, usize) -> f64 + Sync + Send,
{
    let stars = VertexStars::new(mesh);
    let values = average_traces(mesh, &stars, scheme, trace);
    FeFunction::new(mesh, values).expect("one value per vertex")
}

/// π_h: interior vertex `z` gets `(v, φ_z)/(φ_z, 1)`, boundary vertices 0.
pub fn clement_pi<F>(mesh: &Mesh, v: F, rule: &QuadratureRule) -> FeFunction
where
    F: Fn([f64; 2]) -> f64 + Sync + Send,
{
    let local = par::map_indices(mesh.n_triangles(), |t| {
        let geo = mesh.geometry(t);
        let mut num = [0.0; 3];
        for (bary, w) in rule.iter() {
            let fx = v(geo.point(bary)) * w * geo.area;
            for k in 0..3 {
                num[k] += fx * bary[k];
            }
        }
        num
    });
    let mut num = vec![0.0; mesh.n_vertices()];
    let mut den = vec![0.0; mesh.n_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let a = mesh.area(t) / 3.0;
        for k in 0..3 {
            num[tri[k]] += local[t][k];
            den[tri[k]] += a;
        }
    }
    let values = (0..mesh.n_vertices())
        .map(|z| {
            if mesh.is_boundary_vertex(z) {
                0.0
            } else {
                num[z] / den[z]
            }
        })
        .collect();
    FeFunction::new(mesh, values).expect("one value per vertex")
}

/// `(‖G̃_h w‖₀ / ‖∇w‖₀, max_z |G̃_h w(z)|, max_τ |∇w|_τ|)`.
pub fn stability_ratios(mesh: &Mesh, w: &FeFunction, scheme: WeightScheme) -> Result<(f64, f64, f64)> {
    let r = gradient_recover(mesh, w, scheme)?;
    let rule = QuadratureRule::degree2();
    let mut num = 0.0;
    let mut den = 0.0;
    let mut max_elem: f64 = 0.0;
    for t in 0..mesh.n_triangles() {
        let g = w.gradient(mesh, t);
        let a = mesh.area(t);
        let gn2 = g[0] * g[0] + g[1] * g[1];
        den += a * gn2;
        max_elem = max_elem.max(gn2.sqrt());
        for (bary, wq) in rule.iter() {
            let v = r.evaluate(mesh, t, bary);
            num += wq * a * (v[0] * v[0] + v[1] * v[1]);
        }
    }
    let max_vertex = r
        .values()
        .iter()
        .map(|v| (v[0] * v[0] + v[1] * v[1]).sqrt())
        .fold(0.0, f64::max);
    Ok(((num / den).sqrt(), max_vertex, max_elem))
}
