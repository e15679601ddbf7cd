//! P1 conforming finite elements: functions, quadrature-point fields,
//! assembly of weighted stiffness/convection/mass forms and load vectors,
//! and error norms against analytic fields.

use crate::linalg;
use crate::mesh::{Geometry, Mesh};
use crate::par;
use crate::quadrature::QuadratureRule;
use crate::sparse::{self, CsrMatrix, FreeDofs, Pattern, SparseSystem};
use crate::{Error, Result};

/// Continuous piecewise-linear function given by its vertex values.
#[derive(Clone, Debug, PartialEq)]
pub struct FeFunction {
    mesh_id: u64,
    coefficients: Vec<f64>,
}

impl FeFunction {
    pub fn new(mesh: &Mesh, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != mesh.n_vertices() {
            return Err(Error::InvalidConfig(format!(
                "{} coefficients for {} vertices",
                coefficients.len(),
                mesh.n_vertices()
            )));
        }
        Ok(Self {
            mesh_id: mesh.id(),
            coefficients,
        })
    }

    pub fn zeros(mesh: &Mesh) -> Self {
        Self {
            mesh_id: mesh.id(),
            coefficients: vec![0.0; mesh.n_vertices()],
        }
    }

    /// Nodal interpolant.
    pub fn interpolate<F: Fn([f64; 2]) -> f64>(mesh: &Mesh, f: F) -> Self {
        Self {
            mesh_id: mesh.id(),
            coefficients: mesh.vertices().iter().map(|&p| f(p)).collect(),
        }
    }

    /// Nodal basis function φ_z.
    pub fn basis(mesh: &Mesh, z: usize) -> Self {
        let mut c = vec![0.0; mesh.n_vertices()];
        c[z] = 1.0;
        Self {
            mesh_id: mesh.id(),
            coefficients: c,
        }
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.coefficients
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

    pub fn local_values(&self, mesh: &Mesh, t: usize) -> [f64; 3] {
        let [a, b, c] = mesh.triangle(t);
        [self.coefficients[a], self.coefficients[b], self.coefficients[c]]
    }

    /// Value and (element-constant) gradient at a barycentric point of `t`.
    pub fn evaluate(&self, mesh: &Mesh, t: usize, bary: &[f64; 3]) -> (f64, [f64; 2]) {
        let vals = self.local_values(mesh, t);
        let value = vals[0] * bary[0] + vals[1] * bary[1] + vals[2] * bary[2];
        (value, mesh.geometry(t).gradient(vals))
    }

    pub fn gradient(&self, mesh: &Mesh, t: usize) -> [f64; 2] {
        mesh.geometry(t).gradient(self.local_values(mesh, t))
    }

    /// Transfer onto a mesh produced by one refinement of this function's
    /// mesh: old vertices keep their values, bisection midpoints take the
    /// mean of their parent edge (exact for P1).
    pub fn prolongate(&self, fine: &Mesh) -> Result<FeFunction> {
        let parents = fine.vertex_parents();
        let n_old = self.coefficients.len();
        if fine.parent_id() != Some(self.mesh_id)
            || fine.n_vertices() < n_old
            || parents[n_old..].iter().any(Option::is_none)
        {
            return Err(Error::InvalidConfig(
                "target mesh is not a refinement of the function's mesh".into(),
            ));
        }
        let mut c = self.coefficients.clone();
        for p in &parents[n_old..] {
            let [a, b] = p.expect("checked above");
            c.push(0.5 * (self.coefficients[a] + self.coefficients[b]));
        }
        FeFunction::new(fine, c)
    }

    pub fn add_scaled(&mut self, s: f64, other: &FeFunction) {
        debug_assert_eq!(self.mesh_id, other.mesh_id);
        self.coefficients
            .iter_mut()
            .zip(&other.coefficients)
            .for_each(|(a, b)| *a += s * b);
    }
}

/// A quadrature sample handed to coefficient closures.
#[derive(Clone, Copy, Debug)]
pub struct QuadPoint {
    pub triangle: usize,
    pub x: [f64; 2],
    pub bary: [f64; 3],
}

/// Pointwise coefficients of the generic second-order form
/// `(d ∇ψ + c ψ, ∇v) + (r ψ, v)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FormCoefficients {
    pub diffusion: f64,
    pub convection: [f64; 2],
    pub reaction: f64,
}

/// Pointwise integrand of a linear functional `(s, v) + (F, ∇v)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LoadIntegrand {
    pub source: f64,
    pub flux: [f64; 2],
}

pub(crate) fn finite(name: &'static str, value: f64, q: &QuadPoint) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteCoefficient {
            name,
            triangle: q.triangle,
            x: q.x[0],
            y: q.x[1],
        })
    }
}

/// Mesh, quadrature, sparsity pattern and free-DOF map bundled for assembly.
#[derive(Clone, Debug)]
pub struct FeSpace<'m> {
    mesh: &'m Mesh,
    rule: QuadratureRule,
    pattern: Pattern,
    dofs: FreeDofs,
}

impl<'m> FeSpace<'m> {
    pub fn new(mesh: &'m Mesh, rule: QuadratureRule) -> Self {
        Self {
            mesh,
            rule,
            pattern: Pattern::new(mesh),
            dofs: FreeDofs::interior(mesh),
        }
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn dofs(&self) -> &FreeDofs {
        &self.dofs
    }

    fn samples<'a>(&'a self, t: usize, geo: &'a Geometry) -> impl Iterator<Item = (QuadPoint, f64)> + 'a {
        self.rule.iter().map(move |(bary, w)| {
            (
                QuadPoint {
                    triangle: t,
                    x: geo.point(bary),
                    bary: *bary,
                },
                w * geo.area,
            )
        })
    }

    /// Assemble `(d ∇ψ + c ψ, ∇v) + (r ψ, v)` over all vertices; row index
    /// is the test function `v`.
    pub fn assemble_form<F>(&self, coeffs: F) -> Result<CsrMatrix>
    where
        F: Fn(&QuadPoint) -> Result<FormCoefficients> + Sync + Send,
    {
        let local = par::try_map_indices(self.mesh.n_triangles(), |t| {
            let geo = self.mesh.geometry(t);
            let g = &geo.grads;
            let mut k = [[0.0; 3]; 3];
            for (q, w) in self.samples(t, &geo) {
                let c = coeffs(&q)?;
                let lam = q.bary;
                for a in 0..3 {
                    let cg = c.convection[0] * g[a][0] + c.convection[1] * g[a][1];
                    for b in 0..3 {
                        let stiff = g[a][0] * g[b][0] + g[a][1] * g[b][1];
                        k[a][b] += w
                            * (c.diffusion * stiff + cg * lam[b] + c.reaction * lam[a] * lam[b]);
                    }
                }
            }
            Ok::<_, Error>(k)
        })?;
        Ok(self.pattern.scatter(&local))
    }

    /// `(weight ∇ψ, ∇v)`; the weight must be finite and strictly positive.
    pub fn assemble_weighted_stiffness<F>(&self, weight: F) -> Result<CsrMatrix>
    where
        F: Fn(&QuadPoint) -> f64 + Sync + Send,
    {
        self.assemble_form(|q| {
            let w = finite("stiffness weight", weight(q), q)?;
            if w <= 0.0 {
                return Err(Error::NonPositiveCoefficient {
                    name: "stiffness weight",
                    value: w,
                    triangle: q.triangle,
                    x: q.x[0],
                    y: q.x[1],
                });
            }
            Ok(FormCoefficients {
                diffusion: w,
                ..Default::default()
            })
        })
    }

    /// `(F ψ, ∇v)`: entry `(i, j) = ∫ (F φ_j)·∇φ_i`.
    pub fn assemble_convection<F>(&self, field: F) -> Result<CsrMatrix>
    where
        F: Fn(&QuadPoint) -> [f64; 2] + Sync + Send,
    {
        self.assemble_form(|q| {
            let f = field(q);
            finite("convection field", f[0], q)?;
            finite("convection field", f[1], q)?;
            Ok(FormCoefficients {
                convection: f,
                ..Default::default()
            })
        })
    }

    /// `(weight ψ, v)`.
    pub fn assemble_mass<F>(&self, weight: F) -> Result<CsrMatrix>
    where
        F: Fn(&QuadPoint) -> f64 + Sync + Send,
    {
        self.assemble_form(|q| {
            Ok(FormCoefficients {
                reaction: finite("mass weight", weight(q), q)?,
                ..Default::default()
            })
        })
    }

    /// `b_i = (s, φ_i) + (F, ∇φ_i)` over all vertices.
    pub fn assemble_functional<F>(&self, integrand: F) -> Result<Vec<f64>>
    where
        F: Fn(&QuadPoint) -> Result<LoadIntegrand> + Sync + Send,
    {
        let local = par::try_map_indices(self.mesh.n_triangles(), |t| {
            let geo = self.mesh.geometry(t);
            let g = &geo.grads;
            let mut b = [0.0; 3];
            for (q, w) in self.samples(t, &geo) {
                let s = integrand(&q)?;
                for a in 0..3 {
                    b[a] += w * (s.source * q.bary[a] + s.flux[0] * g[a][0] + s.flux[1] * g[a][1]);
                }
            }
            Ok::<_, Error>(b)
        })?;
        let mut out = vec![0.0; self.mesh.n_vertices()];
        for (tri, b) in self.mesh.triangles().iter().zip(&local) {
            for a in 0..3 {
                out[tri[a]] += b[a];
            }
        }
        Ok(out)
    }

    /// `b_i = (source, φ_i)`.
    pub fn assemble_load<F>(&self, source: F) -> Result<Vec<f64>>
    where
        F: Fn(&QuadPoint) -> f64 + Sync + Send,
    {
        self.assemble_functional(|q| {
            Ok(LoadIntegrand {
                source: finite("load", source(q), q)?,
                flux: [0.0; 2],
            })
        })
    }

    pub fn apply_dirichlet(&self, full: &CsrMatrix, rhs: &[f64], boundary: &[f64]) -> SparseSystem {
        sparse::apply_dirichlet(full, rhs, self.mesh, boundary)
    }

    pub fn apply_dirichlet_zero(&self, full: &CsrMatrix, rhs: &[f64]) -> SparseSystem {
        sparse::apply_dirichlet_zero(full, rhs, self.mesh)
    }

    /// Solve an SPD free system and extend by the boundary values.
    pub fn solve_spd(&self, sys: &SparseSystem, boundary: &[f64]) -> Result<FeFunction> {
        let x = linalg::solve_spd(&sys.matrix, &sys.rhs)?;
        FeFunction::new(self.mesh, sys.dofs.extend(&x, boundary))
    }
}

/// `L²`, `H¹`-seminorm and full `H¹` errors.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorNorms {
    pub l2: f64,
    pub h1_semi: f64,
    pub h1: f64,
}

/// Element-wise quadrature of `u_h - u` against an analytic value+gradient field.
pub fn h1_l2_errors<F>(mesh: &Mesh, f: &FeFunction, exact: F, rule: &QuadratureRule) -> Result<ErrorNorms>
where
    F: Fn([f64; 2]) -> (f64, [f64; 2]) + Sync + Send,
{
    f.check_mesh(mesh)?;
    let parts = par::map_indices(mesh.n_triangles(), |t| {
        let geo = mesh.geometry(t);
        let vals = f.local_values(mesh, t);
        let grad = geo.gradient(vals);
        let mut l2 = 0.0;
        let mut semi = 0.0;
        for (bary, w) in rule.iter() {
            let (u, du) = exact(geo.point(bary));
            let uh = vals[0] * bary[0] + vals[1] * bary[1] + vals[2] * bary[2];
            l2 += w * (uh - u).powi(2);
            semi += w * ((grad[0] - du[0]).powi(2) + (grad[1] - du[1]).powi(2));
        }
        (l2 * geo.area, semi * geo.area)
    });
    let (l2, semi) = parts
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    Ok(ErrorNorms {
        l2: l2.sqrt(),
        h1_semi: semi.sqrt(),
        h1: (l2 + semi).sqrt(),
    })
}

/// `(‖u_h‖₀, |u_h|₁)`.
pub fn fe_norms(mesh: &Mesh, f: &FeFunction) -> (f64, f64) {
    // zero exact field turns the error routine into a norm
    let rule = QuadratureRule::degree2();
    let n = h1_l2_errors(mesh, f, |_| (0.0, [0.0; 2]), &rule).expect("same mesh");
    (n.l2, n.h1_semi)
}
