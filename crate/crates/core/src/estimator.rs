//! Recovery-based a posteriori indicators.
//!
//! With `G_h` the flux recovery for the relevant coefficient and `G̃_h` the
//! plain gradient recovery, the element indicators are
//!
//! ```text
//! η_{τ,φ}  = ‖G_hφ_h − ε∇φ_h‖_τ + h_τ‖R₁‖_τ
//! η_{τ,pⁱ} = ‖G_hpⁱ_h − α∇pⁱ_h‖_τ + ‖G_hφ_h − ε∇φ_h‖_τ
//!          + ‖γ(G̃_hφ_h − ∇φ_h)‖_τ + h_τ(‖R₁‖_τ + ‖R₂ⁱ‖_τ)
//! R₁  = Σ qⁱpⁱ_h + div G_hφ_h + f
//! R₂ⁱ = div G_hpⁱ_h + div_x β + β_y·∇pⁱ_h − g + (γ_x + γ_y∇pⁱ_h)·G̃_hφ_h + γ div G̃_hφ_h
//! ```
//!
//! Global values are root-sum-squares of the element values.

use crate::fem::{h1_l2_errors, ErrorNorms, FeFunction};
use crate::mesh::Mesh;
use crate::par;
use crate::problem::Problem;
use crate::quadrature::edge_gauss2;
use crate::recovery::{flux_recover, gradient_recover, RecoveredField, WeightScheme};
use crate::solver::CoupledState;
use crate::{Error, Result};

/// Per-element summands of the indicators, one entry per triangle.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EstimatorTerms {
    /// `‖D_h(φ_h)‖_τ`.
    pub d_phi: Vec<f64>,
    /// `h_τ‖R₁‖_τ`.
    pub r1: Vec<f64>,
    /// `‖D_h(pⁱ_h)‖_τ` per species.
    pub d_p: Vec<Vec<f64>>,
    /// `‖γ(G̃_hφ_h − ∇φ_h)‖_τ` per species.
    pub drift: Vec<Vec<f64>>,
    /// `h_τ‖R₂ⁱ‖_τ` per species.
    pub r2: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorReport {
    pub mesh_id: u64,
    pub eta_phi: Vec<f64>,
    pub eta_p: Vec<Vec<f64>>,
    pub terms: EstimatorTerms,
    pub global_eta_phi: f64,
    pub global_eta_p: Vec<f64>,
}

impl EstimatorReport {
    /// Effectivity indices `η / e` for φ and each species, using full `H¹` errors.
    pub fn effectivity(&self, errors: &TrueErrors) -> Result<Vec<f64>> {
        let mut out = vec![effectivity(self.global_eta_phi, errors.phi.h1)?];
        for (eta, e) in self.global_eta_p.iter().zip(&errors.p) {
            out.push(effectivity(*eta, e.h1)?);
        }
        Ok(out)
    }
}

/// Root-sum-square.
pub fn rss(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn effectivity(eta: f64, error: f64) -> Result<f64> {
    if error == 0.0 {
        Err(Error::ZeroTrueError)
    } else {
        Ok(eta / error)
    }
}

struct Element {
    d_phi: f64,
    r1: f64,
    d_p: Vec<f64>,
    drift: Vec<f64>,
    r2: Vec<f64>,
}

/// All indicators for a discrete state.
pub fn estimate(mesh: &Mesh, problem: &Problem, state: &CoupledState, scheme: WeightScheme) -> Result<EstimatorReport> {
    state.check_mesh(mesh)?;
    let c = problem.coefficients();
    let n = problem.n_species();
    if state.p.len() != n {
        return Err(Error::InvalidConfig(format!(
            "state has {} species, problem has {n}",
            state.p.len()
        )));
    }
    let rule = problem.norm_rule().rule();
    let phi = &state.phi;
    let g_phi = flux_recover(mesh, phi, |x, _| c.epsilon(x), scheme)?;
    let gt_phi = gradient_recover(mesh, phi, scheme)?;
    let g_p: Vec<RecoveredField> = (0..n)
        .map(|i| flux_recover(mesh, &state.p[i], |x, y| c.alpha(i, x, y), scheme))
        .collect::<Result<_>>()?;

    let elements = par::map_indices(mesh.n_triangles(), |t| {
        let geo = mesh.geometry(t);
        let h = geo.diameter();
        let grad_phi = phi.gradient(mesh, t);
        let div_g_phi = g_phi.divergence_on(mesh, t);
        let div_gt_phi = gt_phi.divergence_on(mesh, t);
        let grad_p: Vec<[f64; 2]> = state.p.iter().map(|p| p.gradient(mesh, t)).collect();
        let div_g_p: Vec<f64> = g_p.iter().map(|g| g.divergence_on(mesh, t)).collect();
        let mut d_phi = 0.0;
        let mut r1 = 0.0;
        let mut d_p = vec![0.0; n];
        let mut drift = vec![0.0; n];
        let mut r2 = vec![0.0; n];
        for (bary, w) in rule.iter() {
            let x = geo.point(bary);
            let wa = w * geo.area;
            let eps = c.epsilon(x);
            let gp = g_phi.evaluate(mesh, t, bary);
            d_phi += wa * sq2([gp[0] - eps * grad_phi[0], gp[1] - eps * grad_phi[1]]);
            let gt = gt_phi.evaluate(mesh, t, bary);
            let mut res1 = div_g_phi + c.poisson_source(x);
            for i in 0..n {
                let y = state.p[i].evaluate(mesh, t, bary).0;
                res1 += c.charge(i) * y;
                let gpi = grad_p[i];
                let a = c.alpha(i, x, y);
                let rp = g_p[i].evaluate(mesh, t, bary);
                d_p[i] += wa * sq2([rp[0] - a * gpi[0], rp[1] - a * gpi[1]]);
                let gm = c.gamma(i, x, y);
                drift[i] += wa * gm * gm * sq2([gt[0] - grad_phi[0], gt[1] - grad_phi[1]]);
                let gx = c.gamma_grad_x(i, x, y);
                let gy = c.gamma_y(i, x, y);
                let grad_gamma = [gx[0] + gy * gpi[0], gx[1] + gy * gpi[1]];
                let by = c.beta_y(i, x, y);
                let res2 = div_g_p[i] + c.beta_div_x(i, x, y) + by[0] * gpi[0] + by[1] * gpi[1] - c.g(i, x, y)
                    + grad_gamma[0] * gt[0]
                    + grad_gamma[1] * gt[1]
                    + gm * div_gt_phi;
                r2[i] += wa * res2 * res2;
            }
            r1 += wa * res1 * res1;
        }
        Element {
            d_phi: d_phi.sqrt(),
            r1: h * r1.sqrt(),
            d_p: d_p.into_iter().map(f64::sqrt).collect(),
            drift: drift.into_iter().map(f64::sqrt).collect(),
            r2: r2.into_iter().map(|v| h * v.sqrt()).collect(),
        }
    });

    let nt = mesh.n_triangles();
    let mut terms = EstimatorTerms {
        d_phi: Vec::with_capacity(nt),
        r1: Vec::with_capacity(nt),
        d_p: vec![Vec::with_capacity(nt); n],
        drift: vec![Vec::with_capacity(nt); n],
        r2: vec![Vec::with_capacity(nt); n],
    };
    for e in &elements {
        terms.d_phi.push(e.d_phi);
        terms.r1.push(e.r1);
        for i in 0..n {
            terms.d_p[i].push(e.d_p[i]);
            terms.drift[i].push(e.drift[i]);
            terms.r2[i].push(e.r2[i]);
        }
    }
    let eta_phi: Vec<f64> = (0..nt).map(|t| terms.d_phi[t] + terms.r1[t]).collect();
    let eta_p: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..nt)
                .map(|t| terms.d_p[i][t] + terms.d_phi[t] + terms.drift[i][t] + terms.r1[t] + terms.r2[i][t])
                .collect()
        })
        .collect();
    if let Some(t) = eta_phi.iter().position(|v| !v.is_finite()) {
        let x = mesh.geometry(t).centroid();
        return Err(Error::NonFiniteCoefficient {
            name: "potential indicator",
            triangle: t,
            x: x[0],
            y: x[1],
        });
    }
    for (i, eta) in eta_p.iter().enumerate() {
        if let Some(t) = eta.iter().position(|v| !v.is_finite()) {
            let x = mesh.geometry(t).centroid();
            log::error!("indicator of species {} is not finite on triangle {t}", i + 1);
            return Err(Error::NonFiniteCoefficient {
                name: "concentration indicator",
                triangle: t,
                x: x[0],
                y: x[1],
            });
        }
    }
    Ok(EstimatorReport {
        mesh_id: mesh.id(),
        global_eta_phi: rss(&eta_phi),
        global_eta_p: eta_p.iter().map(|e| rss(e)).collect(),
        eta_phi,
        eta_p,
        terms,
    })
}

fn sq2(v: [f64; 2]) -> f64 {
    v[0] * v[0] + v[1] * v[1]
}

/// Element values of η_{τ,φ}.
pub fn estimate_phi(mesh: &Mesh, problem: &Problem, state: &CoupledState, scheme: WeightScheme) -> Result<Vec<f64>> {
    Ok(estimate(mesh, problem, state, scheme)?.eta_phi)
}

/// Element values of η_{τ,pⁱ}.
pub fn estimate_p(mesh: &Mesh, problem: &Problem, state: &CoupledState, i: usize, scheme: WeightScheme) -> Result<Vec<f64>> {
    let mut r = estimate(mesh, problem, state, scheme)?;
    if i >= r.eta_p.len() {
        return Err(Error::InvalidConfig(format!("species index {i} out of range")));
    }
    Ok(r.eta_p.swap_remove(i))
}

/// Errors of a discrete state against the exact solution.
#[derive(Clone, Debug, PartialEq)]
pub struct TrueErrors {
    pub phi: ErrorNorms,
    pub p: Vec<ErrorNorms>,
}

impl TrueErrors {
    /// Full `H¹` errors `[e_φ, e_p1, ..]`.
    pub fn h1(&self) -> Vec<f64> {
        std::iter::once(self.phi.h1).chain(self.p.iter().map(|e| e.h1)).collect()
    }
}

/// `None` when the problem has no exact solution.
pub fn true_errors(mesh: &Mesh, problem: &Problem, state: &CoupledState) -> Result<Option<TrueErrors>> {
    let Some(exact) = problem.exact() else {
        return Ok(None);
    };
    let rule = problem.norm_rule().rule();
    let phi = h1_l2_errors(
        mesh,
        &state.phi,
        |x| {
            let v = exact.phi(x);
            (v.value, v.grad)
        },
        &rule,
    )?;
    let p = state
        .p
        .iter()
        .enumerate()
        .map(|(i, f)| {
            h1_l2_errors(
                mesh,
                f,
                |x| {
                    let v = exact.p(i, x);
                    (v.value, v.grad)
                },
                &rule,
            )
        })
        .collect::<Result<_>>()?;
    Ok(Some(TrueErrors { phi, p }))
}

/// Scaled normal-flux jumps `h_l^{1/2}‖[c∇u·n]‖_l` on interior edges.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpDiagnostics {
    /// Interior edge indices, in mesh order.
    pub edges: Vec<usize>,
    pub phi: Vec<f64>,
    pub p: Vec<Vec<f64>>,
}

fn edge_jump<C>(mesh: &Mesh, e: usize, u: &FeFunction, coef: C) -> f64
where
    C: Fn([f64; 2], f64) -> f64,
{
    let (t1, t2) = mesh.edge_triangles(e);
    let t2 = t2.expect("interior edge");
    let [a, b] = mesh.edges()[e];
    let (pa, pb) = (mesh.vertex(a), mesh.vertex(b));
    let len = mesh.edge_length(e);
    let n = [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len];
    let g1 = u.gradient(mesh, t1);
    let g2 = u.gradient(mesh, t2);
    let (ua, ub) = (u.coefficients()[a], u.coefficients()[b]);
    let mut s = 0.0;
    for (st, w) in edge_gauss2() {
        let x = [pa[0] + st * (pb[0] - pa[0]), pa[1] + st * (pb[1] - pa[1])];
        let y = ua + st * (ub - ua);
        let c = coef(x, y);
        let j = c * ((g1[0] - g2[0]) * n[0] + (g1[1] - g2[1]) * n[1]);
        s += w * len * j * j;
    }
    len.sqrt() * s.sqrt()
}

pub fn jump_diagnostics(mesh: &Mesh, problem: &Problem, state: &CoupledState) -> Result<JumpDiagnostics> {
    state.check_mesh(mesh)?;
    let c = problem.coefficients();
    let edges: Vec<usize> = (0..mesh.n_edges()).filter(|&e| !mesh.is_boundary_edge(e)).collect();
    let phi = par::map_indices(edges.len(), |k| edge_jump(mesh, edges[k], &state.phi, |x, _| c.epsilon(x)));
    let p = (0..state.p.len())
        .map(|i| par::map_indices(edges.len(), |k| edge_jump(mesh, edges[k], &state.p[i], |x, y| c.alpha(i, x, y))))
        .collect();
    Ok(JumpDiagnostics { edges, phi, p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_uniform_unit_square;
    use crate::problem::{make_sech2_case, BoundaryData, Coefficients};
    use crate::quadrature::RuleOrder;
    use crate::solver::{solve_coupled, SolverConfig};
    use std::sync::Arc;

    /// Constant-coefficient model with configurable sources and an optional
    /// solenoidal convection β = (y, -x).
    struct Constant {
        eps: f64,
        f: f64,
        g: f64,
        beta: bool,
    }

    impl Coefficients for Constant {
        fn n_species(&self) -> usize {
            2
        }
        fn charge(&self, i: usize) -> f64 {
            [1.0, -1.0][i]
        }
        fn alpha(&self, _: usize, _: [f64; 2], _: f64) -> f64 {
            1.0
        }
        fn alpha_y(&self, _: usize, _: [f64; 2], _: f64) -> f64 {
            0.0
        }
        fn beta(&self, _: usize, x: [f64; 2], _: f64) -> [f64; 2] {
            if self.beta {
                [x[1], -x[0]]
            } else {
                [0.0; 2]
            }
        }
        fn gamma(&self, _: usize, _: [f64; 2], _: f64) -> f64 {
            0.0
        }
        fn gamma_y(&self, _: usize, _: [f64; 2], _: f64) -> f64 {
            0.0
        }
        fn g(&self, _: usize, _: [f64; 2], _: f64) -> f64 {
            self.g
        }
        fn g_y(&self, _: usize, _: [f64; 2], _: f64) -> f64 {
            0.0
        }
        fn epsilon(&self, _: [f64; 2]) -> f64 {
            self.eps
        }
        fn poisson_source(&self, _: [f64; 2]) -> f64 {
            self.f
        }
    }

    fn constant(eps: f64, f: f64, g: f64, beta: bool) -> Problem {
        Problem::new(
            "constant",
            Arc::new(Constant { eps, f, g, beta }),
            None,
            BoundaryData::Homogeneous,
            RuleOrder::Degree4,
        )
    }

    fn state(phi: FeFunction, p: Vec<FeFunction>) -> CoupledState {
        CoupledState {
            phi,
            p,
            log: Default::default(),
            converged: true,
        }
    }

    #[test]
    fn zero_data_gives_zero() {
        let mesh = make_uniform_unit_square(4);
        let pr = constant(1.0, 0.0, 0.0, false);
        let s = state(FeFunction::zeros(&mesh), vec![FeFunction::zeros(&mesh); 2]);
        let r = estimate(&mesh, &pr, &s, WeightScheme::Area).unwrap();
        assert!(r.eta_phi.iter().all(|&v| v == 0.0));
        assert!(r.eta_p.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(r.global_eta_phi, 0.0);
    }

    #[test]
    fn linear_fields_with_constant_coefficients() {
        let mesh = make_uniform_unit_square(5);
        // f = 0 and linear φ, p: div of the recovered fields vanishes, R₂ reduces to -g
        let pr = constant(2.0, 0.0, 0.0, false);
        let phi = FeFunction::interpolate(&mesh, |x| 1.0 + x[0] - 2.0 * x[1]);
        let p = vec![
            FeFunction::interpolate(&mesh, |x| 0.5 * x[1]),
            FeFunction::interpolate(&mesh, |x| 0.5 * x[1]),
        ];
        // q = (1, -1) so the charges cancel
        let s = state(phi, p);
        let r = estimate(&mesh, &pr, &s, WeightScheme::Area).unwrap();
        for t in 0..mesh.n_triangles() {
            assert!(r.terms.d_phi[t] < 1e-12 && r.terms.r1[t] < 1e-12);
            for i in 0..2 {
                assert!(r.terms.d_p[i][t] < 1e-12 && r.terms.drift[i][t] < 1e-12 && r.terms.r2[i][t] < 1e-12);
            }
        }
    }

    #[test]
    fn solenoidal_beta_does_not_contribute() {
        let mesh = make_uniform_unit_square(4);
        let p = FeFunction::interpolate(&mesh, |x| x[0] * x[1]);
        let phi = FeFunction::interpolate(&mesh, |x| x[0]);
        let s = state(phi, vec![p.clone(), p]);
        let with = estimate(&mesh, &constant(1.0, 0.3, 0.1, true), &s, WeightScheme::Area).unwrap();
        let without = estimate(&mesh, &constant(1.0, 0.3, 0.1, false), &s, WeightScheme::Area).unwrap();
        assert_eq!(with.eta_p, without.eta_p);
    }

    #[test]
    fn aggregation_and_summand_inclusion() {
        let mesh = make_uniform_unit_square(8);
        let pr = make_sech2_case();
        let s = solve_coupled(&mesh, &pr, &SolverConfig::default(), None).unwrap();
        let r = estimate(&mesh, &pr, &s, WeightScheme::Area).unwrap();
        assert!((r.global_eta_phi - rss(&r.eta_phi)).abs() <= 1e-13 * r.global_eta_phi);
        for i in 0..2 {
            assert!((r.global_eta_p[i] - rss(&r.eta_p[i])).abs() <= 1e-13 * r.global_eta_p[i]);
            for t in 0..mesh.n_triangles() {
                assert!(r.eta_p[i][t] >= r.terms.d_phi[t] + r.terms.r1[t]);
                assert!(r.eta_p[i][t] >= 0.0);
            }
        }
        assert_eq!(estimate_phi(&mesh, &pr, &s, WeightScheme::Area).unwrap(), r.eta_phi);
        assert_eq!(estimate_p(&mesh, &pr, &s, 1, WeightScheme::Area).unwrap(), r.eta_p[1]);

        let e = true_errors(&mesh, &pr, &s).unwrap().unwrap();
        let eff = r.effectivity(&e).unwrap();
        eprintln!("n=8 effectivity indices: {eff:?}");
        assert!(eff[0] >= 0.2 && eff[0] <= 5.0, "{eff:?}");
    }

    #[test]
    fn effectivity_basics() {
        assert_eq!(effectivity(0.3, 0.3).unwrap(), 1.0);
        assert_eq!(effectivity(0.6, 0.3).unwrap(), 2.0);
        assert!(matches!(effectivity(1.0, 0.0), Err(Error::ZeroTrueError)));
    }

    #[test]
    fn mesh_mismatch_rejected() {
        let a = make_uniform_unit_square(3);
        let b = make_uniform_unit_square(3);
        let s = CoupledState::zeros(&a, 2);
        assert!(estimate(&b, &make_sech2_case(), &s, WeightScheme::Area).is_err());
    }

    #[test]
    fn jumps() {
        let mesh = make_uniform_unit_square(4);
        let lin = FeFunction::interpolate(&mesh, |x| 3.0 * x[0] - x[1]);
        let s = state(lin.clone(), vec![lin.clone(), lin]);
        let j = jump_diagnostics(&mesh, &constant(2.0, 0.0, 0.0, false), &s).unwrap();
        assert!(j.phi.iter().chain(j.p.iter().flatten()).all(|&v| v.abs() < 1e-12));

        // two triangles [(0,0),(1,0),(1,1)] and [(0,0),(1,1),(0,1)], hat at (0,0)
        let mesh = Mesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let hat = FeFunction::basis(&mesh, 0);
        // ∇ = (-1, 0) below the diagonal, (0, -1) above; |[∇u·n]| = |(-1, 1)·(1, -1)|/√2 = √2
        // and h_l^{1/2}‖J‖_l = √|l| · √2 · √|l| = 2 for |l| = √2
        let s = state(hat.clone(), vec![hat.clone(), hat]);
        let j1 = jump_diagnostics(&mesh, &constant(1.0, 0.0, 0.0, false), &s).unwrap();
        assert_eq!(j1.edges.len(), 1);
        assert!((j1.phi[0] - 2.0).abs() < 1e-14, "{}", j1.phi[0]);
        let j3 = jump_diagnostics(&mesh, &constant(3.0, 0.0, 0.0, false), &s).unwrap();
        assert!((j3.phi[0] - 3.0 * j1.phi[0]).abs() < 1e-14);
    }
}
