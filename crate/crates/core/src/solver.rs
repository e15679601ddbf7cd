//! Discrete nonlinear solve of the coupled system.
//!
//! Gummel decoupling: each sweep solves the Poisson equation with the
//! current concentrations, then every Nernst–Planck equation in turn with
//! the new potential frozen. The NP equations are solved by damped Newton on
//!
//! ```text
//! R(p; v) = (α(p)∇p + β(p) + γ(p)∇φ, ∇v) + (g(p), v)
//! R'(p)[ψ] = (α∇ψ + (α_y∇p + β_y + γ_y∇φ)ψ, ∇v) + (g_y ψ, v)
//! ```

use std::fmt;
use std::io::Write;

use crate::fem::{fe_norms, finite, FeFunction, FeSpace, FormCoefficients, LoadIntegrand, QuadPoint};
use crate::linalg;
use crate::mesh::Mesh;
use crate::problem::Problem;
use crate::quadrature::RuleOrder;
use crate::sparse::norm2;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Relative `H¹` update below which Gummel stops.
    pub gummel_tol: f64,
    pub gummel_max_iter: usize,
    /// Absolute 2-norm of the free-DOF Newton residual.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Smallest step length tried by the halving line search.
    pub damping_min: f64,
    /// Quadrature used for assembly.
    pub rule: RuleOrder,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gummel_tol: 1e-8,
            gummel_max_iter: 50,
            newton_tol: 1e-10,
            newton_max_iter: 25,
            damping_min: 1.0 / 1024.0,
            rule: RuleOrder::Degree4,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.gummel_tol > 0.0) || !(self.newton_tol > 0.0) {
            return bad("solver tolerances must be positive");
        }
        if self.gummel_max_iter == 0 || self.newton_max_iter == 0 {
            return bad("iteration limits must be at least 1");
        }
        if !(self.damping_min > 0.0 && self.damping_min <= 1.0) {
            return bad("damping_min must lie in (0, 1]");
        }
        Ok(())
    }
}

/// Which unknown a log entry refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unknown {
    Phi,
    Species(usize),
}

impl fmt::Display for Unknown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Unknown::Phi => f.write_str("phi"),
            Unknown::Species(i) => write!(f, "p{}", i + 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LogKind {
    /// Relative `H¹` change of one unknown over a Gummel sweep.
    Update,
    /// Newton residual norm after the given inner iteration.
    NewtonResidual,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogEntry {
    pub sweep: usize,
    pub iteration: usize,
    pub unknown: Unknown,
    pub kind: LogKind,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceLog {
    pub entries: Vec<LogEntry>,
    /// Largest relative update of each sweep.
    pub sweep_updates: Vec<f64>,
}

impl ConvergenceLog {
    pub fn sweeps(&self) -> usize {
        self.sweep_updates.len()
    }

    /// Newton residual history of `species` in the given sweep.
    pub fn newton_history(&self, sweep: usize, species: usize) -> Vec<f64> {
        self.entries
            .iter()
            .filter(|e| {
                e.sweep == sweep && e.unknown == Unknown::Species(species) && e.kind == LogKind::NewtonResidual
            })
            .map(|e| e.value)
            .collect()
    }

    /// CSV with columns `sweep,iteration,unknown,kind,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "sweep,iteration,unknown,kind,value")?;
        for e in &self.entries {
            let kind = match e.kind {
                LogKind::Update => "update",
                LogKind::NewtonResidual => "newton_residual",
            };
            writeln!(w, "{},{},{},{},{:.12e}", e.sweep, e.iteration, e.unknown, kind, e.value)?;
        }
        Ok(())
    }
}

/// Discrete potential and concentrations on one mesh.
#[derive(Clone, Debug)]
pub struct CoupledState {
    pub phi: FeFunction,
    pub p: Vec<FeFunction>,
    pub log: ConvergenceLog,
    pub converged: bool,
}

impl CoupledState {
    pub fn zeros(mesh: &Mesh, n_species: usize) -> Self {
        Self {
            phi: FeFunction::zeros(mesh),
            p: vec![FeFunction::zeros(mesh); n_species],
            log: ConvergenceLog::default(),
            converged: false,
        }
    }

    pub fn mesh_id(&self) -> u64 {
        self.phi.mesh_id()
    }

    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        self.phi.check_mesh(mesh)?;
        self.p.iter().try_for_each(|p| p.check_mesh(mesh))
    }

    /// Nodal transfer onto a refinement of this state's mesh.
    pub fn prolongate(&self, fine: &Mesh) -> Result<CoupledState> {
        Ok(Self {
            phi: self.phi.prolongate(fine)?,
            p: self.p.iter().map(|p| p.prolongate(fine)).collect::<Result<_>>()?,
            log: ConvergenceLog::default(),
            converged: false,
        })
    }
}

fn boundary_values<F: Fn([f64; 2]) -> f64>(mesh: &Mesh, f: F) -> Vec<f64> {
    (0..mesh.n_vertices())
        .map(|v| if mesh.is_boundary_vertex(v) { f(mesh.vertex(v)) } else { 0.0 })
        .collect()
}

/// Overwrite boundary coefficients with the Dirichlet data.
fn impose_boundary<F: Fn([f64; 2]) -> f64>(mesh: &Mesh, u: &FeFunction, f: F) -> Result<FeFunction> {
    let c = u
        .coefficients()
        .iter()
        .enumerate()
        .map(|(v, &x)| if mesh.is_boundary_vertex(v) { f(mesh.vertex(v)) } else { x })
        .collect();
    FeFunction::new(mesh, c)
}

fn poisson_parts(space: &FeSpace, problem: &Problem, p: &[FeFunction]) -> Result<(crate::sparse::CsrMatrix, Vec<f64>)> {
    let mesh = space.mesh();
    if p.len() != problem.n_species() {
        return Err(Error::InvalidConfig(format!(
            "{} concentrations for {} species",
            p.len(),
            problem.n_species()
        )));
    }
    p.iter().try_for_each(|f| f.check_mesh(mesh))?;
    let c = problem.coefficients();
    let k = space.assemble_weighted_stiffness(|q| c.epsilon(q.x))?;
    let b = space.assemble_load(|q| {
        let charge: f64 = p
            .iter()
            .enumerate()
            .map(|(i, f)| c.charge(i) * f.evaluate(mesh, q.triangle, &q.bary).0)
            .sum();
        charge + c.poisson_source(q.x)
    })?;
    Ok((k, b))
}

/// φ_h with `(ε∇φ_h, ∇w) = (Σ qⁱ pⁱ_h + f, w)` for all interior hats `w`.
pub fn solve_poisson_given_p(space: &FeSpace, problem: &Problem, p: &[FeFunction]) -> Result<FeFunction> {
    let mesh = space.mesh();
    let (k, b) = poisson_parts(space, problem, p)?;
    let g = boundary_values(mesh, |x| problem.dirichlet_phi(x));
    let sys = space.apply_dirichlet(&k, &b, &g);
    space.solve_spd(&sys, &g)
}

/// Free-DOF weak residual of the Poisson equation and the norm of its load.
pub fn poisson_residual(space: &FeSpace, problem: &Problem, phi: &FeFunction, p: &[FeFunction]) -> Result<(Vec<f64>, f64)> {
    phi.check_mesh(space.mesh())?;
    let (k, b) = poisson_parts(space, problem, p)?;
    let kphi = k.matvec(phi.coefficients());
    let r: Vec<f64> = kphi.iter().zip(&b).map(|(a, b)| a - b).collect();
    let dofs = space.dofs();
    Ok((dofs.restrict(&r), norm2(&dofs.restrict(&b))))
}

fn check_range(problem: &Problem, p: &FeFunction) -> Result<()> {
    if let Some((lo, hi)) = problem.coefficients().state_range() {
        if let Some((v, &value)) = p
            .coefficients()
            .iter()
            .enumerate()
            .find(|(_, &y)| !(y >= lo && y <= hi))
        {
            return Err(Error::StateOutOfRange { value, lo, hi, vertex: v });
        }
    }
    Ok(())
}

/// Free-DOF Newton residual `R(p; φ_z)` of species `i`.
pub fn np_residual(space: &FeSpace, problem: &Problem, i: usize, phi: &FeFunction, p: &FeFunction) -> Result<Vec<f64>> {
    let mesh = space.mesh();
    phi.check_mesh(mesh)?;
    p.check_mesh(mesh)?;
    let c = problem.coefficients();
    let full = space.assemble_functional(|q: &QuadPoint| {
        let (y, gp) = p.evaluate(mesh, q.triangle, &q.bary);
        let gphi = phi.gradient(mesh, q.triangle);
        let a = finite("alpha", c.alpha(i, q.x, y), q)?;
        let b = c.beta(i, q.x, y);
        let gm = finite("gamma", c.gamma(i, q.x, y), q)?;
        Ok(LoadIntegrand {
            source: finite("g", c.g(i, q.x, y), q)?,
            flux: [a * gp[0] + b[0] + gm * gphi[0], a * gp[1] + b[1] + gm * gphi[1]],
        })
    })?;
    Ok(space.dofs().restrict(&full))
}

fn np_jacobian(space: &FeSpace, problem: &Problem, i: usize, phi: &FeFunction, p: &FeFunction) -> Result<crate::sparse::CsrMatrix> {
    let mesh = space.mesh();
    let c = problem.coefficients();
    let full = space.assemble_form(|q| {
        let (y, gp) = p.evaluate(mesh, q.triangle, &q.bary);
        let gphi = phi.gradient(mesh, q.triangle);
        let a = finite("alpha", c.alpha(i, q.x, y), q)?;
        if a <= 0.0 {
            return Err(Error::NonPositiveCoefficient {
                name: "alpha",
                value: a,
                triangle: q.triangle,
                x: q.x[0],
                y: q.x[1],
            });
        }
        let ay = finite("alpha_y", c.alpha_y(i, q.x, y), q)?;
        let by = c.beta_y(i, q.x, y);
        let gy = finite("gamma_y", c.gamma_y(i, q.x, y), q)?;
        Ok(FormCoefficients {
            diffusion: a,
            convection: [
                ay * gp[0] + by[0] + gy * gphi[0],
                ay * gp[1] + by[1] + gy * gphi[1],
            ],
            reaction: finite("g_y", c.g_y(i, q.x, y), q)?,
        })
    })?;
    Ok(space.apply_dirichlet_zero(&full, &vec![0.0; mesh.n_vertices()]).matrix)
}

/// Result of one damped-Newton solve.
#[derive(Clone, Debug)]
pub struct NewtonOutcome {
    pub p: FeFunction,
    /// Residual norms, starting with the initial guess.
    pub residuals: Vec<f64>,
}

impl NewtonOutcome {
    pub fn iterations(&self) -> usize {
        self.residuals.len() - 1
    }
}

/// Damped Newton for species `i` with the potential frozen.
pub fn solve_np_given_phi(
    space: &FeSpace,
    problem: &Problem,
    i: usize,
    phi: &FeFunction,
    initial_guess: &FeFunction,
    cfg: &SolverConfig,
) -> Result<NewtonOutcome> {
    let mesh = space.mesh();
    phi.check_mesh(mesh)?;
    initial_guess.check_mesh(mesh)?;
    if i >= problem.n_species() {
        return Err(Error::InvalidConfig(format!("species index {i} out of range")));
    }
    let dofs = space.dofs();
    let mut p = impose_boundary(mesh, initial_guess, |x| problem.dirichlet_p(i, x))?;
    check_range(problem, &p)?;
    let mut r = np_residual(space, problem, i, phi, &p)?;
    let mut rn = norm2(&r);
    let mut residuals = vec![rn];
    for _ in 0..cfg.newton_max_iter {
        if rn <= cfg.newton_tol {
            return Ok(NewtonOutcome { p, residuals });
        }
        let jac = np_jacobian(space, problem, i, phi, &p)?;
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = linalg::solve_general(&jac, &neg)?;
        let step = FeFunction::new(mesh, dofs.extend(&delta, &vec![0.0; mesh.n_vertices()]))?;
        let mut lambda = 1.0;
        let mut last_err = None;
        loop {
            let mut trial = p.clone();
            trial.add_scaled(lambda, &step);
            let attempt = check_range(problem, &trial).and_then(|_| np_residual(space, problem, i, phi, &trial));
            match attempt {
                Ok(rt) => {
                    let rtn = norm2(&rt);
                    if rtn < rn || rtn <= cfg.newton_tol {
                        p = trial;
                        r = rt;
                        rn = rtn;
                        break;
                    }
                }
                Err(e) => last_err = Some(e),
            }
            lambda *= 0.5;
            if lambda < cfg.damping_min {
                return Err(last_err.unwrap_or(Error::NewtonDiverged {
                    species: i,
                    iterations: residuals.len(),
                    residual: rn,
                }));
            }
        }
        if lambda < 1.0 {
            log::debug!("species {}: damped step λ = {lambda}", i + 1);
        }
        residuals.push(rn);
    }
    if rn <= cfg.newton_tol {
        Ok(NewtonOutcome { p, residuals })
    } else {
        Err(Error::NewtonDiverged {
            species: i,
            iterations: cfg.newton_max_iter,
            residual: rn,
        })
    }
}

fn relative_update(mesh: &Mesh, new: &FeFunction, old: &FeFunction) -> f64 {
    let mut d = new.clone();
    d.add_scaled(-1.0, old);
    let (dl2, dh1) = fe_norms(mesh, &d);
    let (l2, h1) = fe_norms(mesh, new);
    let num = (dl2 * dl2 + dh1 * dh1).sqrt();
    let den = (l2 * l2 + h1 * h1).sqrt();
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Gummel iteration from `warm_start` (same mesh, or prolongated from its
/// parent) or from zero.
pub fn solve_coupled(mesh: &Mesh, problem: &Problem, cfg: &SolverConfig, warm_start: Option<&CoupledState>) -> Result<CoupledState> {
    cfg.validate()?;
    let space = FeSpace::new(mesh, cfg.rule.rule());
    solve_coupled_in(&space, problem, cfg, warm_start)
}

/// [`solve_coupled`] with a prebuilt space.
pub fn solve_coupled_in(space: &FeSpace, problem: &Problem, cfg: &SolverConfig, warm_start: Option<&CoupledState>) -> Result<CoupledState> {
    let mesh = space.mesh();
    let n = problem.n_species();
    let start = match warm_start {
        None => CoupledState::zeros(mesh, n),
        Some(s) if s.mesh_id() == mesh.id() => s.clone(),
        Some(s) => s.prolongate(mesh)?,
    };
    if start.p.len() != n {
        return Err(Error::InvalidConfig(format!(
            "warm start has {} species, problem has {n}",
            start.p.len()
        )));
    }
    start.check_mesh(mesh)?;
    let mut phi = start.phi;
    let mut p: Vec<FeFunction> = start
        .p
        .iter()
        .enumerate()
        .map(|(i, f)| impose_boundary(mesh, f, |x| problem.dirichlet_p(i, x)))
        .collect::<Result<_>>()?;
    let mut log = ConvergenceLog::default();
    for sweep in 1..=cfg.gummel_max_iter {
        let wrap = |e: Error| Error::Gummel {
            sweep,
            source: Box::new(e),
        };
        let phi_new = solve_poisson_given_p(space, problem, &p).map_err(wrap)?;
        let mut worst = relative_update(mesh, &phi_new, &phi);
        log.entries.push(LogEntry {
            sweep,
            iteration: 0,
            unknown: Unknown::Phi,
            kind: LogKind::Update,
            value: worst,
        });
        phi = phi_new;
        for i in 0..n {
            let out = solve_np_given_phi(space, problem, i, &phi, &p[i], cfg).map_err(wrap)?;
            for (k, &r) in out.residuals.iter().enumerate() {
                log.entries.push(LogEntry {
                    sweep,
                    iteration: k,
                    unknown: Unknown::Species(i),
                    kind: LogKind::NewtonResidual,
                    value: r,
                });
            }
            let upd = relative_update(mesh, &out.p, &p[i]);
            log.entries.push(LogEntry {
                sweep,
                iteration: out.iterations(),
                unknown: Unknown::Species(i),
                kind: LogKind::Update,
                value: upd,
            });
            worst = worst.max(upd);
            p[i] = out.p;
        }
        log.sweep_updates.push(worst);
        log::debug!("Gummel sweep {sweep}: max relative update {worst:.3e}");
        if worst <= cfg.gummel_tol {
            return Ok(CoupledState {
                phi,
                p,
                log,
                converged: true,
            });
        }
    }
    log::warn!(
        "Gummel iteration stopped after {} sweeps without reaching {:e}",
        cfg.gummel_max_iter,
        cfg.gummel_tol
    );
    Ok(CoupledState {
        phi,
        p,
        log,
        converged: false,
    })
}

/// Free-DOF weak residual norms of a discrete state.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualAudit {
    pub poisson: f64,
    /// Norm of the free-DOF Poisson load, for relative comparison.
    pub poisson_load: f64,
    pub species: Vec<f64>,
}

pub fn audit_residuals(mesh: &Mesh, problem: &Problem, state: &CoupledState, rule: RuleOrder) -> Result<ResidualAudit> {
    state.check_mesh(mesh)?;
    let space = FeSpace::new(mesh, rule.rule());
    let (r, load) = poisson_residual(&space, problem, &state.phi, &state.p)?;
    let species = (0..problem.n_species())
        .map(|i| np_residual(&space, problem, i, &state.phi, &state.p[i]).map(|r| norm2(&r)))
        .collect::<Result<_>>()?;
    Ok(ResidualAudit {
        poisson: norm2(&r),
        poisson_load: load,
        species,
    })
}
