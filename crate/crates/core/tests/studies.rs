//! Regression checks over whole solves and convergence studies.

use std::sync::Arc;

use pnp_afem::afem::{loglog_slope, run_loop, LoopConfig, RefinementMode, RunRecord};
use pnp_afem::estimator::{estimate, rss, true_errors};
use pnp_afem::fem::{h1_l2_errors, FeFunction, FeSpace};
use pnp_afem::io::write_vtk;
use pnp_afem::mesh::make_uniform_unit_square;
use pnp_afem::problem::{
    make_sech2_case, BoundaryData, Coefficients, ExactSolution, Problem, Sech2Coefficients, SmoothSines,
};
use pnp_afem::quadrature::{QuadratureRule, RuleOrder};
use pnp_afem::recovery::WeightScheme;
use pnp_afem::solver::{poisson_residual, solve_coupled, solve_np_given_phi, solve_poisson_given_p, SolverConfig};

fn sine(k: f64) -> impl Fn([f64; 2]) -> (f64, [f64; 2]) {
    move |x| {
        let w = k * std::f64::consts::PI;
        let (sx, cx) = (w * x[0]).sin_cos();
        let (sy, cy) = (w * x[1]).sin_cos();
        (sx * sy, [w * cx * sy, w * sx * cy])
    }
}

fn study(problem: &Problem, mode: RefinementMode, max_dofs: usize) -> Vec<RunRecord> {
    let cfg = LoopConfig {
        tol: 1e-6,
        max_dofs,
        max_steps: 200,
        mode,
        ..LoopConfig::default()
    };
    run_loop(problem, &cfg, &SolverConfig::default(), |_| Ok(())).unwrap().records
}

#[test]
fn nodal_interpolant_h1_error_halves() {
    let exact = sine(1.0);
    let errors: Vec<f64> = [8, 16, 32, 64]
        .iter()
        .map(|&n| {
            let mesh = make_uniform_unit_square(n);
            let f = FeFunction::interpolate(&mesh, |x| exact(x).0);
            h1_l2_errors(&mesh, &f, &exact, &QuadratureRule::degree4()).unwrap().h1
        })
        .collect();
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((2.0 / 1.15..=2.0 * 1.15).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn poisson_subsolve_is_galerkin_orthogonal_and_converges() {
    let problem = make_sech2_case();
    let mut errors = Vec::new();
    for n in [8, 16, 32, 64] {
        let mesh = make_uniform_unit_square(n);
        let space = FeSpace::new(&mesh, QuadratureRule::degree4());
        let p: Vec<FeFunction> = (0..2)
            .map(|i| FeFunction::interpolate(&mesh, |x| SmoothSines.p(i, x).value))
            .collect();
        let phi = solve_poisson_given_p(&space, &problem, &p).unwrap();
        let (r, _) = poisson_residual(&space, &problem, &phi, &p).unwrap();
        let worst = r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(worst <= 1e-10, "n={n}: residual {worst:e}");
        errors.push(h1_l2_errors(&mesh, &phi, sine(1.0), &QuadratureRule::degree4()).unwrap().h1);
    }
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.7..=2.3).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn newton_tail_is_superlinear() {
    let problem = make_sech2_case();
    let mesh = make_uniform_unit_square(16);
    let space = FeSpace::new(&mesh, QuadratureRule::degree4());
    let phi = FeFunction::interpolate(&mesh, |x| SmoothSines.phi(x).value);
    for i in 0..2 {
        let out = solve_np_given_phi(&space, &problem, i, &phi, &FeFunction::zeros(&mesh), &SolverConfig::default())
            .unwrap();
        let r = &out.residuals;
        assert!(out.iterations() <= 8);
        assert!(*r.last().unwrap() <= 1e-10);
        let (a, b) = (r[r.len() - 2], r[r.len() - 1]);
        assert!(b <= a.powf(1.5), "species {i}: {a:e} -> {b:e}");
    }
}

#[test]
fn smooth_effectivity_on_the_start_mesh() {
    let problem = make_sech2_case();
    let mesh = make_uniform_unit_square(8);
    let state = solve_coupled(&mesh, &problem, &SolverConfig::default(), None).unwrap();
    let report = estimate(&mesh, &problem, &state, WeightScheme::Area).unwrap();
    let errors = true_errors(&mesh, &problem, &state).unwrap().unwrap();
    let ratio = report.global_eta_phi / errors.phi.h1_semi;
    assert!((0.2..=5.0).contains(&ratio), "eta_phi / |e_phi|_1 = {ratio}");
}

#[test]
fn smooth_uniform_study_decays_at_half_order() {
    let records = study(&make_sech2_case(), RefinementMode::Uniform, 66_049);
    let dofs: Vec<usize> = records.iter().map(|r| r.dofs).collect();
    assert_eq!(dofs, [81, 289, 1089, 4225, 16641, 66049]);
    for k in 0..3 {
        for w in records.windows(2) {
            assert!(w[1].eta[k] < w[0].eta[k]);
        }
        let tail = &records[records.len() - 3..];
        let n: Vec<f64> = tail.iter().map(|r| r.dofs as f64).collect();
        let e: Vec<f64> = tail.iter().map(|r| r.errors.as_ref().unwrap()[k]).collect();
        let eta: Vec<f64> = tail.iter().map(|r| r.eta[k]).collect();
        let (se, seta) = (loglog_slope(&n, &e), loglog_slope(&n, &eta));
        assert!((-0.6..=-0.4).contains(&se), "unknown {k}: error slope {se}");
        assert!((-0.6..=-0.4).contains(&seta), "unknown {k}: estimator slope {seta}");
    }
}

#[test]
fn smooth_adaptive_tracks_uniform() {
    let problem = make_sech2_case();
    let uniform = study(&problem, RefinementMode::Uniform, 20_000);
    let adaptive = study(&problem, RefinementMode::Adaptive, 20_000);
    for w in adaptive.windows(2) {
        assert!(w[1].dofs > w[0].dofs, "adaptive step did not add vertices");
    }
    // log-log interpolation of the uniform curve at each adaptive DOF count
    let ln = |v: f64| v.ln();
    for r in adaptive.iter().filter(|r| r.dofs >= uniform[0].dofs) {
        let Some(k) = uniform.windows(2).position(|w| w[1].dofs >= r.dofs) else {
            continue;
        };
        let (a, b) = (&uniform[k], &uniform[k + 1]);
        let s = (ln(r.dofs as f64) - ln(a.dofs as f64)) / (ln(b.dofs as f64) - ln(a.dofs as f64));
        for q in 0..3 {
            let (ea, eb) = (a.errors.as_ref().unwrap()[q], b.errors.as_ref().unwrap()[q]);
            let reference = (ln(ea) + s * (ln(eb) - ln(ea))).exp();
            let ratio = r.errors.as_ref().unwrap()[q] / reference;
            assert!((0.5..=2.0).contains(&ratio), "step {} ({} dofs) unknown {q}: ratio {ratio}", r.step, r.dofs);
        }
    }
}

/// Parse the `eta_*` cell arrays back out of a VTK dump.
fn vtk_cell_arrays(text: &str) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut lines = text.lines().skip_while(|l| !l.starts_with("CELL_DATA"));
    let n: usize = lines.next().unwrap().split_whitespace().nth(1).unwrap().parse().unwrap();
    while let Some(l) = lines.next() {
        if l.starts_with("SCALARS") {
            lines.next();
            out.push(lines.by_ref().take(n).map(|v| v.parse().unwrap()).collect());
        }
    }
    out
}

#[test]
fn records_agree_with_dumped_indicators() {
    let problem = Problem::by_name("singular").unwrap();
    let cfg = LoopConfig {
        max_steps: 12,
        ..LoopConfig::default()
    };
    let mut checked = 0;
    let run = run_loop(&problem, &cfg, &SolverConfig::default(), |view| {
        let mut buf = Vec::new();
        write_vtk(view.mesh, view.state, Some(view.report), &[], &mut buf)?;
        let arrays = vtk_cell_arrays(&String::from_utf8(buf).unwrap());
        assert_eq!(arrays.len(), 3);
        for (k, values) in arrays.iter().enumerate() {
            let g = view.record.eta[k];
            assert!((rss(values) - g).abs() <= 1e-12 * g, "step {} family {k}", view.step);
        }
        checked += 1;
        Ok(())
    })
    .unwrap();
    assert_eq!(checked, run.records.len());
    for w in run.records.windows(2) {
        assert!(w[1].dofs > w[0].dofs);
    }
}

struct ShiftedSource(Sech2Coefficients);

impl Coefficients for ShiftedSource {
    fn n_species(&self) -> usize {
        2
    }
    fn charge(&self, i: usize) -> f64 {
        self.0.charge(i)
    }
    fn alpha(&self, i: usize, x: [f64; 2], y: f64) -> f64 {
        self.0.alpha(i, x, y)
    }
    fn alpha_y(&self, i: usize, x: [f64; 2], y: f64) -> f64 {
        self.0.alpha_y(i, x, y)
    }
    fn gamma(&self, i: usize, x: [f64; 2], y: f64) -> f64 {
        self.0.gamma(i, x, y)
    }
    fn gamma_y(&self, i: usize, x: [f64; 2], y: f64) -> f64 {
        self.0.gamma_y(i, x, y)
    }
    fn g(&self, i: usize, x: [f64; 2], y: f64) -> f64 {
        self.0.g(i, x, y)
    }
    fn g_y(&self, i: usize, x: [f64; 2], y: f64) -> f64 {
        self.0.g_y(i, x, y)
    }
    fn poisson_source(&self, x: [f64; 2]) -> f64 {
        self.0.poisson_source(x) + 1.0
    }
}

#[test]
fn strong_residual_sees_a_source_shift() {
    let base = make_sech2_case();
    let shifted = Problem::new(
        "shifted",
        Arc::new(ShiftedSource(Sech2Coefficients)),
        Some(Arc::new(SmoothSines) as Arc<dyn ExactSolution>),
        BoundaryData::Homogeneous,
        RuleOrder::Degree4,
    );
    for x in [[0.2, 0.7], [0.5, 0.5], [0.91, 0.13]] {
        let a = base.strong_residual(x).unwrap();
        let b = shifted.strong_residual(x).unwrap();
        assert!(a.iter().all(|r| r.abs() <= 1e-8));
        assert!(((b[2] - a[2]).abs() - 1.0).abs() <= 1e-12);
        assert_eq!(a[..2], b[..2]);
    }
}
