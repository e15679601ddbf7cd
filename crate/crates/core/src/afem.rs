//! Solve, estimate, mark, refine.
//!
//! Both drivers start from the 8×8 unit-square mesh (81 vertices). The
//! adaptive driver refines the elements selected by maximum marking over the
//! potential and all species indicators; the uniform driver refines every
//! element red. Each solve is warm-started from the nodal transfer of the
//! previous discrete state.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::estimator::{estimate, true_errors, EstimatorReport};
use crate::fem::FeSpace;
use crate::mesh::{make_uniform_unit_square, MarkSet, Mesh};
use crate::problem::Problem;
use crate::recovery::WeightScheme;
use crate::solver::{solve_coupled_in, CoupledState, SolverConfig};
use crate::{Error, Result};

/// Resolution of the initial mesh.
pub const INITIAL_GRID: usize = 8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RefinementMode {
    Uniform,
    #[default]
    Adaptive,
}

impl fmt::Display for RefinementMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RefinementMode::Uniform => "uniform",
            RefinementMode::Adaptive => "adaptive",
        })
    }
}

impl FromStr for RefinementMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(RefinementMode::Uniform),
            "adaptive" => Ok(RefinementMode::Adaptive),
            other => Err(Error::InvalidConfig(format!(
                "unknown mode `{other}` (expected `uniform` or `adaptive`)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoopConfig {
    /// Stop once every global indicator is at most `tol`.
    pub tol: f64,
    /// Maximum-marking fraction in (0, 1).
    pub theta: f64,
    /// No mesh with more vertices than this is solved on.
    pub max_dofs: usize,
    pub max_steps: usize,
    pub mode: RefinementMode,
    pub weights: WeightScheme,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            tol: 1e-2,
            theta: 0.5,
            max_dofs: 100_000,
            max_steps: 60,
            mode: RefinementMode::Adaptive,
            weights: WeightScheme::Area,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidConfig("theta must lie in (0, 1)".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// One row of a convergence study.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub step: usize,
    pub dofs: usize,
    pub h_max: f64,
    /// Full `H¹` errors `[e_φ, e_p1, ..]` when an exact solution is known.
    pub errors: Option<Vec<f64>>,
    /// Global indicators `[η_φ, η_p1, ..]`.
    pub eta: Vec<f64>,
    pub effectivity: Option<Vec<f64>>,
    /// Seconds spent on solve and estimate.
    pub wall_time: f64,
    pub gummel_sweeps: usize,
    pub converged: bool,
    /// Elements marked for the next step (adaptive mode only).
    pub marked: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Tolerance,
    MaxDofs,
    MaxSteps,
    ZeroIndicators,
}

#[derive(Clone, Debug)]
pub struct Run {
    pub records: Vec<RunRecord>,
    pub stop: StopReason,
}

/// A failed run: the records completed before the failing step and the cause.
#[derive(Debug)]
pub struct RunFailure {
    pub records: Vec<RunRecord>,
    pub error: Error,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} completed steps)", self.error, self.records.len())
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<Error> for RunFailure {
    fn from(error: Error) -> Self {
        Self {
            records: Vec::new(),
            error,
        }
    }
}

/// Everything known at the end of one step, handed to observers.
pub struct StepView<'a> {
    pub step: usize,
    pub mesh: &'a Mesh,
    pub state: &'a CoupledState,
    pub report: &'a EstimatorReport,
    pub record: &'a RunRecord,
    /// Elements marked for refinement, if the loop continues adaptively.
    pub marks: Option<&'a MarkSet>,
}

/// Mark τ when `η_{τ,φ} ≥ θ max η_φ` or `η_{τ,pⁱ} ≥ θ max η_{pⁱ}` for some i.
/// Families whose indicators are all zero mark nothing.
pub fn mark_maximum(eta_phi: &[f64], eta_p: &[Vec<f64>], theta: f64) -> Result<MarkSet> {
    if eta_phi.is_empty() {
        return Err(Error::InvalidConfig("no indicators to mark".into()));
    }
    if eta_p.iter().any(|e| e.len() != eta_phi.len()) {
        return Err(Error::InvalidConfig("indicator families differ in length".into()));
    }
    let mut marks = MarkSet::new();
    for family in std::iter::once(eta_phi).chain(eta_p.iter().map(Vec::as_slice)) {
        let max = family.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            let threshold = theta * max;
            for (t, &v) in family.iter().enumerate() {
                if v >= threshold {
                    marks.insert(t);
                }
            }
        }
    }
    if marks.is_empty() {
        Err(Error::ZeroIndicators)
    } else {
        Ok(marks)
    }
}

/// Adaptive study (Algorithm: solve, estimate, stop check, mark, refine).
pub fn adaptive_loop(problem: &Problem, cfg: &LoopConfig, solver: &SolverConfig) -> std::result::Result<Run, RunFailure> {
    let cfg = LoopConfig {
        mode: RefinementMode::Adaptive,
        ..cfg.clone()
    };
    run_loop(problem, &cfg, solver, |_| Ok(()))
}

/// Uniform refinement study.
pub fn uniform_loop(problem: &Problem, cfg: &LoopConfig, solver: &SolverConfig) -> std::result::Result<Run, RunFailure> {
    let cfg = LoopConfig {
        mode: RefinementMode::Uniform,
        ..cfg.clone()
    };
    run_loop(problem, &cfg, solver, |_| Ok(()))
}

/// Run the study selected by `cfg.mode`, calling `observer` after every step.
pub fn run_loop<O>(problem: &Problem, cfg: &LoopConfig, solver: &SolverConfig, observer: O) -> std::result::Result<Run, RunFailure>
where
    O: FnMut(&StepView) -> Result<()>,
{
    run_loop_from(make_uniform_unit_square(INITIAL_GRID), problem, cfg, solver, observer)
}

/// [`run_loop`] from a given initial mesh.
pub fn run_loop_from<O>(
    initial: Mesh,
    problem: &Problem,
    cfg: &LoopConfig,
    solver: &SolverConfig,
    mut observer: O,
) -> std::result::Result<Run, RunFailure>
where
    O: FnMut(&StepView) -> Result<()>,
{
    cfg.validate()?;
    solver.validate()?;
    let mut records: Vec<RunRecord> = Vec::new();
    let mut mesh = initial;
    let mut warm: Option<CoupledState> = None;
    for step in 0.. {
        let started = Instant::now();
        let outcome = (|| -> Result<_> {
            let space = FeSpace::new(&mesh, solver.rule.rule());
            let state = solve_coupled_in(&space, problem, solver, warm.as_ref())?;
            if !state.converged {
                log::warn!("step {step}: Gummel iteration did not reach its tolerance");
            }
            let report = estimate(&mesh, problem, &state, cfg.weights)?;
            let errors = true_errors(&mesh, problem, &state)?;
            Ok((state, report, errors))
        })();
        let (state, report, errors) = match outcome {
            Ok(v) => v,
            Err(e) => {
                return Err(RunFailure {
                    records,
                    error: Error::Step {
                        step,
                        source: Box::new(e),
                    },
                })
            }
        };
        let wall_time = started.elapsed().as_secs_f64();
        let eta: Vec<f64> = std::iter::once(report.global_eta_phi)
            .chain(report.global_eta_p.iter().copied())
            .collect();
        let effectivity = errors
            .as_ref()
            .and_then(|e| report.effectivity(e).ok());
        let mut record = RunRecord {
            step,
            dofs: mesh.n_dofs(),
            h_max: mesh.mesh_size().0,
            errors: errors.map(|e| e.h1()),
            eta,
            effectivity,
            wall_time,
            gummel_sweeps: state.log.sweeps(),
            converged: state.converged,
            marked: None,
        };
        log::info!(
            "step {step}: {} dofs, eta = {:?}, errors = {:?}",
            record.dofs,
            record.eta,
            record.errors
        );

        let mut stop = None;
        if record.eta.iter().all(|&e| e <= cfg.tol) {
            stop = Some(StopReason::Tolerance);
        } else if step + 1 >= cfg.max_steps {
            stop = Some(StopReason::MaxSteps);
        }
        let mut marks = None;
        let mut next = None;
        if stop.is_none() {
            match cfg.mode {
                RefinementMode::Uniform => next = Some(mesh.refine_uniform()),
                RefinementMode::Adaptive => match mark_maximum(&report.eta_phi, &report.eta_p, cfg.theta) {
                    Ok(m) => {
                        record.marked = Some(m.len());
                        next = Some(mesh.refine_marked(&m));
                        marks = Some(m);
                    }
                    Err(Error::ZeroIndicators) => stop = Some(StopReason::ZeroIndicators),
                    Err(e) => return Err(RunFailure { records, error: e }),
                },
            }
        }
        if let Some(n) = &next {
            if n.n_dofs() > cfg.max_dofs {
                stop = Some(StopReason::MaxDofs);
                next = None;
            }
        }
        let view = StepView {
            step,
            mesh: &mesh,
            state: &state,
            report: &report,
            record: &record,
            marks: if stop.is_none() { marks.as_ref() } else { None },
        };
        if let Err(e) = observer(&view) {
            records.push(record);
            return Err(RunFailure { records, error: e });
        }
        records.push(record);
        match (stop, next) {
            (Some(reason), _) => return Ok(Run { records, stop: reason }),
            (None, Some(n)) => {
                mesh = n;
                warm = Some(state);
            }
            (None, None) => unreachable!("a continuing loop always has a next mesh"),
        }
    }
    unreachable!()
}

/// Least-squares slopes of `log(quantity)` against `log(dofs)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Rates {
    pub entries: Vec<(String, f64)>,
}

impl Rates {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

/// Slope of the least-squares line through `(log x, log y)`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Quantity names in record order: errors first when present, then indicators.
pub fn quantity_names(n_species: usize, with_errors: bool) -> Vec<String> {
    let unknowns: Vec<String> = std::iter::once("phi".to_string())
        .chain((1..=n_species).map(|i| format!("p{i}")))
        .collect();
    let mut names = Vec::new();
    if with_errors {
        names.extend(unknowns.iter().map(|u| format!("e_{u}")));
    }
    names.extend(unknowns.iter().map(|u| format!("eta_{u}")));
    names
}

/// Slopes over the last `min(4, len)` records.
pub fn fit_rate(records: &[RunRecord]) -> Result<Rates> {
    if records.len() < 3 {
        return Err(Error::TooFewRecords(records.len()));
    }
    let tail = &records[records.len() - records.len().min(4)..];
    let dofs: Vec<f64> = tail.iter().map(|r| r.dofs as f64).collect();
    let n_species = tail[0].eta.len() - 1;
    let with_errors = tail.iter().all(|r| r.errors.is_some());
    let mut columns: Vec<Vec<f64>> = Vec::new();
    if with_errors {
        for k in 0..=n_species {
            columns.push(tail.iter().map(|r| r.errors.as_ref().expect("checked")[k]).collect());
        }
    }
    for k in 0..=n_species {
        columns.push(tail.iter().map(|r| r.eta[k]).collect());
    }
    let entries = quantity_names(n_species, with_errors)
        .into_iter()
        .zip(columns)
        .map(|(name, y)| (name, loglog_slope(&dofs, &y)))
        .collect();
    Ok(Rates { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::make_sech2_case;

    fn record(dofs: usize, e: f64) -> RunRecord {
        RunRecord {
            step: 0,
            dofs,
            h_max: 0.1,
            errors: Some(vec![e; 3]),
            eta: vec![2.0 * e; 3],
            effectivity: None,
            wall_time: 0.0,
            gummel_sweeps: 1,
            converged: true,
            marked: None,
        }
    }

    #[test]
    fn marking_examples() {
        assert_eq!(mark_maximum(&[0.3], &[], 0.5).unwrap().iter().collect::<Vec<_>>(), vec![0]);
        let m = mark_maximum(&[4.0, 2.0, 1.0], &[], 0.5).unwrap();
        assert_eq!(m.iter().collect::<Vec<_>>(), vec![0, 1]);
        let m = mark_maximum(&[5.0, 0.0, 0.1], &[vec![0.0, 0.0, 3.0]], 0.5).unwrap();
        assert_eq!(m.iter().collect::<Vec<_>>(), vec![0, 2]);
        // a zero family marks nothing
        let m = mark_maximum(&[0.0, 0.0], &[vec![1.0, 0.2]], 0.5).unwrap();
        assert_eq!(m.iter().collect::<Vec<_>>(), vec![0]);
        assert!(matches!(mark_maximum(&[0.0, 0.0], &[vec![0.0, 0.0]], 0.5), Err(Error::ZeroIndicators)));
        assert!(mark_maximum(&[], &[], 0.5).is_err());
    }

    #[test]
    fn config_checks() {
        assert!(LoopConfig::default().validate().is_ok());
        for theta in [0.0, 1.0, -0.1, f64::NAN] {
            let c = LoopConfig {
                theta,
                ..Default::default()
            };
            assert!(c.validate().is_err());
        }
        let c = LoopConfig {
            tol: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        assert_eq!("uniform".parse::<RefinementMode>().unwrap(), RefinementMode::Uniform);
        assert!("bisect".parse::<RefinementMode>().is_err());
    }

    #[test]
    fn rate_fits() {
        let recs: Vec<RunRecord> = [81usize, 289, 1089, 4225]
            .iter()
            .map(|&n| record(n, (n as f64).powf(-0.5)))
            .collect();
        let r = fit_rate(&recs).unwrap();
        for (_, s) in &r.entries {
            assert!((s + 0.5).abs() < 1e-12);
        }
        assert_eq!(r.entries.len(), 6);
        assert_eq!(r.entries[0].0, "e_phi");
        assert_eq!(r.entries[5].0, "eta_p2");
        let flat: Vec<RunRecord> = [10usize, 20, 40].iter().map(|&n| record(n, 0.7)).collect();
        assert!(fit_rate(&flat).unwrap().get("e_p1").unwrap().abs() < 1e-12);
        assert!(matches!(fit_rate(&flat[..2]), Err(Error::TooFewRecords(2))));
    }

    #[test]
    fn infinite_tolerance_stops_immediately() {
        let cfg = LoopConfig {
            tol: f64::INFINITY,
            ..Default::default()
        };
        let run = adaptive_loop(&make_sech2_case(), &cfg, &SolverConfig::default()).unwrap();
        assert_eq!(run.records.len(), 1);
        assert_eq!(run.stop, StopReason::Tolerance);
        assert_eq!(run.records[0].dofs, 81);
    }

    #[test]
    fn uniform_dof_sequence_and_progress() {
        let cfg = LoopConfig {
            tol: 1e-12,
            max_dofs: 1100,
            ..Default::default()
        };
        let run = uniform_loop(&make_sech2_case(), &cfg, &SolverConfig::default()).unwrap();
        let dofs: Vec<usize> = run.records.iter().map(|r| r.dofs).collect();
        assert_eq!(dofs, vec![81, 289, 1089]);
        assert_eq!(run.stop, StopReason::MaxDofs);

        let cfg = LoopConfig {
            tol: 1e-12,
            max_steps: 4,
            ..Default::default()
        };
        let mut seen = Vec::new();
        let run = run_loop(&make_sech2_case(), &cfg, &SolverConfig::default(), |v| {
            seen.push((v.mesh.n_dofs(), v.marks.map(|m| m.len())));
            Ok(())
        })
        .unwrap();
        assert_eq!(run.stop, StopReason::MaxSteps);
        assert_eq!(run.records.len(), 4);
        assert!(run.records.windows(2).all(|w| w[1].dofs > w[0].dofs));
        assert!(seen[..3].iter().all(|s| s.1.is_some()));
        assert_eq!(seen[3].1, None);
    }

    #[test]
    fn observer_errors_abort_with_records() {
        let cfg = LoopConfig {
            tol: 1e-12,
            max_steps: 3,
            ..Default::default()
        };
        let fail = run_loop(&make_sech2_case(), &cfg, &SolverConfig::default(), |v| {
            if v.step == 1 {
                Err(Error::Parse("stop".into()))
            } else {
                Ok(())
            }
        })
        .unwrap_err();
        assert_eq!(fail.records.len(), 2);
    }
}
