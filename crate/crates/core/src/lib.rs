//! Adaptive P1 finite elements for the nonlinear steady-state
//! Poisson–Nernst–Planck (PNP) system on 2D polygonal domains, with
//! local-averaging (flux/gradient recovery) a posteriori error indicators.
//!
//! The crate is organized bottom-up:
//!
//! * [`mesh`] — conforming triangulations, patches, red and newest-vertex refinement.
//! * [`quadrature`], [`sparse`], [`linalg`], [`fem`] — P1 machinery and linear solves.
//! * [`problem`] — coefficient models and the two manufactured test cases.
//! * [`solver`] — Gummel decoupling with damped Newton for the Nernst–Planck equations.
//! * [`recovery`] — Clément interpolants and the flux/gradient recovery operators.
//! * [`estimator`] — element indicators, aggregates, jump diagnostics, effectivity.
//! * [`afem`] — solve–estimate–mark–refine loop, uniform studies and rate fits.
//! * [`io`] — convergence CSV, legacy VTK and rate files.
//!
//! Element loops run on rayon when the `parallel` feature is enabled (the
//! default); [`par`] holds the switch and the sequential fallback.

pub mod afem;
pub mod error;
pub mod estimator;
pub mod fem;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod par;
pub mod problem;
pub mod quadrature;
pub mod recovery;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
