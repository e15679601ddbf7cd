use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("function lives on mesh {found}, expected mesh {expected}")]
    MeshMismatch { expected: u64, found: u64 },

    #[error("coefficient `{name}` is not finite at ({x:.6e}, {y:.6e}) on triangle {triangle}")]
    NonFiniteCoefficient {
        name: &'static str,
        triangle: usize,
        x: f64,
        y: f64,
    },

    #[error("coefficient `{name}` = {value:.6e} is not positive at ({x:.6e}, {y:.6e}) on triangle {triangle}")]
    NonPositiveCoefficient {
        name: &'static str,
        value: f64,
        triangle: usize,
        x: f64,
        y: f64,
    },

    #[error("state value {value:.6e} left the admissible range [{lo}, {hi}] at vertex {vertex}")]
    StateOutOfRange {
        value: f64,
        lo: f64,
        hi: f64,
        vertex: usize,
    },

    #[error("linear solver failed: {0}")]
    LinearSolver(String),

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("Newton for species {species} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NewtonDiverged {
        species: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("Gummel sweep {sweep}: {source}")]
    Gummel {
        sweep: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("point ({x}, {y}) lies inside the excluded ball around the singularity")]
    ExcludedPoint { x: f64, y: f64 },

    #[error("all indicators vanish; nothing to mark")]
    ZeroIndicators,

    #[error("true error is zero; effectivity undefined")]
    ZeroTrueError,

    #[error("rate fit needs at least 3 records, got {0}")]
    TooFewRecords(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("adaptive step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}
