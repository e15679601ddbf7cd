//! Coefficient models for the generic nonlinear PNP system
//!
//! ```text
//! -div(α(x,pⁱ)∇pⁱ + β(x,pⁱ) + γ(x,pⁱ)∇φ) + g(x,pⁱ) = 0,   i = 1..n
//! -div(ε(x)∇φ) - Σ qⁱ pⁱ = f
//! ```
//!
//! and the two manufactured test cases on the unit square. Coefficients take
//! the species index because α, γ and g depend on the charge and the
//! manufactured source of each species.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::quadrature::RuleOrder;
use crate::{Error, Result};

/// Coefficients of the generic PNP system. `y` is the concentration value.
pub trait Coefficients: Send + Sync {
    fn n_species(&self) -> usize;
    fn charge(&self, i: usize) -> f64;

    fn alpha(&self, i: usize, x: [f64; 2], y: f64) -> f64;
    fn alpha_y(&self, i: usize, x: [f64; 2], y: f64) -> f64;
    /// Explicit spatial gradient of α at fixed `y`.
    fn alpha_grad_x(&self, _i: usize, _x: [f64; 2], _y: f64) -> [f64; 2] {
        [0.0; 2]
    }

    fn beta(&self, _i: usize, _x: [f64; 2], _y: f64) -> [f64; 2] {
        [0.0; 2]
    }
    fn beta_y(&self, _i: usize, _x: [f64; 2], _y: f64) -> [f64; 2] {
        [0.0; 2]
    }
    /// `∂β₁/∂x₁ + ∂β₂/∂x₂` at fixed `y`.
    fn beta_div_x(&self, _i: usize, _x: [f64; 2], _y: f64) -> f64 {
        0.0
    }

    fn gamma(&self, i: usize, x: [f64; 2], y: f64) -> f64;
    fn gamma_y(&self, i: usize, x: [f64; 2], y: f64) -> f64;
    fn gamma_grad_x(&self, _i: usize, _x: [f64; 2], _y: f64) -> [f64; 2] {
        [0.0; 2]
    }

    fn g(&self, i: usize, x: [f64; 2], y: f64) -> f64;
    fn g_y(&self, i: usize, x: [f64; 2], y: f64) -> f64;

    fn epsilon(&self, _x: [f64; 2]) -> f64 {
        1.0
    }
    fn epsilon_grad(&self, _x: [f64; 2]) -> [f64; 2] {
        [0.0; 2]
    }
    /// Poisson source `f`.
    fn poisson_source(&self, x: [f64; 2]) -> f64;

    /// Concentration interval on which α is trusted to stay positive.
    fn state_range(&self) -> Option<(f64, f64)> {
        None
    }
}

/// Value, gradient and Laplacian of a scalar field at a point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldValue {
    pub value: f64,
    pub grad: [f64; 2],
    pub laplacian: f64,
}

pub trait ExactSolution: Send + Sync {
    fn phi(&self, x: [f64; 2]) -> FieldValue;
    fn p(&self, i: usize, x: [f64; 2]) -> FieldValue;
    /// Points where the exact fields are not classically defined.
    fn excluded(&self, _x: [f64; 2]) -> bool {
        false
    }
}

/// How Dirichlet data on ∂Ω is prescribed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryData {
    Homogeneous,
    /// Nodal values of the exact solution.
    ExactTrace,
}

/// A PNP problem: coefficients, optional exact solution, boundary data and
/// the quadrature used for error norms and estimator source terms.
#[derive(Clone)]
pub struct Problem {
    name: String,
    coefficients: Arc<dyn Coefficients>,
    exact: Option<Arc<dyn ExactSolution>>,
    boundary: BoundaryData,
    norm_rule: RuleOrder,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("n_species", &self.coefficients.n_species())
            .field("has_exact", &self.exact.is_some())
            .field("boundary", &self.boundary)
            .field("norm_rule", &self.norm_rule)
            .finish()
    }
}

impl Problem {
    pub fn new(
        name: impl Into<String>,
        coefficients: Arc<dyn Coefficients>,
        exact: Option<Arc<dyn ExactSolution>>,
        boundary: BoundaryData,
        norm_rule: RuleOrder,
    ) -> Self {
        Self {
            name: name.into(),
            coefficients,
            exact,
            boundary,
            norm_rule,
        }
    }

    /// Look up a built-in case: `"sech"` or `"singular"`.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "sech" => Ok(make_sech2_case()),
            "singular" => Ok(make_singular_case()),
            other => Err(Error::InvalidConfig(format!(
                "unknown example `{other}` (expected `sech` or `singular`)"
            ))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn coefficients(&self) -> &dyn Coefficients {
        self.coefficients.as_ref()
    }

    pub fn exact(&self) -> Option<&dyn ExactSolution> {
        self.exact.as_deref()
    }

    pub fn n_species(&self) -> usize {
        self.coefficients.n_species()
    }

    pub fn boundary(&self) -> BoundaryData {
        self.boundary
    }

    pub fn norm_rule(&self) -> RuleOrder {
        self.norm_rule
    }

    pub fn dirichlet_phi(&self, x: [f64; 2]) -> f64 {
        match (self.boundary, &self.exact) {
            (BoundaryData::ExactTrace, Some(e)) => e.phi(x).value,
            _ => 0.0,
        }
    }

    pub fn dirichlet_p(&self, i: usize, x: [f64; 2]) -> f64 {
        match (self.boundary, &self.exact) {
            (BoundaryData::ExactTrace, Some(e)) => e.p(i, x).value,
            _ => 0.0,
        }
    }

    /// Strong-form residuals `[NP_1, .., NP_n, Poisson]` of the exact fields,
    /// each written as `LHS - RHS` of the model equations.
    pub fn strong_residual(&self, x: [f64; 2]) -> Result<Vec<f64>> {
        let exact = self
            .exact
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("problem has no exact solution".into()))?;
        if exact.excluded(x) {
            return Err(Error::ExcludedPoint { x: x[0], y: x[1] });
        }
        let c = self.coefficients.as_ref();
        let phi = exact.phi(x);
        let mut out = Vec::with_capacity(c.n_species() + 1);
        let mut charge = 0.0;
        for i in 0..c.n_species() {
            let p = exact.p(i, x);
            let y = p.value;
            let gp = p.grad;
            let ax = c.alpha_grad_x(i, x, y);
            let div_alpha = dot(ax, gp) + c.alpha_y(i, x, y) * dot(gp, gp) + c.alpha(i, x, y) * p.laplacian;
            let div_beta = c.beta_div_x(i, x, y) + dot(c.beta_y(i, x, y), gp);
            let gx = c.gamma_grad_x(i, x, y);
            let grad_gamma = [gx[0] + c.gamma_y(i, x, y) * gp[0], gx[1] + c.gamma_y(i, x, y) * gp[1]];
            let div_drift = dot(grad_gamma, phi.grad) + c.gamma(i, x, y) * phi.laplacian;
            out.push(-(div_alpha + div_beta + div_drift) + c.g(i, x, y));
            charge += c.charge(i) * y;
        }
        let eps = c.epsilon(x);
        let poisson = -(eps * phi.laplacian + dot(c.epsilon_grad(x), phi.grad)) - charge - c.poisson_source(x);
        out.push(poisson);
        Ok(out)
    }
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `sin(kπx) sin(kπy)` with derivatives.
fn sine_mode(k: f64, x: [f64; 2]) -> FieldValue {
    let w = k * PI;
    let (sx, cx) = (w * x[0]).sin_cos();
    let (sy, cy) = (w * x[1]).sin_cos();
    FieldValue {
        value: sx * sy,
        grad: [w * cx * sy, w * sx * cy],
        laplacian: -2.0 * w * w * sx * sy,
    }
}

/// α(p) = 1 - 2p tanh(p) sech²(p), from p∇(sech² p) = -2p tanh p sech² p ∇p.
pub fn sech_alpha(p: f64) -> f64 {
    let s2 = 1.0 / p.cosh().powi(2);
    1.0 - 2.0 * p * p.tanh() * s2
}

pub fn sech_alpha_prime(p: f64) -> f64 {
    let t = p.tanh();
    let s2 = 1.0 / p.cosh().powi(2);
    -2.0 * s2 * (t + p * s2 - 2.0 * p * t * t)
}

const CHARGES: [f64; 2] = [1.0, -1.0];

/// Smooth manufactured solution on the unit square:
/// φ = sin(πx)sin(πy), p¹ = sin(2πx)sin(2πy), p² = sin(3πx)sin(3πy).
#[derive(Clone, Copy, Debug, Default)]
pub struct SmoothSines;

impl ExactSolution for SmoothSines {
    fn phi(&self, x: [f64; 2]) -> FieldValue {
        sine_mode(1.0, x)
    }

    fn p(&self, i: usize, x: [f64; 2]) -> FieldValue {
        sine_mode(2.0 + i as f64, x)
    }
}

/// Ion-channel type model with concentration-dependent diffusion
/// `α(x,p) = 1 - 2p tanh p sech² p`, drift `γ = qp`, and sources chosen so
/// that [`SmoothSines`] is the exact solution.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sech2Coefficients;

impl Sech2Coefficients {
    /// `f_i = -div(α(p)∇p + q p∇φ)` for the exact fields.
    pub fn species_source(&self, i: usize, x: [f64; 2]) -> f64 {
        let phi = SmoothSines.phi(x);
        let p = SmoothSines.p(i, x);
        let q = CHARGES[i];
        -(sech_alpha_prime(p.value) * dot(p.grad, p.grad)
            + sech_alpha(p.value) * p.laplacian
            + q * (dot(p.grad, phi.grad) + p.value * phi.laplacian))
    }
}

impl Coefficients for Sech2Coefficients {
    fn n_species(&self) -> usize {
        2
    }

    fn charge(&self, i: usize) -> f64 {
        CHARGES[i]
    }

    fn alpha(&self, _i: usize, _x: [f64; 2], y: f64) -> f64 {
        sech_alpha(y)
    }

    fn alpha_y(&self, _i: usize, _x: [f64; 2], y: f64) -> f64 {
        sech_alpha_prime(y)
    }

    fn gamma(&self, i: usize, _x: [f64; 2], y: f64) -> f64 {
        CHARGES[i] * y
    }

    fn gamma_y(&self, i: usize, _x: [f64; 2], _y: f64) -> f64 {
        CHARGES[i]
    }

    fn g(&self, i: usize, x: [f64; 2], _y: f64) -> f64 {
        -self.species_source(i, x)
    }

    fn g_y(&self, _i: usize, _x: [f64; 2], _y: f64) -> f64 {
        0.0
    }

    /// `f₃ = 2π² sin(πx)sin(πy) - sin(2πx)sin(2πy) + sin(3πx)sin(3πy)`.
    fn poisson_source(&self, x: [f64; 2]) -> f64 {
        let s = |k: f64| (k * PI * x[0]).sin() * (k * PI * x[1]).sin();
        2.0 * PI * PI * s(1.0) - s(2.0) + s(3.0)
    }

    fn state_range(&self) -> Option<(f64, f64)> {
        Some((-1.5, 1.5))
    }
}

pub fn make_sech2_case() -> Problem {
    Problem::new(
        "sech",
        Arc::new(Sech2Coefficients),
        Some(Arc::new(SmoothSines)),
        BoundaryData::Homogeneous,
        RuleOrder::Degree4,
    )
}

/// Radius of the ball around the origin where the singular fields are not evaluated.
pub const SINGULAR_EXCLUSION_RADIUS: f64 = 1e-6;

/// φ = (x²+y²)^0.1, pᵢ = sin(kπx)sin(kπy)/(2x²+2y²) with k = 2, 3.
/// At the origin the concentrations are assigned 0.
#[derive(Clone, Copy, Debug, Default)]
pub struct CornerSingularity;

impl ExactSolution for CornerSingularity {
    fn phi(&self, x: [f64; 2]) -> FieldValue {
        let r2 = x[0] * x[0] + x[1] * x[1];
        if r2 == 0.0 {
            return FieldValue::default();
        }
        // ∇r^a = a r^(a-2) x,  Δr^a = a² r^(a-2)
        let a = 0.2;
        let ra2 = r2.powf(0.5 * a - 1.0);
        FieldValue {
            value: r2.powf(0.5 * a),
            grad: [a * ra2 * x[0], a * ra2 * x[1]],
            laplacian: a * a * ra2,
        }
    }

    fn p(&self, i: usize, x: [f64; 2]) -> FieldValue {
        let r2 = x[0] * x[0] + x[1] * x[1];
        if r2 == 0.0 {
            return FieldValue::default();
        }
        let u = sine_mode(2.0 + i as f64, x);
        // w = 1/(2r²): ∇w = -x/r⁴, Δw = 2/r⁴
        let w = 0.5 / r2;
        let r4 = r2 * r2;
        let gw = [-x[0] / r4, -x[1] / r4];
        let lw = 2.0 / r4;
        FieldValue {
            value: u.value * w,
            grad: [
                w * u.grad[0] + u.value * gw[0],
                w * u.grad[1] + u.value * gw[1],
            ],
            laplacian: w * u.laplacian + 2.0 * dot(u.grad, gw) + u.value * lw,
        }
    }

    fn excluded(&self, x: [f64; 2]) -> bool {
        x[0].hypot(x[1]) < SINGULAR_EXCLUSION_RADIUS
    }
}

/// Linear diffusion with cubic reaction `g = p³ - f_i` and drift `γ = qp`,
/// sources chosen so that [`CornerSingularity`] is the exact solution.
#[derive(Clone, Copy, Debug, Default)]
pub struct SingularCoefficients;

impl SingularCoefficients {
    /// `f_i = -div(∇p + q p∇φ) + p³` for the exact fields.
    pub fn species_source(&self, i: usize, x: [f64; 2]) -> f64 {
        let r2 = x[0] * x[0] + x[1] * x[1];
        if r2 == 0.0 {
            return 0.0;
        }
        let phi = CornerSingularity.phi(x);
        let p = CornerSingularity.p(i, x);
        let q = CHARGES[i];
        -(p.laplacian + q * (dot(p.grad, phi.grad) + p.value * phi.laplacian)) + p.value.powi(3)
    }
}

impl Coefficients for SingularCoefficients {
    fn n_species(&self) -> usize {
        2
    }

    fn charge(&self, i: usize) -> f64 {
        CHARGES[i]
    }

    fn alpha(&self, _i: usize, _x: [f64; 2], _y: f64) -> f64 {
        1.0
    }

    fn alpha_y(&self, _i: usize, _x: [f64; 2], _y: f64) -> f64 {
        0.0
    }

    fn gamma(&self, i: usize, _x: [f64; 2], y: f64) -> f64 {
        CHARGES[i] * y
    }

    fn gamma_y(&self, i: usize, _x: [f64; 2], _y: f64) -> f64 {
        CHARGES[i]
    }

    fn g(&self, i: usize, x: [f64; 2], y: f64) -> f64 {
        y.powi(3) - self.species_source(i, x)
    }

    fn g_y(&self, _i: usize, _x: [f64; 2], y: f64) -> f64 {
        3.0 * y * y
    }

    /// `f₃ = -Δφ - (p₁ - p₂)`.
    fn poisson_source(&self, x: [f64; 2]) -> f64 {
        let phi = CornerSingularity.phi(x);
        let p1 = CornerSingularity.p(0, x).value;
        let p2 = CornerSingularity.p(1, x).value;
        -phi.laplacian - (p1 - p2)
    }
}

pub fn make_singular_case() -> Problem {
    Problem::new(
        "singular",
        Arc::new(SingularCoefficients),
        Some(Arc::new(CornerSingularity)),
        BoundaryData::ExactTrace,
        RuleOrder::Degree10,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sech_alpha_basics() {
        assert_eq!(sech_alpha(0.0), 1.0);
        // scan oracle over [-1, 1]
        let max_term = (0..=20_000)
            .map(|k| {
                let t = -1.0 + k as f64 * 1e-4;
                t * t.tanh() / t.cosh().powi(2)
            })
            .fold(f64::MIN, f64::max);
        assert!(max_term < 0.5);
        let floor = 1.0 - 2.0 * max_term;
        assert!(floor > 0.0);
        for k in 0..=200 {
            let p = -1.0 + k as f64 * 0.01;
            assert!(sech_alpha(p) >= floor - 1e-12);
        }
    }

    #[test]
    fn sech_poisson_source_closed_form() {
        // -Δφ - (p1 - p2) with the exact fields
        let c = Sech2Coefficients;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            let phi = SmoothSines.phi(x);
            let expect = -phi.laplacian - (SmoothSines.p(0, x).value - SmoothSines.p(1, x).value);
            assert!((c.poisson_source(x) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_values() {
        let e = CornerSingularity;
        assert!((e.phi([1.0, 0.0]).value - 1.0).abs() < 1e-15);
        for r in [1e-1, 1e-2, 1e-4] {
            let g = e.phi([r, 0.0]).grad;
            assert!((g[0].hypot(g[1]) - 0.2 * r.powf(-0.8)).abs() < 1e-9 * r.powf(-0.8));
        }
        assert_eq!(e.p(0, [0.0, 0.0]).value, 0.0);
        let p = make_singular_case();
        assert!(matches!(p.strong_residual([1e-7, 0.0]), Err(Error::ExcludedPoint { .. })));
    }

    #[test]
    fn zero_problem_has_zero_residual() {
        struct Zero;
        impl Coefficients for Zero {
            fn n_species(&self) -> usize { 1 }
            fn charge(&self, _: usize) -> f64 { 1.0 }
            fn alpha(&self, _: usize, _: [f64; 2], _: f64) -> f64 { 1.0 }
            fn alpha_y(&self, _: usize, _: [f64; 2], _: f64) -> f64 { 0.0 }
            fn gamma(&self, _: usize, _: [f64; 2], y: f64) -> f64 { y }
            fn gamma_y(&self, _: usize, _: [f64; 2], _: f64) -> f64 { 1.0 }
            fn g(&self, _: usize, _: [f64; 2], _: f64) -> f64 { 0.0 }
            fn g_y(&self, _: usize, _: [f64; 2], _: f64) -> f64 { 0.0 }
            fn poisson_source(&self, _: [f64; 2]) -> f64 { 0.0 }
        }
        struct ZeroField;
        impl ExactSolution for ZeroField {
            fn phi(&self, _: [f64; 2]) -> FieldValue { FieldValue::default() }
            fn p(&self, _: usize, _: [f64; 2]) -> FieldValue { FieldValue::default() }
        }
        let p = Problem::new("zero", Arc::new(Zero), Some(Arc::new(ZeroField)), BoundaryData::Homogeneous, RuleOrder::Degree4);
        assert_eq!(p.strong_residual([0.3, 0.4]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn by_name() {
        assert_eq!(Problem::by_name("sech").unwrap().name(), "sech");
        assert_eq!(Problem::by_name("singular").unwrap().boundary(), BoundaryData::ExactTrace);
        assert!(Problem::by_name("other").is_err());
    }
}
