//! Quadrature on triangles and edges.
//!
//! Points are barycentric coordinates; weights are normalized so they sum to
//! one, i.e. `∫_τ f ≈ |τ| Σ w_q f(x_q)`.

use std::fmt;

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    degree: usize,
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

/// Named rules selectable from configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum RuleOrder {
    Degree2,
    #[default]
    Degree4,
    Degree10,
}

impl RuleOrder {
    pub fn from_degree(degree: usize) -> Option<Self> {
        match degree {
            2 => Some(Self::Degree2),
            4 => Some(Self::Degree4),
            10 => Some(Self::Degree10),
            _ => None,
        }
    }

    pub fn degree(self) -> usize {
        match self {
            Self::Degree2 => 2,
            Self::Degree4 => 4,
            Self::Degree10 => 10,
        }
    }

    pub fn rule(self) -> QuadratureRule {
        match self {
            Self::Degree2 => QuadratureRule::degree2(),
            Self::Degree4 => QuadratureRule::degree4(),
            Self::Degree10 => QuadratureRule::degree10(),
        }
    }
}

impl fmt::Display for RuleOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.degree())
    }
}

impl QuadratureRule {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64; 3], f64)> + '_ {
        self.points.iter().zip(self.weights.iter().copied())
    }

    /// Centroid rule, exact for linears.
    pub fn degree1() -> Self {
        Self {
            degree: 1,
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![1.0],
        }
    }

    /// Three interior points, exact for quadratics.
    pub fn degree2() -> Self {
        let a = 2.0 / 3.0;
        let b = 1.0 / 6.0;
        Self {
            degree: 2,
            points: vec![[a, b, b], [b, a, b], [b, b, a]],
            weights: vec![1.0 / 3.0; 3],
        }
    }

    /// Six-point symmetric rule, exact for quartics.
    pub fn degree4() -> Self {
        const A1: f64 = 0.445_948_490_915_965;
        const W1: f64 = 0.223_381_589_678_011_5;
        const A2: f64 = 0.091_576_213_509_770_74;
        const W2: f64 = 0.109_951_743_655_321_87;
        let mut points = Vec::with_capacity(6);
        let mut weights = Vec::with_capacity(6);
        for (a, w) in [(A1, W1), (A2, W2)] {
            let b = 1.0 - 2.0 * a;
            points.extend_from_slice(&[[b, a, a], [a, b, a], [a, a, b]]);
            weights.extend_from_slice(&[w, w, w]);
        }
        Self {
            degree: 4,
            points,
            weights,
        }
    }

    /// Collapsed 6×6 Gauss–Legendre product rule, exact for degree ≤ 10.
    /// All nodes are strictly interior.
    pub fn degree10() -> Self {
        Self::collapsed_gauss(6)
    }

    /// Collapsed (Duffy) tensor rule with `n` Gauss points per direction,
    /// exact for total degree `2n - 2`.
    pub fn collapsed_gauss(n: usize) -> Self {
        let (nodes, wts) = gauss_legendre_unit(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (&u, &wu) in nodes.iter().zip(&wts) {
            for (&v, &wv) in nodes.iter().zip(&wts) {
                let x = u;
                let y = v * (1.0 - u);
                points.push([1.0 - x - y, x, y]);
                // reference area is 1/2
                weights.push(2.0 * wu * wv * (1.0 - u));
            }
        }
        Self {
            degree: 2 * n - 2,
            points,
            weights,
        }
    }
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n {
        // Chebyshev-like initial guess, then Newton on P_n
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d.is_finite() {
            dp = d;
        }
        nodes[k] = 0.5 * (1.0 - x);
        weights[k] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Two-point Gauss rule on an edge parameterized by `t ∈ [0, 1]`.
pub fn edge_gauss2() -> [(f64, f64); 2] {
    let d = 0.5 / 3f64.sqrt();
    [(0.5 - d, 0.5), (0.5 + d, 0.5)]
}
