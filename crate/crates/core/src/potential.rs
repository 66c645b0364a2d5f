//! Closed-form convex potentials with exact derivatives.

use nalgebra::{DMatrix, DVector};

use crate::grid::{DomainTag, GridError, GridFunction};
use crate::legendre::{guillemin_gradient, guillemin_hessian, guillemin_potential};
use crate::lattice::Polyhedron;

pub trait SmoothPotential: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, p: &[f64]) -> f64;
    fn gradient(&self, p: &[f64]) -> Vec<f64>;
    fn hessian(&self, p: &[f64]) -> Vec<Vec<f64>>;

    fn sample_1d(&self, lo: f64, h: f64, count: usize, tag: DomainTag) -> Result<GridFunction, GridError> {
        GridFunction::sample_1d(lo, h, count, tag, |x| self.value(&[x]))
    }

    fn sample_2d(
        &self,
        origin: [f64; 2],
        spacing: [f64; 2],
        shape: [usize; 2],
        tag: DomainTag,
    ) -> Result<GridFunction, GridError> {
        GridFunction::sample_2d(origin, spacing, shape, tag, |a, b| self.value(&[a, b]))
    }
}

/// `e^{2ξ}/4 - ξ - 1/2`, the one-dimensional shrinking soliton with `b = 1`.
#[derive(Clone, Copy, Debug, Default)]
pub struct GaussianModel;

impl SmoothPotential for GaussianModel {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, p: &[f64]) -> f64 {
        (2.0 * p[0]).exp() / 4.0 - p[0] - 0.5
    }
    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        vec![(2.0 * p[0]).exp() / 2.0 - 1.0]
    }
    fn hessian(&self, p: &[f64]) -> Vec<Vec<f64>> {
        vec![vec![(2.0 * p[0]).exp()]]
    }
}

/// `½(x+1) log(2(x+1)) - x/2`, the Legendre dual of [`GaussianModel`] on `(-1, ∞)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct GaussianSymplectic;

impl SmoothPotential for GaussianSymplectic {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, p: &[f64]) -> f64 {
        let t = p[0] + 1.0;
        0.5 * t * (2.0 * t).ln() - 0.5 * p[0]
    }
    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        vec![0.5 * (2.0 * (p[0] + 1.0)).ln()]
    }
    fn hessian(&self, p: &[f64]) -> Vec<Vec<f64>> {
        vec![vec![0.5 / (p[0] + 1.0)]]
    }
}

/// `|ξ|² / 2`.
#[derive(Clone, Copy, Debug)]
pub struct Quadratic {
    pub dim: usize,
}

impl SmoothPotential for Quadratic {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().map(|v| v * v).sum::<f64>()
    }
    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        p.to_vec()
    }
    fn hessian(&self, p: &[f64]) -> Vec<Vec<f64>> {
        (0..p.len()).map(|i| (0..p.len()).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
    }
}

/// `log cosh ξ`, the Kähler–Einstein potential of the projective line (`b = 0`).
#[derive(Clone, Copy, Debug, Default)]
pub struct LogCosh;

impl SmoothPotential for LogCosh {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, p: &[f64]) -> f64 {
        let a = p[0].abs();
        a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
    }
    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        vec![p[0].tanh()]
    }
    fn hessian(&self, p: &[f64]) -> Vec<Vec<f64>> {
        let c = p[0].cosh();
        vec![vec![1.0 / (c * c)]]
    }
}

/// Sum of one-dimensional potentials, one per coordinate.
pub struct ProductPotential {
    factors: Vec<Box<dyn SmoothPotential>>,
}

impl ProductPotential {
    pub fn new(factors: Vec<Box<dyn SmoothPotential>>) -> Self {
        assert!(factors.iter().all(|f| f.dim() == 1), "product factors must be one-dimensional");
        Self { factors }
    }

    /// Gaussian soliton times the projective line, solving the soliton equation with `b = (1, 0)`.
    pub fn product_soliton() -> Self {
        Self::new(vec![Box::new(GaussianModel), Box::new(LogCosh)])
    }
}

impl SmoothPotential for ProductPotential {
    fn dim(&self) -> usize {
        self.factors.len()
    }
    fn value(&self, p: &[f64]) -> f64 {
        self.factors.iter().zip(p).map(|(f, &x)| f.value(&[x])).sum()
    }
    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        self.factors.iter().zip(p).map(|(f, &x)| f.gradient(&[x])[0]).collect()
    }
    fn hessian(&self, p: &[f64]) -> Vec<Vec<f64>> {
        let n = self.factors.len();
        let mut m = vec![vec![0.0; n]; n];
        for (i, (f, &x)) in self.factors.iter().zip(p).enumerate() {
            m[i][i] = f.hessian(&[x])[0][0];
        }
        m
    }
}

/// `base + amplitude · exp(-|ξ - center|² / width²)`.
pub struct Bumped<P: SmoothPotential> {
    pub base: P,
    pub amplitude: f64,
    pub center: Vec<f64>,
    pub width: f64,
}

impl<P: SmoothPotential> Bumped<P> {
    fn bump(&self, p: &[f64]) -> f64 {
        let r2: f64 = p.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
        self.amplitude * (-r2 / (self.width * self.width)).exp()
    }
}

impl<P: SmoothPotential> SmoothPotential for Bumped<P> {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn value(&self, p: &[f64]) -> f64 {
        self.base.value(p) + self.bump(p)
    }
    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let g = self.bump(p);
        let w2 = self.width * self.width;
        self.base.gradient(p).iter().enumerate().map(|(i, v)| v - 2.0 * (p[i] - self.center[i]) / w2 * g).collect()
    }
    fn hessian(&self, p: &[f64]) -> Vec<Vec<f64>> {
        let g = self.bump(p);
        let w2 = self.width * self.width;
        let d: Vec<f64> = p.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        let mut m = self.base.hessian(p);
        for i in 0..d.len() {
            for j in 0..d.len() {
                let delta = if i == j { 1.0 } else { 0.0 };
                m[i][j] += g * (4.0 * d[i] * d[j] / (w2 * w2) - 2.0 * delta / w2);
            }
        }
        m
    }
}

/// Legendre dual of the Guillemin potential: `φ(ξ) = <x, ξ> - u_P(x)` with `∇u_P(x) = ξ`.
#[derive(Clone, Debug)]
pub struct GuilleminDual {
    polytope: Polyhedron,
    start: Vec<f64>,
}

impl GuilleminDual {
    /// `start` must be interior to the polytope; the origin works for anticanonical polytopes.
    pub fn new(polytope: Polyhedron, start: Vec<f64>) -> Self {
        assert!(guillemin_potential(&polytope, &start).is_ok(), "start point must be interior");
        Self { polytope, start }
    }

    pub fn polytope(&self) -> &Polyhedron {
        &self.polytope
    }

    /// Moment point `x = ∇φ(ξ)`, by damped Newton on the strictly convex `u_P(x) - <x, ξ>`.
    pub fn moment_point(&self, xi: &[f64]) -> Vec<f64> {
        let n = xi.len();
        let obj = |x: &[f64]| guillemin_potential(&self.polytope, x).map(|u| u - x.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>());
        let mut x = DVector::from_column_slice(&self.start);
        let mut fx = obj(x.as_slice()).expect("interior start");
        for _ in 0..200 {
            let g = DVector::from_vec(guillemin_gradient(&self.polytope, x.as_slice()).expect("interior")) - DVector::from_column_slice(xi);
            if g.norm() < 1e-14 * (1.0 + DVector::from_column_slice(xi).norm()) {
                break;
            }
            let hrows = guillemin_hessian(&self.polytope, x.as_slice()).expect("interior");
            let h = DMatrix::from_fn(n, n, |i, j| hrows[i][j]);
            let step = h.cholesky().expect("Guillemin hessian is positive definite").solve(&(-&g));
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-16 {
                let cand = &x + &step * t;
                if let Ok(fc) = obj(cand.as_slice()) {
                    if fc <= fx + 1e-4 * t * g.dot(&step) || (g.dot(&step)).abs() < 1e-300 {
                        x = cand;
                        fx = fc;
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        x.iter().copied().collect()
    }
}

impl SmoothPotential for GuilleminDual {
    fn dim(&self) -> usize {
        self.polytope.dim()
    }
    fn value(&self, xi: &[f64]) -> f64 {
        let x = self.moment_point(xi);
        x.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>() - guillemin_potential(&self.polytope, &x).expect("interior")
    }
    fn gradient(&self, xi: &[f64]) -> Vec<f64> {
        self.moment_point(xi)
    }
    fn hessian(&self, xi: &[f64]) -> Vec<Vec<f64>> {
        let x = self.moment_point(xi);
        let n = x.len();
        let hrows = guillemin_hessian(&self.polytope, &x).expect("interior");
        let inv = DMatrix::from_fn(n, n, |i, j| hrows[i][j]).try_inverse().expect("invertible");
        (0..n).map(|i| (0..n).map(|j| inv[(i, j)]).collect()).collect()
    }
}
