//! The weighted volume functional and its minimizer, the soliton vector field.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::integrals::{exp_integral, ExpIntegralResult, IntegralError, VectorFieldParam};
use crate::lattice::{rational::rat, Polyhedron};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VolumeError {
    #[error("origin is not an interior point of the polyhedron")]
    OriginNotInterior,
    #[error("{v:?} lies outside the cone where the weighted volume is finite")]
    OutsideLambda { v: Vec<f64> },
    #[error("hessian not positive definite at iteration {iteration}, v = {v:?}")]
    HessianNotPD { iteration: usize, v: Vec<f64> },
    #[error("no convergence after {iterations} iterations (relative gradient {grad_norm:e})")]
    MaxIterations { iterations: usize, grad_norm: f64 },
    #[error("line search failed at iteration {iteration}, v = {v:?}")]
    LineSearchFailed { iteration: usize, v: Vec<f64> },
    #[error(transparent)]
    Integral(#[from] IntegralError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Prefactor {
    One,
    TwoPi,
}

impl Prefactor {
    pub fn value(self, n: usize) -> f64 {
        match self {
            Prefactor::One => 1.0,
            Prefactor::TwoPi => (2.0 * std::f64::consts::PI).powi(n as i32),
        }
    }
}

#[derive(Clone, Debug)]
pub struct WeightedVolumeProblem {
    polyhedron: Polyhedron,
    prefactor: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    /// Stop once `|grad F| / F` falls below this.
    pub tol: f64,
    pub max_iterations: usize,
    pub armijo: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iterations: 100, armijo: 1e-4 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub b: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub struct SolitonVectorResult {
    pub b_x: VectorFieldParam,
    /// Relative gradient norm `|grad F| / F` at `b_x`.
    pub grad_norm: f64,
    /// Ratio of extreme hessian eigenvalues at `b_x`.
    pub hessian_cond: f64,
    pub iterations: usize,
    pub path: Vec<Vec<f64>>,
    pub trace: Vec<TraceRow>,
    pub value: f64,
}

impl SolitonVectorResult {
    /// CSV with columns `iteration, b_1..b_n, F, grad_norm`.
    pub fn trace_csv(&self) -> String {
        let n = self.b_x.b.len();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["iteration".to_string()];
        header.extend((1..=n).map(|i| format!("b{i}")));
        header.extend(["F".to_string(), "grad_norm".to_string()]);
        w.write_record(&header).expect("in-memory write");
        for row in &self.trace {
            let mut rec = vec![row.iteration.to_string()];
            rec.extend(row.b.iter().map(|v| format!("{v:.16e}")));
            rec.push(format!("{:.16e}", row.value));
            rec.push(format!("{:.16e}", row.grad_norm));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

impl WeightedVolumeProblem {
    pub fn new(polyhedron: Polyhedron, prefactor: Prefactor) -> Result<Self, VolumeError> {
        let origin = vec![rat(0); polyhedron.dim()];
        if !polyhedron.contains_strictly(&origin) {
            return Err(VolumeError::OriginNotInterior);
        }
        let prefactor = prefactor.value(polyhedron.dim());
        Ok(Self { polyhedron, prefactor })
    }

    pub fn polyhedron(&self) -> &Polyhedron {
        &self.polyhedron
    }

    pub fn prefactor(&self) -> f64 {
        self.prefactor
    }

    pub fn lambda_contains(&self, v: &[f64]) -> bool {
        v.len() == self.polyhedron.dim() && self.polyhedron.recession_rays().iter().all(|w| w.dot_f64(v) > 0.0)
    }

    fn require_lambda(&self, v: &[f64]) -> Result<(), VolumeError> {
        if self.lambda_contains(v) && v.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(VolumeError::OutsideLambda { v: v.to_vec() })
        }
    }

    pub fn f_eval(&self, v: &[f64]) -> Result<ExpIntegralResult, VolumeError> {
        self.require_lambda(v)?;
        Ok(exp_integral(&self.polyhedron, v)?.scale(self.prefactor))
    }

    /// First moment `∫_P x e^{-<v,x>} dx`, without the prefactor.
    pub fn futaki_residual(&self, v: &[f64]) -> Result<DVector<f64>, VolumeError> {
        self.require_lambda(v)?;
        Ok(-exp_integral(&self.polyhedron, v)?.gradient)
    }

    /// `(max(1, n), 0, ..., 0)` when it lies in the cone, else the sum of normalized recession rays.
    pub fn default_start(&self) -> Result<Vec<f64>, VolumeError> {
        let n = self.polyhedron.dim();
        let mut v = vec![0.0; n];
        v[0] = n.max(1) as f64;
        if self.lambda_contains(&v) {
            return Ok(v);
        }
        let mut s = vec![0.0; n];
        for w in self.polyhedron.recession_rays() {
            let wf = w.to_f64();
            let len = wf.iter().map(|x| x * x).sum::<f64>().sqrt();
            for (si, wi) in s.iter_mut().zip(&wf) {
                *si += wi / len;
            }
        }
        if self.lambda_contains(&s) {
            Ok(s)
        } else {
            Err(VolumeError::OutsideLambda { v: s })
        }
    }

    /// Damped Newton on the strictly convex functional, with Armijo backtracking inside the cone.
    pub fn minimize_f(&self, v0: &[f64], opts: NewtonOptions) -> Result<SolitonVectorResult, VolumeError> {
        self.require_lambda(v0)?;
        let mut v = DVector::from_column_slice(v0);
        let mut r = self.f_eval(v.as_slice())?;
        let mut path = vec![v0.to_vec()];
        let mut trace = Vec::new();
        for iteration in 0..=opts.max_iterations {
            let grad_norm = r.gradient.norm() / r.value;
            trace.push(TraceRow { iteration, b: v.iter().copied().collect(), value: r.value, grad_norm });
            if grad_norm < opts.tol {
                let eig = r.hessian.clone().symmetric_eigen().eigenvalues;
                let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
                return Ok(SolitonVectorResult {
                    b_x: VectorFieldParam::new(v.iter().copied().collect()),
                    grad_norm,
                    hessian_cond: hi / lo,
                    iterations: iteration,
                    path,
                    trace,
                    value: r.value,
                });
            }
            if iteration == opts.max_iterations {
                return Err(VolumeError::MaxIterations { iterations: iteration, grad_norm });
            }
            let chol = r
                .hessian
                .clone()
                .cholesky()
                .ok_or_else(|| VolumeError::HessianNotPD { iteration, v: v.iter().copied().collect() })?;
            let step: DVector<f64> = -chol.solve(&r.gradient);
            let slope = r.gradient.dot(&step);
            let slack = 8.0 * f64::EPSILON * r.value.abs();
            let mut t = 1.0;
            loop {
                let candidate: DVector<f64> = &v + &step * t;
                if self.lambda_contains(candidate.as_slice()) {
                    let rc = self.f_eval(candidate.as_slice())?;
                    let armijo_ok = rc.value <= r.value + opts.armijo * t * slope + slack;
                    // Below evaluation noise F cannot resolve the decrease; the gradient still can.
                    let noise_ok = -slope < 1e-12 * r.value && rc.gradient.norm() < r.gradient.norm();
                    if armijo_ok || noise_ok {
                        v = candidate;
                        r = rc;
                        break;
                    }
                }
                t *= 0.5;
                if t < 1e-14 {
                    return Err(VolumeError::LineSearchFailed { iteration, v: v.iter().copied().collect() });
                }
            }
            path.push(v.iter().copied().collect());
        }
        unreachable!("loop returns on the final iteration")
    }
}

/// Hessian condition helper for callers holding a raw matrix.
pub fn condition_number(h: &DMatrix<f64>) -> f64 {
    let eig = h.clone().symmetric_eigen().eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    hi / lo
}

/// Bisection for the root of `2(b - 1)e^b = b - 2` on `[0.5, 0.8]`.
pub fn refine_root_1d() -> f64 {
    let h = |b: f64| 2.0 * (b - 1.0) * b.exp() - (b - 2.0);
    let (mut lo, mut hi) = (0.5, 0.8);
    debug_assert!(h(lo) < 0.0 && h(hi) > 0.0);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::HalfSpace;
    use approx::assert_relative_eq;
    use std::f64::consts::E;

    fn half_line() -> WeightedVolumeProblem {
        WeightedVolumeProblem::new(Polyhedron::new(1, vec![HalfSpace::from_ints(&[1], 1)]).unwrap(), Prefactor::One)
            .unwrap()
    }

    fn product() -> WeightedVolumeProblem {
        let p = Polyhedron::new(
            2,
            vec![HalfSpace::from_ints(&[1, 0], 1), HalfSpace::from_ints(&[0, 1], 1), HalfSpace::from_ints(&[0, -1], 1)],
        )
        .unwrap();
        WeightedVolumeProblem::new(p, Prefactor::One).unwrap()
    }

    fn flagship(prefactor: Prefactor) -> WeightedVolumeProblem {
        let p = Polyhedron::new(
            2,
            vec![
                HalfSpace::from_ints(&[1, 0], 1),
                HalfSpace::from_ints(&[0, 1], 1),
                HalfSpace::from_ints(&[0, -1], 1),
                HalfSpace::from_ints(&[1, 1], 1),
            ],
        )
        .unwrap();
        WeightedVolumeProblem::new(p, prefactor).unwrap()
    }

    fn square() -> WeightedVolumeProblem {
        let p = Polyhedron::new(
            2,
            vec![
                HalfSpace::from_ints(&[1, 0], 1),
                HalfSpace::from_ints(&[-1, 0], 1),
                HalfSpace::from_ints(&[0, 1], 1),
                HalfSpace::from_ints(&[0, -1], 1),
            ],
        )
        .unwrap();
        WeightedVolumeProblem::new(p, Prefactor::One).unwrap()
    }

    #[test]
    fn lambda_membership() {
        assert!(product().lambda_contains(&[0.1, -40.0]));
        assert!(!product().lambda_contains(&[0.0, 1.0]));
        assert!(flagship(Prefactor::One).lambda_contains(&[1.0, 7.0]));
        assert!(square().lambda_contains(&[-5.0, 3.0]));
    }

    #[test]
    fn evaluations() {
        let r = half_line().f_eval(&[1.0]).unwrap();
        assert_relative_eq!(r.value, E, max_relative = 1e-15);
        let r = flagship(Prefactor::One).f_eval(&[1.0, 0.5]).unwrap();
        assert_relative_eq!(r.value, 4.0 * E - 4.0 * E.sqrt(), max_relative = 1e-14);
        let r = flagship(Prefactor::One).f_eval(&[2.0, 1.0]).unwrap();
        assert_relative_eq!(r.value, E * E - E, max_relative = 1e-14);
        assert!(matches!(half_line().f_eval(&[-1.0]), Err(VolumeError::OutsideLambda { .. })));
        let fut = half_line().futaki_residual(&[2.0]).unwrap();
        assert_relative_eq!(fut[0], -E * E / 4.0, max_relative = 1e-14);
    }

    #[test]
    fn half_line_minimizer() {
        let r = half_line().minimize_f(&[3.0], NewtonOptions::default()).unwrap();
        assert!((r.b_x.b[0] - 1.0).abs() < 1e-10);
        assert!(r.grad_norm < 1e-10);
        for w in r.trace.windows(2) {
            assert!(w[1].value <= w[0].value * (1.0 + 1e-14));
        }
    }

    #[test]
    fn flagship_minimizer_lies_on_symmetry_line() {
        let r = flagship(Prefactor::One).minimize_f(&[1.0, 0.5], NewtonOptions::default()).unwrap();
        let b = &r.b_x.b;
        assert!((b[0] - 2.0 * b[1]).abs() < 1e-8);
        assert!((b[1] - refine_root_1d()).abs() < 1e-8);
        assert!((b[1] - 0.64).abs() < 0.01);
        let fut = flagship(Prefactor::One).futaki_residual(b).unwrap();
        assert!(fut.norm() < 1e-8);
    }

    #[test]
    fn prefactor_does_not_move_the_minimizer() {
        let a = flagship(Prefactor::One).minimize_f(&[1.0, 0.5], NewtonOptions::default()).unwrap();
        let b = flagship(Prefactor::TwoPi).minimize_f(&[1.0, 0.5], NewtonOptions::default()).unwrap();
        for i in 0..2 {
            assert!((a.b_x.b[i] - b.b_x.b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn square_minimizer_is_origin() {
        let r = square().minimize_f(&[0.3, -0.2], NewtonOptions::default()).unwrap();
        assert!(r.b_x.b.iter().all(|v| v.abs() < 1e-9), "{:?}", r.b_x.b);
    }

    #[test]
    fn default_start_is_in_lambda() {
        assert_eq!(flagship(Prefactor::One).default_start().unwrap(), vec![2.0, 0.0]);
        let mirrored =
            Polyhedron::new(1, vec![HalfSpace::from_ints(&[-1], 1)]).map(|p| WeightedVolumeProblem::new(p, Prefactor::One));
        let problem = mirrored.unwrap().unwrap();
        assert_eq!(problem.default_start().unwrap(), vec![-1.0]);
    }

    #[test]
    fn bisection_oracle() {
        let h = |b: f64| 2.0 * (b - 1.0) * b.exp() - (b - 2.0);
        assert!((h(1.0) - 1.0).abs() < 1e-15);
        assert!((h(0.5) - (1.5 - 0.5f64.exp())).abs() < 1e-15);
        let r = refine_root_1d();
        assert!(h(r).abs() < 1e-10);
        assert!((r - 0.64).abs() < 0.01);
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let r = half_line().minimize_f(&[3.0], NewtonOptions::default()).unwrap();
        let csv = r.trace_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "iteration,b1,F,grad_norm");
        assert_eq!(lines.count(), r.trace.len());
    }
}
