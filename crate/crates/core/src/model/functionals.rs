use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;

use super::continuity::{discretization, Discretization};
use super::{ModelError, Result, TorusModel};
use crate::grid::GridFunction;
use crate::lattice::Polyhedron;
use crate::legendre::PiecewiseLinearConjugate;

fn with_ties(d: &dyn Discretization, psi: &GridFunction) -> Vec<f64> {
    let mut v = psi.values().to_vec();
    d.tie(&mut v);
    v
}

fn interior(model: &TorusModel, full: &[f64]) -> Vec<f64> {
    let g = model.phi0();
    g.interior_nodes(1).iter().map(|idx| full[g.flat(idx)]).collect()
}

fn measure_or_err(d: &dyn Discretization, psi: &[f64]) -> Result<Vec<f64>> {
    let w = d.measure(psi).ok_or_else(|| ModelError::DivergentMeasure("metric not positive".into()))?;
    if w.iter().all(|v| v.is_finite()) {
        Ok(w)
    } else {
        Err(ModelError::DivergentMeasure("non-finite weight".into()))
    }
}

/// Discrete `dμ_ψ` on the interior nodes; boundary values of `ψ` are replaced by their neighbours.
pub fn discrete_measure(model: &TorusModel, psi: &GridFunction) -> Result<Vec<f64>> {
    let d = discretization(model);
    measure_or_err(d.as_ref(), &with_ties(d.as_ref(), psi))
}

/// `I(ψ) = ∫ψ (dμ₀ - dμ_ψ)`.
pub fn functional_i(model: &TorusModel, psi: &GridFunction) -> Result<f64> {
    let d = discretization(model);
    let v = with_ties(d.as_ref(), psi);
    let w = measure_or_err(d.as_ref(), &v)?;
    let w0 = model.weight();
    Ok(interior(model, &v).iter().zip(w0.iter().zip(&w)).map(|(p, (a, b))| p * (a - b)).sum())
}

/// `J = ∫₀¹ ∫ψ̇_t (dμ₀ - dμ_t) dt` by Gauss–Legendre quadrature in `t`;
/// `path(t)` returns `(ψ_t, ψ̇_t)`.
pub fn functional_j(
    model: &TorusModel,
    path: impl Fn(f64) -> (GridFunction, GridFunction),
    order: usize,
) -> Result<f64> {
    let d = discretization(model);
    let w0 = model.weight();
    let rule = GaussLegendre::new(NonZeroUsize::new(order.max(1)).expect("nonzero"));
    let mut failure = None;
    let value = rule.integrate(0.0, 1.0, |t| {
        let (psi, dpsi) = path(t);
        let v = with_ties(d.as_ref(), &psi);
        let dv = with_ties(d.as_ref(), &dpsi);
        match measure_or_err(d.as_ref(), &v) {
            Ok(w) => interior(model, &dv).iter().zip(w0.iter().zip(&w)).map(|(p, (a, b))| p * (a - b)).sum(),
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

/// `J` along the straight path `t ψ`.
pub fn functional_j_linear(model: &TorusModel, psi: &GridFunction, order: usize) -> Result<f64> {
    functional_j(model, |t| (psi.map_values(|v| t * v).expect("finite"), psi.clone()), order)
}

pub(crate) fn j_linear_raw(d: &dyn Discretization, psi: &[f64], order: usize) -> f64 {
    let model = d.model();
    let w0 = model.weight();
    let inner = interior(model, psi);
    let rule = GaussLegendre::new(NonZeroUsize::new(order).expect("nonzero"));
    rule.integrate(0.0, 1.0, |t| {
        let scaled: Vec<f64> = psi.iter().map(|v| t * v).collect();
        let w = d.measure(&scaled).unwrap_or_else(|| vec![f64::NAN; w0.len()]);
        inner.iter().zip(w0.iter().zip(&w)).map(|(p, (a, b))| p * (a - b)).sum::<f64>()
    })
}

/// Closed form of `J` for the conservative 1D scheme: the discrete measure is the gradient
/// of the concave energy `E(ψ) = -2h Σ_j H(p_{j+1/2})` with `H' = G`, so `J` is path independent.
pub fn functional_j_exact(model: &TorusModel, psi: &GridFunction) -> Result<f64> {
    if model.dim() != 1 {
        return Err(ModelError::DimensionMismatch { expected: 1, found: model.dim() });
    }
    let d = discretization(model);
    let v = with_ties(d.as_ref(), psi);
    let g = model.phi0();
    let h = g.spacing()[0];
    let b = model.b().b[0];
    let phi = g.values();
    let n = phi.len();
    let p0: Vec<f64> = phi.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    let d: Vec<f64> = (0..n - 1).map(|j| (v[j + 1] - v[j]) / (2.0 * h)).collect();
    let big_g = |x: f64| if b == 0.0 { x } else { -(-b * x).exp_m1() / b };
    // H(x0 + d) - H(x0) with H(x) = (x + e^{-bx}/b)/b
    let dh = |x0: f64, d: f64| {
        if b == 0.0 {
            d * (x0 + 0.5 * d)
        } else {
            d / b + (-b * x0).exp() * (-b * d).exp_m1() / (b * b)
        }
    };
    let de: f64 = -2.0 * h * p0.iter().zip(&d).map(|(&x0, &dd)| dh(x0, dd)).sum::<f64>();
    let w0 = model.weight();
    let linear: f64 = interior(model, &v).iter().zip(&w0).map(|(a, b)| a * b).sum();
    Ok(linear - de + v[0] * big_g(p0[0] + d[0]) - v[n - 1] * big_g(p0[n - 2] + d[n - 2]))
}

/// `F̂ = 2 ∫ (u₁ - u₀) e^{-b x} dx` over the common slope range of two 1D conjugates inside `P`.
pub fn functional_fhat(
    u0: &PiecewiseLinearConjugate,
    u1: &PiecewiseLinearConjugate,
    b: f64,
    p: &Polyhedron,
) -> Result<f64> {
    if p.dim() != 1 {
        return Err(ModelError::DimensionMismatch { expected: 1, found: p.dim() });
    }
    let (s0, s1) = (u0.slopes(), u1.slopes());
    let mut lo = s0[0].max(s1[0]);
    let mut hi = s0[s0.len() - 1].min(s1[s1.len() - 1]);
    for hs in p.halfspaces() {
        let nu = hs.normal.coords()[0] as f64;
        let a = crate::lattice::rational::to_f64(&hs.offset);
        if nu > 0.0 {
            lo = lo.max(-a / nu);
        } else {
            hi = hi.min(-a / nu);
        }
    }
    if !(hi > lo) {
        return Ok(0.0);
    }
    let value = 2.0 * (u1.weighted_integral(b, lo, hi) - u0.weighted_integral(b, lo, hi));
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::DivergentMeasure("F̂ integral overflow".into()))
    }
}

/// `F̂` from two symplectic potentials sampled on the same x-grid, by the trapezoid rule
/// over nodes inside `P`.
pub fn functional_fhat_grid(u0: &GridFunction, u1: &GridFunction, b: &[f64], p: &Polyhedron) -> Result<f64> {
    if u0.shape() != u1.shape() || u0.origin() != u1.origin() {
        return Err(crate::grid::GridError::ShapeMismatch { expected: u0.len(), found: u1.len() }.into());
    }
    let cell: f64 = u0.spacing().iter().product();
    let mut total = 0.0;
    for k in 0..u0.len() {
        let idx = u0.unflat(k);
        let x = u0.node(&idx);
        if !p.contains_f64(&x) {
            continue;
        }
        let edge = idx.iter().zip(u0.shape()).filter(|(i, n)| **i == 0 || **i + 1 == **n).count();
        let w = 0.5f64.powi(edge as i32);
        let bx: f64 = b.iter().zip(&x).map(|(a, c)| a * c).sum();
        total += w * (u1.values()[k] - u0.values()[k]) * (-bx).exp();
    }
    let value = 2.0 * total * cell;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::DivergentMeasure("F̂ integral overflow".into()))
    }
}
