//! Toric Monge–Ampère residuals, data normalization, continuity path and energy functionals.

mod continuity;
mod functionals;

pub use continuity::{continuity_solve, data_path, path_csv, ContinuityOptions, ContinuityState, Monitors};
pub use functionals::{
    discrete_measure, functional_fhat, functional_fhat_grid, functional_i, functional_j, functional_j_exact, functional_j_linear,
};

use thiserror::Error;

use crate::grid::{DomainTag, GridError, GridFunction, Stencil};
use crate::integrals::VectorFieldParam;
use crate::lattice::{HalfSpace, Polyhedron};
use crate::legendre::LegendreError;
use crate::potential::{GaussianModel, GuilleminDual, SmoothPotential};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("potential is not convex at node {node:?}")]
    NotConvex { node: Vec<usize> },
    #[error("weighted measure is not finite: {0}")]
    DivergentMeasure(String),
    #[error("Newton iteration diverged at s = {s}")]
    NewtonDiverged { s: f64, last: Option<Box<ContinuityState>> },
    #[error("metric positivity lost at s = {s}")]
    PositivityLoss { s: f64, last: Option<Box<ContinuityState>> },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("moment image leaves the polytope at node {node:?}")]
    OutsidePolytope { node: Vec<usize> },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Legendre(#[from] LegendreError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// `log ∫_{p}^{p+dp} e^{-b x} dx`, the discrete one-dimensional weight of a node.
pub(crate) fn log_flux_increment(b: f64, p: f64, dp: f64) -> f64 {
    if b == 0.0 {
        dp.ln()
    } else {
        -b * p + (-(-b * dp).exp_m1() / b).ln()
    }
}

fn log_sum_exp(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    let m = v.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Reference model: a convex potential `φ₀` on a ξ-grid, its moment polytope and vector field.
#[derive(Clone, Debug)]
pub struct TorusModel {
    polytope: Polyhedron,
    b: VectorFieldParam,
    phi0: GridFunction,
    reference_data: GridFunction,
    log_weight: Vec<f64>,
}

impl TorusModel {
    /// Samples `potential` on the grid. The reference data is evaluated with exact derivatives,
    /// the weight measure with the same finite differences the solver uses.
    pub fn new(
        polytope: Polyhedron,
        b: VectorFieldParam,
        potential: &dyn SmoothPotential,
        origin: Vec<f64>,
        spacing: Vec<f64>,
        shape: Vec<usize>,
    ) -> Result<Self> {
        let n = polytope.dim();
        for found in [b.b.len(), potential.dim(), origin.len()] {
            if found != n {
                return Err(ModelError::DimensionMismatch { expected: n, found });
            }
        }
        if n > 2 {
            return Err(GridError::UnsupportedDim(n).into());
        }
        let total: usize = shape.iter().product();
        let mut values = Vec::with_capacity(total);
        let mut data = Vec::with_capacity(total);
        let probe = GridFunction::new(origin.clone(), spacing.clone(), shape.clone(), vec![0.0; total], DomainTag::Xi)?;
        for k in 0..total {
            let xi = probe.node(&probe.unflat(k));
            values.push(potential.value(&xi));
            data.push(soliton_data_analytic(potential, &b, &xi));
        }
        let phi0 = probe.with_values(values)?;
        let reference_data = probe.with_values(data)?;
        if let Some((k, _)) = reference_data.values().iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(ModelError::NotConvex { node: probe.unflat(k) });
        }
        let log_weight = reference_log_weights(&phi0, &b)?;
        let model = Self { polytope, b, phi0, reference_data, log_weight };
        model.check_moment_image()?;
        Ok(model)
    }

    /// The Gaussian soliton on the half-line `[-1, ∞)` with `b = 1`, sampled on `[lo, hi]`.
    pub fn gaussian(lo: f64, hi: f64, h: f64) -> Result<Self> {
        let count = ((hi - lo) / h).round() as usize + 1;
        let p = Polyhedron::new(1, vec![HalfSpace::from_ints(&[1], 1)]).expect("half-line");
        Self::new(p, VectorFieldParam::new(vec![1.0]), &GaussianModel, vec![lo], vec![h], vec![count])
    }

    /// Legendre dual of the Guillemin potential of a 2D polytope on the square `[-half, half]²`.
    pub fn guillemin(polytope: Polyhedron, b: VectorFieldParam, half: f64, count: usize) -> Result<Self> {
        let start = vec![0.0; polytope.dim()];
        let pot = GuilleminDual::new(polytope.clone(), start);
        let h = 2.0 * half / (count - 1) as f64;
        Self::new(polytope, b, &pot, vec![-half, -half], vec![h, h], vec![count, count])
    }

    fn check_moment_image(&self) -> Result<()> {
        let scale = self.phi0.spacing().iter().fold(0.0f64, |m, &h| m.max(h));
        for idx in self.phi0.interior_nodes(1) {
            let g = self.phi0.gradient(&idx, Stencil::Second);
            let hs = self.phi0.hessian(&idx, Stencil::Second);
            let margin: f64 = hs.iter().flatten().map(|v| v.abs()).sum::<f64>() * scale;
            if self.polytope.halfspaces().iter().any(|h| h.slack_f64(&g) < -margin) {
                return Err(ModelError::OutsidePolytope { node: idx });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.polytope.dim()
    }

    pub fn polytope(&self) -> &Polyhedron {
        &self.polytope
    }

    pub fn b(&self) -> &VectorFieldParam {
        &self.b
    }

    pub fn phi0(&self) -> &GridFunction {
        &self.phi0
    }

    /// `-log det φ₀'' + <∇φ₀, b> - 2φ₀`, zero when `φ₀` is itself a soliton.
    pub fn reference_data(&self) -> &GridFunction {
        &self.reference_data
    }

    /// Logarithm of the discrete reference measure at the interior nodes.
    pub fn log_weight(&self) -> &[f64] {
        &self.log_weight
    }

    pub fn weight(&self) -> Vec<f64> {
        self.log_weight.iter().map(|v| v.exp()).collect()
    }

    pub fn total_mass(&self) -> f64 {
        log_sum_exp(self.log_weight.iter().copied()).exp()
    }

    /// Interior node of largest Hamiltonian `<∇φ₀, b>`, standing in for the far field.
    pub fn far_field_node(&self) -> Vec<usize> {
        let mut best = (f64::NEG_INFINITY, vec![]);
        for idx in self.phi0.interior_nodes(1) {
            let g = self.phi0.gradient(&idx, Stencil::Second);
            let f: f64 = g.iter().zip(&self.b.b).map(|(a, c)| a * c).sum();
            if f > best.0 {
                best = (f, idx);
            }
        }
        best.1
    }

    /// Reference data plus `amplitude · exp(-|ξ - center|² / width²)` on every node.
    pub fn bumped_data(&self, amplitude: f64, center: &[f64], width: f64) -> GridFunction {
        let values = (0..self.phi0.len())
            .map(|k| {
                let xi = self.phi0.node(&self.phi0.unflat(k));
                let r2: f64 = xi.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                self.reference_data.values()[k] + amplitude * (-r2 / (width * width)).exp()
            })
            .collect();
        self.phi0.with_values(values).expect("same shape")
    }
}

fn soliton_data_analytic(pot: &dyn SmoothPotential, b: &VectorFieldParam, xi: &[f64]) -> f64 {
    -soliton_residual_analytic(pot, b, xi)
}

/// Discrete reference measure. In 1D the weight of node k is `∫ e^{-b x} dx` over the slope
/// interval `[p_{k-1/2}, p_{k+1/2}]`, which makes the weighted mass telescope exactly.
fn reference_log_weights(phi0: &GridFunction, b: &VectorFieldParam) -> Result<Vec<f64>> {
    match phi0.dim() {
        1 => {
            let h = phi0.spacing()[0];
            let v = phi0.values();
            let mut out = Vec::with_capacity(v.len().saturating_sub(2));
            for k in 1..v.len() - 1 {
                let pm = (v[k] - v[k - 1]) / h;
                let pp = (v[k + 1] - v[k]) / h;
                if pp <= pm {
                    return Err(ModelError::NotConvex { node: vec![k] });
                }
                out.push(log_flux_increment(b.b[0], pm, pp - pm));
            }
            Ok(out)
        }
        _ => {
            let cell: f64 = phi0.spacing().iter().product();
            phi0.interior_nodes(1)
                .into_iter()
                .map(|idx| {
                    let hs = phi0.hessian(&idx, Stencil::Second);
                    let det = hs[0][0] * hs[1][1] - hs[0][1] * hs[1][0];
                    if hs[0][0] <= 0.0 || det <= 0.0 {
                        return Err(ModelError::NotConvex { node: idx });
                    }
                    let g = phi0.gradient(&idx, Stencil::Second);
                    let bg: f64 = g.iter().zip(&b.b).map(|(a, c)| a * c).sum();
                    Ok(-bg + det.ln() + cell.ln())
                })
                .collect()
        }
    }
}

fn log_det(hs: &[Vec<f64>]) -> Option<f64> {
    match hs.len() {
        1 => (hs[0][0] > 0.0).then(|| hs[0][0].ln()),
        _ => {
            let det = hs[0][0] * hs[1][1] - hs[0][1] * hs[1][0];
            (hs[0][0] > 0.0 && det > 0.0).then(|| det.ln())
        }
    }
}

/// `log det φ_ij + 2φ - <b, ∇φ>` at the interior nodes.
pub fn soliton_residual_xi(phi: &GridFunction, b: &VectorFieldParam, st: Stencil) -> Result<GridFunction> {
    if b.b.len() != phi.dim() {
        return Err(ModelError::DimensionMismatch { expected: phi.dim(), found: b.b.len() });
    }
    let mut out = Vec::new();
    for idx in phi.interior_nodes(st.halo()) {
        let ld = log_det(&phi.hessian(&idx, st)).ok_or_else(|| ModelError::NotConvex { node: idx.clone() })?;
        let bg: f64 = phi.gradient(&idx, st).iter().zip(&b.b).map(|(a, c)| a * c).sum();
        out.push(ld + 2.0 * phi.value(&idx) - bg);
    }
    Ok(phi.interior_grid(st.halo(), out)?)
}

pub fn soliton_residual_analytic(pot: &dyn SmoothPotential, b: &VectorFieldParam, xi: &[f64]) -> f64 {
    let ld = log_det(&pot.hessian(xi)).unwrap_or(f64::NAN);
    let bg: f64 = pot.gradient(xi).iter().zip(&b.b).map(|(a, c)| a * c).sum();
    ld + 2.0 * pot.value(xi) - bg
}

/// `2(<∇u, x> - u) - log det u_ij` at one interior node of a grid on the polytope side.
pub fn rho_u_at(u: &GridFunction, idx: &[usize], st: Stencil) -> Result<f64> {
    let x = u.node(idx);
    let ld = log_det(&u.hessian(idx, st)).ok_or_else(|| ModelError::NotConvex { node: idx.to_vec() })?;
    let gx: f64 = u.gradient(idx, st).iter().zip(&x).map(|(a, c)| a * c).sum();
    Ok(2.0 * (gx - u.value(idx)) - ld)
}

pub fn rho_u(u: &GridFunction, st: Stencil) -> Result<GridFunction> {
    let out = u.interior_nodes(st.halo()).iter().map(|idx| rho_u_at(u, idx, st)).collect::<Result<Vec<_>>>()?;
    Ok(u.interior_grid(st.halo(), out)?)
}

pub fn rho_u_analytic(pot: &dyn SmoothPotential, x: &[f64]) -> f64 {
    let ld = log_det(&pot.hessian(x)).unwrap_or(f64::NAN);
    let gx: f64 = pot.gradient(x).iter().zip(x).map(|(a, c)| a * c).sum();
    2.0 * (gx - pot.value(x)) - ld
}

/// Hamiltonian `<∇φ, b>` of the vector field at the interior nodes.
pub fn hamiltonian_potential(phi: &GridFunction, b: &VectorFieldParam, st: Stencil) -> Result<GridFunction> {
    if b.b.len() != phi.dim() {
        return Err(ModelError::DimensionMismatch { expected: phi.dim(), found: b.b.len() });
    }
    let out = phi
        .interior_nodes(st.halo())
        .iter()
        .map(|idx| phi.gradient(idx, st).iter().zip(&b.b).map(|(a, c)| a * c).sum())
        .collect();
    Ok(phi.interior_grid(st.halo(), out)?)
}

/// Shifts `F_raw` by `c₀ = log(∫dμ / ∫e^{F_raw} dμ)` so that `∫(e^F - 1) dμ = 0`.
pub fn normalize_data(model: &TorusModel, f_raw: &GridFunction) -> Result<(GridFunction, f64)> {
    if f_raw.shape() != model.phi0.shape() {
        return Err(GridError::ShapeMismatch { expected: model.phi0.len(), found: f_raw.len() }.into());
    }
    let interior = model.phi0.interior_nodes(1);
    let lw = &model.log_weight;
    let mass = log_sum_exp(lw.iter().copied());
    let tilted = log_sum_exp(interior.iter().zip(lw).map(|(idx, w)| w + f_raw.value(idx)));
    let c0 = mass - tilted;
    if !c0.is_finite() {
        return Err(ModelError::DivergentMeasure(format!("log masses {mass} and {tilted}")));
    }
    Ok((f_raw.map_values(|v| v + c0)?, c0))
}

/// `∫(e^F - 1) dμ / ∫dμ` over the interior nodes.
pub fn normalization_residual(model: &TorusModel, f: &GridFunction) -> f64 {
    let w = model.weight();
    let num: f64 = model.phi0.interior_nodes(1).iter().zip(&w).map(|(idx, w)| f.value(idx).exp_m1() * w).sum();
    num / w.iter().sum::<f64>()
}

/// Least-squares fits of `ψ` on the far field, with and without the `log f` term.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct FarFieldFit {
    pub c1: f64,
    pub c2: f64,
    pub residual: f64,
    pub residual_constant: f64,
    pub nodes: usize,
}

/// Fits `ψ ≈ c₁ log f + c₂` on the interior nodes carrying the largest 20% of positive values of
/// `f = <∇φ₀, b>`; residuals are RMS.
pub fn far_field_fit(model: &TorusModel, psi: &GridFunction) -> Result<FarFieldFit> {
    if psi.shape() != model.phi0.shape() {
        return Err(GridError::ShapeMismatch { expected: model.phi0.len(), found: psi.len() }.into());
    }
    let f = hamiltonian_potential(&model.phi0, &model.b, Stencil::Second)?;
    let mut pts: Vec<(f64, f64)> = model
        .phi0
        .interior_nodes(1)
        .iter()
        .zip(f.values())
        .filter(|(_, fv)| **fv > 0.0)
        .map(|(idx, fv)| (fv.ln(), psi.value(idx)))
        .collect();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let keep = (f.len() / 5).min(pts.len());
    if keep < 3 {
        return Err(ModelError::DivergentMeasure("far field has fewer than three nodes".into()));
    }
    pts.truncate(keep);
    let n = keep as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let c1 = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let c2 = my - c1 * mx;
    let rms = |g: &dyn Fn(f64) -> f64| (pts.iter().map(|p| (p.1 - g(p.0)).powi(2)).sum::<f64>() / n).sqrt();
    Ok(FarFieldFit {
        c1,
        c2,
        residual: rms(&|x| c1 * x + c2),
        residual_constant: rms(&|_| my),
        nodes: keep,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{GaussianSymplectic, Quadratic};

    #[test]
    fn gaussian_residual_vanishes() {
        let b = VectorFieldParam::new(vec![1.0]);
        for xi in [-5.0, -1.0, 0.0, 2.5, 4.0] {
            assert!(soliton_residual_analytic(&GaussianModel, &b, &[xi]).abs() < 1e-12);
        }
        // left of -3 the rounding of stored values, ε|φ|/(h²φ''), dominates at this spacing
        let phi = GaussianModel.sample_1d(-3.0, 1e-3, 7001, DomainTag::Xi).unwrap();
        let r = soliton_residual_xi(&phi, &b, Stencil::Fourth).unwrap();
        let sup = r.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(sup < 1e-5, "{sup}");
    }

    #[test]
    fn quadratic_residual() {
        let phi = Quadratic { dim: 1 }.sample_1d(-2.0, 0.01, 401, DomainTag::Xi).unwrap();
        let r = soliton_residual_xi(&phi, &VectorFieldParam::new(vec![0.0]), Stencil::Second).unwrap();
        for k in 0..r.len() {
            let xi = r.coord(k);
            assert!((r.values()[k] - xi * xi).abs() < 1e-9);
        }
    }

    #[test]
    fn rho_of_symplectic_gaussian_is_linear() {
        for x in [-0.9, 0.0, 3.0, 10.0] {
            assert!((rho_u_analytic(&GaussianSymplectic, &[x]) - x).abs() < 1e-12);
        }
        let u = GaussianSymplectic.sample_1d(-0.9, 1e-3, 10901, DomainTag::X).unwrap();
        let r = rho_u(&u, Stencil::Fourth).unwrap();
        let worst = (0..r.len()).map(|k| (r.values()[k] - r.coord(k)).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
        let shifted = u.map_values(|v| v + 0.25).unwrap();
        let r2 = rho_u(&shifted, Stencil::Fourth).unwrap();
        assert!((r2.values()[100] - r.values()[100] + 0.5).abs() < 1e-9);
    }

    #[test]
    fn hamiltonian_of_gaussian() {
        let phi = GaussianModel.sample_1d(-8.0, 0.01, 1401, DomainTag::Xi).unwrap();
        let f = hamiltonian_potential(&phi, &VectorFieldParam::new(vec![1.0]), Stencil::Second).unwrap();
        let k0 = (0..f.len()).find(|&k| f.coord(k).abs() < 1e-9).unwrap();
        assert!((f.values()[k0] + 0.5).abs() < 1e-4);
        let min = f.values().iter().fold(f64::INFINITY, |m, &v| m.min(v));
        assert!(min > -1.0 && min < -0.99);
    }

    #[test]
    fn normalization() {
        let model = TorusModel::gaussian(-8.0, 6.0, 0.01).unwrap();
        assert!(model.reference_data().values().iter().all(|v| v.abs() < 1e-9));
        let ones = model.phi0().map_values(|_| 1.0).unwrap();
        let (f, c0) = normalize_data(&model, &ones).unwrap();
        assert!((c0 + 1.0).abs() < 1e-12 && f.values().iter().all(|v| v.abs() < 1e-12));
        let bump = model.bumped_data(0.5, &[0.0], 1.0);
        let (f, c0) = normalize_data(&model, &bump).unwrap();
        assert!(c0 < 0.0);
        assert!(normalization_residual(&model, &f).abs() < 1e-10);
        // total mass of the reference measure is ∫_{-1}^∞ e^{-x} dx = e, up to the truncated tails
        assert!((model.total_mass() - std::f64::consts::E).abs() < 1e-6);
    }

    #[test]
    fn round_trip_through_legendre() {
        // for a Legendre pair ρ_u(φ'(ξ)) - b φ'(ξ) = log φ'' + 2φ - b φ'
        let b = VectorFieldParam::new(vec![1.0]);
        let pert = |x: f64| 0.05 * (-x * x).exp();
        let phi = GridFunction::sample_interval(-2.0, 2.0, 1e-3, DomainTag::Xi, |x| {
            GaussianModel.value(&[x]) + pert(x)
        })
        .unwrap();
        let r = soliton_residual_xi(&phi, &b, Stencil::Fourth).unwrap();
        let xs: Vec<Vec<f64>> = (0..126).map(|k| vec![-0.5 + 0.02 * k as f64]).collect();
        let u = crate::legendre::legendre_eval(&phi, &xs).unwrap();
        let u = GridFunction::new(vec![-0.5], vec![0.02], vec![126], u, DomainTag::X).unwrap();
        let rho = rho_u(&u, Stencil::Second).unwrap();
        let mut worst: f64 = 0.0;
        for (k, &rv) in rho.values().iter().enumerate() {
            let x = rho.coord(k);
                        // nearest ξ node with φ'(ξ) ≈ x
            let j = (1..phi.len() - 1)
                .min_by(|&a, &c| {
                    let da = (phi.values()[a + 1] - phi.values()[a - 1]) / 2e-3 - x;
                    let dc = (phi.values()[c + 1] - phi.values()[c - 1]) / 2e-3 - x;
                    da.abs().total_cmp(&dc.abs())
                })
                .unwrap();
            let xi = phi.coord(j);
            let k_r = ((xi - r.coord(0)) / 1e-3).round() as usize;
            worst = worst.max((rv - x - r.values()[k_r]).abs());
        }
        assert!(worst < 0.05, "{worst}");
    }

    #[test]
    fn far_field_fit_prefers_log_term() {
        let model = TorusModel::gaussian(-8.0, 6.0, 0.02).unwrap();
        let psi = model.phi0().with_values(model.phi0().values().iter().enumerate().map(|(k, _)| {
            let xi = model.phi0().coord(k);
            -0.3 * ((2.0 * xi).exp() / 2.0 - 1.0).abs().ln() + 0.1
        }).collect()).unwrap();
        let fit = far_field_fit(&model, &psi).unwrap();
        assert!((fit.c1 + 0.3).abs() < 1e-3 && fit.residual < 1e-3 * fit.residual_constant, "{fit:?}");
    }
}
