use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{log_flux_increment, ModelError, Result, TorusModel};
use crate::grid::{GridError, GridFunction, Stencil};

#[derive(Clone, Copy, Debug)]
pub struct ContinuityOptions {
    pub steps: usize,
    pub newton_tol: f64,
    pub max_newton: usize,
    /// How many times a failing path step may be split in half.
    pub max_halvings: usize,
}

impl Default for ContinuityOptions {
    fn default() -> Self {
        Self { steps: 20, newton_tol: 1e-10, max_newton: 60, max_halvings: 8 }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, PartialEq)]
pub struct Monitors {
    pub sup_psi: f64,
    pub inf_psi: f64,
    pub inf_xpsi: f64,
    pub sup_xpsi: f64,
    /// Largest eigenvalue modulus of `i∂∂̄ψ` relative to the reference metric.
    pub sup_ddbar: f64,
}

#[derive(Clone, Debug)]
pub struct ContinuityState {
    pub s: f64,
    pub psi: GridFunction,
    pub f_s: GridFunction,
    pub c_s: f64,
    pub residual_norm: f64,
    pub newton_iterations: usize,
    /// Discrete total mass of `e^{-<b,∇φ_s>} det φ_s,ij dξ`.
    pub mass: f64,
    /// Constant absorbed by the 2D compatibility unknown; zero in 1D.
    pub compat_shift: f64,
    pub weighted_mean: f64,
    pub monitors: Monitors,
    pub functional_i: f64,
    pub functional_j: f64,
}

/// `F_s = log(1 + s(e^F - 1))`.
pub fn data_path(f: &GridFunction, s: f64) -> GridFunction {
    f.map_values(|v| (s * v.exp_m1()).ln_1p()).expect("finite data")
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Failure {
    Diverged,
    Positivity,
}

/// Discretized operator `log det(φ₀ + ψ/2)_ij - log det φ₀,ij - ½<b, ∇ψ>` on the interior nodes.
/// The unknown vector holds ψ on every grid node followed by a compatibility constant λ.
pub(crate) trait Discretization {
    fn model(&self) -> &TorusModel;
    /// Copies interior values onto boundary nodes (zero normal derivative).
    fn tie(&self, psi: &mut [f64]);
    /// Adds a constant to ψ so that values are small where the reference curvature is small.
    fn gauge(&self, _z: &mut [f64]) {}
    /// Interior residuals minus `fs`, or `None` if the metric is not positive.
    fn residual(&self, z: &[f64], fs: &[f64]) -> Option<Vec<f64>>;
    fn newton_direction(&self, z: &[f64], r: &[f64]) -> Option<Vec<f64>>;
    /// Discrete measure `dμ_ψ` at the interior nodes.
    fn measure(&self, psi: &[f64]) -> Option<Vec<f64>>;
    fn monitors(&self, psi: &[f64]) -> Monitors;
}

pub(crate) fn discretization(model: &TorusModel) -> Box<dyn Discretization + '_> {
    match model.dim() {
        1 => Box::new(Line::new(model)),
        _ => Box::new(Plane::new(model)),
    }
}

fn interior_values(model: &TorusModel, full: &[f64]) -> Vec<f64> {
    let g = model.phi0();
    g.interior_nodes(1).iter().map(|idx| full[g.flat(idx)]).collect()
}

fn monitors_generic(model: &TorusModel, psi: &[f64]) -> Monitors {
    let phi0 = model.phi0();
    let grid = phi0.with_values(psi.to_vec()).expect("same shape");
    let b = &model.b().b;
    let mut m = Monitors {
        sup_psi: f64::NEG_INFINITY,
        inf_psi: f64::INFINITY,
        inf_xpsi: f64::INFINITY,
        sup_xpsi: f64::NEG_INFINITY,
        sup_ddbar: 0.0,
    };
    for &v in psi {
        m.sup_psi = m.sup_psi.max(v);
        m.inf_psi = m.inf_psi.min(v);
    }
    for idx in phi0.interior_nodes(1) {
        let xpsi: f64 = grid.gradient(&idx, Stencil::Second).iter().zip(b).map(|(a, c)| a * c).sum();
        m.inf_xpsi = m.inf_xpsi.min(xpsi);
        m.sup_xpsi = m.sup_xpsi.max(xpsi);
        let a = phi0.hessian(&idx, Stencil::Second);
        let h = grid.hessian(&idx, Stencil::Second);
        let lam = if a.len() == 1 {
            (0.5 * h[0][0] / a[0][0]).abs()
        } else {
            let bm = [0.5 * h[0][0], 0.5 * h[0][1], 0.5 * h[1][1]];
            let qa = a[0][0] * a[1][1] - a[0][1] * a[0][1];
            let qb = -(a[0][0] * bm[2] + a[1][1] * bm[0] - 2.0 * a[0][1] * bm[1]);
            let qc = bm[0] * bm[2] - bm[1] * bm[1];
            let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
            ((-qb + disc) / (2.0 * qa)).abs().max(((-qb - disc) / (2.0 * qa)).abs())
        };
        m.sup_ddbar = m.sup_ddbar.max(lam);
    }
    m
}

/// Conservative 1D scheme. With `G(p) = (1 - e^{-bp})/b` the equation at node k reads
/// `log ΔG_k(ψ) - log ΔG_k(0) = F_s`, where `ΔG_k` is the increment of `G` across the node.
struct Line<'a> {
    model: &'a TorusModel,
    h: f64,
    b: f64,
    p0: Vec<f64>,
    dp0: Vec<f64>,
    pin: usize,
}

impl<'a> Line<'a> {
    fn new(model: &'a TorusModel) -> Self {
        let g = model.phi0();
        let h = g.spacing()[0];
        let v = g.values();
        let p0: Vec<f64> = v.windows(2).map(|w| (w[1] - w[0]) / h).collect();
        let dp0 = p0.windows(2).map(|w| w[1] - w[0]).collect();
        let lw = model.log_weight();
        let pin = 1 + (0..lw.len()).max_by(|&a, &b| lw[a].total_cmp(&lw[b])).unwrap_or(0);
        Self { model, h, b: model.b().b[0], p0, dp0, pin }
    }

    /// Slope increments across interior nodes, formed without differencing nearby slopes.
    fn increments(&self, psi: &[f64]) -> Vec<f64> {
        self.dp0
            .iter()
            .enumerate()
            .map(|(i, d)| d + (psi[i + 2] - 2.0 * psi[i + 1] + psi[i]) / (2.0 * self.h))
            .collect()
    }

    fn slopes(&self, psi: &[f64]) -> Vec<f64> {
        self.p0.iter().enumerate().map(|(j, p)| p + (psi[j + 1] - psi[j]) / (2.0 * self.h)).collect()
    }

    fn coefficients(&self, dp: f64) -> (f64, f64) {
        let c = if self.b == 0.0 { 1.0 / dp } else { self.b / (self.b * dp).exp_m1() };
        (c + self.b, c)
    }
}

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut den = diag[0];
    if den == 0.0 || !den.is_finite() {
        return None;
    }
    c[0] = upper[0] / den;
    d[0] = rhs[0] / den;
    for i in 1..n {
        den = diag[i] - lower[i] * c[i - 1];
        if den == 0.0 || !den.is_finite() {
            return None;
        }
        c[i] = upper[i] / den;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / den;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Some(d)
}

impl Discretization for Line<'_> {
    fn model(&self) -> &TorusModel {
        self.model
    }

    fn tie(&self, psi: &mut [f64]) {
        let n = self.p0.len() + 1;
        psi[0] = psi[1];
        psi[n - 1] = psi[n - 2];
    }

    fn gauge(&self, z: &mut [f64]) {
        let c = z[1];
        let n = self.p0.len() + 1;
        z[..n].iter_mut().for_each(|v| *v -= c);
    }

    fn residual(&self, z: &[f64], fs: &[f64]) -> Option<Vec<f64>> {
        let p = self.slopes(z);
        let dps = self.increments(z);
        let lw = self.model.log_weight();
        let mut r = Vec::with_capacity(lw.len());
        for k in 1..p.len() {
            let dp = dps[k - 1];
            if !(dp > 0.0) {
                return None;
            }
            r.push(log_flux_increment(self.b, p[k - 1], dp) - lw[k - 1] - fs[k - 1]);
        }
        Some(r)
    }

    fn newton_direction(&self, z: &[f64], r: &[f64]) -> Option<Vec<f64>> {
        let dps = self.increments(z);
        let n = dps.len() + 2;
        let m = n - 2;
        let (mut lo, mut di, mut up) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        for i in 0..m {
            let (a, c) = self.coefficients(dps[i]);
            lo[i] = a / (2.0 * self.h);
            up[i] = c / (2.0 * self.h);
            di[i] = -(lo[i] + up[i]);
        }
        di[0] += lo[0];
        lo[0] = 0.0;
        di[m - 1] += up[m - 1];
        up[m - 1] = 0.0;
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        // equation `pin` is implied by the others through mass conservation; δ vanishes at node 1
        let pin = self.pin - 1;
        let mut delta = vec![0.0; n + 1];
        let mut e = 0.0;
        for i in 0..pin {
            let (a, c) = self.coefficients(dps[i]);
            e = (2.0 * self.h * rhs[i] + a * e) / c;
            delta[i + 2] = delta[i + 1] + e;
        }
        if pin + 1 < m {
            let mut l = lo[pin + 1..].to_vec();
            let mut rr = rhs[pin + 1..].to_vec();
            rr[0] -= l[0] * delta[pin + 1];
            l[0] = 0.0;
            let right = thomas(&l, &di[pin + 1..], &up[pin + 1..], &rr)?;
            delta[pin + 2..n - 1].copy_from_slice(&right);
        }
        self.tie(&mut delta);
        Some(delta)
    }

    fn measure(&self, psi: &[f64]) -> Option<Vec<f64>> {
        let p = self.slopes(psi);
        let dps = self.increments(psi);
        (1..p.len())
            .map(|k| {
                let dp = dps[k - 1];
                (dp > 0.0).then(|| log_flux_increment(self.b, p[k - 1], dp).exp())
            })
            .collect()
    }

    fn monitors(&self, psi: &[f64]) -> Monitors {
        monitors_generic(self.model, psi)
    }
}

/// Dense 2D scheme with central differences, one pinned node and a compatibility constant.
struct Plane<'a> {
    model: &'a TorusModel,
    shape: [usize; 2],
    h: [f64; 2],
    interior: Vec<[usize; 2]>,
    column: Vec<Option<usize>>,
    a0: Vec<[f64; 3]>,
    grad0: Vec<[f64; 2]>,
}

impl<'a> Plane<'a> {
    fn new(model: &'a TorusModel) -> Self {
        let g = model.phi0();
        let shape = [g.shape()[0], g.shape()[1]];
        let h = [g.spacing()[0], g.spacing()[1]];
        let interior: Vec<[usize; 2]> = g.interior_nodes(1).into_iter().map(|v| [v[0], v[1]]).collect();
        let lw = model.log_weight();
        let pin = (0..lw.len()).max_by(|&a, &b| lw[a].total_cmp(&lw[b])).unwrap_or(0);
        let mut column = vec![None; g.len()];
        let mut next = 0;
        for (k, idx) in interior.iter().enumerate() {
            if k != pin {
                column[g.flat(idx)] = Some(next);
                next += 1;
            }
        }
        let a0 = interior
            .iter()
            .map(|idx| {
                let hs = g.hessian(idx, Stencil::Second);
                [hs[0][0], hs[0][1], hs[1][1]]
            })
            .collect();
        let grad0 = interior
            .iter()
            .map(|idx| {
                let gr = g.gradient(idx, Stencil::Second);
                [gr[0], gr[1]]
            })
            .collect();
        Self { model, shape, h, interior, column, a0, grad0 }
    }

    fn flat(&self, i: usize, j: usize) -> usize {
        i * self.shape[1] + j
    }

    fn ghost(&self, i: usize, j: usize) -> usize {
        self.flat(i.clamp(1, self.shape[0] - 2), j.clamp(1, self.shape[1] - 2))
    }

    /// Metric `φ₀ + ψ/2` hessian and `ψ` gradient at interior node k.
    fn local(&self, psi: &[f64], k: usize) -> ([f64; 3], [f64; 2]) {
        let [i, j] = self.interior[k];
        let v = |a: usize, b: usize| psi[self.flat(a, b)];
        let [h0, h1] = self.h;
        let c = v(i, j);
        let d00 = (v(i + 1, j) - 2.0 * c + v(i - 1, j)) / (h0 * h0);
        let d11 = (v(i, j + 1) - 2.0 * c + v(i, j - 1)) / (h1 * h1);
        let d01 = (v(i + 1, j + 1) - v(i + 1, j - 1) - v(i - 1, j + 1) + v(i - 1, j - 1)) / (4.0 * h0 * h1);
        let g = [(v(i + 1, j) - v(i - 1, j)) / (2.0 * h0), (v(i, j + 1) - v(i, j - 1)) / (2.0 * h1)];
        let a0 = self.a0[k];
        ([a0[0] + 0.5 * d00, a0[1] + 0.5 * d01, a0[2] + 0.5 * d11], g)
    }

    fn log_det(a: &[f64; 3]) -> Option<f64> {
        let det = a[0] * a[2] - a[1] * a[1];
        (a[0] > 0.0 && det > 0.0).then(|| det.ln())
    }
}

impl Discretization for Plane<'_> {
    fn model(&self) -> &TorusModel {
        self.model
    }

    fn tie(&self, psi: &mut [f64]) {
        for i in 0..self.shape[0] {
            for j in 0..self.shape[1] {
                let g = self.ghost(i, j);
                let f = self.flat(i, j);
                if g != f {
                    psi[f] = psi[g];
                }
            }
        }
    }

    fn residual(&self, z: &[f64], fs: &[f64]) -> Option<Vec<f64>> {
        let lambda = z[z.len() - 1];
        let b = &self.model.b().b;
        (0..self.interior.len())
            .map(|k| {
                let (a, g) = self.local(z, k);
                let ld = Self::log_det(&a)?;
                let ld0 = Self::log_det(&self.a0[k])?;
                Some(ld - ld0 - 0.5 * (b[0] * g[0] + b[1] * g[1]) - fs[k] + lambda)
            })
            .collect()
    }

    fn newton_direction(&self, z: &[f64], r: &[f64]) -> Option<Vec<f64>> {
        let m = self.interior.len();
        let b = &self.model.b().b;
        let [h0, h1] = self.h;
        let mut jac = DMatrix::<f64>::zeros(m, m);
        for k in 0..m {
            let (a, _) = self.local(z, k);
            let det = a[0] * a[2] - a[1] * a[1];
            let inv = [a[2] / det, -a[1] / det, a[0] / det];
            let [i, j] = self.interior[k];
            let mut add = |di: isize, dj: isize, coef: f64| {
                let q = self.ghost((i as isize + di) as usize, (j as isize + dj) as usize);
                if let Some(col) = self.column[q] {
                    jac[(k, col)] += coef;
                }
            };
            add(0, 0, -inv[0] / (h0 * h0) - inv[2] / (h1 * h1));
            for s in [-1isize, 1] {
                let sf = s as f64;
                add(s, 0, 0.5 * inv[0] / (h0 * h0) - 0.25 * b[0] * sf / h0);
                add(0, s, 0.5 * inv[2] / (h1 * h1) - 0.25 * b[1] * sf / h1);
                for t in [-1isize, 1] {
                    add(s, t, 2.0 * inv[1] * 0.5 * sf * t as f64 / (4.0 * h0 * h1));
                }
            }
            jac[(k, m - 1)] = 1.0;
        }
        let rhs = DVector::from_iterator(m, r.iter().map(|v| -v));
        let sol = jac.lu().solve(&rhs)?;
        let mut delta = vec![0.0; z.len()];
        for (q, col) in self.column.iter().enumerate() {
            if let Some(c) = col {
                delta[q] = sol[*c];
            }
        }
        self.tie(&mut delta);
        delta[z.len() - 1] = sol[m - 1];
        Some(delta)
    }

    fn measure(&self, psi: &[f64]) -> Option<Vec<f64>> {
        let b = &self.model.b().b;
        let cell = self.h[0] * self.h[1];
        (0..self.interior.len())
            .map(|k| {
                let (a, g) = self.local(psi, k);
                let ld = Self::log_det(&a)?;
                let gr = [self.grad0[k][0] + 0.5 * g[0], self.grad0[k][1] + 0.5 * g[1]];
                Some((ld - b[0] * gr[0] - b[1] * gr[1]).exp() * cell)
            })
            .collect()
    }

    fn monitors(&self, psi: &[f64]) -> Monitors {
        monitors_generic(self.model, psi)
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn newton(d: &dyn Discretization, z0: &[f64], fs: &[f64], opts: &ContinuityOptions) -> std::result::Result<(Vec<f64>, f64, usize), Failure> {
    let mut z = z0.to_vec();
    d.gauge(&mut z);
    let mut r = d.residual(&z, fs).ok_or(Failure::Positivity)?;
    for it in 0..opts.max_newton {
        let sup = sup_norm(&r);
        if sup < opts.newton_tol {
            return Ok((z, sup, it));
        }
        let dz = d.newton_direction(&z, &r).ok_or(Failure::Diverged)?;
        let n0 = l2(&r);
        let mut t = 1.0;
        let mut accepted = None;
        let mut only_positivity = true;
        for _ in 0..40 {
            let mut cand: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a + t * b).collect();
            let last = cand.len() - 1;
            d.tie(&mut cand[..last]);
            d.gauge(&mut cand);
            if let Some(rc) = d.residual(&cand, fs) {
                only_positivity = false;
                if l2(&rc) <= (1.0 - 1e-4 * t) * n0 || sup_norm(&rc) < opts.newton_tol {
                    accepted = Some((cand, rc));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((zc, rc)) => {
                z = zc;
                r = rc;
            }
            None => return Err(if only_positivity { Failure::Positivity } else { Failure::Diverged }),
        }
    }
    let sup = sup_norm(&r);
    if sup < opts.newton_tol {
        Ok((z, sup, opts.max_newton))
    } else {
        Err(Failure::Diverged)
    }
}

struct Driver<'a> {
    d: Box<dyn Discretization + 'a>,
    f: &'a GridFunction,
    opts: ContinuityOptions,
}

impl Driver<'_> {
    fn data(&self, s: f64) -> (GridFunction, Vec<f64>) {
        let fs = data_path(self.f, s);
        let interior = interior_values(self.d.model(), fs.values());
        (fs, interior)
    }

    /// Solves at `s_to` from the solution at `s_from`, splitting the step on failure.
    fn advance(&self, z: &[f64], s_from: f64, s_to: f64, depth: usize) -> std::result::Result<(Vec<f64>, f64, usize), (Failure, f64)> {
        let (_, fs) = self.data(s_to);
        match newton(self.d.as_ref(), z, &fs, &self.opts) {
            Ok(ok) => Ok(ok),
            Err(e) if depth >= self.opts.max_halvings => Err((e, s_to)),
            Err(_) => {
                let mid = 0.5 * (s_from + s_to);
                let (zm, _, i1) = self.advance(z, s_from, mid, depth + 1)?;
                let (zt, res, i2) = self.advance(&zm, mid, s_to, depth + 1)?;
                Ok((zt, res, i1 + i2))
            }
        }
    }

    /// Records a state; `z` may carry any additive constant, the stored ψ has weighted mean zero.
    fn state(&self, z: &[f64], s: f64, residual_norm: f64, iterations: usize) -> ContinuityState {
        let model = self.d.model();
        let n = z.len() - 1;
        let w0 = model.weight();
        let total0: f64 = w0.iter().sum();
        let mean = interior_values(model, &z[..n]).iter().zip(&w0).map(|(a, b)| a * b).sum::<f64>() / total0;
        let psi: Vec<f64> = z[..n].iter().map(|v| v - mean).collect();
        let w = self.d.measure(&z[..n]).unwrap_or_else(|| vec![f64::NAN; w0.len()]);
        let inner = interior_values(model, &psi);
        let weighted_mean = inner.iter().zip(&w0).map(|(a, b)| a * b).sum::<f64>() / total0;
        let functional_i = inner.iter().zip(w0.iter().zip(&w)).map(|(p, (a, b))| p * (a - b)).sum();
        let functional_j = super::functionals::j_linear_raw(self.d.as_ref(), &psi, 16);
        let mut monitors = self.d.monitors(&z[..n]);
        monitors.sup_psi -= mean;
        monitors.inf_psi -= mean;
        let (fs, _) = self.data(s);
        let far = model.phi0().flat(&model.far_field_node());
        ContinuityState {
            s,
            psi: model.phi0().with_values(psi).expect("same shape"),
            c_s: fs.values()[far],
            f_s: fs,
            residual_norm,
            newton_iterations: iterations,
            mass: w.iter().sum(),
            compat_shift: z[n],
            weighted_mean,
            monitors,
            functional_i,
            functional_j,
        }
    }
}

/// Runs the path `s = 0, 1/steps, …, 1`, warm-starting each step from the previous solution.
pub fn continuity_solve(model: &TorusModel, f: &GridFunction, opts: &ContinuityOptions) -> Result<Vec<ContinuityState>> {
    if f.shape() != model.phi0().shape() {
        return Err(GridError::ShapeMismatch { expected: model.phi0().len(), found: f.len() }.into());
    }
    let steps = opts.steps.max(1);
    let driver = Driver { d: discretization(model), f, opts: *opts };
    let mut z = vec![0.0; model.phi0().len() + 1];
    let r0 = driver.d.residual(&z, &driver.data(0.0).1).ok_or(ModelError::PositivityLoss { s: 0.0, last: None })?;
    let mut states = vec![driver.state(&z, 0.0, sup_norm(&r0), 0)];
    for i in 1..=steps {
        let s_from = (i - 1) as f64 / steps as f64;
        let s = i as f64 / steps as f64;
        match driver.advance(&z, s_from, s, 0) {
            Ok((zn, res, iters)) => {
                z = zn;
                states.push(driver.state(&z, s, res, iters));
            }
            Err((kind, s_fail)) => {
                let last = states.last().cloned().map(Box::new);
                return Err(match kind {
                    Failure::Diverged => ModelError::NewtonDiverged { s: s_fail, last },
                    Failure::Positivity => ModelError::PositivityLoss { s: s_fail, last },
                });
            }
        }
    }
    Ok(states)
}

/// One CSV row per solved step `s > 0` with the residual, mass, functionals and monitors.
pub fn path_csv(states: &[ContinuityState]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "s",
        "residual_norm",
        "newton_iterations",
        "c_s",
        "mass",
        "compat_shift",
        "weighted_mean",
        "sup_psi",
        "inf_psi",
        "inf_xpsi",
        "sup_xpsi",
        "sup_ddbar",
        "I",
        "J",
        "I_minus_J",
    ])
    .expect("in-memory write");
    for st in states.iter().filter(|st| st.s > 0.0) {
        let m = &st.monitors;
        let row = [
            st.s,
            st.residual_norm,
            st.c_s,
            st.mass,
            st.compat_shift,
            st.weighted_mean,
            m.sup_psi,
            m.inf_psi,
            m.inf_xpsi,
            m.sup_xpsi,
            m.sup_ddbar,
            st.functional_i,
            st.functional_j,
            st.functional_i - st.functional_j,
        ];
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        rec.insert(2, st.newton_iterations.to_string());
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::normalize_data;

    /// Flux integration from the right end, independent of the Newton solver.
    fn flux_oracle(model: &TorusModel, fs: &[f64]) -> Vec<f64> {
        let g = model.phi0();
        let h = g.spacing()[0];
        let v = g.values();
        let n = v.len();
        let lw = model.log_weight();
        let b = model.b().b[0];
        let p_end = (v[n - 1] - v[n - 2]) / h;
        // log of e^{-b p}/b at each slope, accumulated leftwards
        let mut log_tail = vec![0.0; n - 1];
        log_tail[n - 2] = -b * p_end - b.ln();
        for k in (1..n - 1).rev() {
            let a = log_tail[k];
            let c = lw[k - 1] + fs[k - 1];
            let m = a.max(c);
            log_tail[k - 1] = m + ((a - m).exp() + (c - m).exp()).ln();
        }
        let slopes: Vec<f64> = log_tail.iter().map(|lt| -(lt + b.ln()) / b).collect();
        let mut phi = vec![v[0]; n];
        for k in 1..n {
            phi[k] = phi[k - 1] + h * slopes[k - 1];
        }
        let mut psi: Vec<f64> = phi.iter().zip(v).map(|(a, b)| 2.0 * (a - b)).collect();
        let w = model.weight();
        let mean = psi[1..n - 1].iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>();
        psi.iter_mut().for_each(|x| *x -= mean);
        psi
    }

    #[test]
    fn trivial_start_and_oracle_agreement() {
        let model = TorusModel::gaussian(-8.0, 6.0, 0.02).unwrap();
        let (f, _) = normalize_data(&model, &model.bumped_data(0.5, &[0.0], 1.0)).unwrap();
        let states = continuity_solve(&model, &f, &ContinuityOptions { steps: 5, ..Default::default() }).unwrap();
        assert_eq!(states[0].residual_norm, 0.0);
        assert!(states[0].psi.values().iter().all(|&v| v == 0.0));
        let last = states.last().unwrap();
        assert_eq!(last.s, 1.0);
        assert!(last.residual_norm < 1e-10);
        let fs = interior_values(&model, f.values());
        let oracle = flux_oracle(&model, &fs);
        // the final cells of the right end carry masses below underflow, skip them
        let n = oracle.len();
        let err = (0..n - 40).map(|k| (oracle[k] - last.psi.values()[k]).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
        let m0 = states[0].mass;
        assert!(states.iter().all(|s| ((s.mass - m0) / m0).abs() < 1e-12));
        assert!(states.iter().all(|s| s.weighted_mean.abs() < 1e-12));
        assert!(states.iter().all(|s| s.functional_i - s.functional_j >= -1e-10));
    }

    #[test]
    fn coarse_planar_product_run() {
        use crate::lattice::{HalfSpace, Polyhedron};
        use crate::potential::ProductPotential;
        use crate::integrals::VectorFieldParam;
        let p = Polyhedron::new(
            2,
            vec![HalfSpace::from_ints(&[1, 0], 1), HalfSpace::from_ints(&[0, 1], 1), HalfSpace::from_ints(&[0, -1], 1)],
        )
        .unwrap();
        let model = TorusModel::new(
            p,
            VectorFieldParam::new(vec![1.0, 0.0]),
            &ProductPotential::product_soliton(),
            vec![-4.0, -4.0],
            vec![0.5, 0.5],
            vec![17, 17],
        )
        .unwrap();
        assert!(model.reference_data().values().iter().all(|v| v.abs() < 1e-12));
        let (f, _) = normalize_data(&model, &model.bumped_data(0.4, &[0.0, 0.0], 1.0)).unwrap();
        let states = continuity_solve(&model, &f, &ContinuityOptions { steps: 4, ..Default::default() }).unwrap();
        let last = states.last().unwrap();
        assert!(last.residual_norm < 1e-10);
        assert!(last.weighted_mean.abs() < 1e-12);
        assert!(last.compat_shift.abs() < 0.1);
    }
}
