//! Exponential integrals `∫_P e^{-<b,x>} dx` with first and second moments: exact vertex sums
//! and an independent nested quadrature.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::lattice::Polyhedron;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegralError {
    #[error("integral diverges: <b, w> <= 0 for recession ray {ray:?}")]
    Divergent { ray: Vec<i64> },
    #[error("b is not generic: <b, e> = {pairing:e} for edge {edge:?} at vertex {vertex:?}")]
    NonGeneric { vertex: Vec<f64>, edge: Vec<i64>, pairing: f64 },
    #[error("truncation too small: tail estimate {tail:e} exceeds tolerance {tolerance:e}")]
    TruncationTooSmall { tail: f64, tolerance: f64 },
    #[error("b has length {found}, polyhedron has dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// A point `b` of the Lie algebra of the torus, in the standard basis.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorFieldParam {
    pub b: Vec<f64>,
}

impl VectorFieldParam {
    pub fn new(b: Vec<f64>) -> Self {
        Self { b }
    }

    pub fn is_finite(&self) -> bool {
        self.b.iter().all(|v| v.is_finite())
    }
}

impl From<Vec<f64>> for VectorFieldParam {
    fn from(b: Vec<f64>) -> Self {
        Self { b }
    }
}

#[derive(Clone, Debug)]
pub struct ExpIntegralResult {
    pub value: f64,
    /// Derivative of `value` in `b`, i.e. minus the first moment.
    pub gradient: DVector<f64>,
    /// Second moment, the hessian of `value` in `b`.
    pub hessian: DMatrix<f64>,
    pub convergent: bool,
}

impl ExpIntegralResult {
    fn zero(n: usize) -> Self {
        Self { value: 0.0, gradient: DVector::zeros(n), hessian: DMatrix::zeros(n, n), convergent: true }
    }

    fn axpy(&mut self, w: f64, other: &ExpIntegralResult) {
        self.value += w * other.value;
        self.gradient += &other.gradient * w;
        self.hessian += &other.hessian * w;
    }

    fn scaled(&self, w: f64) -> Self {
        Self { value: self.value * w, gradient: &self.gradient * w, hessian: &self.hessian * w, convergent: self.convergent }
    }

    pub fn scale(&self, prefactor: f64) -> Self {
        self.scaled(prefactor)
    }
}

fn norm(b: &[f64]) -> f64 {
    b.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_dim(p: &Polyhedron, b: &[f64]) -> Result<(), IntegralError> {
    if b.len() != p.dim() {
        return Err(IntegralError::DimensionMismatch { expected: p.dim(), found: b.len() });
    }
    Ok(())
}

pub fn genericity_eps(b: &[f64]) -> f64 {
    1e-9 * norm(b)
}

pub fn converges(p: &Polyhedron, b: &[f64]) -> bool {
    p.recession_rays().iter().all(|w| w.dot_f64(b) > 0.0)
}

fn require_convergence(p: &Polyhedron, b: &[f64]) -> Result<(), IntegralError> {
    check_dim(p, b)?;
    match p.recession_rays().iter().find(|w| w.dot_f64(b) <= 0.0) {
        Some(w) => Err(IntegralError::Divergent { ray: w.coords().to_vec() }),
        None => Ok(()),
    }
}

/// Smallest `|<b, e>|` over edges joining two vertices; the vertex sum cancels when it is small.
pub fn min_bounded_pairing(p: &Polyhedron, b: &[f64]) -> f64 {
    p.vertices()
        .iter()
        .flat_map(|v| v.edges_f64().iter().zip(&v.unbounded).filter(|(_, &u)| !u).map(|(e, _)| dot(e, b).abs()))
        .fold(f64::INFINITY, f64::min)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Vertex-cone sum. Each cone contributes `|det E| e^{-<b,v>} / Π <b, e_i>`; for Delzant
/// polyhedra `|det E| = 1`.
pub fn brion_eval(p: &Polyhedron, b: &[f64]) -> Result<ExpIntegralResult, IntegralError> {
    require_convergence(p, b)?;
    let n = p.dim();
    let eps = genericity_eps(b);
    let mut out = ExpIntegralResult::zero(n);
    for v in p.vertices() {
        let pairings: Vec<f64> = v.edges_f64().iter().map(|e| dot(e, b)).collect();
        for (k, &pk) in pairings.iter().enumerate() {
            if pk.abs() <= eps {
                return Err(IntegralError::NonGeneric {
                    vertex: v.point_f64().to_vec(),
                    edge: v.edge_dirs[k].coords().to_vec(),
                    pairing: pk,
                });
            }
        }
        let multiplicity = v.edge_det().unsigned_abs() as f64;
        let term = multiplicity * (-dot(v.point_f64(), b)).exp() / pairings.iter().product::<f64>();
        let mut w = DVector::from_column_slice(v.point_f64());
        let mut edge_part = DMatrix::zeros(n, n);
        for (e, &pk) in v.edges_f64().iter().zip(&pairings) {
            let e = DVector::from_column_slice(e);
            w += &e / pk;
            edge_part += &e * e.transpose() / (pk * pk);
        }
        out.value += term;
        out.gradient -= &w * term;
        out.hessian += (&w * w.transpose() + edge_part) * term;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
pub struct PerturbationOptions {
    /// Upper bound on the coarsest perturbation size.
    pub max_delta: f64,
    pub levels: usize,
}

impl Default for PerturbationOptions {
    fn default() -> Self {
        Self { max_delta: 0.4, levels: 4 }
    }
}

/// Orthonormal directions in generic position with respect to small lattice vectors.
fn perturbation_directions(n: usize) -> Vec<Vec<f64>> {
    match n {
        1 => vec![vec![1.0]],
        2 => {
            let (s, c) = 0.4f64.sin_cos();
            vec![vec![c, s], vec![-s, c]]
        }
        _ => {
            // Rodrigues rotation of the standard basis about a generic axis.
            let axis = [1.0, std::f64::consts::SQRT_2, 3f64.sqrt()];
            let an = norm(&axis);
            let k: Vec<f64> = axis.iter().map(|v| v / an).collect();
            let (s, c) = 0.7f64.sin_cos();
            (0..n)
                .map(|j| {
                    let e: Vec<f64> = (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect();
                    let kxe = [k[1] * e[2] - k[2] * e[1], k[2] * e[0] - k[0] * e[2], k[0] * e[1] - k[1] * e[0]];
                    let kde = dot(&k, &e);
                    (0..n).map(|i| e[i] * c + kxe[i] * s + k[i] * kde * (1.0 - c)).collect()
                })
                .collect()
        }
    }
}

/// Symmetric average of vertex sums at `b ± δ d_k`, Richardson-extrapolated in `δ²`.
/// Valid through removable singularities of the vertex sum.
pub fn perturbed_eval(p: &Polyhedron, b: &[f64]) -> Result<ExpIntegralResult, IntegralError> {
    perturbed_eval_with(p, b, PerturbationOptions::default())
}

pub fn perturbed_eval_with(
    p: &Polyhedron,
    b: &[f64],
    opts: PerturbationOptions,
) -> Result<ExpIntegralResult, IntegralError> {
    require_convergence(p, b)?;
    let n = p.dim();
    let dirs = perturbation_directions(n);
    // Coarse enough to keep cancellation small, fine enough for the Taylor series in δ to
    // converge fast: it is limited by the diameter and by the distance of b to the cone boundary.
    let pts: Vec<&[f64]> = p.vertices().iter().map(|v| v.point_f64()).collect();
    let diameter = pts
        .iter()
        .flat_map(|a| pts.iter().map(move |b| norm(&a.iter().zip(b.iter()).map(|(x, y)| x - y).collect::<Vec<_>>())))
        .fold(0.0, f64::max);
    let mut delta = opts.max_delta.min(1.1 / diameter.max(1e-300));
    for w in p.recession_rays() {
        let wf = w.to_f64();
        let wb = w.dot_f64(b);
        delta = delta.min(0.1 * wb / norm(&wf));
        let spread = dirs.iter().map(|d| w.dot_f64(d).abs()).fold(0.0, f64::max);
        if spread > 0.0 {
            delta = delta.min(0.5 * wb / spread);
        }
    }
    let levels = opts.levels.max(1);
    'attempt: for _ in 0..16 {
        let mut table: Vec<ExpIntegralResult> = Vec::with_capacity(levels);
        for j in 0..levels {
            let dj = delta / f64::powi(2.0, j as i32);
            let mut avg = ExpIntegralResult::zero(n);
            for d in &dirs {
                for sign in [1.0, -1.0] {
                    let bp: Vec<f64> = b.iter().zip(d).map(|(bi, di)| bi + sign * dj * di).collect();
                    match brion_eval(p, &bp) {
                        Ok(r) => avg.axpy(1.0 / (2 * n) as f64, &r),
                        Err(IntegralError::NonGeneric { .. }) => {
                            delta *= 0.93;
                            continue 'attempt;
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            table.push(avg);
        }
        return Ok(richardson(table));
    }
    Err(IntegralError::NonGeneric { vertex: vec![], edge: vec![], pairing: 0.0 })
}

fn richardson(mut column: Vec<ExpIntegralResult>) -> ExpIntegralResult {
    let mut factor = 1.0;
    while column.len() > 1 {
        factor *= 4.0;
        column = column
            .windows(2)
            .map(|w| {
                let mut r = w[1].scaled(factor / (factor - 1.0));
                r.axpy(-1.0 / (factor - 1.0), &w[0]);
                r
            })
            .collect();
    }
    column.pop().expect("nonempty table")
}

/// Bounded-edge pairings below this are routed through [`perturbed_eval`].
pub const SINGULAR_PAIRING: f64 = 0.02;

/// Vertex sum when `b` is comfortably generic, the perturbed average otherwise.
pub fn exp_integral(p: &Polyhedron, b: &[f64]) -> Result<ExpIntegralResult, IntegralError> {
    require_convergence(p, b)?;
    if min_bounded_pairing(p, b) < SINGULAR_PAIRING {
        perturbed_eval(p, b)
    } else {
        brion_eval(p, b)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QuadratureOptions {
    /// Truncation `<w, x> <= R` applied for every recession ray `w`.
    pub truncation: f64,
    pub cells_per_axis: usize,
    /// Relative tolerance on the tail estimate.
    pub tail_tolerance: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { truncation: 60.0, cells_per_axis: 800, tail_tolerance: 1e-9 }
    }
}

#[derive(Clone, Debug)]
pub struct QuadratureResult {
    pub result: ExpIntegralResult,
    pub tail_estimate: f64,
}

#[derive(Clone, Debug)]
struct FloatHalf {
    normal: Vec<f64>,
    offset: f64,
}

#[derive(Clone, Debug)]
struct Moments {
    mass: f64,
    first: Vec<f64>,
    second: Vec<Vec<f64>>,
}

impl Moments {
    fn zero(n: usize) -> Self {
        Self { mass: 0.0, first: vec![0.0; n], second: vec![vec![0.0; n]; n] }
    }

    fn combine(&mut self, w: f64, other: &Moments) {
        self.mass += w * other.mass;
        for (a, b) in self.first.iter_mut().zip(&other.first) {
            *a += w * b;
        }
        for (ra, rb) in self.second.iter_mut().zip(&other.second) {
            for (a, b) in ra.iter_mut().zip(rb) {
                *a += w * b;
            }
        }
    }

    /// Moments in `(t, x')` from cross-section moments in `x'`, weighted by `w`.
    fn add_lifted(&mut self, w: f64, t: f64, inner: &Moments) {
        self.mass += w * inner.mass;
        self.first[0] += w * t * inner.mass;
        self.second[0][0] += w * t * t * inner.mass;
        for j in 0..inner.first.len() {
            self.first[j + 1] += w * inner.first[j];
            self.second[0][j + 1] += w * t * inner.first[j];
            self.second[j + 1][0] += w * t * inner.first[j];
            for k in 0..inner.first.len() {
                self.second[j + 1][k + 1] += w * inner.second[j][k];
            }
        }
    }
}

fn solve_small(a: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = rhs.len();
    let m = DMatrix::from_fn(n, n, |i, j| a[i][j]);
    let lu = m.lu();
    let det = lu.determinant();
    let scale: f64 = a.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    if det.abs() <= 1e-12 * scale.powi(n as i32) {
        return None;
    }
    lu.solve(&DVector::from_column_slice(rhs)).map(|x| x.iter().copied().collect())
}

fn float_vertices(hs: &[FloatHalf], dim: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut idx: Vec<usize> = (0..dim).collect();
    if hs.len() < dim {
        return out;
    }
    loop {
        let a: Vec<Vec<f64>> = idx.iter().map(|&i| hs[i].normal.clone()).collect();
        let rhs: Vec<f64> = idx.iter().map(|&i| -hs[i].offset).collect();
        if let Some(x) = solve_small(&a, &rhs) {
            let feasible = hs.iter().all(|h| dot(&h.normal, &x) + h.offset >= -1e-9 * (1.0 + h.offset.abs()));
            if feasible {
                out.push(x);
            }
        }
        // Next combination.
        let mut k = dim;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if idx[k] < hs.len() - dim + k {
                idx[k] += 1;
                for j in (k + 1)..dim {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn midpoint_nodes(lo: f64, hi: f64, cells: usize) -> impl Iterator<Item = f64> {
    let h = (hi - lo) / cells as f64;
    (0..cells).map(move |i| lo + (i as f64 + 0.5) * h)
}

/// Composite midpoint on `[lo, hi]` at `cells`, `cells / 2` and `cells / 4` cells, combined by
/// two Romberg steps.
fn segment_moments<F: FnMut(f64) -> Moments>(lo: f64, hi: f64, cells: usize, n: usize, mut inner: F) -> Moments {
    let cells = (cells.max(8) + 3) & !3;
    let mut levels: Vec<Moments> = Vec::with_capacity(3);
    for count in [cells, cells / 2, cells / 4] {
        let mut acc = Moments::zero(n);
        let h = (hi - lo) / count as f64;
        for t in midpoint_nodes(lo, hi, count) {
            let m = inner(t);
            acc.add_lifted(h, t, &m);
        }
        levels.push(acc);
    }
    let step = |fine: &Moments, coarse: &Moments, factor: f64| {
        let mut out = Moments::zero(n);
        out.combine(factor / (factor - 1.0), fine);
        out.combine(-1.0 / (factor - 1.0), coarse);
        out
    };
    let r1 = step(&levels[0], &levels[1], 4.0);
    let r1c = step(&levels[1], &levels[2], 4.0);
    step(&r1, &r1c, 16.0)
}

fn nested_moments(hs: &[FloatHalf], dim: usize, b: &[f64], cells: usize) -> Moments {
    let scale = |h: &FloatHalf| 1e-12 * (1.0 + h.offset.abs());
    if dim == 1 {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for h in hs {
            let nu = h.normal[0];
            if nu.abs() <= 1e-14 {
                if h.offset < -scale(h) {
                    return Moments::zero(1);
                }
            } else if nu > 0.0 {
                lo = lo.max(-h.offset / nu);
            } else {
                hi = hi.min(-h.offset / nu);
            }
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Moments::zero(1);
        }
        let unit = Moments { mass: 1.0, first: vec![], second: vec![] };
        return segment_moments(lo, hi, cells, 1, |t| unit.scaled_mass((-b[0] * t).exp()));
    }
    let verts = float_vertices(hs, dim);
    if verts.is_empty() {
        return Moments::zero(dim);
    }
    let mut breaks: Vec<f64> = verts.iter().map(|v| v[0]).collect();
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let span = breaks[breaks.len() - 1] - breaks[0];
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + span));
    let mut out = Moments::zero(dim);
    if span <= 0.0 {
        return out;
    }
    for seg in breaks.windows(2) {
        let (lo, hi) = (seg[0], seg[1]);
        let seg_cells = ((cells as f64) * (hi - lo) / span).ceil() as usize;
        let m = segment_moments(lo, hi, seg_cells.max(16), dim, |t| {
            let section: Vec<FloatHalf> = hs
                .iter()
                .map(|h| FloatHalf { normal: h.normal[1..].to_vec(), offset: h.offset + h.normal[0] * t })
                .collect();
            let weight = (-b[0] * t).exp();
            let inner = nested_moments(&section, dim - 1, &b[1..], cells);
            inner.scaled_all(weight)
        });
        out.combine(1.0, &m);
    }
    out
}

impl Moments {
    fn scaled_mass(&self, w: f64) -> Moments {
        Moments { mass: self.mass * w, first: vec![], second: vec![] }
    }

    fn scaled_all(mut self, w: f64) -> Moments {
        self.mass *= w;
        self.first.iter_mut().for_each(|v| *v *= w);
        self.second.iter_mut().flatten().for_each(|v| *v *= w);
        self
    }
}

fn truncated_halfspaces(p: &Polyhedron, r: f64) -> Vec<FloatHalf> {
    let mut hs: Vec<FloatHalf> = p
        .halfspaces()
        .iter()
        .map(|h| FloatHalf { normal: h.normal.to_f64(), offset: crate::lattice::rational::to_f64(&h.offset) })
        .collect();
    for w in p.recession_rays() {
        hs.push(FloatHalf { normal: w.to_f64().iter().map(|v| -v).collect(), offset: r });
    }
    hs
}

fn moments_to_result(m: Moments) -> ExpIntegralResult {
    let n = m.first.len();
    ExpIntegralResult {
        value: m.mass,
        gradient: DVector::from_iterator(n, m.first.iter().map(|v| -v)),
        hessian: DMatrix::from_fn(n, n, |i, j| m.second[i][j]),
        convergent: true,
    }
}

/// Nested midpoint quadrature with exact cross-sections, truncated at `<w, x> <= R`.
/// The tail beyond `R` is estimated from the runs at `R` and `R / 2`.
pub fn quadrature_oracle(p: &Polyhedron, b: &[f64], opts: QuadratureOptions) -> Result<QuadratureResult, IntegralError> {
    require_convergence(p, b)?;
    let n = p.dim();
    let full = moments_to_result(nested_moments(&truncated_halfspaces(p, opts.truncation), n, b, opts.cells_per_axis));
    let tail_estimate = if p.is_bounded() {
        0.0
    } else {
        let half = nested_moments(&truncated_halfspaces(p, opts.truncation / 2.0), n, b, opts.cells_per_axis);
        let kappa = p
            .recession_rays()
            .iter()
            .map(|w| w.dot_f64(b) / w.to_f64().iter().map(|v| v * v).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        let q = (-kappa * opts.truncation / 2.0).exp();
        (full.value - half.mass).abs() * q / (1.0 - q).max(1e-300)
    };
    let tolerance = opts.tail_tolerance * full.value.abs();
    if tail_estimate > tolerance {
        return Err(IntegralError::TruncationTooSmall { tail: tail_estimate, tolerance });
    }
    Ok(QuadratureResult { result: full, tail_estimate })
}
