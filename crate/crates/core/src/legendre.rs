//! Legendre–Fenchel transforms of grid potentials, Guillemin potentials and moment images.

use thiserror::Error;

use crate::grid::{DomainTag, GridError, GridFunction, Stencil};
use crate::lattice::{rational::to_f64, Polyhedron};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LegendreError {
    #[error("point lies on or outside facet {facet}")]
    OnBoundary { facet: usize },
    #[error("grid function is not convex near node {node:?}")]
    NotConvex { node: Vec<usize> },
    #[error("u - u_P is not bounded near facet {facet} (slope jump {jump:e} vs {reference:e} further in)")]
    BoundaryBehaviorViolated { facet: usize, jump: f64, reference: f64 },
    #[error("gradient range is narrower than two grid spacings")]
    DegenerateRange,
    #[error(transparent)]
    Grid(#[from] GridError),
}

const CONVEXITY_TOL: f64 = 1e-12;

fn slacks(p: &Polyhedron, x: &[f64]) -> Result<Vec<f64>, LegendreError> {
    p.halfspaces()
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let s = h.normal.dot_f64(x) + to_f64(&h.offset);
            if s > 0.0 {
                Ok(s)
            } else {
                Err(LegendreError::OnBoundary { facet: i })
            }
        })
        .collect()
}

/// `u_P(x) = ½ Σ (ℓ_i(x) + a_i) log(ℓ_i(x) + a_i)`.
pub fn guillemin_potential(p: &Polyhedron, x: &[f64]) -> Result<f64, LegendreError> {
    Ok(0.5 * slacks(p, x)?.iter().map(|s| s * s.ln()).sum::<f64>())
}

pub fn guillemin_gradient(p: &Polyhedron, x: &[f64]) -> Result<Vec<f64>, LegendreError> {
    let s = slacks(p, x)?;
    let mut g = vec![0.0; p.dim()];
    for (h, si) in p.halfspaces().iter().zip(&s) {
        for (gk, &nk) in g.iter_mut().zip(h.normal.coords()) {
            *gk += 0.5 * nk as f64 * (si.ln() + 1.0);
        }
    }
    Ok(g)
}

pub fn guillemin_hessian(p: &Polyhedron, x: &[f64]) -> Result<Vec<Vec<f64>>, LegendreError> {
    let s = slacks(p, x)?;
    let n = p.dim();
    let mut m = vec![vec![0.0; n]; n];
    for (h, si) in p.halfspaces().iter().zip(&s) {
        let nu = h.normal.to_f64();
        for i in 0..n {
            for j in 0..n {
                m[i][j] += 0.5 * nu[i] * nu[j] / si;
            }
        }
    }
    Ok(m)
}

fn require_convex(f: &GridFunction) -> Result<(), LegendreError> {
    match f.first_nonconvex(CONVEXITY_TOL) {
        Some(node) => Err(LegendreError::NotConvex { node }),
        None => Ok(()),
    }
}

fn dual_tag(tag: DomainTag) -> DomainTag {
    match tag {
        DomainTag::Xi => DomainTag::X,
        DomainTag::X => DomainTag::Xi,
    }
}

fn slopes_1d(f: &GridFunction) -> Vec<f64> {
    let h = f.spacing()[0];
    f.values().windows(2).map(|w| (w[1] - w[0]) / h).collect()
}

/// Discrete conjugate `max_k (<x, ξ_k> - f_k)` on a grid with the input spacing, covering the
/// range of discrete gradients shrunk by one spacing.
pub fn legendre_transform(f: &GridFunction) -> Result<GridFunction, LegendreError> {
    require_convex(f)?;
    match f.dim() {
        1 => {
            let h = f.spacing()[0];
            let p = slopes_1d(f);
            let (lo, hi) = (p[0] + h, p[p.len() - 1] - h);
            if hi - lo < h {
                return Err(LegendreError::DegenerateRange);
            }
            let count = ((hi - lo) / h).floor() as usize + 1;
            let mut values = Vec::with_capacity(count);
            let mut k = 0;
            for j in 0..count {
                let x = lo + j as f64 * h;
                while k < p.len() && p[k] < x {
                    k += 1;
                }
                values.push(x * f.coord(k) - f.values()[k]);
            }
            Ok(GridFunction::new(vec![lo], vec![h], vec![count], values, dual_tag(f.tag()))?)
        }
        _ => {
            let image = moment_image_unchecked(f);
            let sp = f.spacing();
            let mut origin = [0.0; 2];
            let mut shape = [0usize; 2];
            for a in 0..2 {
                let (lo, hi) = (image.lo[a] + sp[a], image.hi[a] - sp[a]);
                if hi - lo < sp[a] {
                    return Err(LegendreError::DegenerateRange);
                }
                origin[a] = lo;
                shape[a] = ((hi - lo) / sp[a]).floor() as usize + 1;
            }
            let nodes: Vec<(Vec<f64>, f64)> =
                (0..f.len()).map(|k| (f.node(&f.unflat(k)), f.values()[k])).collect();
            let g = GridFunction::sample_2d(origin, [sp[0], sp[1]], shape, dual_tag(f.tag()), |x0, x1| {
                nodes.iter().map(|(xi, v)| x0 * xi[0] + x1 * xi[1] - v).fold(f64::NEG_INFINITY, f64::max)
            })?;
            Ok(g)
        }
    }
}

/// The discrete conjugate of `f` at arbitrary points.
pub fn legendre_eval(f: &GridFunction, points: &[Vec<f64>]) -> Result<Vec<f64>, LegendreError> {
    require_convex(f)?;
    match f.dim() {
        1 => {
            let p = slopes_1d(f);
            Ok(points
                .iter()
                .map(|x| {
                    let k = p.partition_point(|&s| s < x[0]);
                    x[0] * f.coord(k) - f.values()[k]
                })
                .collect())
        }
        _ => {
            let nodes: Vec<(Vec<f64>, f64)> =
                (0..f.len()).map(|k| (f.node(&f.unflat(k)), f.values()[k])).collect();
            Ok(points
                .iter()
                .map(|x| nodes.iter().map(|(xi, v)| x[0] * xi[0] + x[1] * xi[1] - v).fold(f64::NEG_INFINITY, f64::max))
                .collect())
        }
    }
}

/// Axis-aligned hull of the discrete gradient image, inflated by `margin`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentImage {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub margin: Vec<f64>,
}

impl MomentImage {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(a, &v)| v >= self.lo[a] - self.margin[a] && v <= self.hi[a] + self.margin[a])
    }
}

fn moment_image_unchecked(f: &GridFunction) -> MomentImage {
    let n = f.dim();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    let mut margin = vec![0.0f64; n];
    for idx in f.interior_nodes(1) {
        let g = f.gradient(&idx, Stencil::Second);
        let hs = f.hessian(&idx, Stencil::Second);
        for a in 0..n {
            lo[a] = lo[a].min(g[a]);
            hi[a] = hi[a].max(g[a]);
            let jump: f64 = (0..n).map(|b| hs[a][b].abs() * f.spacing()[b]).sum();
            margin[a] = margin[a].max(jump);
        }
    }
    MomentImage { lo, hi, margin }
}

pub fn moment_image(f: &GridFunction) -> Result<MomentImage, LegendreError> {
    require_convex(f)?;
    Ok(moment_image_unchecked(f))
}

/// Inverse transform from a symplectic potential on the polytope side to a potential on the
/// ξ side. On 1D grids reaching within three spacings of a facet, `u - u_P` is spot-checked
/// for a logarithmic singularity there.
pub fn potential_from_symplectic(u: &GridFunction, p: Option<&Polyhedron>) -> Result<GridFunction, LegendreError> {
    require_convex(u)?;
    if let Some(p) = p {
        if u.dim() == 1 && p.dim() == 1 {
            check_boundary_1d(u, p)?;
        }
    }
    legendre_transform(u)
}

fn check_boundary_1d(u: &GridFunction, p: &Polyhedron) -> Result<(), LegendreError> {
    let h = u.spacing()[0];
    let n = u.len();
    if n < 12 {
        return Ok(());
    }
    for (facet, hs) in p.halfspaces().iter().enumerate() {
        let nu = hs.normal.coords()[0] as f64;
        let xb = -to_f64(&hs.offset) / nu;
        // Walk inward from the grid end nearest the facet.
        let (start, step): (usize, isize) = if nu > 0.0 { (0, 1) } else { (n - 1, -1) };
        if (u.coord(start) - xb).abs() > 3.0 * h + 1e-12 {
            continue;
        }
        let mut v = Vec::with_capacity(9);
        for m in 0..9 {
            let k = (start as isize + step * m as isize) as usize;
            let x = u.coord(k);
            match guillemin_potential(p, &[x]) {
                Ok(up) => v.push(u.values()[k] - up),
                Err(_) => break,
            }
        }
        if v.len() < 9 {
            continue;
        }
        let s: Vec<f64> = v.windows(2).map(|w| (w[1] - w[0]) / h).collect();
        let jump = (s[0] - s[1]).abs();
        let reference = (s[6] - s[7]).abs();
        let scale = 1.0 + s.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if jump > 3.0 * reference + 1e-6 * scale {
            return Err(LegendreError::BoundaryBehaviorViolated { facet, jump, reference });
        }
    }
    Ok(())
}

/// Exact conjugate of the piecewise-linear interpolant of a 1D grid potential: on
/// `[p_{k-1}, p_k]` it equals `x ξ_k - f_k`, where `p_k` are the discrete slopes.
#[derive(Clone, Debug)]
pub struct PiecewiseLinearConjugate {
    xi: Vec<f64>,
    f: Vec<f64>,
    slopes: Vec<f64>,
}

impl PiecewiseLinearConjugate {
    pub fn new(phi: &GridFunction) -> Result<Self, LegendreError> {
        require_convex(phi)?;
        Ok(Self { xi: (0..phi.len()).map(|k| phi.coord(k)).collect(), f: phi.values().to_vec(), slopes: slopes_1d(phi) })
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.slopes.partition_point(|&s| s < x);
        x * self.xi[k] - self.f[k]
    }

    /// `∫_lo^hi u(x) e^{-b x} dx`, integrated exactly piece by piece.
    pub fn weighted_integral(&self, b: f64, lo: f64, hi: f64) -> f64 {
        let mut total = 0.0;
        let mut left = lo;
        let mut k = self.slopes.partition_point(|&s| s < lo);
        while left < hi {
            let right = if k < self.slopes.len() { self.slopes[k].min(hi) } else { hi };
            if right > left {
                total += linear_exp_integral(self.xi[k], -self.f[k], b, left, right);
            }
            left = right;
            k += 1;
        }
        total
    }
}

/// `∫_lo^hi (α x + β) e^{-b x} dx`.
pub fn linear_exp_integral(alpha: f64, beta: f64, b: f64, lo: f64, hi: f64) -> f64 {
    if b == 0.0 {
        return alpha * 0.5 * (hi * hi - lo * lo) + beta * (hi - lo);
    }
    let prim = |x: f64| -(-b * x).exp() * (alpha * (x / b + 1.0 / (b * b)) + beta / b);
    prim(hi) - prim(lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::HalfSpace;

    fn interval() -> Polyhedron {
        Polyhedron::new(1, vec![HalfSpace::from_ints(&[1], 1), HalfSpace::from_ints(&[-1], 1)]).unwrap()
    }

    fn half_line() -> Polyhedron {
        Polyhedron::new(1, vec![HalfSpace::from_ints(&[1], 1)]).unwrap()
    }

    fn gaussian(xi: f64) -> f64 {
        (2.0 * xi).exp() / 4.0 - xi - 0.5
    }

    fn gaussian_dual(x: f64) -> f64 {
        0.5 * (x + 1.0) * (2.0 * (x + 1.0)).ln() - 0.5 * x
    }

    #[test]
    fn guillemin_values() {
        assert_eq!(guillemin_potential(&half_line(), &[0.0]).unwrap(), 0.0);
        let v = guillemin_potential(&interval(), &[0.5]).unwrap();
        assert!((v - 0.5 * (1.5 * 1.5f64.ln() + 0.5 * 0.5f64.ln())).abs() < 1e-15);
        assert!((v - 0.13081).abs() < 1e-5);
        assert!(matches!(guillemin_potential(&interval(), &[1.0]), Err(LegendreError::OnBoundary { facet: 1 })));
    }

    #[test]
    fn guillemin_derivatives_match_differences() {
        let p = interval();
        let h = 1e-5;
        for &x in &[-0.7, 0.0, 0.4] {
            let g = guillemin_gradient(&p, &[x]).unwrap()[0];
            let fd = (guillemin_potential(&p, &[x + h]).unwrap() - guillemin_potential(&p, &[x - h]).unwrap()) / (2.0 * h);
            assert!((g - fd).abs() < 1e-8);
            let hs = guillemin_hessian(&p, &[x]).unwrap()[0][0];
            let fd2 = (guillemin_gradient(&p, &[x + h]).unwrap()[0] - guillemin_gradient(&p, &[x - h]).unwrap()[0]) / (2.0 * h);
            assert!((hs - fd2).abs() < 1e-6);
        }
    }

    #[test]
    fn quadratic_is_self_dual() {
        let h = 0.01;
        let f = GridFunction::sample_interval(-5.0, 5.0, h, DomainTag::Xi, |x| 0.5 * x * x).unwrap();
        let g = legendre_transform(&f).unwrap();
        assert_eq!(g.tag(), DomainTag::X);
        for k in 0..g.len() {
            let x = g.coord(k);
            if x.abs() <= 4.0 {
                assert!((g.values()[k] - 0.5 * x * x).abs() < h * h);
            }
        }
        let image = moment_image(&f).unwrap();
        assert!((image.lo[0] - image.margin[0] + 5.0).abs() < 1e-9);
        assert!((image.hi[0] + image.margin[0] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn gaussian_conjugate_closed_form() {
        let h = 0.01;
        let f = GridFunction::sample_interval(-6.0, 4.0, h, DomainTag::Xi, gaussian).unwrap();
        let g = legendre_transform(&f).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..g.len() {
            let x = g.coord(k);
            if x > -0.9 && x < 50.0 {
                worst = worst.max((g.values()[k] - gaussian_dual(x)).abs());
            }
        }
        assert!(worst < h, "{worst}");
        let image = moment_image(&f).unwrap();
        assert!(image.lo[0] > -1.0 && image.lo[0] < -0.99);
        assert!(image.hi[0] > 0.5 * 8f64.exp() - 1.0 - 50.0);
        assert!(image.contains(&[g.coord(0)]));
    }

    #[test]
    fn biconjugate_recovers_interior_values() {
        let h = 0.02;
        let f = GridFunction::sample_interval(-6.0, 4.0, h, DomainTag::Xi, gaussian).unwrap();
        let g = legendre_transform(&f).unwrap();
        let (lo, hi) = (g.coord(0), g.coord(g.len() - 1));
        let slopes: Vec<f64> = f.values().windows(2).map(|w| (w[1] - w[0]) / h).collect();
        let interior: Vec<usize> = (1..f.len() - 1).filter(|&k| slopes[k - 1] >= lo && slopes[k] <= hi).collect();
        let points: Vec<Vec<f64>> = interior.iter().map(|&k| vec![f.coord(k)]).collect();
        let back = legendre_eval(&g, &points).unwrap();
        for (&k, b) in interior.iter().zip(&back) {
            assert!((b - f.values()[k]).abs() < h, "{k} {b}");
        }
    }

    #[test]
    fn two_dimensional_quadratic() {
        let h = 0.1;
        let f = GridFunction::sample_2d([-2.0, -2.0], [h, h], [41, 41], DomainTag::Xi, |a, b| 0.5 * (a * a + b * b)).unwrap();
        let g = legendre_transform(&f).unwrap();
        for k in 0..g.len() {
            let x = g.node(&g.unflat(k));
            assert!((g.values()[k] - 0.5 * (x[0] * x[0] + x[1] * x[1])).abs() < h * h);
        }
        let saddle = f.map_values(|v| -v).unwrap();
        assert!(matches!(legendre_transform(&saddle), Err(LegendreError::NotConvex { .. })));
    }

    #[test]
    fn symplectic_round_trip_and_boundary_check() {
        let h = 0.01;
        let p = half_line();
        let u = GridFunction::sample_interval(-1.0 + h, 20.0, h, DomainTag::X, gaussian_dual).unwrap();
        let phi = potential_from_symplectic(&u, Some(&p)).unwrap();
        for k in 0..phi.len() {
            let xi = phi.coord(k);
            if (-1.5..=1.0).contains(&xi) {
                assert!((phi.values()[k] - gaussian(xi)).abs() < h, "{xi}");
            }
        }
        let quad = GridFunction::sample_interval(-1.0 + h, 3.0, h, DomainTag::X, |x| 0.5 * x * x).unwrap();
        assert!(potential_from_symplectic(&quad, None).is_ok());
        let wrong = GridFunction::sample_interval(-1.0 + h, 3.0, h, DomainTag::X, |x| (x + 1.0) * (x + 1.0).ln()).unwrap();
        assert!(matches!(
            potential_from_symplectic(&wrong, Some(&p)),
            Err(LegendreError::BoundaryBehaviorViolated { facet: 0, .. })
        ));
        let fine = GridFunction::sample_interval(-1.0 + h, 3.0, h, DomainTag::X, |x| {
            0.5 * (x + 1.0) * (x + 1.0).ln() + 0.5 * x * x
        })
        .unwrap();
        assert!(potential_from_symplectic(&fine, Some(&p)).is_ok());
    }

    #[test]
    fn piecewise_conjugate_integrates_exactly() {
        let h = 0.05;
        let f = GridFunction::sample_interval(-3.0, 3.0, h, DomainTag::Xi, |x| 0.5 * x * x).unwrap();
        let pl = PiecewiseLinearConjugate::new(&f).unwrap();
        let g = legendre_eval(&f, &[vec![0.33], vec![-1.7]]).unwrap();
        assert_eq!(pl.eval(0.33), g[0]);
        assert_eq!(pl.eval(-1.7), g[1]);
        // Midpoint sums converge to the exact piecewise integral.
        let (lo, hi) = (-2.0, 2.5);
        let cells = 200_000;
        let dx = (hi - lo) / cells as f64;
        let numeric: f64 =
            (0..cells).map(|i| lo + (i as f64 + 0.5) * dx).map(|x| pl.eval(x) * (-0.7 * x).exp() * dx).sum();
        assert!((pl.weighted_integral(0.7, lo, hi) - numeric).abs() < 1e-6);
        assert!((linear_exp_integral(2.0, 1.0, 0.0, 0.0, 1.0) - 2.0).abs() < 1e-15);
    }
}
