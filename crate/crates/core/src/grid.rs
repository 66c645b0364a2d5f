//! Uniform-grid samples of scalar functions with finite-difference calculus.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grids must be 1- or 2-dimensional, got {0}")]
    UnsupportedDim(usize),
    #[error("spacing must be positive")]
    NonPositiveSpacing,
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("grid has too few nodes for the stencil")]
    TooSmall,
    #[error("malformed grid CSV: {0}")]
    Csv(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainTag {
    /// Logarithmic coordinates on the Lie algebra side.
    Xi,
    /// Moment coordinates on the polytope side.
    X,
}

impl DomainTag {
    fn as_str(self) -> &'static str {
        match self {
            DomainTag::Xi => "xi",
            DomainTag::X => "x",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Stencil {
    #[default]
    Second,
    Fourth,
}

impl Stencil {
    pub fn halo(self) -> usize {
        match self {
            Stencil::Second => 1,
            Stencil::Fourth => 2,
        }
    }

    /// First-derivative weights at offsets `-halo..=halo`, before dividing by `h`.
    fn first(self) -> &'static [f64] {
        match self {
            Stencil::Second => &[-0.5, 0.0, 0.5],
            Stencil::Fourth => &[1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0],
        }
    }

    /// Second-derivative weights, before dividing by `h²`.
    fn second(self) -> &'static [f64] {
        match self {
            Stencil::Second => &[1.0, -2.0, 1.0],
            Stencil::Fourth => &[-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    origin: Vec<f64>,
    spacing: Vec<f64>,
    shape: Vec<usize>,
    values: Vec<f64>,
    tag: DomainTag,
}

impl GridFunction {
    pub fn new(
        origin: Vec<f64>,
        spacing: Vec<f64>,
        shape: Vec<usize>,
        values: Vec<f64>,
        tag: DomainTag,
    ) -> Result<Self, GridError> {
        let dim = shape.len();
        if !(1..=2).contains(&dim) || origin.len() != dim || spacing.len() != dim {
            return Err(GridError::UnsupportedDim(dim));
        }
        if spacing.iter().any(|&h| !(h > 0.0) || !h.is_finite()) {
            return Err(GridError::NonPositiveSpacing);
        }
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(GridError::ShapeMismatch { expected, found: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite(i));
        }
        Ok(Self { origin, spacing, shape, values, tag })
    }

    /// Samples `f` at `lo, lo + h, ...` for `count` nodes.
    pub fn sample_1d(lo: f64, h: f64, count: usize, tag: DomainTag, f: impl Fn(f64) -> f64) -> Result<Self, GridError> {
        let values = (0..count).map(|i| f(lo + i as f64 * h)).collect();
        Self::new(vec![lo], vec![h], vec![count], values, tag)
    }

    /// Samples on `[lo, hi]` with spacing as close to `h` as divides the interval.
    pub fn sample_interval(lo: f64, hi: f64, h: f64, tag: DomainTag, f: impl Fn(f64) -> f64) -> Result<Self, GridError> {
        let cells = ((hi - lo) / h).round().max(1.0) as usize;
        let h = (hi - lo) / cells as f64;
        Self::sample_1d(lo, h, cells + 1, tag, f)
    }

    pub fn sample_2d(
        origin: [f64; 2],
        spacing: [f64; 2],
        shape: [usize; 2],
        tag: DomainTag,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self, GridError> {
        let mut values = Vec::with_capacity(shape[0] * shape[1]);
        for i in 0..shape[0] {
            for j in 0..shape[1] {
                values.push(f(origin[0] + i as f64 * spacing[0], origin[1] + j as f64 * spacing[1]));
            }
        }
        Self::new(origin.to_vec(), spacing.to_vec(), shape.to_vec(), values, tag)
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tag(&self) -> DomainTag {
        self.tag
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        match idx.len() {
            1 => idx[0],
            _ => idx[0] * self.shape[1] + idx[1],
        }
    }

    pub fn unflat(&self, k: usize) -> Vec<usize> {
        match self.dim() {
            1 => vec![k],
            _ => vec![k / self.shape[1], k % self.shape[1]],
        }
    }

    pub fn value(&self, idx: &[usize]) -> f64 {
        self.values[self.flat(idx)]
    }

    pub fn node(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().enumerate().map(|(a, &i)| self.origin[a] + i as f64 * self.spacing[a]).collect()
    }

    /// Coordinates of node `i` on a 1D grid.
    pub fn coord(&self, i: usize) -> f64 {
        self.origin[0] + i as f64 * self.spacing[0]
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self, GridError> {
        Self::new(self.origin.clone(), self.spacing.clone(), self.shape.clone(), self.values.iter().map(|&v| f(v)).collect(), self.tag)
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self, GridError> {
        Self::new(self.origin.clone(), self.spacing.clone(), self.shape.clone(), values, self.tag)
    }

    /// Multi-indices with at least `halo` nodes on every side.
    pub fn interior_nodes(&self, halo: usize) -> Vec<Vec<usize>> {
        match self.dim() {
            1 => (halo..self.shape[0].saturating_sub(halo)).map(|i| vec![i]).collect(),
            _ => {
                let mut out = Vec::new();
                for i in halo..self.shape[0].saturating_sub(halo) {
                    for j in halo..self.shape[1].saturating_sub(halo) {
                        out.push(vec![i, j]);
                    }
                }
                out
            }
        }
    }

    /// Grid of the interior nodes carrying `values` (one per interior node, row-major).
    pub fn interior_grid(&self, halo: usize, values: Vec<f64>) -> Result<Self, GridError> {
        if self.shape.iter().any(|&s| s <= 2 * halo) {
            return Err(GridError::TooSmall);
        }
        let origin = self.origin.iter().zip(&self.spacing).map(|(o, h)| o + halo as f64 * h).collect();
        let shape = self.shape.iter().map(|s| s - 2 * halo).collect();
        Self::new(origin, self.spacing.clone(), shape, values, self.tag)
    }

    fn shifted(&self, idx: &[usize], axis: usize, offset: isize) -> f64 {
        let mut j = idx.to_vec();
        j[axis] = (j[axis] as isize + offset) as usize;
        self.value(&j)
    }

    pub fn d1(&self, idx: &[usize], axis: usize, st: Stencil) -> f64 {
        let halo = st.halo() as isize;
        let w = st.first();
        let s: f64 = (-halo..=halo).zip(w).map(|(o, c)| c * self.shifted(idx, axis, o)).sum();
        s / self.spacing[axis]
    }

    pub fn d2(&self, idx: &[usize], axis: usize, st: Stencil) -> f64 {
        let halo = st.halo() as isize;
        let w = st.second();
        let s: f64 = (-halo..=halo).zip(w).map(|(o, c)| c * self.shifted(idx, axis, o)).sum();
        s / (self.spacing[axis] * self.spacing[axis])
    }

    /// Mixed derivative on a 2D grid from the tensor product of first-derivative stencils.
    pub fn d_mixed(&self, idx: &[usize], st: Stencil) -> f64 {
        let halo = st.halo() as isize;
        let w = st.first();
        let mut s = 0.0;
        for (a, ca) in (-halo..=halo).zip(w) {
            if *ca == 0.0 {
                continue;
            }
            for (b, cb) in (-halo..=halo).zip(w) {
                if *cb == 0.0 {
                    continue;
                }
                let j = [(idx[0] as isize + a) as usize, (idx[1] as isize + b) as usize];
                s += ca * cb * self.value(&j);
            }
        }
        s / (self.spacing[0] * self.spacing[1])
    }

    pub fn gradient(&self, idx: &[usize], st: Stencil) -> Vec<f64> {
        (0..self.dim()).map(|a| self.d1(idx, a, st)).collect()
    }

    pub fn hessian(&self, idx: &[usize], st: Stencil) -> Vec<Vec<f64>> {
        match self.dim() {
            1 => vec![vec![self.d2(idx, 0, st)]],
            _ => {
                let m = self.d_mixed(idx, st);
                vec![vec![self.d2(idx, 0, st), m], vec![m, self.d2(idx, 1, st)]]
            }
        }
    }

    /// Discrete hessian is positive semidefinite (up to `tol`) at every interior node.
    pub fn is_convex(&self, tol: f64) -> bool {
        self.first_nonconvex(tol).is_none()
    }

    pub fn first_nonconvex(&self, tol: f64) -> Option<Vec<usize>> {
        let scale = 1.0 + self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let h2 = self.spacing.iter().fold(f64::INFINITY, |m, &h| m.min(h * h));
        let eps = tol * scale / h2;
        self.interior_nodes(1).into_iter().find(|idx| {
            let hs = self.hessian(idx, Stencil::Second);
            match hs.len() {
                1 => hs[0][0] < -eps,
                _ => {
                    let tr = hs[0][0] + hs[1][1];
                    let det = hs[0][0] * hs[1][1] - hs[0][1] * hs[1][0];
                    hs[0][0] < -eps || hs[1][1] < -eps || det < -eps * (tr.abs() + eps)
                }
            }
        })
    }

    /// Header `dim, origin, spacing, shape, domain_tag` then one value per row, row-major.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(";");
        w.write_record(["dim", "origin", "spacing", "shape", "domain_tag"]).expect("in-memory write");
        let shape = self.shape.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(";");
        w.write_record([self.dim().to_string(), join(&self.origin), join(&self.spacing), shape, self.tag.as_str().into()])
            .expect("in-memory write");
        w.write_record(["value"]).expect("in-memory write");
        for v in &self.values {
            w.write_record([format!("{v:.16e}")]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn from_csv(text: &str) -> Result<Self, GridError> {
        let bad = |m: &str| GridError::Csv(m.to_string());
        let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
        let mut records = r.records();
        let mut next = || -> Result<csv::StringRecord, GridError> {
            records.next().ok_or_else(|| bad("truncated"))?.map_err(|e| GridError::Csv(e.to_string()))
        };
        let header = next()?;
        if header.iter().collect::<Vec<_>>() != ["dim", "origin", "spacing", "shape", "domain_tag"] {
            return Err(bad("unexpected header"));
        }
        let meta = next()?;
        if meta.len() != 5 {
            return Err(bad("metadata row needs five fields"));
        }
        let floats = |s: &str| -> Result<Vec<f64>, GridError> {
            s.split(';').map(|t| t.trim().parse::<f64>().map_err(|_| bad("bad float"))).collect()
        };
        let origin = floats(&meta[1])?;
        let spacing = floats(&meta[2])?;
        let shape: Vec<usize> =
            meta[3].split(';').map(|t| t.trim().parse::<usize>().map_err(|_| bad("bad shape"))).collect::<Result<_, _>>()?;
        let tag = match meta[4].trim() {
            "xi" => DomainTag::Xi,
            "x" => DomainTag::X,
            _ => return Err(bad("domain_tag must be xi or x")),
        };
        let dim: usize = meta[0].trim().parse().map_err(|_| bad("bad dim"))?;
        if dim != shape.len() {
            return Err(bad("dim does not match shape"));
        }
        if next()?.iter().collect::<Vec<_>>() != ["value"] {
            return Err(bad("missing value header"));
        }
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| GridError::Csv(e.to_string()))?;
            values.push(rec[0].trim().parse::<f64>().map_err(|_| bad("bad value"))?);
        }
        Self::new(origin, spacing, shape, values, tag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_of_polynomials() {
        let g = GridFunction::sample_1d(-1.0, 0.1, 21, DomainTag::Xi, |x| x * x * x).unwrap();
        let i = [10usize];
        assert!((g.d1(&[12], 0, Stencil::Fourth) - 3.0 * 0.04).abs() < 1e-12);
        assert!((g.d2(&[12], 0, Stencil::Second) - 6.0 * 0.2).abs() < 1e-12);
        assert!((g.d1(&i, 0, Stencil::Second) - 0.01).abs() < 1e-12);
        let q = GridFunction::sample_2d([-1.0, -1.0], [0.1, 0.2], [21, 11], DomainTag::Xi, |x, y| x * y + x * x).unwrap();
        let h = q.hessian(&[5, 5], Stencil::Fourth);
        assert!((h[0][0] - 2.0).abs() < 1e-10 && (h[0][1] - 1.0).abs() < 1e-10 && h[1][1].abs() < 1e-10);
        assert_eq!(q.interior_nodes(2).len(), 17 * 7);
    }

    #[test]
    fn convexity_flag() {
        let g = GridFunction::sample_1d(-1.0, 0.1, 21, DomainTag::Xi, |x| x * x).unwrap();
        assert!(g.is_convex(1e-12));
        let c = GridFunction::sample_1d(-1.0, 0.1, 21, DomainTag::Xi, |x| x.sin()).unwrap();
        assert!(!c.is_convex(1e-12));
        let saddle = GridFunction::sample_2d([-1.0, -1.0], [0.1, 0.1], [21, 21], DomainTag::Xi, |x, y| x * x - y * y).unwrap();
        assert!(!saddle.is_convex(1e-12));
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(
            GridFunction::new(vec![0.0], vec![0.0], vec![2], vec![1.0, 2.0], DomainTag::X),
            Err(GridError::NonPositiveSpacing)
        ));
        assert!(matches!(
            GridFunction::new(vec![0.0], vec![1.0], vec![2], vec![1.0, f64::NAN], DomainTag::X),
            Err(GridError::NonFinite(1))
        ));
        assert!(matches!(
            GridFunction::new(vec![0.0], vec![1.0], vec![3], vec![1.0], DomainTag::X),
            Err(GridError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let g = GridFunction::sample_2d([-1.0, 0.5], [0.1, 0.3], [4, 3], DomainTag::X, |x, y| (x + y).exp() / 3.0).unwrap();
        let back = GridFunction::from_csv(&g.to_csv()).unwrap();
        assert_eq!(back, g);
        assert!(GridFunction::from_csv("dim,origin\n1,0\n").is_err());
    }
}
