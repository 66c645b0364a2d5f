use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use super::rational::{self, dot_int, parse_rational, rat, Rational};
use super::{GeometryError, LatticeVector};

/// The halfspace `{x : <normal, x> >= -offset}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HalfSpace {
    pub normal: LatticeVector,
    pub offset: Rational,
}

impl HalfSpace {
    pub fn new(normal: LatticeVector, offset: Rational) -> Self {
        Self { normal, offset }
    }

    pub fn from_ints(normal: &[i64], offset: i64) -> Self {
        Self { normal: LatticeVector::new(normal.to_vec()), offset: rat(offset) }
    }

    /// Affine function `<normal, x> + offset`, nonnegative on the halfspace.
    pub fn slack(&self, x: &[Rational]) -> Rational {
        dot_int(self.normal.coords(), x) + self.offset.clone()
    }

    pub fn slack_f64(&self, x: &[f64]) -> f64 {
        self.normal.dot_f64(x) + rational::to_f64(&self.offset)
    }
}

#[derive(Clone, Debug)]
pub struct VertexData {
    pub point: Vec<Rational>,
    /// Indices of the `n` halfspaces tight at the vertex, ascending.
    pub facets: Vec<usize>,
    /// `edge_dirs[k]` leaves facet `facets[k]` and lies on the other `n - 1`.
    pub edge_dirs: Vec<LatticeVector>,
    pub unbounded: Vec<bool>,
    point_f64: Vec<f64>,
    edges_f64: Vec<Vec<f64>>,
}

impl VertexData {
    pub fn point_f64(&self) -> &[f64] {
        &self.point_f64
    }

    pub fn edges_f64(&self) -> &[Vec<f64>] {
        &self.edges_f64
    }

    pub fn edge_det(&self) -> i128 {
        let m: Vec<Vec<i64>> = self.edge_dirs.iter().map(|e| e.coords().to_vec()).collect();
        rational::det_int(&m)
    }
}

/// A full-dimensional, simple, strongly convex rational polyhedron.
#[derive(Clone, Debug)]
pub struct Polyhedron {
    dim: usize,
    halfspaces: Vec<HalfSpace>,
    vertices: Vec<VertexData>,
    recession_rays: Vec<LatticeVector>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DelzantReport {
    pub is_delzant: bool,
    pub offending_vertex: Option<Vec<Rational>>,
    pub determinant: Option<i128>,
}

fn subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn rec(start: usize, m: usize, k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in start..m {
            current.push(i);
            rec(i + 1, m, k, current, out);
            current.pop();
        }
    }
    rec(0, m, k, &mut current, &mut out);
    out
}

/// Integer vector orthogonal to `n - 1` integer vectors in `Z^n` (generalized cross product).
fn kernel_direction(rows: &[&[i64]], n: usize) -> Vec<i64> {
    let mut out = vec![0i64; n];
    for (i, slot) in out.iter_mut().enumerate() {
        let minor: Vec<Vec<i64>> = rows
            .iter()
            .map(|r| r.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v).collect())
            .collect();
        let d = rational::det_int(&minor) as i64;
        *slot = if i % 2 == 0 { d } else { -d };
    }
    out
}

pub const MAX_DIM: usize = 3;

impl Polyhedron {
    pub fn new(dim: usize, halfspaces: Vec<HalfSpace>) -> Result<Self, GeometryError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(GeometryError::UnsupportedDimension(dim));
        }
        for (i, h) in halfspaces.iter().enumerate() {
            if h.normal.dim() != dim {
                return Err(GeometryError::DimensionMismatch { expected: dim, found: h.normal.dim() });
            }
            if !h.normal.is_primitive() {
                return Err(GeometryError::NotPrimitive(i));
            }
        }
        for i in 0..halfspaces.len() {
            for j in (i + 1)..halfspaces.len() {
                if halfspaces[i] == halfspaces[j] {
                    return Err(GeometryError::Redundant(j));
                }
            }
        }

        let mut points: Vec<Vec<Rational>> = Vec::new();
        for subset in subsets(halfspaces.len(), dim) {
            let m: Vec<Vec<Rational>> =
                subset.iter().map(|&i| halfspaces[i].normal.coords().iter().map(|&c| rat(c)).collect()).collect();
            let rhs: Vec<Rational> = subset.iter().map(|&i| -halfspaces[i].offset.clone()).collect();
            let Some(x) = rational::solve(&m, &rhs) else { continue };
            if halfspaces.iter().all(|h| !h.slack(&x).is_negative()) && !points.contains(&x) {
                points.push(x);
            }
        }
        if points.is_empty() {
            return Err(GeometryError::Empty);
        }

        let recession_rays = Self::compute_recession(dim, &halfspaces);

        for (i, h) in halfspaces.iter().enumerate() {
            let tight: Vec<&Vec<Rational>> = points.iter().filter(|p| h.slack(p).is_zero()).collect();
            let Some(first) = tight.first() else { return Err(GeometryError::Redundant(i)) };
            let mut span: Vec<Vec<Rational>> = tight
                .iter()
                .skip(1)
                .map(|p| p.iter().zip(first.iter()).map(|(a, b)| a - b).collect())
                .collect();
            span.extend(
                recession_rays
                    .iter()
                    .filter(|w| h.normal.dot(w) == 0)
                    .map(|w| w.coords().iter().map(|&c| rat(c)).collect()),
            );
            if rational::rank(&span) + 1 < dim {
                return Err(GeometryError::Redundant(i));
            }
        }

        let mut vertices = Vec::with_capacity(points.len());
        for p in points {
            let facets: Vec<usize> = (0..halfspaces.len()).filter(|&i| halfspaces[i].slack(&p).is_zero()).collect();
            if facets.len() > dim {
                return Err(GeometryError::NotSimple {
                    vertex: p.iter().map(rational::to_f64).collect(),
                    facets: facets.len(),
                });
            }
            let m: Vec<Vec<Rational>> =
                facets.iter().map(|&i| halfspaces[i].normal.coords().iter().map(|&c| rat(c)).collect()).collect();
            let inv = rational::inverse(&m).expect("tight normals at a vertex are independent");
            let mut edge_dirs = Vec::with_capacity(dim);
            let mut unbounded = Vec::with_capacity(dim);
            for k in 0..dim {
                let column: Vec<Rational> = (0..dim).map(|r| inv[r][k].clone()).collect();
                let e = LatticeVector::new(rational::primitive_direction(&column).expect("nonzero column"));
                let leaves = halfspaces
                    .iter()
                    .enumerate()
                    .any(|(i, h)| !facets.contains(&i) && h.normal.dot(&e) < 0);
                unbounded.push(!leaves);
                edge_dirs.push(e);
            }
            let point_f64 = p.iter().map(rational::to_f64).collect();
            let edges_f64 = edge_dirs.iter().map(|e| e.coords().iter().map(|&c| c as f64).collect()).collect();
            vertices.push(VertexData { point: p, facets, edge_dirs, unbounded, point_f64, edges_f64 });
        }

        Ok(Self { dim, halfspaces, vertices, recession_rays })
    }

    fn compute_recession(dim: usize, halfspaces: &[HalfSpace]) -> Vec<LatticeVector> {
        let mut candidates: Vec<Vec<i64>> = Vec::new();
        if dim == 1 {
            candidates.push(vec![1]);
        } else {
            for subset in subsets(halfspaces.len(), dim - 1) {
                let rows: Vec<&[i64]> = subset.iter().map(|&i| halfspaces[i].normal.coords()).collect();
                let d = kernel_direction(&rows, dim);
                if d.iter().all(|&c| c == 0) {
                    continue;
                }
                candidates.push(d);
            }
        }
        let mut rays: Vec<LatticeVector> = Vec::new();
        for d in candidates {
            for sign in [1i64, -1] {
                let g = rational::gcd_slice(&d);
                let w = LatticeVector::new(d.iter().map(|&c| sign * c / g).collect());
                if halfspaces.iter().all(|h| h.normal.dot(&w) >= 0) && !rays.contains(&w) {
                    rays.push(w);
                }
            }
        }
        rays.sort_by(|a, b| a.coords().cmp(b.coords()));
        rays
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn halfspaces(&self) -> &[HalfSpace] {
        &self.halfspaces
    }

    pub fn vertices(&self) -> &[VertexData] {
        &self.vertices
    }

    pub fn recession_rays(&self) -> &[LatticeVector] {
        &self.recession_rays
    }

    pub fn is_bounded(&self) -> bool {
        self.recession_rays.is_empty()
    }

    pub fn contains_f64(&self, x: &[f64]) -> bool {
        self.halfspaces.iter().all(|h| h.slack_f64(x) >= 0.0)
    }

    pub fn contains_strictly(&self, x: &[Rational]) -> bool {
        self.halfspaces.iter().all(|h| h.slack(x).is_positive())
    }

    pub fn delzant_check(&self) -> DelzantReport {
        for v in &self.vertices {
            let d = v.edge_det();
            if d.abs() != 1 {
                return DelzantReport { is_delzant: false, offending_vertex: Some(v.point.clone()), determinant: Some(d) };
            }
        }
        DelzantReport { is_delzant: true, offending_vertex: None, determinant: None }
    }

    pub fn from_json(text: &str) -> Result<Self, GeometryError> {
        let raw: PolyhedronJson = serde_json::from_str(text)?;
        raw.build()
    }

    pub fn to_json(&self) -> String {
        let raw = PolyhedronJson {
            dim: self.dim,
            halfspaces: self
                .halfspaces
                .iter()
                .map(|h| HalfSpaceJson { normal: h.normal.coords().to_vec(), offset: OffsetRepr::Text(h.offset.to_string()) })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("serializable")
    }
}

pub fn enumerate_vertices(p: &Polyhedron) -> &[VertexData] {
    p.vertices()
}

pub fn delzant_check(p: &Polyhedron) -> DelzantReport {
    p.delzant_check()
}

pub fn recession_cone(p: &Polyhedron) -> &[LatticeVector] {
    p.recession_rays()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OffsetRepr {
    Text(String),
    Number(serde_json::Number),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfSpaceJson {
    pub normal: Vec<i64>,
    pub offset: OffsetRepr,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyhedronJson {
    pub dim: usize,
    pub halfspaces: Vec<HalfSpaceJson>,
}

impl PolyhedronJson {
    pub fn build(&self) -> Result<Polyhedron, GeometryError> {
        let mut hs = Vec::with_capacity(self.halfspaces.len());
        for h in &self.halfspaces {
            let offset = match &h.offset {
                OffsetRepr::Text(s) => parse_rational(s)?,
                OffsetRepr::Number(n) => parse_rational(&n.to_string())?,
            };
            hs.push(HalfSpace::new(LatticeVector::new(h.normal.clone()), offset));
        }
        Polyhedron::new(self.dim, hs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn product() -> Polyhedron {
        Polyhedron::new(
            2,
            vec![HalfSpace::from_ints(&[1, 0], 1), HalfSpace::from_ints(&[0, 1], 1), HalfSpace::from_ints(&[0, -1], 1)],
        )
        .unwrap()
    }

    fn flagship() -> Polyhedron {
        Polyhedron::new(
            2,
            vec![
                HalfSpace::from_ints(&[1, 0], 1),
                HalfSpace::from_ints(&[0, 1], 1),
                HalfSpace::from_ints(&[0, -1], 1),
                HalfSpace::from_ints(&[1, 1], 1),
            ],
        )
        .unwrap()
    }

    fn points(p: &Polyhedron) -> Vec<Vec<i64>> {
        let mut v: Vec<Vec<i64>> = p
            .vertices()
            .iter()
            .map(|v| v.point.iter().map(|q| q.to_integer().try_into().unwrap()).collect())
            .collect();
        v.sort();
        v
    }

    #[test]
    fn product_vertices_have_one_unbounded_edge() {
        let p = product();
        assert_eq!(points(&p), vec![vec![-1, -1], vec![-1, 1]]);
        for v in p.vertices() {
            let unbounded: Vec<&LatticeVector> =
                v.edge_dirs.iter().zip(&v.unbounded).filter(|(_, &u)| u).map(|(e, _)| e).collect();
            assert_eq!(unbounded, vec![&LatticeVector::new(vec![1, 0])]);
        }
        assert_eq!(p.recession_rays(), &[LatticeVector::new(vec![1, 0])]);
    }

    #[test]
    fn interval_vertices() {
        let p = Polyhedron::new(1, vec![HalfSpace::from_ints(&[1], 1), HalfSpace::from_ints(&[-1], 1)]).unwrap();
        assert_eq!(points(&p), vec![vec![-1], vec![1]]);
        assert!(p.is_bounded());
        let half_line = Polyhedron::new(1, vec![HalfSpace::from_ints(&[1], 1)]).unwrap();
        assert_eq!(half_line.recession_rays(), &[LatticeVector::new(vec![1])]);
    }

    #[test]
    fn flagship_vertices_and_delzant() {
        let p = flagship();
        assert_eq!(points(&p), vec![vec![-1, 0], vec![-1, 1], vec![0, -1]]);
        assert!(p.delzant_check().is_delzant);
        let v = p.vertices().iter().find(|v| v.point == vec![rat(-1), rat(0)]).unwrap();
        let mut dirs: Vec<Vec<i64>> = v.edge_dirs.iter().map(|e| e.coords().to_vec()).collect();
        dirs.sort();
        assert_eq!(dirs, vec![vec![0, 1], vec![1, -1]]);
        assert_eq!(v.edge_det().abs(), 1);
    }

    #[test]
    fn square_is_delzant_and_bounded() {
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
        assert!(p.delzant_check().is_delzant);
        assert!(p.recession_rays().is_empty());
        assert_eq!(p.vertices().len(), 4);
    }

    #[test]
    fn thin_triangle_fails_delzant_at_apex() {
        let p = Polyhedron::new(
            2,
            vec![HalfSpace::from_ints(&[1, 0], 0), HalfSpace::from_ints(&[0, 1], 0), HalfSpace::from_ints(&[-1, -2], 2)],
        )
        .unwrap();
        let report = p.delzant_check();
        assert!(!report.is_delzant);
        assert_eq!(report.offending_vertex, Some(vec![rat(0), rat(1)]));
        assert_eq!(report.determinant.map(i128::abs), Some(2));
    }

    #[test]
    fn edges_point_inward() {
        let p = flagship();
        for v in p.vertices() {
            for (k, e) in v.edge_dirs.iter().enumerate() {
                for (j, &f) in v.facets.iter().enumerate() {
                    let d = p.halfspaces()[f].normal.dot(e);
                    if j == k {
                        assert!(d > 0);
                    } else {
                        assert_eq!(d, 0);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let empty = Polyhedron::new(1, vec![HalfSpace::from_ints(&[1], -1), HalfSpace::from_ints(&[-1], -1)]);
        assert!(matches!(empty, Err(GeometryError::Empty)));
        let slab = Polyhedron::new(2, vec![HalfSpace::from_ints(&[0, 1], 1), HalfSpace::from_ints(&[0, -1], 1)]);
        assert!(matches!(slab, Err(GeometryError::Empty)));
        let redundant = Polyhedron::new(
            2,
            vec![HalfSpace::from_ints(&[1, 0], 1), HalfSpace::from_ints(&[0, 1], 1), HalfSpace::from_ints(&[1, 1], 5)],
        );
        assert!(matches!(redundant, Err(GeometryError::Redundant(2))));
        let duplicate = Polyhedron::new(
            2,
            vec![HalfSpace::from_ints(&[1, 0], 1), HalfSpace::from_ints(&[0, 1], 1), HalfSpace::from_ints(&[0, 1], 1)],
        );
        assert!(matches!(duplicate, Err(GeometryError::Redundant(2))));
        // Pyramid apex lies on four facets.
        let pyramid = Polyhedron::new(
            3,
            vec![
                HalfSpace::from_ints(&[1, 0, 1], 1),
                HalfSpace::from_ints(&[-1, 0, 1], 1),
                HalfSpace::from_ints(&[0, 1, 1], 1),
                HalfSpace::from_ints(&[0, -1, 1], 1),
                HalfSpace::from_ints(&[0, 0, -1], 1),
            ],
        );
        assert!(matches!(pyramid, Err(GeometryError::NotSimple { facets: 4, .. })));
        let non_primitive = Polyhedron::new(1, vec![HalfSpace::from_ints(&[2], 1)]);
        assert!(matches!(non_primitive, Err(GeometryError::NotPrimitive(0))));
    }

    #[test]
    fn cube_in_three_dimensions() {
        let mut hs = Vec::new();
        for i in 0..3 {
            let mut e = vec![0; 3];
            e[i] = 1;
            hs.push(HalfSpace::from_ints(&e, 1));
            e[i] = -1;
            hs.push(HalfSpace::from_ints(&e, 1));
        }
        let p = Polyhedron::new(3, hs).unwrap();
        assert_eq!(p.vertices().len(), 8);
        assert!(p.delzant_check().is_delzant);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let text = r#"{"dim": 2, "halfspaces": [
            {"normal": [1, 0], "offset": "1"},
            {"normal": [0, 1], "offset": "0.5"},
            {"normal": [0, -1], "offset": 1}
        ]}"#;
        let p = Polyhedron::from_json(text).unwrap();
        assert_eq!(p.halfspaces()[1].offset, parse_rational("1/2").unwrap());
        let again = Polyhedron::from_json(&p.to_json()).unwrap();
        assert_eq!(again.halfspaces(), p.halfspaces());
        assert!(Polyhedron::from_json(r#"{"dim": 1, "halfspaces": [], "extra": 1}"#).is_err());
    }
}
