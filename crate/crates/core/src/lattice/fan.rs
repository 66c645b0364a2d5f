use serde::{Deserialize, Serialize};

use super::rational::{self, rat};
use super::{GeometryError, HalfSpace, LatticeVector, Polyhedron, MAX_DIM};

/// A simplicial fan given by primitive rays and maximal cones (as ray-index sets).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fan {
    dim: usize,
    rays: Vec<LatticeVector>,
    max_cones: Vec<Vec<usize>>,
}

fn cross2(a: &[i64], b: &[i64]) -> i64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Strict interior test for the planar cone spanned by independent `a`, `b`.
fn in_open_cone2(a: &[i64], b: &[i64], p: &[i64]) -> bool {
    let (a, b) = if cross2(a, b) > 0 { (a, b) } else { (b, a) };
    cross2(a, p) > 0 && cross2(p, b) > 0
}

/// gcd of the maximal minors of the generator matrix; 1 iff the generators extend to a basis.
fn minor_gcd(gens: &[&[i64]], n: usize) -> i64 {
    let k = gens.len();
    if k == 0 {
        return 1;
    }
    let mut g = 0i64;
    let mut cols: Vec<usize> = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cols: &mut Vec<usize>, gens: &[&[i64]], g: &mut i64) {
        if cols.len() == k {
            let m: Vec<Vec<i64>> = gens.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect();
            *g = num_integer::gcd(*g, rational::det_int(&m) as i64);
            return;
        }
        for c in start..n {
            cols.push(c);
            rec(c + 1, n, k, cols, gens, g);
            cols.pop();
        }
    }
    rec(0, n, k, &mut cols, gens, &mut g);
    g
}

impl Fan {
    pub fn new(dim: usize, rays: Vec<LatticeVector>, max_cones: Vec<Vec<usize>>) -> Result<Self, GeometryError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(GeometryError::UnsupportedDimension(dim));
        }
        for (i, r) in rays.iter().enumerate() {
            if r.dim() != dim {
                return Err(GeometryError::DimensionMismatch { expected: dim, found: r.dim() });
            }
            if !r.is_primitive() {
                return Err(GeometryError::BadRay(i));
            }
        }
        let mut cones = Vec::with_capacity(max_cones.len());
        for (c, cone) in max_cones.iter().enumerate() {
            let mut cone = cone.clone();
            cone.sort_unstable();
            cone.dedup();
            if cone.is_empty() || cone.len() > dim || cone.iter().any(|&i| i >= rays.len()) {
                return Err(GeometryError::BadCone(c));
            }
            let rows: Vec<Vec<rational::Rational>> =
                cone.iter().map(|&i| rays[i].coords().iter().map(|&v| rat(v)).collect()).collect();
            if rational::rank(&rows) != cone.len() {
                return Err(GeometryError::BadCone(c));
            }
            cones.push(cone);
        }
        let fan = Self { dim, rays, max_cones: cones };
        fan.check_overlaps()?;
        Ok(fan)
    }

    /// Exact interior-disjointness check; implemented for `n <= 2`.
    fn check_overlaps(&self) -> Result<(), GeometryError> {
        let gens = |c: &Vec<usize>| -> Vec<&[i64]> { c.iter().map(|&i| self.rays[i].coords()).collect() };
        for a in 0..self.max_cones.len() {
            for b in (a + 1)..self.max_cones.len() {
                let (ca, cb) = (&self.max_cones[a], &self.max_cones[b]);
                if ca == cb {
                    return Err(GeometryError::ConesOverlap(a, b));
                }
                if self.dim != 2 {
                    continue;
                }
                let (ga, gb) = (gens(ca), gens(cb));
                let overlap = match (ga.len(), gb.len()) {
                    (2, 2) => {
                        let sum_a = [ga[0][0] + ga[1][0], ga[0][1] + ga[1][1]];
                        let sum_b = [gb[0][0] + gb[1][0], gb[0][1] + gb[1][1]];
                        ga.iter().chain([&sum_a[..]].iter()).any(|p| in_open_cone2(gb[0], gb[1], p))
                            || gb.iter().chain([&sum_b[..]].iter()).any(|p| in_open_cone2(ga[0], ga[1], p))
                    }
                    (2, 1) => in_open_cone2(ga[0], ga[1], gb[0]),
                    (1, 2) => in_open_cone2(gb[0], gb[1], ga[0]),
                    _ => false,
                };
                if overlap {
                    return Err(GeometryError::ConesOverlap(a, b));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rays(&self) -> &[LatticeVector] {
        &self.rays
    }

    pub fn max_cones(&self) -> &[Vec<usize>] {
        &self.max_cones
    }

    pub fn cone_is_smooth(&self, cone: &[usize]) -> bool {
        let gens: Vec<&[i64]> = cone.iter().map(|&i| self.rays[i].coords()).collect();
        minor_gcd(&gens, self.dim).abs() == 1
    }

    pub fn is_smooth(&self) -> bool {
        self.max_cones.iter().all(|c| self.cone_is_smooth(c))
    }

    pub fn from_json(text: &str) -> Result<Self, GeometryError> {
        let raw: FanJson = serde_json::from_str(text)?;
        raw.build()
    }

    pub fn to_json(&self) -> String {
        let raw = FanJson {
            dim: self.dim,
            rays: self.rays.iter().map(|r| r.coords().to_vec()).collect(),
            max_cones: self.max_cones.clone(),
        };
        serde_json::to_string_pretty(&raw).expect("serializable")
    }
}

/// The polyhedron `{x : <nu_i, x> >= -1}` over the rays of `fan`.
pub fn anticanonical_polyhedron(fan: &Fan) -> Result<Polyhedron, GeometryError> {
    let halfspaces = fan.rays.iter().map(|r| HalfSpace::new(r.clone(), rat(1))).collect();
    Polyhedron::new(fan.dim, halfspaces)
}

/// Star subdivision of the 2-cone spanned by rays `i` and `j`: adds the ray `r_i + r_j` and splits
/// every maximal cone containing both.
pub fn blowup_cone(fan: &Fan, i: usize, j: usize) -> Result<Fan, GeometryError> {
    if i == j || i >= fan.rays.len() || j >= fan.rays.len() {
        return Err(GeometryError::NotAConeOfFan(i, j));
    }
    let containing: Vec<usize> =
        (0..fan.max_cones.len()).filter(|&c| fan.max_cones[c].contains(&i) && fan.max_cones[c].contains(&j)).collect();
    if containing.is_empty() {
        return Err(GeometryError::NotAConeOfFan(i, j));
    }
    if !fan.cone_is_smooth(&[i, j]) || containing.iter().any(|&c| !fan.cone_is_smooth(&fan.max_cones[c])) {
        return Err(GeometryError::NotSmoothCone(i, j));
    }
    let new_ray = fan.rays[i].add(&fan.rays[j]);
    let mut rays = fan.rays.clone();
    let new_index = match rays.iter().position(|r| *r == new_ray) {
        Some(k) => k,
        None => {
            rays.push(new_ray);
            rays.len() - 1
        }
    };
    let mut cones = Vec::with_capacity(fan.max_cones.len() + containing.len());
    for (c, cone) in fan.max_cones.iter().enumerate() {
        if containing.contains(&c) {
            for drop in [i, j] {
                let mut split: Vec<usize> = cone.iter().map(|&r| if r == drop { new_index } else { r }).collect();
                split.sort_unstable();
                cones.push(split);
            }
        } else {
            cones.push(cone.clone());
        }
    }
    Fan::new(fan.dim, rays, cones)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FanJson {
    pub dim: usize,
    pub rays: Vec<Vec<i64>>,
    pub max_cones: Vec<Vec<usize>>,
}

impl FanJson {
    pub fn build(&self) -> Result<Fan, GeometryError> {
        Fan::new(self.dim, self.rays.iter().cloned().map(LatticeVector::new).collect(), self.max_cones.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c_times_p1() -> Fan {
        Fan::new(2, vec![vec![1, 0].into(), vec![0, 1].into(), vec![0, -1].into()], vec![vec![0, 1], vec![0, 2]]).unwrap()
    }

    fn sorted_points(p: &Polyhedron) -> Vec<Vec<String>> {
        let mut v: Vec<Vec<String>> =
            p.vertices().iter().map(|v| v.point.iter().map(|q| q.to_string()).collect()).collect();
        v.sort();
        v
    }

    #[test]
    fn anticanonical_of_product_fan() {
        let p = anticanonical_polyhedron(&c_times_p1()).unwrap();
        assert_eq!(p.vertices().len(), 2);
        assert_eq!(p.recession_rays(), &[LatticeVector::new(vec![1, 0])]);
        assert!(p.contains_strictly(&[rat(0), rat(0)]));
    }

    #[test]
    fn anticanonical_of_p1() {
        let fan = Fan::new(1, vec![vec![1].into(), vec![-1].into()], vec![vec![0], vec![1]]).unwrap();
        let p = anticanonical_polyhedron(&fan).unwrap();
        assert_eq!(sorted_points(&p), vec![vec!["-1".to_string()], vec!["1".to_string()]]);
    }

    #[test]
    fn blowup_adds_sum_ray_and_a_vertex() {
        let fan = c_times_p1();
        let blown = blowup_cone(&fan, 0, 1).unwrap();
        assert_eq!(blown.rays().last().unwrap(), &LatticeVector::new(vec![1, 1]));
        assert_eq!(blown.max_cones().len(), 3);
        assert!(blown.is_smooth());
        let p = anticanonical_polyhedron(&blown).unwrap();
        assert_eq!(p.vertices().len(), 3);
        assert!(p.delzant_check().is_delzant);
        assert_eq!(p.recession_rays(), &[LatticeVector::new(vec![1, 0])]);

        let other = blowup_cone(&fan, 0, 2).unwrap();
        assert_eq!(other.rays().last().unwrap(), &LatticeVector::new(vec![1, -1]));
    }

    #[test]
    fn iterated_blowups_stay_delzant() {
        let mut fan = c_times_p1();
        for _ in 0..3 {
            let last = fan.rays().len() - 1;
            let i = if last == 2 { 1 } else { last };
            fan = blowup_cone(&fan, 0, i).unwrap();
            assert!(fan.is_smooth());
            // Later blowups leave the Fano range and the anticanonical polyhedron degenerates.
            if let Ok(p) = anticanonical_polyhedron(&fan) {
                for v in p.vertices() {
                    assert_eq!(v.facets.len(), 2);
                }
                assert!(p.delzant_check().is_delzant);
            }
        }
        let degenerate = blowup_cone(&blowup_cone(&c_times_p1(), 0, 1).unwrap(), 0, 2).unwrap();
        assert!(matches!(anticanonical_polyhedron(&degenerate), Err(GeometryError::Redundant(0))));
    }

    #[test]
    fn blowup_errors() {
        let fan = c_times_p1();
        assert!(matches!(blowup_cone(&fan, 1, 2), Err(GeometryError::NotAConeOfFan(1, 2))));
        let singular = Fan::new(2, vec![vec![1, 0].into(), vec![1, 2].into()], vec![vec![0, 1]]).unwrap();
        assert!(!singular.is_smooth());
        assert!(matches!(blowup_cone(&singular, 0, 1), Err(GeometryError::NotSmoothCone(0, 1))));
    }

    #[test]
    fn rejects_overlapping_cones() {
        let r = Fan::new(
            2,
            vec![vec![1, 0].into(), vec![0, 1].into(), vec![1, 1].into(), vec![-1, 0].into()],
            vec![vec![0, 1], vec![2, 3]],
        );
        assert!(matches!(r, Err(GeometryError::ConesOverlap(0, 1))));
        let same = Fan::new(2, vec![vec![1, 0].into(), vec![0, 1].into()], vec![vec![0, 1], vec![1, 0]]);
        assert!(matches!(same, Err(GeometryError::ConesOverlap(0, 1))));
        let bad_ray = Fan::new(2, vec![vec![2, 0].into()], vec![vec![0]]);
        assert!(matches!(bad_ray, Err(GeometryError::BadRay(0))));
        let dependent = Fan::new(2, vec![vec![1, 0].into(), vec![-1, 0].into()], vec![vec![0, 1]]);
        assert!(matches!(dependent, Err(GeometryError::BadCone(0))));
    }

    #[test]
    fn three_dimensional_blowup_splits_all_containing_cones() {
        let rays: Vec<LatticeVector> =
            vec![vec![1, 0, 0].into(), vec![0, 1, 0].into(), vec![0, 0, 1].into(), vec![0, 0, -1].into()];
        let fan = Fan::new(3, rays, vec![vec![0, 1, 2], vec![0, 1, 3]]).unwrap();
        let blown = blowup_cone(&fan, 0, 1).unwrap();
        assert_eq!(blown.max_cones().len(), 4);
        assert!(blown.is_smooth());
        let p = anticanonical_polyhedron(&blown).unwrap();
        assert!(p.delzant_check().is_delzant);
    }

    #[test]
    fn json_round_trip() {
        let fan = Fan::from_json(r#"{"dim": 2, "rays": [[1,0],[0,1],[0,-1]], "max_cones": [[0,1],[0,2]]}"#).unwrap();
        assert_eq!(fan, c_times_p1());
        assert_eq!(Fan::from_json(&fan.to_json()).unwrap(), fan);
        assert!(Fan::from_json(r#"{"dim": 2, "rays": [], "max_cones": [], "x": 0}"#).is_err());
    }
}
