//! Rational polyhedra and fans.

mod fan;
mod polyhedron;
pub mod rational;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fan::{anticanonical_polyhedron, blowup_cone, Fan, FanJson};
pub use polyhedron::{
    delzant_check, enumerate_vertices, recession_cone, DelzantReport, HalfSpace, HalfSpaceJson, OffsetRepr, Polyhedron,
    PolyhedronJson, VertexData, MAX_DIM,
};
pub use rational::{parse_rational, Rational};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("dimension {0} unsupported (need 1..=3)")]
    UnsupportedDimension(usize),
    #[error("expected a vector of length {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("normal of halfspace {0} is not primitive")]
    NotPrimitive(usize),
    #[error("halfspace {0} does not support a facet")]
    Redundant(usize),
    #[error("vertex {vertex:?} lies on {facets} facets")]
    NotSimple { vertex: Vec<f64>, facets: usize },
    #[error("polyhedron has no vertex")]
    Empty,
    #[error("ray {0} is not a primitive nonzero vector")]
    BadRay(usize),
    #[error("cone {0} refers to a missing ray or has dependent generators")]
    BadCone(usize),
    #[error("cones {0} and {1} overlap in their interiors")]
    ConesOverlap(usize, usize),
    #[error("rays {0} and {1} do not span a cone of the fan")]
    NotAConeOfFan(usize, usize),
    #[error("cone spanned by rays {0} and {1} is not smooth")]
    NotSmoothCone(usize, usize),
    #[error("invalid number {0:?}")]
    InvalidNumber(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// An integer vector in the lattice `Z^n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatticeVector(Vec<i64>);

impl LatticeVector {
    pub fn new(coords: Vec<i64>) -> Self {
        Self(coords)
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_primitive(&self) -> bool {
        rational::gcd_slice(&self.0) == 1
    }

    pub fn dot(&self, other: &LatticeVector) -> i64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn dot_f64(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(&a, b)| a as f64 * b).sum()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&c| c as f64).collect()
    }

    pub fn add(&self, other: &LatticeVector) -> LatticeVector {
        LatticeVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

impl From<Vec<i64>> for LatticeVector {
    fn from(v: Vec<i64>) -> Self {
        Self(v)
    }
}
