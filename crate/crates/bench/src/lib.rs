//! Fixtures shared by the benchmarks.

use toricsol_core::lattice::{anticanonical_polyhedron, blowup_cone, Fan, HalfSpace, Polyhedron};

/// Anticanonical polytope of C×P¹ blown up at the cone spanned by e₁ and e₂.
pub fn flagship() -> Polyhedron {
    let fan = Fan::new(2, vec![vec![1, 0].into(), vec![0, 1].into(), vec![0, -1].into()], vec![vec![0, 1], vec![0, 2]])
        .expect("C x P1 fan");
    anticanonical_polyhedron(&blowup_cone(&fan, 0, 1).expect("blowup")).expect("Fano blowup")
}

pub fn square() -> Polyhedron {
    Polyhedron::new(
        2,
        vec![
            HalfSpace::from_ints(&[1, 0], 1),
            HalfSpace::from_ints(&[-1, 0], 1),
            HalfSpace::from_ints(&[0, 1], 1),
            HalfSpace::from_ints(&[0, -1], 1),
        ],
    )
    .expect("square")
}
