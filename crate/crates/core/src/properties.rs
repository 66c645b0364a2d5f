//! Property tests for the invariants that span modules.

use proptest::prelude::*;
use crate::grid::{DomainTag, GridFunction};
use crate::integrals::exp_integral;
use crate::lattice::{anticanonical_polyhedron, blowup_cone, Fan, HalfSpace, LatticeVector, Polyhedron};
use crate::legendre::{guillemin_hessian, legendre_eval, legendre_transform};
use crate::model::{
    continuity_solve, data_path, far_field_fit, normalization_residual, normalize_data, ContinuityOptions, TorusModel,
};
use crate::volume::{NewtonOptions, Prefactor, WeightedVolumeProblem};

fn c_times_p1() -> Fan {
    Fan::new(2, vec![vec![1, 0].into(), vec![0, 1].into(), vec![0, -1].into()], vec![vec![0, 1], vec![0, 2]]).unwrap()
}

fn flagship() -> Polyhedron {
    anticanonical_polyhedron(&blowup_cone(&c_times_p1(), 0, 1).unwrap()).unwrap()
}

fn dot(a: &LatticeVector, b: &LatticeVector) -> i64 {
    a.coords().iter().zip(b.coords()).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn blowups_keep_simple_delzant_vertices(choices in proptest::collection::vec(0usize..8, 0..3)) {
        let mut fan = c_times_p1();
        for c in choices {
            let cone = fan.max_cones()[c % fan.max_cones().len()].clone();
            fan = blowup_cone(&fan, cone[0], cone[1]).unwrap();
            prop_assert!(fan.is_smooth());
        }
        let p = anticanonical_polyhedron(&fan);
        prop_assume!(p.is_ok());
        let p = p.unwrap();
        prop_assert!(p.delzant_check().is_delzant);
        for v in p.vertices() {
            prop_assert_eq!(v.facets.len(), 2);
            prop_assert_eq!(v.edge_det().abs(), 1);
            for (k, e) in v.edge_dirs.iter().enumerate() {
                for (m, &f) in v.facets.iter().enumerate() {
                    let pairing = dot(&p.halfspaces()[f].normal, e);
                    if m == k {
                        prop_assert!(pairing > 0);
                    } else {
                        prop_assert_eq!(pairing, 0);
                    }
                }
            }
        }
        prop_assert_eq!(p.recession_rays(), &[LatticeVector::new(vec![1, 0])][..]);
    }

    #[test]
    fn flagship_hessian_is_pd_and_matches_differences(b1 in 0.3f64..4.0, b2 in -4.0f64..4.0) {
        prop_assume!(b2.abs() > 0.1 && (b1 - b2).abs() > 0.1);
        let p = flagship();
        let r = exp_integral(&p, &[b1, b2]).unwrap();
        let eig = r.hessian.clone().symmetric_eigen().eigenvalues;
        prop_assert!(eig.iter().all(|&e| e > 0.0));
        prop_assert!((r.hessian[(0, 1)] - r.hessian[(1, 0)]).abs() <= 1e-12 * r.hessian.norm());
        let h = 1e-5;
        for i in 0..2 {
            let mut bp = vec![b1, b2];
            let mut bm = bp.clone();
            bp[i] += h;
            bm[i] -= h;
            let (rp, rm) = (exp_integral(&p, &bp).unwrap(), exp_integral(&p, &bm).unwrap());
            let fd = (rp.value - rm.value) / (2.0 * h);
            prop_assert!((fd - r.gradient[i]).abs() < 1e-6 * r.gradient.norm());
        }
        let sym = exp_integral(&p, &[b1, b1 - b2]).unwrap().value;
        prop_assert!((sym - r.value).abs() < 1e-12 * r.value);
    }

    #[test]
    fn lambda_is_the_open_half_space(alpha in -3.0f64..3.0, beta in -100.0f64..100.0) {
        let problem = WeightedVolumeProblem::new(flagship(), Prefactor::One).unwrap();
        prop_assert_eq!(problem.lambda_contains(&[alpha, beta]), alpha > 0.0);
    }

    #[test]
    fn guillemin_potential_is_convex_inside(x0 in -0.99f64..5.0, t in 0.005f64..0.995) {
        let p = flagship();
        // the x₂-section of the flagship at x₁ = x0 is [max(-1, -1 - x0), 1]
        let lo = (-1.0f64).max(-1.0 - x0);
        let x1 = lo + t * (1.0 - lo);
        let hs = guillemin_hessian(&p, &[x0, x1]).unwrap();
        prop_assert!(hs[0][0] > 0.0 && hs[0][0] * hs[1][1] - hs[0][1] * hs[1][0] > 0.0);
    }

    #[test]
    fn biconjugation_and_defining_relation(a in 0.3f64..3.0, c in -1.0f64..1.0, d in 0.0f64..2.0) {
        let h = 0.02;
        let f = move |x: f64| 0.5 * a * x * x + c * x + d * x.cosh().ln();
        let curvature = a + d;
        let grid = GridFunction::sample_interval(-3.0, 3.0, h, DomainTag::Xi, f).unwrap();
        let back = legendre_transform(&legendre_transform(&grid).unwrap()).unwrap();
        for k in 1..back.len() - 1 {
            prop_assert!((back.values()[k] - f(back.coord(k))).abs() < 2.0 * curvature * h);
        }
        let nodes: Vec<usize> = (10..grid.len() - 10).step_by(7).collect();
        let slopes: Vec<Vec<f64>> =
            nodes.iter().map(|&k| vec![(grid.values()[k + 1] - grid.values()[k - 1]) / (2.0 * h)]).collect();
        let conj = legendre_eval(&grid, &slopes).unwrap();
        for ((&k, p), l) in nodes.iter().zip(&slopes).zip(&conj) {
            let rel = grid.values()[k] + l - p[0] * grid.coord(k);
            prop_assert!(rel > -1e-12 && rel < curvature * h);
        }
    }

    #[test]
    fn minimizer_is_start_and_prefactor_independent(b1 in 0.2f64..5.0, b2 in -5.0f64..5.0) {
        let one = WeightedVolumeProblem::new(flagship(), Prefactor::One).unwrap();
        let two_pi = WeightedVolumeProblem::new(flagship(), Prefactor::TwoPi).unwrap();
        let reference = one.minimize_f(&one.default_start().unwrap(), NewtonOptions::default()).unwrap();
        let r = one.minimize_f(&[b1, b2], NewtonOptions::default()).unwrap();
        let s = two_pi.minimize_f(&[b1, b2], NewtonOptions::default()).unwrap();
        for i in 0..2 {
            prop_assert!((r.b_x.b[i] - reference.b_x.b[i]).abs() < 1e-8);
            prop_assert!((s.b_x.b[i] - r.b_x.b[i]).abs() < 1e-10);
        }
        prop_assert!(one.lambda_contains(&r.b_x.b));
        let fut = one.futaki_residual(&r.b_x.b).unwrap();
        let scale = one.f_eval(&r.b_x.b).unwrap().value;
        prop_assert!(fut.norm() < 1e-9 * scale);
        for w in r.trace.windows(2) {
            prop_assert!(w[1].value <= w[0].value * (1.0 + 1e-14));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn normalized_bumps_integrate_to_zero(amp in -2.0f64..2.0, center in -3.0f64..3.0, width in 0.2f64..2.0) {
        let model = TorusModel::gaussian(-8.0, 6.0, 0.02).unwrap();
        let (f, _) = normalize_data(&model, &model.bumped_data(amp, &[center], width)).unwrap();
        prop_assert!(normalization_residual(&model, &f).abs() < 1e-10);
    }

    #[test]
    fn continuity_path_invariants(amp in -0.6f64..0.6, center in -1.0f64..1.0, width in 0.4f64..1.0) {
        prop_assume!(amp.abs() > 0.05);
        let model = TorusModel::gaussian(-6.0, 5.0, 0.05).unwrap();
        let (f, c0) = normalize_data(&model, &model.bumped_data(amp, &[center], width)).unwrap();
        let states = continuity_solve(&model, &f, &ContinuityOptions { steps: 5, ..Default::default() }).unwrap();
        prop_assert_eq!(states.len(), 6);
        let m0 = states[0].mass;
        for st in &states {
            prop_assert!(((st.mass - m0) / m0).abs() < 1e-8);
            prop_assert!(st.functional_i - st.functional_j >= -1e-10);
            prop_assert!(st.residual_norm < 1e-10);
            let scale = 1.0 + st.monitors.sup_psi.max(-st.monitors.inf_psi);
            prop_assert!(st.weighted_mean.abs() < 1e-10 * scale);
            let expected = data_path(&f, st.s);
            prop_assert_eq!(expected.values(), st.f_s.values());
            let cs = (st.s * c0.exp_m1()).ln_1p();
            prop_assert!((st.c_s - cs).abs() < 1e-6);
        }
        let fit = far_field_fit(&model, &states.last().unwrap().psi).unwrap();
        prop_assert!(fit.residual < fit.residual_constant);
    }
}

#[test]
fn product_polytope_recession_is_first_axis() {
    let p = Polyhedron::new(
        2,
        vec![HalfSpace::from_ints(&[1, 0], 1), HalfSpace::from_ints(&[0, 1], 1), HalfSpace::from_ints(&[0, -1], 1)],
    )
    .unwrap();
    assert_eq!(p.recession_rays(), &[LatticeVector::new(vec![1, 0])][..]);
}
