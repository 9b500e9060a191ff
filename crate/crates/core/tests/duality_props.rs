mod common;

use common::{interval_module, p, poly, samples, square_preordering};
use conenorm::cones::QuadraticModule;
use conenorm::duality::{closure_membership, separate, ClosureOptions, ClosureVerdict, MomentFunctional};
use conenorm::poly::{Point, Polynomial};
use conenorm::sos::{membership, SolverOptions};
use proptest::prelude::*;

fn mixture(points: &[Point], weights: &[f64], d: u32) -> MomentFunctional {
    let total: f64 = weights.iter().sum();
    let terms: Vec<(f64, MomentFunctional)> = points
        .iter()
        .zip(weights)
        .map(|(x, w)| (w / total, MomentFunctional::point_evaluation(x, d)))
        .collect();
    MomentFunctional::combination(&terms).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn point_evaluations_are_multiplicative_and_positive(x in -1.0f64..1.0, y in -1.0f64..1.0, a in poly(2, 2, 4), b in poly(2, 2, 4)) {
        let l = MomentFunctional::point_evaluation(&Point(vec![x, y]), 2);
        prop_assert!(l.multiplicativity_defect(&[(a, b)]).unwrap() <= 1e-10);
        prop_assert!(l.is_positive_on(&square_preordering(), 1e-9).unwrap());
    }

    #[test]
    fn mixtures_are_positive(xs in prop::collection::vec(-1.0f64..1.0, 1..6), ws in prop::collection::vec(0.1f64..1.0, 6)) {
        let pts: Vec<Point> = xs.iter().map(|&x| Point(vec![x])).collect();
        let l = mixture(&pts, &ws[..pts.len()], 3);
        prop_assert!(l.is_positive_on(&interval_module(), 1e-9).unwrap());
        prop_assert!((l.mass() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn positive_functionals_are_nonnegative_on_certified_members() {
    let m = interval_module();
    let d = samples(&m, 40, 2);
    let members = ["1 + x", "1 - x^2", "2 + x^3 - x", "x^2 + 0.25", "(1 - x^2)*x^2 + 0.5 - 1/2*x"];
    let l = mixture(&d.points()[..10], &[1.0; 10], 3);
    for f in members {
        let f = p(f, 1);
        if membership(&f, &m, 6, &SolverOptions::default()).unwrap().is_certified() {
            assert!(l.apply(&f).unwrap() >= -1e-6, "{f}");
        }
    }
}

#[test]
fn separation_witnesses_recheck() {
    let m = square_preordering();
    let d = samples(&m, 400, 8);
    for f in ["x + y", "x*y - 0.5", "1 - 3*x^2*y^2", "x^3 - 1/2*y"] {
        let f = p(f, 2);
        let s = separate(&f, &m, &d, 1e-9).unwrap().expect("negative somewhere on the square");
        assert!(m.kset_contains(&s.point, 0.0).unwrap());
        let v = f.eval(s.point.coords()).unwrap();
        assert!(v < -1e-9 && (v - s.value).abs() <= 1e-12);
    }
}

#[test]
fn verdicts_are_exclusive_and_sound() {
    let m = interval_module();
    let opts = ClosureOptions { eps_grid: vec![0.5, 0.1], d_max: 6, samples: 200, ..Default::default() };
    for f in ["x", "x^2", "1 - x^2", "x^3", "x^2 - 0.01", "(x - 0.5)^2"] {
        let f = p(f, 1);
        let out = closure_membership(&f, &m, None, &opts).unwrap();
        match &out.verdict {
            ClosureVerdict::NotInClosure(s) => {
                assert!(m.kset_contains(&s.point, 0.0).unwrap());
                assert!(f.eval(s.point.coords()).unwrap() < -1e-9);
            }
            ClosureVerdict::InClosure(c) => {
                assert_eq!(c.len(), 2);
                assert!(out.samples.points().iter().all(|x| f.eval(x.coords()).unwrap() >= -1e-9));
            }
            ClosureVerdict::Unknown(_) => {}
        }
    }
}

#[test]
fn distinct_points_mix_to_a_non_multiplicative_functional() {
    let l = mixture(&[Point(vec![0.0]), Point(vec![1.0])], &[1.0, 1.0], 1);
    let x = p("x", 1);
    assert_eq!(l.multiplicativity_defect(&[(x.clone(), x)]).unwrap(), 0.25);
    assert_eq!(l.multiplicativity_defect(&[(Polynomial::one(1), p("x^2", 1))]).unwrap(), 0.0);
    let _ = QuadraticModule::sums_of_squares(1);
}
