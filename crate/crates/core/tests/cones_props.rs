mod common;

use common::{interval_module, p, poly, samples, square_preordering};
use conenorm::cones::{sample_kset, schmudgen_products, ModuleKind, QuadraticModule, SampleBox};
use conenorm::poly::Point;
use conenorm::sos::{verify_certificate, SolverOptions};
use proptest::prelude::*;

#[test]
fn products_are_nonnegative_on_samples() {
    let m = QuadraticModule::preordering(2, vec![p("1 - x^2", 2), p("1 - y^2", 2), p("x + y", 2)]).unwrap();
    let prods = schmudgen_products(&m).unwrap();
    assert!(prods.len() <= 8);
    let d = samples(&m, 300, 4);
    assert!(!d.is_empty());
    for g in &prods {
        for x in d.points() {
            assert!(g.eval(x.coords()).unwrap() >= -1e-12);
        }
    }
}

#[test]
fn witness_is_a_checked_identity() {
    let m = square_preordering();
    let w = conenorm::cones::archimedean_witness(&m, 16.0, 4, &SolverOptions::default()).unwrap().unwrap();
    let f = &conenorm::poly::Polynomial::from_f64(2, w.radius_sq) - &conenorm::poly::Polynomial::sum_of_squared_vars(2);
    let v = verify_certificate(&w.certificate, &f, &m).unwrap();
    assert!(v.residual <= 1e-8 && v.min_eigenvalue >= -1e-8, "{v:?}");
}

#[test]
fn combined_kind() {
    let qm = interval_module();
    let pre = QuadraticModule::preordering(1, vec![p("x", 1)]).unwrap();
    assert_eq!(qm.combine(&qm).unwrap().kind(), ModuleKind::QuadraticModule);
    assert_eq!(qm.combine(&pre).unwrap().kind(), ModuleKind::Preordering);
    assert_eq!(qm.combine(&pre).unwrap().generators().len(), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kset_monotone_in_tol(g in poly(2, 2, 4), x in -2.0f64..2.0, y in -2.0f64..2.0, t1 in 0.0f64..1.0, dt in 0.0f64..1.0) {
        prop_assume!(!g.is_zero());
        let m = QuadraticModule::quadratic(2, vec![g]).unwrap();
        let pt = Point(vec![x, y]);
        if m.kset_contains(&pt, t1).unwrap() {
            prop_assert!(m.kset_contains(&pt, t1 + dt).unwrap());
        }
    }

    #[test]
    fn sampling_is_deterministic_and_inside(g in poly(2, 2, 4), seed in 0u64..1000) {
        prop_assume!(!g.is_zero());
        let m = QuadraticModule::quadratic(2, vec![g]).unwrap();
        let b = SampleBox::cube(2, -1.5, 1.5).unwrap();
        let s1 = sample_kset(&m, &b, 20, seed).unwrap();
        let s2 = sample_kset(&m, &b, 20, seed).unwrap();
        prop_assert_eq!(&s1, &s2);
        prop_assert_eq!(s1.possibly_empty, s1.is_empty());
        for x in s1.points() {
            prop_assert!(b.contains(x));
            prop_assert!(m.kset_contains(x, 0.0).unwrap());
        }
    }
}
