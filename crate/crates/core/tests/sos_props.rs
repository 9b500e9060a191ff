mod common;

use common::{interval_module, poly, samples, square_preordering};
use conenorm::cones::QuadraticModule;
use conenorm::poly::Polynomial;
use conenorm::sos::{membership, verify_certificate, Method, SolverOptions};
use proptest::prelude::*;

fn sum_of_squares(parts: &[Polynomial], nvars: usize, shift: f64) -> Polynomial {
    let mut f = Polynomial::from_f64(nvars, shift);
    for q in parts {
        f = &f + &(q * q);
    }
    f
}

#[test]
fn certified_members_are_nonnegative_on_samples() {
    let m = square_preordering();
    let d = samples(&m, 300, 11);
    for f in ["2 - x^2 - y^2", "1 + x*y", "(1 - x^2)*(1 - y^2) + x^4", "1 - x^4*y^2 + 0.5*y"] {
        let f = common::p(f, 2);
        let Some(cert) = membership(&f, &m, 6, &SolverOptions::default()).unwrap().certificate().cloned() else {
            continue;
        };
        let v = verify_certificate(&cert, &f, &m).unwrap();
        assert!(v.passes(1e-8));
        for x in d.points() {
            assert!(f.eval(x.coords()).unwrap() >= -1e-6);
        }
    }
}

#[test]
fn both_methods_agree_on_interior_instances() {
    let m = interval_module();
    let f = common::p("2 + x - x^3", 1);
    for method in [Method::InteriorPoint, Method::AlternatingProjections] {
        let opts = SolverOptions::default().with_method(method);
        assert!(membership(&f, &m, 4, &opts).unwrap().is_certified(), "{method:?}");
    }
}

#[test]
fn boundary_instances_never_yield_invalid_certificates() {
    // No x^4 term forces the x^2 row of every Gram matrix to vanish, so no
    // positive definite solution exists; the answer may be Unknown but any
    // certificate must verify.
    let m = QuadraticModule::sums_of_squares(2);
    let mut certified = 0;
    for k in -8..=8 {
        let b = common::p(&format!("{k}/4 - 1/2*y^2 - 2*x*y"), 2);
        let c = common::p("1/2*y + 2*x", 2);
        let f = sum_of_squares(&[b, c], 2, 0.1);
        if let Some(cert) = membership(&f, &m, 4, &SolverOptions::default()).unwrap().certificate() {
            assert!(verify_certificate(cert, &f, &m).unwrap().passes(1e-8));
            certified += 1;
        }
    }
    assert!(certified > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Adding 1/10 of every squared basis monomial keeps a positive definite
    // Gram matrix available; without it the solutions can lie on a proper face.
    #[test]
    fn random_sums_of_squares_certify(a in poly(2, 2, 4), b in poly(2, 2, 4), c in poly(2, 1, 3)) {
        let m = QuadraticModule::sums_of_squares(2);
        let f = &sum_of_squares(&[a, b, c], 2, 0.0) + &common::p("1/10*(1 + x^2 + y^2 + x^4 + x^2*y^2 + y^4)", 2);
        let status = membership(&f, &m, 4, &SolverOptions::default()).unwrap();
        let cert = status.certificate().expect("shifted sum of squares certifies");
        let v = verify_certificate(cert, &f, &m).unwrap();
        prop_assert!(v.passes(1e-8));
        prop_assert!((v.residual - cert.residual).abs() <= 1e-12);
        prop_assert!(cert.min_eigenvalue >= -1e-8);
    }

    #[test]
    fn certificates_embed_into_higher_degrees(a in poly(1, 2, 3), k in 1u32..=3) {
        let m = interval_module();
        let f = &sum_of_squares(&[a], 1, 0.5) + &common::p("1 - x^2", 1);
        let d = f.degree().max(2);
        let cert = membership(&f, &m, d, &SolverOptions::default()).unwrap().certificate().cloned().unwrap();
        let up = cert.embed(&m, d + k).unwrap();
        prop_assert!(verify_certificate(&up, &f, &m).unwrap().passes(1e-8));
    }
}
