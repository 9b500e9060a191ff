#![allow(dead_code)]

use conenorm::cones::{sample_kset, QuadraticModule, SampleBox, SampleSet};
use conenorm::poly::{parse, MultiIndex, Polynomial};
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;

/// Polynomials with up to `max_terms` terms of degree `<= max_degree` and
/// coefficients `k / 4`, `|k| <= 8`.
pub fn poly(nvars: usize, max_degree: u32, max_terms: usize) -> impl Strategy<Value = Polynomial> {
    let monomials = MultiIndex::all_up_to(nvars, max_degree);
    let n = monomials.len();
    prop::collection::vec((0..n, -8i64..=8), 0..=max_terms).prop_map(move |terms| {
        Polynomial::from_terms(
            nvars,
            terms
                .into_iter()
                .map(|(i, k)| (monomials[i].clone(), BigRational::new(BigInt::from(k), BigInt::from(4)))),
        )
        .unwrap()
    })
}

pub fn p(s: &str, n: usize) -> Polynomial {
    parse(s, n).unwrap()
}

pub fn interval_module() -> QuadraticModule {
    QuadraticModule::quadratic(1, vec![p("1 - x^2", 1)]).unwrap()
}

pub fn square_preordering() -> QuadraticModule {
    QuadraticModule::preordering(2, vec![p("1 - x^2", 2), p("1 - y^2", 2)]).unwrap()
}

pub fn samples(m: &QuadraticModule, count: usize, seed: u64) -> SampleSet {
    sample_kset(m, &SampleBox::cube(m.nvars(), -1.0, 1.0).unwrap(), count, seed).unwrap()
}
