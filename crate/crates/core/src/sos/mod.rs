//! Truncated membership `f ∈ M_d` through Gram-matrix semidefinite
//! feasibility, with independent certificate verification.
//!
//! The degree-`d` truncation of a module with effective generators
//! `g_0 = 1, g_1, ..., g_k` is the set of polynomials
//! `sum_i (b_i^T Q_i b_i) g_i` with `Q_i ⪰ 0` and `b_i` the vector of
//! monomials of degree at most `(d - deg g_i) / 2`. Solvers only ever
//! certify membership; [`MembershipStatus::Unknown`] is not a proof of
//! non-membership.

mod certificate;
mod gram;
pub mod linalg;
mod solver;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cones::{ConeError, QuadraticModule};
use crate::poly::{PolyError, Polynomial};

pub use certificate::{verify_certificate, CertificateBlock, GramCertificate, Verification};
pub use gram::{gram_bases, GramBlock};
pub use linalg::{min_eigenvalue, project_psd, symmetric_eigen, LinalgError, Matrix, SymmetricEigen};
pub use solver::TruncatedModule;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SosError {
    #[error("polynomial degree {poly_degree} exceeds truncation degree {degree}")]
    Degree { poly_degree: u32, degree: u32 },
    #[error("invalid solver option: {0}")]
    InvalidOption(String),
    #[error("certificate does not match the module: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Which feasibility engine searches for the Gram matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Primal-dual path following on `min tr(Q)` over the feasible set.
    #[default]
    InteriorPoint,
    /// Alternating projections between the coefficient-matching affine
    /// subspace and the product of PSD cones.
    AlternatingProjections,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Bound on both the verified residual and the negative eigenvalue floor.
    pub tol: f64,
    pub max_iter: usize,
    pub method: Method,
}

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 50_000;

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, method: Method::InteriorPoint }
    }
}

impl SolverOptions {
    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    fn validate(&self) -> Result<(), SosError> {
        if !(self.tol > 0.0) {
            return Err(SosError::InvalidOption(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(SosError::InvalidOption("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MembershipStatus {
    Certified(GramCertificate),
    Unknown { iterations: usize, final_residual: f64 },
}

impl MembershipStatus {
    pub fn is_certified(&self) -> bool {
        matches!(self, MembershipStatus::Certified(_))
    }

    pub fn certificate(&self) -> Option<&GramCertificate> {
        match self {
            MembershipStatus::Certified(c) => Some(c),
            MembershipStatus::Unknown { .. } => None,
        }
    }
}

/// Searches for a degree-`d` representation of `f` in `module`.
pub fn membership(
    f: &Polynomial,
    module: &QuadraticModule,
    d: u32,
    opts: &SolverOptions,
) -> Result<MembershipStatus, SosError> {
    TruncatedModule::new(module, d)?.membership(f, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse;

    fn qm(gens: &[&str], n: usize) -> QuadraticModule {
        QuadraticModule::quadratic(n, gens.iter().map(|g| parse(g, n).unwrap()).collect()).unwrap()
    }

    fn p(s: &str, n: usize) -> Polynomial {
        parse(s, n).unwrap()
    }

    #[test]
    fn generator_is_certified() {
        let m = qm(&["1 - x^2"], 1);
        let f = p("1 - x^2", 1);
        for method in [Method::InteriorPoint, Method::AlternatingProjections] {
            let opts = SolverOptions::default().with_method(method);
            let status = membership(&f, &m, 2, &opts).unwrap();
            let cert = status.certificate().expect("certified");
            let v = verify_certificate(cert, &f, &m).unwrap();
            assert!(v.passes(1e-8), "{method:?}: {v:?}");
            assert!((v.residual - cert.residual).abs() <= 1e-12);
            let q1 = &cert.blocks.iter().find(|b| b.generator_index == 1).unwrap().q;
            assert!((q1[0] - 1.0).abs() < 1e-4, "{method:?}: {q1:?}");
        }
    }

    #[test]
    fn one_plus_x_is_certified() {
        let m = qm(&["1 - x^2"], 1);
        let f = p("1 + x", 1);
        let cert = membership(&f, &m, 2, &SolverOptions::default()).unwrap();
        let cert = cert.certificate().expect("certified");
        // Unique solution: sigma_0 = (1+x)^2 / 2, sigma_1 = 1/2.
        let q0 = &cert.blocks[0].q;
        for v in q0 {
            assert!((v - 0.5).abs() < 1e-3, "{q0:?}");
        }
        assert!((cert.blocks[1].q[0] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn negative_on_k_stays_unknown() {
        let m = qm(&["1 - x^2"], 1);
        let f = p("x", 1);
        for d in 1..=8 {
            let status = membership(&f, &m, d, &SolverOptions::default()).unwrap();
            assert!(!status.is_certified(), "d = {d}");
        }
    }

    #[test]
    fn degree_precondition() {
        let m = qm(&["1 - x^2"], 1);
        assert!(matches!(
            membership(&p("x^4", 1), &m, 2, &SolverOptions::default()),
            Err(SosError::Degree { poly_degree: 4, degree: 2 })
        ));
        let bad = SolverOptions { tol: 0.0, ..SolverOptions::default() };
        assert!(membership(&p("1", 1), &m, 2, &bad).is_err());
    }

    #[test]
    fn zero_is_trivially_certified() {
        let m = qm(&["1 - x^2"], 1);
        let status = membership(&Polynomial::zero(1), &m, 4, &SolverOptions::default()).unwrap();
        let cert = status.certificate().unwrap();
        assert_eq!(cert.residual, 0.0);
    }

    #[test]
    fn monotone_in_degree_by_reverification() {
        let m = qm(&["1 - x^2"], 1);
        let f = p("1 + x", 1);
        let cert = membership(&f, &m, 2, &SolverOptions::default()).unwrap();
        let cert = cert.certificate().unwrap().clone();
        for d in 3..=6 {
            let embedded = cert.embed(&m, d).unwrap();
            assert_eq!(embedded.degree, d);
            let v = verify_certificate(&embedded, &f, &m).unwrap();
            assert!(v.passes(1e-8));
        }
    }

    #[test]
    fn bivariate_sos_with_ap() {
        let m = QuadraticModule::sums_of_squares(2);
        let f = p("x^2 + 2*x*y + 2*y^2 + 1", 2);
        let opts = SolverOptions::default().with_method(Method::AlternatingProjections);
        assert!(membership(&f, &m, 2, &opts).unwrap().is_certified());
        assert!(membership(&f, &m, 2, &SolverOptions::default()).unwrap().is_certified());
    }
}
