//! Two-sided enclosures of the cone seminorm `‖a‖_M = inf { r : r ± a ∈ M }`.
//!
//! The lower bound is the sup-norm `ρ_D(a) = max_{α∈D} |a(α)|` over a finite
//! sample `D ⊆ K_M`: `r ± a ∈ M` forces `|a| <= r` on `K_M`. The upper bound
//! is the smallest `r` found by bisection for which both `r + a` and `r - a`
//! carry verified degree-`d` certificates.

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::cones::{archimedean_witness, ArchimedeanWitness, ConeError, QuadraticModule, SampleSet};
use crate::poly::{rational_from_f64, rational_to_f64, Point, PolyError, Polynomial};
use crate::sos::{GramCertificate, SolverOptions, SosError, TruncatedModule};

pub const DEFAULT_BISECTION_TOL: f64 = 1e-6;
pub const MAX_BISECTION_STEPS: usize = 60;

const GALLOP_START: f64 = 1e-3;
const GALLOP_FACTOR: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeminormError {
    #[error("sample set is empty")]
    EmptySample,
    #[error(
        "no Archimedean witness N - sum x_i^2 found (N <= {n_max}, degree <= {d_max}); \
         the cone seminorm may be infinite, use the direct-limit bound (dlimit) instead"
    )]
    NotArchimedean { n_max: f64, d_max: u32 },
    #[error("bisection tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error(transparent)]
    Sos(#[from] SosError),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// `ρ_D(a)` computed exactly: coordinates are read as the rationals their
/// `f64` values denote.
pub fn rho_d_exact(a: &Polynomial, d: &SampleSet) -> Result<BigRational, SeminormError> {
    rho_d_argmax(a, d).map(|(v, _)| v)
}

/// `ρ_D(a)`, rounded to the nearest `f64`.
pub fn rho_d(a: &Polynomial, d: &SampleSet) -> Result<f64, SeminormError> {
    rho_d_exact(a, d).map(|v| rational_to_f64(&v))
}

/// `ρ_D(a)` together with the first point of `D` attaining it.
pub fn rho_d_argmax(a: &Polynomial, d: &SampleSet) -> Result<(BigRational, Point), SeminormError> {
    let mut best: Option<(BigRational, &Point)> = None;
    for p in d.points() {
        let x: Vec<BigRational> = p.coords().iter().map(|&v| rational_from_f64(v)).collect();
        let v = a.eval_exact(&x)?.abs();
        if best.as_ref().is_none_or(|(b, _)| v > *b) {
            best = Some((v, p));
        }
    }
    best.map(|(v, p)| (v, p.clone())).ok_or(SeminormError::EmptySample)
}

/// Certified lower bound `ρ_D(a) <= ‖a‖_M` for `D ⊆ K_M`.
pub fn seminorm_lb(a: &Polynomial, d: &SampleSet) -> Result<f64, SeminormError> {
    rho_d(a, d)
}

/// Certificates for `r + a` and `r - a` at the reported upper bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCertificates {
    pub r: f64,
    pub plus: GramCertificate,
    pub minus: GramCertificate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpperBound {
    /// `+∞` when even the bracket's upper end failed to certify.
    pub value: f64,
    pub degree: u32,
    pub steps: usize,
    pub certificates: Option<BoundCertificates>,
}

/// Enclosure `lb <= ‖a‖_M <= ub`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Interval {
    pub lb: f64,
    pub ub: f64,
    pub degree: u32,
    pub samples: usize,
    pub seed: u64,
    pub bisection_steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificates: Option<BoundCertificates>,
}

impl Interval {
    pub fn gap(&self) -> f64 {
        self.ub - self.lb
    }
}

/// Search budget for the Archimedean witness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WitnessBudget {
    pub n_max: f64,
    pub d_max: u32,
}

impl Default for WitnessBudget {
    fn default() -> Self {
        WitnessBudget { n_max: 1e4, d_max: 4 }
    }
}

/// Seminorm queries against one Archimedean module; the witness is found
/// once and reused.
#[derive(Debug, Clone)]
pub struct Seminorm {
    module: QuadraticModule,
    witness: ArchimedeanWitness,
    opts: SolverOptions,
    bisection_tol: f64,
}

impl Seminorm {
    /// Refuses modules without a witness `N - sum x_i^2 ∈ M` inside `budget`.
    pub fn new(
        module: &QuadraticModule,
        budget: WitnessBudget,
        opts: SolverOptions,
    ) -> Result<Self, SeminormError> {
        match archimedean_witness(module, budget.n_max, budget.d_max, &opts)? {
            Some(witness) => Ok(Self::with_witness(module, witness, opts)),
            None => Err(SeminormError::NotArchimedean { n_max: budget.n_max, d_max: budget.d_max }),
        }
    }

    pub fn with_witness(module: &QuadraticModule, witness: ArchimedeanWitness, opts: SolverOptions) -> Self {
        Seminorm { module: module.clone(), witness, opts, bisection_tol: DEFAULT_BISECTION_TOL }
    }

    pub fn with_bisection_tol(mut self, tol: f64) -> Result<Self, SeminormError> {
        if !(tol > 0.0) {
            return Err(SeminormError::InvalidTolerance(tol));
        }
        self.bisection_tol = tol;
        Ok(self)
    }

    pub fn module(&self) -> &QuadraticModule {
        &self.module
    }

    pub fn witness(&self) -> &ArchimedeanWitness {
        &self.witness
    }

    /// Start of the bisection bracket. On `K ⊆ {sum x_i^2 <= N}` a monomial of
    /// degree `k` is bounded by `N^(k/2)`, so `max(1, N)^(deg/2) (1 + ‖a‖_1)`
    /// bounds `|a|` on `K`.
    pub fn bracket_top(&self, a: &Polynomial) -> f64 {
        let n = self.witness.radius_sq.max(1.0);
        let k = (a.degree() as f64 / 2.0).max(1.0);
        n.powf(k) * (1.0 + a.l1_norm())
    }

    /// Smallest certified `r` above 0.
    pub fn ub(&self, a: &Polynomial, d: u32) -> Result<UpperBound, SeminormError> {
        self.ub_from(a, d, 0.0)
    }

    /// Smallest certified `r`, found by galloping up from `lo` (capped at
    /// [`Seminorm::bracket_top`]) and then bisecting. `lo` should be a valid
    /// lower bound such as `ρ_D(a)`, and is returned as-is when it certifies
    /// already.
    pub fn ub_from(&self, a: &Polynomial, d: u32, lo: f64) -> Result<UpperBound, SeminormError> {
        let tm = TruncatedModule::new(&self.module, d)?;
        self.ub_with(&tm, a, lo)
    }

    /// As [`Seminorm::ub_from`] with a prebuilt truncation (reused across
    /// many polynomials at the same degree).
    pub fn ub_with(&self, tm: &TruncatedModule, a: &Polynomial, lo: f64) -> Result<UpperBound, SeminormError> {
        let d = tm.degree();
        if a.degree() > d {
            return Err(SosError::Degree { poly_degree: a.degree(), degree: d }.into());
        }
        let check = |r: f64| -> Result<Option<BoundCertificates>, SeminormError> {
            let rp = Polynomial::from_f64(a.nvars(), r);
            let Some(plus) = tm.membership(&(&rp + a), &self.opts)?.certificate().cloned() else {
                return Ok(None);
            };
            let Some(minus) = tm.membership(&(&rp - a), &self.opts)?.certificate().cloned() else {
                return Ok(None);
            };
            Ok(Some(BoundCertificates { r, plus, minus }))
        };

        let mut lo = lo.max(0.0);
        if let Some(c) = check(lo)? {
            return Ok(UpperBound { value: lo, degree: d, steps: 0, certificates: Some(c) });
        }
        // Gallop up from `lo`: the sampled bound is usually close, and
        // infeasible solves near the bracket top are the expensive ones.
        let top = self.bracket_top(a).max(lo);
        let mut step = (GALLOP_START * (1.0 + lo)).max(self.bisection_tol);
        let mut steps = 0;
        let (mut hi, mut best) = loop {
            let r = (lo + step).min(top);
            steps += 1;
            if let Some(c) = check(r)? {
                break (r, c);
            }
            if r >= top {
                return Ok(UpperBound { value: f64::INFINITY, degree: d, steps, certificates: None });
            }
            lo = r;
            step *= GALLOP_FACTOR;
        };
        while hi - lo > self.bisection_tol && steps < MAX_BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            steps += 1;
            match check(mid)? {
                Some(c) => {
                    hi = mid;
                    best = c;
                }
                None => lo = mid,
            }
        }
        Ok(UpperBound { value: hi, degree: d, steps, certificates: Some(best) })
    }

    /// `[ρ_D(a), ub]` with the bisection started at the sampled bound.
    pub fn interval(&self, a: &Polynomial, d: u32, samples: &SampleSet) -> Result<Interval, SeminormError> {
        let lb = seminorm_lb(a, samples)?;
        let ub = self.ub_from(a, d, lb)?;
        Ok(Interval {
            lb,
            ub: ub.value,
            degree: d,
            samples: samples.len(),
            seed: samples.seed,
            bisection_steps: ub.steps,
            certificates: ub.certificates,
        })
    }
}

/// Upper bound for `‖a‖_M` at degree `d` with bisection width `tol`.
pub fn seminorm_ub(a: &Polynomial, module: &QuadraticModule, d: u32, tol: f64) -> Result<f64, SeminormError> {
    let s = Seminorm::new(module, WitnessBudget::default(), SolverOptions::default())?.with_bisection_tol(tol)?;
    Ok(s.ub(a, d)?.value)
}

pub fn seminorm_interval(
    a: &Polynomial,
    module: &QuadraticModule,
    d: u32,
    samples: &SampleSet,
) -> Result<Interval, SeminormError> {
    Seminorm::new(module, WitnessBudget::default(), SolverOptions::default())?.interval(a, d, samples)
}

/// `true` iff `ρ_D(a) = 0`, i.e. `a` vanishes on every sample point.
pub fn vanishes_on(a: &Polynomial, d: &SampleSet) -> Result<bool, SeminormError> {
    Ok(rho_d_exact(a, d)?.is_zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cones::{sample_kset, SampleBox};
    use crate::poly::parse;

    fn p(s: &str) -> Polynomial {
        parse(s, 1).unwrap()
    }

    fn interval_module() -> QuadraticModule {
        QuadraticModule::quadratic(1, vec![p("1 - x^2")]).unwrap()
    }

    fn pts(v: &[f64]) -> SampleSet {
        SampleSet::from_points(v.iter().map(|&x| Point(vec![x])).collect())
    }

    #[test]
    fn rho_examples() {
        let d = pts(&[-1.0, 0.5]);
        assert_eq!(rho_d(&p("x"), &d).unwrap(), 1.0);
        assert_eq!(rho_d(&p("x + 1"), &d).unwrap(), 1.5);
        assert_eq!(rho_d(&p("0"), &d).unwrap(), 0.0);
        assert_eq!(rho_d(&p("x"), &pts(&[])), Err(SeminormError::EmptySample));
    }

    #[test]
    fn lb_examples() {
        let m = interval_module();
        let d = sample_kset(&m, &SampleBox::cube(1, -1.0, 1.0).unwrap(), 20, 1).unwrap();
        assert_eq!(seminorm_lb(&p("x"), &d).unwrap(), 1.0);
        assert_eq!(seminorm_lb(&p("x^2"), &d).unwrap(), 1.0);
        assert_eq!(seminorm_lb(&p("1"), &d).unwrap(), 1.0);
    }

    #[test]
    fn ub_on_certificated_instances() {
        let m = interval_module();
        for a in ["x", "x^2"] {
            let ub = seminorm_ub(&p(a), &m, 2, 1e-6).unwrap();
            assert!((ub - 1.0).abs() <= 1e-6, "{a}: {ub}");
        }
        let ub = seminorm_ub(&p("5"), &m, 2, 1e-6).unwrap();
        assert!((ub - 5.0).abs() <= 1e-6, "{ub}");
    }

    #[test]
    fn interval_squeezes() {
        let m = interval_module();
        let d = sample_kset(&m, &SampleBox::cube(1, -1.0, 1.0).unwrap(), 50, 3).unwrap();
        let iv = seminorm_interval(&p("x"), &m, 2, &d).unwrap();
        assert_eq!(iv.lb, 1.0);
        assert!(iv.ub >= iv.lb && iv.gap() <= 1e-6, "{iv:?}");
        let c = iv.certificates.unwrap();
        assert_eq!(c.r, iv.ub);

        let zero = seminorm_interval(&p("0"), &m, 2, &d).unwrap();
        assert_eq!((zero.lb, zero.ub), (0.0, 0.0));
    }

    #[test]
    fn unit_interval_example() {
        let m = QuadraticModule::quadratic(1, vec![p("1 - x^2"), p("x")]).unwrap();
        let d = sample_kset(&m, &SampleBox::cube(1, -1.0, 1.0).unwrap(), 200, 5).unwrap();
        let iv = seminorm_interval(&p("x^2 - x"), &m, 4, &d).unwrap();
        assert!((iv.lb - 0.25).abs() < 1e-3, "{iv:?}");
        assert!(iv.ub >= iv.lb && iv.gap() <= 0.05, "{iv:?}");
    }

    #[test]
    fn refuses_half_line() {
        let m = QuadraticModule::quadratic(1, vec![p("x")]).unwrap();
        assert!(matches!(
            seminorm_ub(&p("x"), &m, 4, 1e-6),
            Err(SeminormError::NotArchimedean { .. })
        ));
    }
}
