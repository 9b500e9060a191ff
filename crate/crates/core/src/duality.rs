//! Truncated moment functionals, positivity through moment and localizing
//! matrices, point-witness separation and the closure test.
//!
//! The closure of `M` in the `‖·‖_T` topology is `Psd(K_M ∩ K_T)`. That is
//! tested from both sides: a sample point where `f < 0` refutes membership
//! (the functional `ev_α` separates), and certificates for `f + ε` at every
//! `ε` of a grid give evidence for it. Anything else is `Unknown`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cones::{sample_kset, ConeError, QuadraticModule, SampleBox, SampleSet};
use crate::poly::{rational_to_f64, MultiIndex, Point, PolyError, Polynomial};
use crate::seminorm::{Seminorm, SeminormError};
use crate::sos::{membership, min_eigenvalue, GramCertificate, LinalgError, Matrix, SolverOptions, SosError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DualityError {
    #[error("polynomial degree {needed} exceeds functional degree {available}")]
    Degree { needed: u32, available: u32 },
    #[error("dimension mismatch: expected {expected} variable(s), found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("invalid moment functional: {0}")]
    Invalid(String),
    #[error("functional is not positive on the module (eigenvalue {0:e})")]
    NotPositive(f64),
    #[error("sampled intersection of the sets is empty; the closure test needs a non-empty set")]
    EmptyIntersection,
    #[error(transparent)]
    Seminorm(#[from] SeminormError),
    #[error(transparent)]
    Sos(#[from] SosError),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// A linear functional on polynomials of degree at most `degree`, stored by
/// its moments `L(x^α)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MomentRepr", into = "MomentRepr")]
pub struct MomentFunctional {
    nvars: usize,
    degree: u32,
    moments: BTreeMap<MultiIndex, f64>,
}

#[derive(Serialize, Deserialize)]
struct MomentRepr {
    nvars: usize,
    degree: u32,
    moments: Vec<(MultiIndex, f64)>,
}

impl From<MomentFunctional> for MomentRepr {
    fn from(l: MomentFunctional) -> Self {
        MomentRepr { nvars: l.nvars, degree: l.degree, moments: l.moments.into_iter().collect() }
    }
}

impl TryFrom<MomentRepr> for MomentFunctional {
    type Error = DualityError;
    fn try_from(r: MomentRepr) -> Result<Self, DualityError> {
        MomentFunctional::new(r.nvars, r.degree, r.moments.into_iter().collect())
    }
}

impl MomentFunctional {
    /// `moments` must hold exactly the multi-indices of degree `<= degree`.
    pub fn new(nvars: usize, degree: u32, moments: BTreeMap<MultiIndex, f64>) -> Result<Self, DualityError> {
        if !degree.is_multiple_of(2) {
            return Err(DualityError::Invalid(format!("degree must be even, got {degree}")));
        }
        let expected = MultiIndex::all_up_to(nvars, degree);
        if moments.len() != expected.len() || !expected.iter().all(|e| moments.contains_key(e)) {
            return Err(DualityError::Invalid(format!(
                "expected the {} moments of degree <= {degree} in {nvars} variable(s)",
                expected.len()
            )));
        }
        if let Some((e, _)) = moments.iter().find(|(_, v)| !v.is_finite()) {
            return Err(DualityError::Invalid(format!("moment {:?} is not finite", e.exponents())));
        }
        Ok(MomentFunctional { nvars, degree, moments })
    }

    /// `ev_x` truncated at degree `2d`.
    pub fn point_evaluation(x: &Point, d: u32) -> MomentFunctional {
        let moments = MultiIndex::all_up_to(x.dim(), 2 * d)
            .into_iter()
            .map(|e| {
                let v = e.eval(x.coords());
                (e, v)
            })
            .collect();
        MomentFunctional { nvars: x.dim(), degree: 2 * d, moments }
    }

    /// `sum_i w_i L_i`; all functionals must share shape.
    pub fn combination(terms: &[(f64, MomentFunctional)]) -> Result<MomentFunctional, DualityError> {
        let Some((_, first)) = terms.first() else {
            return Err(DualityError::Invalid("empty combination".into()));
        };
        let mut out = first.clone();
        out.moments.values_mut().for_each(|v| *v = 0.0);
        for (w, l) in terms {
            if l.nvars != out.nvars || l.degree != out.degree {
                return Err(DualityError::Invalid("functionals of different shape".into()));
            }
            for (e, v) in &l.moments {
                *out.moments.get_mut(e).expect("same index set") += w * v;
            }
        }
        Ok(out)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn moments(&self) -> &BTreeMap<MultiIndex, f64> {
        &self.moments
    }

    pub fn moment(&self, e: &MultiIndex) -> Option<f64> {
        self.moments.get(e).copied()
    }

    /// `L(1)`.
    pub fn mass(&self) -> f64 {
        self.moments[&MultiIndex::zero(self.nvars)]
    }

    fn check(&self, f: &Polynomial) -> Result<(), DualityError> {
        if f.nvars() != self.nvars {
            return Err(DualityError::Dimension { expected: self.nvars, found: f.nvars() });
        }
        if f.degree() > self.degree {
            return Err(DualityError::Degree { needed: f.degree(), available: self.degree });
        }
        Ok(())
    }

    /// `L(f) = sum_α f_α L(x^α)`.
    pub fn apply(&self, f: &Polynomial) -> Result<f64, DualityError> {
        self.check(f)?;
        Ok(f.terms().map(|(e, c)| rational_to_f64(c) * self.moments[e]).sum())
    }

    /// Localizing matrix `(L(g x^β x^γ))` over monomials of degree at most
    /// `(degree - deg g) / 2`; `g = 1` gives the moment matrix.
    pub fn localizing_matrix(&self, g: &Polynomial) -> Result<(Vec<MultiIndex>, Matrix), DualityError> {
        self.check(g)?;
        let basis = MultiIndex::all_up_to(self.nvars, (self.degree - g.degree()) / 2);
        let n = basis.len();
        let gt: Vec<(MultiIndex, f64)> = g.terms().map(|(e, c)| (e.clone(), rational_to_f64(c))).collect();
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let s = basis[i].add(&basis[j]);
                let v: f64 = gt.iter().map(|(e, c)| c * self.moments[&s.add(e)]).sum();
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        Ok((basis, m))
    }

    pub fn moment_matrix(&self) -> Matrix {
        self.localizing_matrix(&Polynomial::one(self.nvars)).expect("degree 0 fits").1
    }

    /// Smallest eigenvalue over the moment matrix and the localizing matrix
    /// of every effective generator of degree at most `degree`.
    pub fn positivity_floor(&self, module: &QuadraticModule) -> Result<f64, DualityError> {
        if module.nvars() != self.nvars {
            return Err(DualityError::Dimension { expected: self.nvars, found: module.nvars() });
        }
        let mut floor = f64::INFINITY;
        for g in module.effective_generators()? {
            if g.degree() > self.degree {
                continue;
            }
            let (_, m) = self.localizing_matrix(g)?;
            floor = floor.min(min_eigenvalue(&m)?);
        }
        Ok(floor)
    }

    /// `L >= 0` on the degree-`degree` truncation of `module`, up to `tol`.
    ///
    /// For a certificate `f = sum_i b_i^T Q_i b_i g_i` at that degree,
    /// `L(f) = sum_i tr(Q_i L_{g_i})`, which is non-negative when every
    /// `Q_i` and localizing matrix `L_{g_i}` is PSD.
    pub fn is_positive_on(&self, module: &QuadraticModule, tol: f64) -> Result<bool, DualityError> {
        Ok(self.positivity_floor(module)? >= -tol)
    }

    /// `max |L(pq) - L(p) L(q)|`; zero for point evaluations.
    pub fn multiplicativity_defect(&self, pairs: &[(Polynomial, Polynomial)]) -> Result<f64, DualityError> {
        let mut worst = 0.0f64;
        for (p, q) in pairs {
            let pq = p.checked_mul(q)?;
            let v = self.apply(&pq)? - self.apply(p)? * self.apply(q)?;
            worst = worst.max(v.abs());
        }
        Ok(worst)
    }
}

/// `|L(a)|` against the bound `L(1) ‖a‖_M` for one test polynomial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuityEntry {
    pub value: f64,
    pub bound: f64,
    /// `bound - |value|`; negative means the bound failed.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuityReport {
    pub entries: Vec<ContinuityEntry>,
    pub violations: usize,
}

/// Checks `|L(a)| <= L(1) ub(a) + tol` for each `(a, ub(a))`.
pub fn continuity_check_with_bounds(
    l: &MomentFunctional,
    tests: &[(Polynomial, f64)],
    tol: f64,
) -> Result<ContinuityReport, DualityError> {
    let mass = l.mass();
    let mut entries = Vec::with_capacity(tests.len());
    let mut violations = 0;
    for (a, ub) in tests {
        let value = l.apply(a)?;
        let bound = mass * ub;
        let margin = bound - value.abs();
        if margin < -tol {
            violations += 1;
        }
        entries.push(ContinuityEntry { value, bound, margin });
    }
    Ok(ContinuityReport { entries, violations })
}

/// As [`continuity_check_with_bounds`], computing `ub(a)` at degree `d`.
/// Refuses functionals that are not positive on the module.
pub fn continuity_check(
    l: &MomentFunctional,
    seminorm: &Seminorm,
    tests: &[Polynomial],
    d: u32,
    tol: f64,
) -> Result<ContinuityReport, DualityError> {
    let floor = l.positivity_floor(seminorm.module())?;
    if floor < -tol {
        return Err(DualityError::NotPositive(floor));
    }
    let mut with_bounds = Vec::with_capacity(tests.len());
    for a in tests {
        with_bounds.push((a.clone(), seminorm.ub(a, d)?.value));
    }
    continuity_check_with_bounds(l, &with_bounds, tol)
}

/// A point of `K` where `f` is negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub point: Point,
    pub value: f64,
}

const GOLDEN_ROUNDS: usize = 20;
const GOLDEN_STEPS: usize = 40;

/// Minimum of `f` over `D`; when below `-tol`, refined by rounds of
/// per-coordinate golden-section search inside the box of `D`, never leaving
/// `K` of `module`.
pub fn separate(
    f: &Polynomial,
    module: &QuadraticModule,
    samples: &SampleSet,
    tol: f64,
) -> Result<Option<Separation>, DualityError> {
    if f.nvars() != module.nvars() {
        return Err(DualityError::Dimension { expected: module.nvars(), found: f.nvars() });
    }
    let fe = f.to_float();
    let mut best: Option<(f64, &Point)> = None;
    for p in samples.points() {
        let v = fe.eval(p.coords());
        if best.is_none_or(|(b, _)| v < b) {
            best = Some((v, p));
        }
    }
    let Some((value, start)) = best else { return Ok(None) };
    if !(value < -tol) {
        return Ok(None);
    }

    let gens: Vec<_> = module.generators().iter().map(Polynomial::to_float).collect();
    let objective = |x: &[f64]| -> f64 {
        if gens.iter().all(|g| g.eval(x) >= 0.0) {
            fe.eval(x)
        } else {
            f64::INFINITY
        }
    };
    let mut x = start.coords().to_vec();
    let mut fx = value;
    let bounds = &samples.bounds.0;
    for _ in 0..GOLDEN_ROUNDS {
        let before = fx;
        for i in 0..x.len() {
            let Some(&(lo, hi)) = bounds.get(i) else { continue };
            let (t, ft) = golden_section(|t| {
                let mut y = x.clone();
                y[i] = t;
                objective(&y)
            }, lo, hi);
            if ft < fx {
                x[i] = t;
                fx = ft;
            }
        }
        if fx >= before {
            break;
        }
    }
    let point = Point(x);
    // Re-check the refined point from scratch with the exact generators.
    let (point, value) = if module.kset_contains(&point, 0.0)? && f.eval(point.coords())? < value {
        let v = f.eval(point.coords())?;
        (point, v)
    } else {
        (start.clone(), value)
    };
    Ok(Some(Separation { point, value }))
}

/// Golden-section minimization of a possibly non-unimodal function; returns
/// the best point evaluated.
fn golden_section(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut best = (lo, f(lo));
    let fh = f(hi);
    if fh < best.1 {
        best = (hi, fh);
    }
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_STEPS {
        for (t, ft) in [(c, fc), (d, fd)] {
            if ft < best.1 {
                best = (t, ft);
            }
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosureOptions {
    pub eps_grid: Vec<f64>,
    pub d_max: u32,
    pub bounds: Option<SampleBox>,
    pub samples: usize,
    pub seed: u64,
    /// Threshold for a sample value to count as negative.
    pub separation_tol: f64,
    pub solver: SolverOptions,
}

impl Default for ClosureOptions {
    fn default() -> Self {
        ClosureOptions {
            eps_grid: vec![1.0, 0.1, 0.01],
            d_max: 8,
            bounds: None,
            samples: 1000,
            seed: 0,
            separation_tol: 1e-9,
            solver: SolverOptions::default(),
        }
    }
}

/// Certificate of `f + eps` at the lowest degree found.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftCertificate {
    pub eps: f64,
    pub degree: u32,
    pub certificate: GramCertificate,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClosureVerdict {
    InClosure(Vec<ShiftCertificate>),
    NotInClosure(Separation),
    /// Shifts that did certify before the search gave up.
    Unknown(Vec<ShiftCertificate>),
}

impl ClosureVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            ClosureVerdict::InClosure(_) => "InClosure",
            ClosureVerdict::NotInClosure(_) => "NotInClosure",
            ClosureVerdict::Unknown(_) => "Unknown",
        }
    }

    /// `(eps, degree)` pairs of the certified shifts.
    pub fn eps_to_degree(&self) -> Vec<(f64, u32)> {
        match self {
            ClosureVerdict::InClosure(c) | ClosureVerdict::Unknown(c) => c.iter().map(|s| (s.eps, s.degree)).collect(),
            ClosureVerdict::NotInClosure(_) => Vec::new(),
        }
    }
}

#[derive(Serialize)]
struct VerdictRepr<'a> {
    verdict: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<&'a Separation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps_to_degree: Option<Vec<(f64, u32)>>,
}

impl Serialize for ClosureVerdict {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let repr = match self {
            ClosureVerdict::NotInClosure(w) => VerdictRepr { verdict: self.label(), witness: Some(w), eps_to_degree: None },
            _ => VerdictRepr { verdict: self.label(), witness: None, eps_to_degree: Some(self.eps_to_degree()) },
        };
        repr.serialize(s)
    }
}

/// Outcome of [`closure_membership`] with the sample it was decided on.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosureOutcome {
    pub verdict: ClosureVerdict,
    pub module: QuadraticModule,
    pub samples: SampleSet,
}

/// Decides `f ∈ closure of M` in the `‖·‖_T` topology, i.e. `f ∈ Psd(K_M ∩ K_T)`,
/// as far as sampling and truncated certificates allow. `t = None` means `T = M`.
///
/// The intersection is sampled in `opts.bounds` (default `[-1, 1]^n`); an
/// empty sample is refused.
pub fn closure_membership(
    f: &Polynomial,
    m: &QuadraticModule,
    t: Option<&QuadraticModule>,
    opts: &ClosureOptions,
) -> Result<ClosureOutcome, DualityError> {
    let module = match t {
        Some(t) => m.combine(t)?,
        None => m.clone(),
    };
    if f.nvars() != module.nvars() {
        return Err(DualityError::Dimension { expected: module.nvars(), found: f.nvars() });
    }
    let bounds = match &opts.bounds {
        Some(b) => b.clone(),
        None => SampleBox::cube(module.nvars(), -1.0, 1.0)?,
    };
    let samples = sample_kset(&module, &bounds, opts.samples, opts.seed)?;
    if samples.is_empty() {
        return Err(DualityError::EmptyIntersection);
    }

    if let Some(sep) = separate(f, &module, &samples, opts.separation_tol)? {
        return Ok(ClosureOutcome { verdict: ClosureVerdict::NotInClosure(sep), module, samples });
    }

    let d0 = f.degree().max(1);
    let mut certified = Vec::new();
    let mut all = true;
    for &eps in &opts.eps_grid {
        let shifted = f + &Polynomial::from_f64(f.nvars(), eps);
        let mut found = None;
        for d in d0..=opts.d_max.max(d0) {
            if d > opts.d_max {
                break;
            }
            if let Some(c) = membership(&shifted, &module, d, &opts.solver)?.certificate() {
                found = Some(ShiftCertificate { eps, degree: d, certificate: c.clone() });
                break;
            }
        }
        match found {
            Some(s) => certified.push(s),
            None => all = false,
        }
    }
    let verdict = if all && !opts.eps_grid.is_empty() {
        ClosureVerdict::InClosure(certified)
    } else {
        ClosureVerdict::Unknown(certified)
    };
    Ok(ClosureOutcome { verdict, module, samples })
}
