//! Quadratic modules and preorderings given by finite generator lists, the
//! sets `K_S = {x : g_i(x) >= 0}` they cut out, and Archimedean witnesses.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::{FloatPoly, Point, PolyError, Polynomial};
use crate::sos::{membership, GramCertificate, SolverOptions, SosError};

/// Preorderings enumerate `2^m` products; more generators than this is refused.
pub const MAX_PREORDERING_GENERATORS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConeError {
    #[error("generator {0} is the zero polynomial")]
    ZeroGenerator(usize),
    #[error("dimension mismatch: expected {expected} variable(s), found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{m} generators exceed the preordering limit of {max}")]
    TooManyGenerators { m: usize, max: usize },
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModuleKind {
    QuadraticModule,
    Preordering,
}

/// The cone generated by `1, g_1, ..., g_m`: sums `sigma_0 + sum_i sigma_i g_i`
/// with sums of squares `sigma_i` (quadratic module), or with the `g_i`
/// replaced by all products `g^e`, `e ∈ {0,1}^m` (preordering).
#[derive(Debug, Clone)]
pub struct QuadraticModule {
    nvars: usize,
    generators: Vec<Polynomial>,
    kind: ModuleKind,
    effective: OnceLock<Vec<Polynomial>>,
}

impl PartialEq for QuadraticModule {
    fn eq(&self, other: &Self) -> bool {
        self.nvars == other.nvars && self.kind == other.kind && self.generators == other.generators
    }
}

impl QuadraticModule {
    pub fn new(nvars: usize, generators: Vec<Polynomial>, kind: ModuleKind) -> Result<Self, ConeError> {
        for (i, g) in generators.iter().enumerate() {
            if g.nvars() != nvars {
                return Err(ConeError::DimensionMismatch { expected: nvars, found: g.nvars() });
            }
            if g.is_zero() {
                return Err(ConeError::ZeroGenerator(i + 1));
            }
        }
        if kind == ModuleKind::Preordering && generators.len() > MAX_PREORDERING_GENERATORS {
            return Err(ConeError::TooManyGenerators {
                m: generators.len(),
                max: MAX_PREORDERING_GENERATORS,
            });
        }
        Ok(QuadraticModule { nvars, generators, kind, effective: OnceLock::new() })
    }

    pub fn quadratic(nvars: usize, generators: Vec<Polynomial>) -> Result<Self, ConeError> {
        Self::new(nvars, generators, ModuleKind::QuadraticModule)
    }

    pub fn preordering(nvars: usize, generators: Vec<Polynomial>) -> Result<Self, ConeError> {
        Self::new(nvars, generators, ModuleKind::Preordering)
    }

    /// The cone of sums of squares (no generators).
    pub fn sums_of_squares(nvars: usize) -> Self {
        QuadraticModule {
            nvars,
            generators: Vec::new(),
            kind: ModuleKind::QuadraticModule,
            effective: OnceLock::new(),
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn generators(&self) -> &[Polynomial] {
        &self.generators
    }

    pub fn kind(&self) -> ModuleKind {
        self.kind
    }

    pub fn is_preordering(&self) -> bool {
        self.kind == ModuleKind::Preordering
    }

    /// Multipliers of the sums of squares: `[1, g_1, ..., g_m]` for a
    /// quadratic module, the Schmüdgen products for a preordering.
    /// Index 0 is always the constant 1.
    pub fn effective_generators(&self) -> Result<&[Polynomial], ConeError> {
        if let Some(v) = self.effective.get() {
            return Ok(v);
        }
        let list = match self.kind {
            ModuleKind::QuadraticModule => {
                let mut v = vec![Polynomial::one(self.nvars)];
                v.extend(self.generators.iter().cloned());
                v
            }
            ModuleKind::Preordering => products(self.nvars, &self.generators)?,
        };
        Ok(self.effective.get_or_init(|| list))
    }

    /// The module generated by the generators of both; a preordering when
    /// either input is one.
    pub fn combine(&self, other: &QuadraticModule) -> Result<QuadraticModule, ConeError> {
        if other.nvars != self.nvars {
            return Err(ConeError::DimensionMismatch { expected: self.nvars, found: other.nvars });
        }
        let mut gens = self.generators.clone();
        for g in &other.generators {
            if !gens.contains(g) {
                gens.push(g.clone());
            }
        }
        let kind = if self.is_preordering() || other.is_preordering() {
            ModuleKind::Preordering
        } else {
            ModuleKind::QuadraticModule
        };
        QuadraticModule::new(self.nvars, gens, kind)
    }

    /// `true` iff `g_i(x) >= -tol` for every generator.
    pub fn kset_contains(&self, x: &Point, tol: f64) -> Result<bool, ConeError> {
        if x.dim() != self.nvars {
            return Err(ConeError::DimensionMismatch { expected: self.nvars, found: x.dim() });
        }
        for g in &self.generators {
            if g.eval(x.coords())? < -tol {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn compiled(&self) -> Vec<FloatPoly> {
        self.generators.iter().map(Polynomial::to_float).collect()
    }
}

/// All products `g^e`, `e ∈ {0,1}^m`, in binary order of `e` (bit `i` selects
/// `g_{i+1}`), with duplicates removed. The first entry is the constant 1.
pub fn schmudgen_products(module: &QuadraticModule) -> Result<Vec<Polynomial>, ConeError> {
    products(module.nvars(), module.generators())
}

fn products(nvars: usize, gens: &[Polynomial]) -> Result<Vec<Polynomial>, ConeError> {
    let m = gens.len();
    if m > MAX_PREORDERING_GENERATORS {
        return Err(ConeError::TooManyGenerators { m, max: MAX_PREORDERING_GENERATORS });
    }
    // prods[e] = prods[e without its top bit] * g_top
    let mut prods: Vec<Polynomial> = Vec::with_capacity(1 << m);
    prods.push(Polynomial::one(nvars));
    for e in 1usize..(1 << m) {
        let top = usize::BITS - 1 - e.leading_zeros();
        let rest = e & !(1 << top);
        prods.push(&prods[rest] * &gens[top as usize]);
    }
    let mut out: Vec<Polynomial> = Vec::with_capacity(prods.len());
    for p in prods {
        if !out.contains(&p) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Axis-aligned box, one `[lo, hi]` interval per variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleBox(pub Vec<(f64, f64)>);

impl SampleBox {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self, ConeError> {
        for (i, (lo, hi)) in bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(ConeError::InvalidBox(format!("interval {i} is [{lo}, {hi}]")));
            }
        }
        Ok(SampleBox(bounds))
    }

    pub fn cube(nvars: usize, lo: f64, hi: f64) -> Result<Self, ConeError> {
        Self::new(vec![(lo, hi); nvars])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, x: &Point) -> bool {
        x.dim() == self.dim() && x.coords().iter().zip(&self.0).all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    pub fn midpoint(&self) -> Point {
        Point(self.0.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect())
    }

    /// The `2^n` corners, enumerated in binary order (bit `i` picks `hi_i`).
    pub fn corners(&self) -> Vec<Point> {
        let n = self.dim();
        (0..(1usize << n))
            .map(|mask| {
                Point(
                    self.0
                        .iter()
                        .enumerate()
                        .map(|(i, (lo, hi))| if mask >> i & 1 == 1 { *hi } else { *lo })
                        .collect(),
                )
            })
            .collect()
    }

    fn bounding(points: &[Point]) -> SampleBox {
        let n = points.first().map_or(0, Point::dim);
        let mut b = vec![(f64::INFINITY, f64::NEG_INFINITY); n];
        for p in points {
            for (i, v) in p.coords().iter().enumerate() {
                b[i].0 = b[i].0.min(*v);
                b[i].1 = b[i].1.max(*v);
            }
        }
        SampleBox(b)
    }
}

/// Finite stand-in for a compact subset of `K_S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub seed: u64,
    #[serde(rename = "box")]
    pub bounds: SampleBox,
    pub tol: f64,
    pub points: Vec<Point>,
    /// Random points requested; injected corners and the midpoint come on top.
    pub requested: usize,
    /// Random points actually accepted.
    pub accepted: usize,
    pub possibly_empty: bool,
}

impl SampleSet {
    /// Wraps an explicit point list; the box is the bounding box.
    pub fn from_points(points: Vec<Point>) -> SampleSet {
        let bounds = SampleBox::bounding(&points);
        let n = points.len();
        SampleSet {
            seed: 0,
            bounds,
            tol: 0.0,
            possibly_empty: n == 0,
            requested: n,
            accepted: n,
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Points that also lie in `K` of `module` (tolerance 0).
    pub fn restrict(&self, module: &QuadraticModule) -> Result<SampleSet, ConeError> {
        let mut out = self.clone();
        out.points.clear();
        for p in &self.points {
            if module.kset_contains(p, 0.0)? {
                out.points.push(p.clone());
            }
        }
        out.possibly_empty = out.points.is_empty();
        Ok(out)
    }

    /// Set union, keeping first occurrences in order.
    pub fn union(&self, other: &SampleSet) -> SampleSet {
        let mut points = self.points.clone();
        for p in &other.points {
            if !points.contains(p) {
                points.push(p.clone());
            }
        }
        SampleSet::from_points(points)
    }
}

/// Deterministic rejection sampling of `K_S ∩ box`.
///
/// Corners and the midpoint of the box are injected first when they pass;
/// then up to `count` uniform points are accepted within `1000 * count`
/// trials. An empty result is flagged `possibly_empty`.
pub fn sample_kset(
    module: &QuadraticModule,
    bounds: &SampleBox,
    count: usize,
    seed: u64,
) -> Result<SampleSet, ConeError> {
    if bounds.dim() != module.nvars() {
        return Err(ConeError::DimensionMismatch { expected: module.nvars(), found: bounds.dim() });
    }
    let gens = module.compiled();
    let inside = |x: &[f64]| gens.iter().all(|g| g.eval(x) >= 0.0);

    let mut points: Vec<Point> = Vec::new();
    let mut candidates = if bounds.dim() <= 12 { bounds.corners() } else { Vec::new() };
    candidates.push(bounds.midpoint());
    for c in candidates {
        if inside(c.coords()) && !points.contains(&c) {
            points.push(c);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = count.saturating_mul(1000);
    let mut accepted = 0;
    let mut x = vec![0.0; bounds.dim()];
    for _ in 0..budget {
        if accepted >= count {
            break;
        }
        for (xi, (lo, hi)) in x.iter_mut().zip(&bounds.0) {
            *xi = if lo < hi { rng.random_range(*lo..=*hi) } else { *lo };
        }
        if inside(&x) {
            points.push(Point(x.clone()));
            accepted += 1;
        }
    }
    Ok(SampleSet {
        seed,
        bounds: bounds.clone(),
        tol: 0.0,
        possibly_empty: points.is_empty(),
        requested: count,
        accepted,
        points,
    })
}

/// A certified `N - sum x_i^2 ∈ M` at truncation degree `degree`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchimedeanWitness {
    pub radius_sq: f64,
    pub degree: u32,
    pub certificate: GramCertificate,
}

/// Whether `n - sum x_i^2` is certified in `module` at degree `d`.
pub fn accepts_witness(
    module: &QuadraticModule,
    n: f64,
    d: u32,
    opts: &SolverOptions,
) -> Result<Option<GramCertificate>, SosError> {
    let nv = module.nvars();
    let f = &Polynomial::from_f64(nv, n) - &Polynomial::sum_of_squared_vars(nv);
    Ok(membership(&f, module, d, opts)?.certificate().cloned())
}

const WITNESS_BISECTION_STEPS: usize = 12;

/// Searches for the sufficient Archimedean witness `N - sum x_i^2 ∈ M`.
///
/// Degrees are tried in increasing order from `max(2, max deg g_i)` up to
/// `d_max`; at each degree `N` is doubled from 1 up to `n_max`, and the first
/// success is refined by bisection against the last failure. `None` means
/// the budget was exhausted; it does not show that `M` is not Archimedean.
pub fn archimedean_witness(
    module: &QuadraticModule,
    n_max: f64,
    d_max: u32,
    opts: &SolverOptions,
) -> Result<Option<ArchimedeanWitness>, SosError> {
    let start = module.generators().iter().map(Polynomial::degree).max().unwrap_or(0).max(2);
    for d in start..=d_max {
        let mut n = 1.0;
        let mut last_fail: Option<f64> = None;
        let mut found: Option<(f64, GramCertificate)> = None;
        while n <= n_max {
            match accepts_witness(module, n, d, opts)? {
                Some(c) => {
                    found = Some((n, c));
                    break;
                }
                None => last_fail = Some(n),
            }
            n *= 2.0;
        }
        let Some((mut hi, mut cert)) = found else { continue };
        let mut lo = match last_fail {
            Some(v) => v,
            None => {
                // Certified at N = 1 already: walk downwards to bracket.
                let mut probe = hi / 2.0;
                loop {
                    if probe < 1e-6 {
                        break 0.0;
                    }
                    match accepts_witness(module, probe, d, opts)? {
                        Some(c) => {
                            hi = probe;
                            cert = c;
                            probe /= 2.0;
                        }
                        None => break probe,
                    }
                }
            }
        };
        for _ in 0..WITNESS_BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            match accepts_witness(module, mid, d, opts)? {
                Some(c) => {
                    hi = mid;
                    cert = c;
                }
                None => lo = mid,
            }
        }
        return Ok(Some(ArchimedeanWitness { radius_sq: hi, degree: d, certificate: cert }));
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse;

    fn p(s: &str, n: usize) -> Polynomial {
        parse(s, n).unwrap()
    }

    fn qm(gens: &[&str], n: usize) -> QuadraticModule {
        QuadraticModule::quadratic(n, gens.iter().map(|g| p(g, n)).collect()).unwrap()
    }

    #[test]
    fn products_single_and_pair() {
        let m = QuadraticModule::preordering(1, vec![p("1 - x^2", 1)]).unwrap();
        assert_eq!(schmudgen_products(&m).unwrap(), vec![p("1", 1), p("1 - x^2", 1)]);

        let m = QuadraticModule::preordering(2, vec![p("1 - x^2", 2), p("1 - y^2", 2)]).unwrap();
        assert_eq!(
            schmudgen_products(&m).unwrap(),
            vec![p("1", 2), p("1 - x^2", 2), p("1 - y^2", 2), p("(1 - x^2)*(1 - y^2)", 2)]
        );

        let m = QuadraticModule::preordering(2, vec![]).unwrap();
        assert_eq!(schmudgen_products(&m).unwrap(), vec![p("1", 2)]);
    }

    #[test]
    fn products_deduplicate() {
        let m = QuadraticModule::preordering(1, vec![p("x", 1), p("x", 1)]).unwrap();
        // 1, x, x, x^2 -> 1, x, x^2
        assert_eq!(schmudgen_products(&m).unwrap().len(), 3);
    }

    #[test]
    fn generator_guard() {
        let gens: Vec<Polynomial> = (0..21).map(|i| Polynomial::from_int(1, i + 1)).collect();
        assert!(matches!(
            QuadraticModule::preordering(1, gens),
            Err(ConeError::TooManyGenerators { m: 21, .. })
        ));
        assert!(matches!(
            QuadraticModule::quadratic(1, vec![Polynomial::zero(1)]),
            Err(ConeError::ZeroGenerator(1))
        ));
    }

    #[test]
    fn kset_examples() {
        let m = qm(&["1 - x^2"], 1);
        assert!(m.kset_contains(&Point(vec![0.5]), 0.0).unwrap());
        assert!(!m.kset_contains(&Point(vec![2.0]), 0.0).unwrap());
        let m2 = qm(&["1 - x^2", "x"], 1);
        assert!(!m2.kset_contains(&Point(vec![-0.5]), 0.0).unwrap());
        assert!(m.kset_contains(&Point(vec![0.5, 0.1]), 0.0).is_err());
    }

    #[test]
    fn kset_monotone_in_tol() {
        let m = qm(&["1 - x^2", "x"], 1);
        for i in -30..=30 {
            let x = Point(vec![i as f64 / 10.0]);
            for (t1, t2) in [(0.0, 0.1), (0.1, 1.0), (1.0, 10.0)] {
                if m.kset_contains(&x, t1).unwrap() {
                    assert!(m.kset_contains(&x, t2).unwrap());
                }
            }
        }
    }

    #[test]
    fn sampling_stays_inside() {
        let m = qm(&["1 - x^2"], 1);
        let s = sample_kset(&m, &SampleBox::cube(1, -2.0, 2.0).unwrap(), 100, 7).unwrap();
        assert_eq!(s.accepted, 100);
        assert!(s.points.iter().all(|x| x.0[0].abs() <= 1.0));
        let again = sample_kset(&m, &SampleBox::cube(1, -2.0, 2.0).unwrap(), 100, 7).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn sampling_empty_set_is_flagged() {
        let m = qm(&["-1 - x^2"], 1);
        let s = sample_kset(&m, &SampleBox::cube(1, -2.0, 2.0).unwrap(), 10, 1).unwrap();
        assert!(s.is_empty());
        assert!(s.possibly_empty);
    }

    #[test]
    fn sampling_injects_feasible_corners() {
        let m = qm(&["x", "1 - x"], 1);
        let s = sample_kset(&m, &SampleBox::cube(1, -1.0, 2.0).unwrap(), 50, 3).unwrap();
        assert!(s.points.iter().all(|x| (0.0..=1.0).contains(&x.0[0])));
        // Corners -1 and 2 fail, midpoint 0.5 passes.
        assert_eq!(s.points[0], Point(vec![0.5]));
        assert_eq!(s.accepted, 50);

        let box_m = qm(&["1 - x^2"], 1);
        let s = sample_kset(&box_m, &SampleBox::cube(1, -1.0, 1.0).unwrap(), 5, 3).unwrap();
        assert!(s.points.contains(&Point(vec![-1.0])));
        assert!(s.points.contains(&Point(vec![1.0])));
    }

    #[test]
    fn sample_set_json_shape() {
        let m = qm(&["1 - x^2"], 1);
        let s = sample_kset(&m, &SampleBox::cube(1, -1.0, 1.0).unwrap(), 2, 9).unwrap();
        let v = serde_json::to_value(&s).unwrap();
        assert_eq!(v["seed"], 9);
        assert_eq!(v["box"], serde_json::json!([[-1.0, 1.0]]));
        assert!(v["points"].is_array());
        assert_eq!(v["tol"], 0.0);
    }

    #[test]
    fn witness_for_interval() {
        let m = qm(&["1 - x^2"], 1);
        let w = archimedean_witness(&m, 64.0, 4, &SolverOptions::default()).unwrap().unwrap();
        assert_eq!(w.radius_sq, 1.0);
        assert_eq!(w.degree, 2);
    }

    #[test]
    fn witness_for_square() {
        let m = qm(&["1 - x^2", "1 - y^2"], 2);
        let w = archimedean_witness(&m, 64.0, 4, &SolverOptions::default()).unwrap().unwrap();
        assert_eq!(w.radius_sq, 2.0);
        assert_eq!(w.degree, 2);
    }

    #[test]
    fn no_witness_for_half_line() {
        let m = qm(&["x"], 1);
        assert!(archimedean_witness(&m, 256.0, 6, &SolverOptions::default()).unwrap().is_none());
    }

    #[test]
    fn larger_module_accepts_smaller_modules_witness() {
        let m1 = qm(&["1 - x^2", "1 - y^2"], 2);
        let m2 = qm(&["1 - x^2", "1 - y^2", "x"], 2);
        let w = archimedean_witness(&m1, 64.0, 4, &SolverOptions::default()).unwrap().unwrap();
        assert!(accepts_witness(&m2, w.radius_sq, w.degree, &SolverOptions::default()).unwrap().is_some());
    }

    #[test]
    fn pooled_generators_accept_max_witness() {
        // Generators of M1 and M2 pooled describe a submodule of both, and
        // max(N1, N2) is accepted for it.
        let m1 = qm(&["1 - x^2", "1 - y^2"], 2);
        let m2 = qm(&["4 - x^2 - y^2"], 2);
        let opts = SolverOptions::default();
        let w1 = archimedean_witness(&m1, 64.0, 4, &opts).unwrap().unwrap();
        let w2 = archimedean_witness(&m2, 64.0, 4, &opts).unwrap().unwrap();
        let pooled = m1.combine(&m2).unwrap();
        let n = w1.radius_sq.max(w2.radius_sq);
        let d = w1.degree.max(w2.degree);
        assert!(accepts_witness(&pooled, n, d, &opts).unwrap().is_some());
    }
}
