//! Families of sup-seminorms `ρ_D` over finite sets, the point extensions
//! `M'_α = {a : a(α) >= 0}` used to approximate the direct-limit topology of
//! a non-Archimedean module, and explicit spectrum separators.

use num_rational::BigRational;
use num_traits::Signed;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cones::{ConeError, QuadraticModule, SampleSet};
use crate::poly::{rational_from_f64, rational_to_f64, Point, PolyError, Polynomial};
use crate::seminorm::{rho_d_argmax, rho_d_exact, SeminormError};

/// Saturation enumerates all subset unions; larger families are refused.
pub const MAX_SATURATE_MEMBERS: usize = 16;

/// Points closer than this to a member of `D` count as members.
pub const SEPARATION_MIN_DISTANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("sample set is empty")]
    EmptySample,
    #[error("{0} members exceed the saturation limit of {MAX_SATURATE_MEMBERS}")]
    TooManyMembers(usize),
    #[error("point lies within {SEPARATION_MIN_DISTANCE:e} of sample point {0}")]
    PointInSample(usize),
    #[error("sample point {0} lies outside K")]
    PointOutsideK(usize),
    #[error("dimension mismatch: expected {expected} variable(s), found {found}")]
    Dimension { expected: usize, found: usize },
    #[error(transparent)]
    Seminorm(#[from] SeminormError),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyMember {
    pub label: String,
    pub sampleset: SampleSet,
}

/// The seminorms `ρ_D` for the listed sets `D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeminormFamily {
    pub members: Vec<FamilyMember>,
    pub saturated: bool,
}

impl SeminormFamily {
    pub fn new(members: Vec<(String, SampleSet)>) -> Self {
        let saturated = members.len() <= 1;
        SeminormFamily {
            members: members.into_iter().map(|(label, sampleset)| FamilyMember { label, sampleset }).collect(),
            saturated,
        }
    }

    /// One member `{α}` per point: the singleton seminorms `|a(α)|`.
    pub fn singletons(points: &[Point]) -> Self {
        Self::new(
            points
                .iter()
                .enumerate()
                .map(|(i, p)| (format!("p{}", i + 1), SampleSet::from_points(vec![p.clone()])))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `ρ_D(a)` for every member, in order.
    pub fn evaluate(&self, a: &Polynomial) -> Result<Vec<f64>, TopologyError> {
        self.members
            .iter()
            .map(|m| Ok(rational_to_f64(&rho_d_exact(a, &m.sampleset)?)))
            .collect()
    }

    /// Closes the family under finite maxima. `max(ρ_{D_1}, ρ_{D_2}) = ρ_{D_1 ∪ D_2}`,
    /// so each non-empty subset of members contributes its union; unions equal
    /// (as point sets) to an existing member are skipped.
    pub fn saturate(&self) -> Result<SeminormFamily, TopologyError> {
        let k = self.members.len();
        if k > MAX_SATURATE_MEMBERS {
            return Err(TopologyError::TooManyMembers(k));
        }
        let mut out = self.members.clone();
        for mask in 1usize..(1 << k) {
            if mask.count_ones() < 2 {
                continue;
            }
            let chosen: Vec<&FamilyMember> = (0..k).filter(|i| mask >> i & 1 == 1).map(|i| &self.members[i]).collect();
            let mut union = chosen[0].sampleset.clone();
            for m in &chosen[1..] {
                union = union.union(&m.sampleset);
            }
            if out.iter().any(|m| same_points(&m.sampleset, &union)) {
                continue;
            }
            let label = chosen.iter().map(|m| m.label.as_str()).collect::<Vec<_>>().join("+");
            out.push(FamilyMember { label, sampleset: union });
        }
        Ok(SeminormFamily { members: out, saturated: true })
    }
}

fn same_points(a: &SampleSet, b: &SampleSet) -> bool {
    a.points().iter().all(|p| b.points().contains(p)) && b.points().iter().all(|p| a.points().contains(p))
}

/// The Archimedean module `M'_α = {a : a(α) >= 0}` with `K_{M'} = {α}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointExtension {
    pub alpha: Point,
}

impl PointExtension {
    pub fn new(alpha: Point) -> Self {
        PointExtension { alpha }
    }

    pub fn contains(&self, a: &Polynomial) -> Result<bool, TopologyError> {
        Ok(!self.eval_exact(a)?.is_negative())
    }

    fn eval_exact(&self, a: &Polynomial) -> Result<BigRational, TopologyError> {
        let x: Vec<BigRational> = self.alpha.coords().iter().map(|&v| rational_from_f64(v)).collect();
        Ok(a.eval_exact(&x)?)
    }
}

/// `‖a‖_{M'_α} = |a(α)|`, evaluated exactly and rounded once.
pub fn extension_seminorm(ext: &PointExtension, a: &Polynomial) -> Result<f64, TopologyError> {
    Ok(rational_to_f64(&ext.eval_exact(a)?.abs()))
}

/// Lower bound for the direct-limit seminorm data of `module`: the max of
/// `‖a‖_{M'_α}` over the point extensions `α ∈ D`, with the maximizing point.
/// Requires `D ⊆ K_M` (checked at the sample's recorded tolerance).
pub fn direct_limit_lb(
    module: &QuadraticModule,
    a: &Polynomial,
    samples: &SampleSet,
) -> Result<(f64, Point), TopologyError> {
    if samples.is_empty() {
        return Err(TopologyError::EmptySample);
    }
    for (i, p) in samples.points().iter().enumerate() {
        if !module.kset_contains(p, samples.tol)? {
            return Err(TopologyError::PointOutsideK(i));
        }
    }
    let (v, p) = rho_d_argmax(a, samples)?;
    Ok((rational_to_f64(&v), p))
}

/// `f = prod_{α∈D} ‖x - α‖²`, built exactly from the coordinates: `f`
/// vanishes on `D` and is positive at `beta`, so `ev_beta` is not bounded by
/// any multiple of `ρ_D`.
pub fn spectrum_separation(samples: &SampleSet, beta: &Point) -> Result<Polynomial, TopologyError> {
    let n = beta.dim();
    let mut f = Polynomial::one(n);
    for (i, alpha) in samples.points().iter().enumerate() {
        if alpha.dim() != n {
            return Err(TopologyError::Dimension { expected: n, found: alpha.dim() });
        }
        if alpha.distance(beta) <= SEPARATION_MIN_DISTANCE {
            return Err(TopologyError::PointInSample(i));
        }
        let mut factor = Polynomial::zero(n);
        for (k, &c) in alpha.coords().iter().enumerate() {
            let shift = Polynomial::var(n, k) - Polynomial::constant(n, rational_from_f64(c));
            factor = &factor + &(&shift * &shift);
        }
        f = &f * &factor;
    }
    Ok(f)
}

/// Exact value of a polynomial at a point with `f64` coordinates.
pub fn eval_at(a: &Polynomial, p: &Point) -> Result<BigRational, TopologyError> {
    if a.nvars() != p.dim() {
        return Err(TopologyError::Dimension { expected: a.nvars(), found: p.dim() });
    }
    let x: Vec<BigRational> = p.coords().iter().map(|&v| rational_from_f64(v)).collect();
    Ok(a.eval_exact(&x)?)
}

/// `x_k - c` for convenience in tests and examples.
pub fn coordinate_shift(nvars: usize, k: usize, c: f64) -> Polynomial {
    Polynomial::var(nvars, k) - Polynomial::constant(nvars, rational_from_f64(c))
}
