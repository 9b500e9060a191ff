use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::cones::QuadraticModule;
use crate::poly::{rational_to_f64, rationalize, MultiIndex, Polynomial};

use super::linalg::{min_eigenvalue, Matrix};
use super::SosError;

/// One Gram block of a certificate; `q` is row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateBlock {
    pub generator_index: usize,
    pub basis: Vec<MultiIndex>,
    #[serde(rename = "Q")]
    pub q: Vec<f64>,
}

impl CertificateBlock {
    pub fn matrix(&self) -> Result<Matrix, SosError> {
        Matrix::from_row_major(self.basis.len(), self.q.clone()).map_err(SosError::from)
    }
}

/// `f = sum_i (b_i^T Q_i b_i) g_i` with every `Q_i` positive semidefinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramCertificate {
    pub degree: u32,
    pub blocks: Vec<CertificateBlock>,
    /// l1 coefficient distance between `f` and the rationalized expansion.
    pub residual: f64,
    /// Smallest eigenvalue over all blocks.
    pub min_eigenvalue: f64,
    /// Tolerance the certificate was accepted under.
    pub tol: f64,
    pub preordering: bool,
}

impl GramCertificate {
    /// Re-expresses the certificate on the degree-`d` Gram bases (`d` at
    /// least the current degree) by zero-padding every block.
    pub fn embed(&self, module: &QuadraticModule, d: u32) -> Result<GramCertificate, SosError> {
        if d < self.degree {
            return Err(SosError::Mismatch(format!(
                "cannot embed a degree-{} certificate at degree {d}",
                self.degree
            )));
        }
        let target = super::gram::gram_bases(module, d)?;
        let mut blocks = Vec::with_capacity(target.len());
        for tb in target {
            let n = tb.basis.len();
            let mut q = vec![0.0; n * n];
            if let Some(old) = self.blocks.iter().find(|b| b.generator_index == tb.generator_index) {
                let pos: Vec<usize> = old
                    .basis
                    .iter()
                    .map(|m| {
                        tb.basis.iter().position(|t| t == m).ok_or_else(|| {
                            SosError::Mismatch(format!("basis monomial {:?} missing at degree {d}", m.exponents()))
                        })
                    })
                    .collect::<Result<_, _>>()?;
                let on = old.basis.len();
                for i in 0..on {
                    for j in 0..on {
                        q[pos[i] * n + pos[j]] = old.q[i * on + j];
                    }
                }
            }
            blocks.push(CertificateBlock { generator_index: tb.generator_index, basis: tb.basis, q });
        }
        Ok(GramCertificate { degree: d, blocks, ..self.clone() })
    }
}

/// Outcome of an independent re-check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verification {
    pub residual: f64,
    pub min_eigenvalue: f64,
}

impl Verification {
    pub fn passes(&self, tol: f64) -> bool {
        self.residual <= tol && self.min_eigenvalue >= -tol
    }
}

/// Rebuilds `sum_i (b_i^T Q_i b_i) g_i` symbolically from the entries of
/// each `Q_i` rounded to the `1e-12` grid, and reports the l1 distance to
/// `f` together with the eigenvalue floor of the stored matrices.
pub fn verify_certificate(
    cert: &GramCertificate,
    f: &Polynomial,
    module: &QuadraticModule,
) -> Result<Verification, SosError> {
    let nvars = module.nvars();
    if f.nvars() != nvars {
        return Err(SosError::Mismatch(format!(
            "polynomial has {} variables, module has {nvars}",
            f.nvars()
        )));
    }
    let gens = module.effective_generators()?;
    let mut total: BTreeMap<MultiIndex, BigRational> = BTreeMap::new();
    let mut floor = f64::INFINITY;

    for (bi, block) in cert.blocks.iter().enumerate() {
        let g = gens.get(block.generator_index).ok_or_else(|| {
            SosError::Mismatch(format!(
                "block {bi} references generator {} but the module has {}",
                block.generator_index,
                gens.len()
            ))
        })?;
        let n = block.basis.len();
        if block.q.len() != n * n {
            return Err(SosError::Mismatch(format!(
                "block {bi}: {} matrix entries for a basis of size {n}",
                block.q.len()
            )));
        }
        if let Some(bad) = block.basis.iter().find(|b| b.nvars() != nvars) {
            return Err(SosError::Mismatch(format!(
                "block {bi}: basis monomial {:?} has the wrong number of variables",
                bad.exponents()
            )));
        }
        let top = block.basis.iter().map(MultiIndex::degree).max().unwrap_or(0);
        if n > 0 && g.degree() + 2 * top > cert.degree {
            return Err(SosError::Mismatch(format!(
                "block {bi}: generator degree {} plus basis degree 2*{top} exceeds certificate degree {}",
                g.degree(),
                cert.degree
            )));
        }
        let q = block.matrix()?;
        floor = floor.min(min_eigenvalue(&q)?);

        let mut sigma: BTreeMap<MultiIndex, BigRational> = BTreeMap::new();
        for i in 0..n {
            for j in 0..n {
                let v = rationalize(q.get(i, j));
                if v.is_zero() {
                    continue;
                }
                *sigma.entry(block.basis[i].add(&block.basis[j])).or_insert_with(BigRational::zero) += v;
            }
        }
        for (e, c) in sigma {
            if c.is_zero() {
                continue;
            }
            for (ge, gc) in g.terms() {
                *total.entry(e.add(ge)).or_insert_with(BigRational::zero) += &c * gc;
            }
        }
    }

    for (e, c) in f.terms() {
        *total.entry(e.clone()).or_insert_with(BigRational::zero) -= c;
    }
    let residual = total
        .values()
        .fold(BigRational::zero(), |acc, c| acc + num_traits::Signed::abs(c));
    Ok(Verification { residual: rational_to_f64(&residual), min_eigenvalue: floor })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse;

    fn module() -> QuadraticModule {
        QuadraticModule::quadratic(1, vec![parse("1 - x^2", 1).unwrap()]).unwrap()
    }

    fn hand_certificate() -> GramCertificate {
        // 1 + x = 1/2 (1 + x)^2 + 1/2 (1 - x^2)
        GramCertificate {
            degree: 2,
            blocks: vec![
                CertificateBlock {
                    generator_index: 0,
                    basis: vec![MultiIndex::new(vec![0]), MultiIndex::new(vec![1])],
                    q: vec![0.5, 0.5, 0.5, 0.5],
                },
                CertificateBlock {
                    generator_index: 1,
                    basis: vec![MultiIndex::new(vec![0])],
                    q: vec![0.5],
                },
            ],
            residual: 0.0,
            min_eigenvalue: 0.0,
            tol: 1e-8,
            preordering: false,
        }
    }

    #[test]
    fn exact_identity_has_zero_residual() {
        let v = verify_certificate(&hand_certificate(), &parse("1 + x", 1).unwrap(), &module()).unwrap();
        assert_eq!(v.residual, 0.0);
        assert!(v.min_eigenvalue.abs() < 1e-15);
        assert!(v.passes(1e-8));
    }

    #[test]
    fn perturbation_shows_up_in_residual() {
        let mut cert = hand_certificate();
        cert.blocks[0].q[0] += 1e-3;
        let v = verify_certificate(&cert, &parse("1 + x", 1).unwrap(), &module()).unwrap();
        assert!((v.residual - 1e-3).abs() < 1e-12);
        assert!(!v.passes(1e-8));
    }

    #[test]
    fn zero_blocks_certify_zero() {
        let mut cert = hand_certificate();
        for b in &mut cert.blocks {
            b.q.iter_mut().for_each(|v| *v = 0.0);
        }
        let v = verify_certificate(&cert, &Polynomial::zero(1), &module()).unwrap();
        assert_eq!(v.residual, 0.0);
    }

    #[test]
    fn wrong_generator_is_a_mismatch() {
        let mut cert = hand_certificate();
        cert.blocks[1].generator_index = 5;
        assert!(matches!(
            verify_certificate(&cert, &parse("1 + x", 1).unwrap(), &module()),
            Err(SosError::Mismatch(_))
        ));
        let mut cert = hand_certificate();
        cert.blocks[0].q.pop();
        assert!(verify_certificate(&cert, &parse("1 + x", 1).unwrap(), &module()).is_err());
        let mut cert = hand_certificate();
        cert.degree = 1;
        assert!(verify_certificate(&cert, &parse("1 + x", 1).unwrap(), &module()).is_err());
    }

    #[test]
    fn json_shape() {
        let json = serde_json::to_value(hand_certificate()).unwrap();
        assert_eq!(json["degree"], 2);
        assert_eq!(json["blocks"][0]["basis"], serde_json::json!([[0], [1]]));
        assert_eq!(json["blocks"][1]["Q"], serde_json::json!([0.5]));
        let back: GramCertificate = serde_json::from_value(json).unwrap();
        assert_eq!(back, hand_certificate());
    }
}
