use crate::cones::QuadraticModule;
use crate::poly::{MultiIndex, Polynomial};

use super::SosError;

/// One weighted Gram block `b^T Q b * g` of a truncated representation.
#[derive(Debug, Clone, PartialEq)]
pub struct GramBlock {
    /// Index into [`QuadraticModule::effective_generators`]; 0 is the constant 1.
    pub generator_index: usize,
    pub generator: Polynomial,
    pub basis: Vec<MultiIndex>,
}

/// Gram bases for degree `d`: every effective generator `g` receives all
/// monomials of degree at most `(d - deg g) / 2`, in graded-lex order.
/// Generators whose degree exceeds `d` get no block.
pub fn gram_bases(module: &QuadraticModule, d: u32) -> Result<Vec<GramBlock>, SosError> {
    let nvars = module.nvars();
    let gens = module.effective_generators()?;
    Ok(gens
        .iter()
        .enumerate()
        .filter_map(|(idx, g)| {
            let dg = g.degree();
            (dg <= d).then(|| GramBlock {
                generator_index: idx,
                generator: g.clone(),
                basis: MultiIndex::all_up_to(nvars, (d - dg) / 2),
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse;

    #[test]
    fn univariate_blocks() {
        let m = QuadraticModule::quadratic(1, vec![parse("1 - x^2", 1).unwrap()]).unwrap();
        let blocks = gram_bases(&m, 2).unwrap();
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].generator_index, 0);
        assert_eq!(blocks[0].basis, vec![MultiIndex::new(vec![0]), MultiIndex::new(vec![1])]);
        assert_eq!(blocks[1].generator_index, 1);
        assert_eq!(blocks[1].basis, vec![MultiIndex::new(vec![0])]);
    }

    #[test]
    fn plain_sums_of_squares() {
        let m = QuadraticModule::sums_of_squares(2);
        let blocks = gram_bases(&m, 4).unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].basis.len(), 6);
    }

    #[test]
    fn too_small_degree_omits_block() {
        let m = QuadraticModule::quadratic(1, vec![parse("1 - x^4", 1).unwrap()]).unwrap();
        let blocks = gram_bases(&m, 3).unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].generator_index, 0);
    }

    #[test]
    fn preordering_uses_products() {
        let m = QuadraticModule::preordering(
            2,
            vec![parse("1 - x^2", 2).unwrap(), parse("1 - y^2", 2).unwrap()],
        )
        .unwrap();
        let blocks = gram_bases(&m, 4).unwrap();
        let sizes: Vec<usize> = blocks.iter().map(|b| b.basis.len()).collect();
        assert_eq!(sizes, vec![6, 3, 3, 1]);
    }
}
