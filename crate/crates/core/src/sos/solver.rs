use std::collections::HashMap;

use crate::cones::QuadraticModule;
use crate::poly::{rational_to_f64, MultiIndex, Polynomial};

use super::certificate::{verify_certificate, CertificateBlock, GramCertificate};
use super::gram::{gram_bases, GramBlock};
use super::linalg::{
    cholesky_inverse, cholesky_solve, congruence_by_inverse, symmetric_eigen, Matrix,
};
use super::{MembershipStatus, Method, SolverOptions, SosError};

/// Hard cap on interior-point iterations; the method converges or stalls
/// long before this on desk-scale problems.
const IPM_MAX_ITER: usize = 200;
const STEP_FRACTION: f64 = 0.95;
const PIVOT_TOL: f64 = 1e-10;
/// Relative eigenvalue cut-offs tried when restricting to a face.
const FACE_THRESHOLDS: [f64; 3] = [1e-6, 1e-4, 1e-2];
const FACE_NEWTON_STEPS: usize = 8;
const PRUNE_FACTOR: f64 = 10.0;
/// Primal residual (relative) below which stalled iterates are refined on
/// their face during the run, not only at exit.
const FACE_RESIDUAL: f64 = 1e-6;

/// Nonzero of a constraint matrix `A_k`: entry `(i, j)` (`i <= j`) of block `b`.
#[derive(Debug, Clone, Copy)]
struct Entry {
    block: usize,
    i: usize,
    j: usize,
    v: f64,
}

impl Entry {
    #[inline]
    fn weight(&self) -> f64 {
        if self.i == self.j {
            self.v
        } else {
            2.0 * self.v
        }
    }
}

/// A module truncated at a fixed degree, with the linear map from Gram
/// matrices to coefficients assembled and factored once.
///
/// Reusable across many right-hand sides (e.g. the bisection arms of the
/// seminorm upper bound).
#[derive(Debug, Clone)]
pub struct TruncatedModule {
    module: QuadraticModule,
    degree: u32,
    blocks: Vec<GramBlock>,
    monomials: Vec<MultiIndex>,
    index: HashMap<MultiIndex, usize>,
    rows: Vec<Vec<Entry>>,
    /// Rows of a maximal linearly independent subset, in order.
    kept: Vec<usize>,
    dependent: Vec<usize>,
    /// Cholesky factor of the Gram matrix of the kept rows.
    gram_chol: Matrix,
}

impl TruncatedModule {
    pub fn new(module: &QuadraticModule, degree: u32) -> Result<Self, SosError> {
        let blocks = gram_bases(module, degree)?;
        let mut monomials: Vec<MultiIndex> = Vec::new();
        let mut index: HashMap<MultiIndex, usize> = HashMap::new();
        let mut rows: Vec<Vec<Entry>> = Vec::new();

        for (b, block) in blocks.iter().enumerate() {
            let n = block.basis.len();
            for i in 0..n {
                for j in i..n {
                    let s = block.basis[i].add(&block.basis[j]);
                    for (ge, gc) in block.generator.terms() {
                        let gamma = s.add(ge);
                        let k = *index.entry(gamma.clone()).or_insert_with(|| {
                            monomials.push(gamma);
                            rows.push(Vec::new());
                            monomials.len() - 1
                        });
                        rows[k].push(Entry { block: b, i, j, v: rational_to_f64(gc) });
                    }
                }
            }
        }

        let gram = row_gram(&rows, &blocks);
        let (kept, dependent, gram_chol) = independent_rows(&gram);
        Ok(TruncatedModule {
            module: module.clone(),
            degree,
            blocks,
            monomials,
            index,
            rows,
            kept,
            dependent,
            gram_chol,
        })
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn module(&self) -> &QuadraticModule {
        &self.module
    }

    pub fn blocks(&self) -> &[GramBlock] {
        &self.blocks
    }

    /// Number of coefficient constraints (reachable monomials).
    pub fn num_constraints(&self) -> usize {
        self.monomials.len()
    }

    pub fn membership(
        &self,
        f: &Polynomial,
        opts: &SolverOptions,
    ) -> Result<MembershipStatus, SosError> {
        opts.validate()?;
        if f.nvars() != self.module.nvars() {
            return Err(SosError::Mismatch(format!(
                "polynomial has {} variables, module has {}",
                f.nvars(),
                self.module.nvars()
            )));
        }
        if f.degree() > self.degree {
            return Err(SosError::Degree { poly_degree: f.degree(), degree: self.degree });
        }
        if f.is_zero() {
            return self.zero_certificate(f, opts).map(MembershipStatus::Certified);
        }

        let mut b = vec![0.0; self.monomials.len()];
        let mut unreachable = 0.0;
        for (e, c) in f.terms() {
            match self.index.get(e) {
                Some(&k) => b[k] = rational_to_f64(c),
                None => unreachable += rational_to_f64(c).abs(),
            }
        }
        if unreachable > 0.0 {
            return Ok(MembershipStatus::Unknown { iterations: 0, final_residual: unreachable });
        }
        if !self.dependent_rows_consistent(&b) {
            return Ok(MembershipStatus::Unknown { iterations: 0, final_residual: f64::NAN });
        }

        let ctx = Ctx { tm: self, f, b: &b, opts };
        match opts.method {
            Method::InteriorPoint => ctx.interior_point(),
            Method::AlternatingProjections => ctx.alternating_projections(),
        }
    }

    fn zero_certificate(&self, f: &Polynomial, opts: &SolverOptions) -> Result<GramCertificate, SosError> {
        let blocks = self
            .blocks
            .iter()
            .map(|blk| CertificateBlock {
                generator_index: blk.generator_index,
                basis: blk.basis.clone(),
                q: vec![0.0; blk.basis.len() * blk.basis.len()],
            })
            .collect();
        let mut cert = GramCertificate {
            degree: self.degree,
            blocks,
            residual: 0.0,
            min_eigenvalue: 0.0,
            tol: opts.tol,
            preordering: self.module.is_preordering(),
        };
        let v = verify_certificate(&cert, f, &self.module)?;
        cert.residual = v.residual;
        cert.min_eigenvalue = v.min_eigenvalue;
        Ok(cert)
    }

    fn sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.basis.len()).collect()
    }

    /// `<A_k, X>` for every row `k` in `which`.
    fn apply(&self, x: &[Matrix], which: &[usize]) -> Vec<f64> {
        which
            .iter()
            .map(|&k| self.rows[k].iter().map(|e| e.weight() * x[e.block].get(e.i, e.j)).sum())
            .collect()
    }

    /// `sum_k y_k A_k` over the kept rows.
    fn adjoint(&self, y: &[f64]) -> Vec<Matrix> {
        let mut out: Vec<Matrix> = self.sizes().into_iter().map(Matrix::zeros).collect();
        for (&k, &yk) in self.kept.iter().zip(y) {
            if yk == 0.0 {
                continue;
            }
            for e in &self.rows[k] {
                out[e.block].add_at(e.i, e.j, yk * e.v);
                if e.i != e.j {
                    out[e.block].add_at(e.j, e.i, yk * e.v);
                }
            }
        }
        out
    }

    /// Orthogonal projection onto `{X : A(X) = b}` (kept rows).
    fn project_affine(&self, x: &[Matrix], b_kept: &[f64]) -> Vec<Matrix> {
        let ax = self.apply(x, &self.kept);
        let r: Vec<f64> = b_kept.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let w = cholesky_solve(&self.gram_chol, &r);
        let corr = self.adjoint(&w);
        x.iter().zip(&corr).map(|(xi, ci)| xi.add(ci)).collect()
    }

    fn dependent_rows_consistent(&self, b: &[f64]) -> bool {
        if self.dependent.is_empty() {
            return true;
        }
        let b_kept: Vec<f64> = self.kept.iter().map(|&k| b[k]).collect();
        let zero: Vec<Matrix> = self.sizes().into_iter().map(Matrix::zeros).collect();
        let x = self.project_affine(&zero, &b_kept);
        let scale = 1.0 + b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let got = self.apply(&x, &self.dependent);
        self.dependent.iter().zip(got).all(|(&k, g)| (g - b[k]).abs() <= 1e-9 * scale)
    }
}

/// Gram matrix `<A_k, A_l>` of the constraint rows.
fn row_gram(rows: &[Vec<Entry>], blocks: &[GramBlock]) -> Matrix {
    let m = rows.len();
    let mut offsets = Vec::with_capacity(blocks.len());
    let mut total = 0usize;
    for blk in blocks {
        offsets.push(total);
        total += blk.basis.len() * blk.basis.len();
    }
    let mut by_slot: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
    for (k, row) in rows.iter().enumerate() {
        for e in row {
            let n = blocks[e.block].basis.len();
            let slot = offsets[e.block] + e.i * n + e.j;
            let w: f64 = if e.i == e.j { 1.0 } else { 2.0 };
            by_slot.entry(slot).or_default().push((k, e.v * w.sqrt()));
        }
    }
    let mut g = Matrix::zeros(m);
    for list in by_slot.values() {
        for &(k, vk) in list {
            for &(l, vl) in list {
                g.add_at(k, l, vk * vl);
            }
        }
    }
    g
}

/// Greedy pivoted Cholesky: keeps rows in order unless they are (numerically)
/// in the span of the rows kept so far.
fn independent_rows(gram: &Matrix) -> (Vec<usize>, Vec<usize>, Matrix) {
    let m = gram.n();
    let mut kept: Vec<usize> = Vec::new();
    let mut dependent = Vec::new();
    // Rows of L for the kept indices.
    let mut l_rows: Vec<Vec<f64>> = Vec::new();
    for k in 0..m {
        let r = kept.len();
        let mut c = vec![0.0; r];
        for a in 0..r {
            let mut s = gram.get(kept[a], k);
            for t in 0..a {
                s -= l_rows[a][t] * c[t];
            }
            c[a] = s / l_rows[a][a];
        }
        let pivot = gram.get(k, k) - c.iter().map(|v| v * v).sum::<f64>();
        if pivot > PIVOT_TOL * gram.get(k, k).max(f64::MIN_POSITIVE) && pivot > 0.0 {
            c.push(pivot.sqrt());
            l_rows.push(c);
            kept.push(k);
        } else {
            dependent.push(k);
        }
    }
    let r = kept.len();
    let mut l = Matrix::zeros(r);
    for (a, row) in l_rows.iter().enumerate() {
        for (t, v) in row.iter().enumerate() {
            l.set(a, t, *v);
        }
    }
    (kept, dependent, l)
}

struct Ctx<'a> {
    tm: &'a TruncatedModule,
    f: &'a Polynomial,
    b: &'a [f64],
    opts: &'a SolverOptions,
}

impl Ctx<'_> {
    fn b_kept(&self) -> Vec<f64> {
        self.tm.kept.iter().map(|&k| self.b[k]).collect()
    }

    fn initial_scale(&self) -> f64 {
        let nbasis: usize = self.tm.blocks.iter().map(|b| b.basis.len()).sum();
        let s = self.f.l1_norm() / nbasis.max(1) as f64;
        if s > 0.0 && s.is_finite() {
            s
        } else {
            1.0
        }
    }

    /// Projects `x` onto the affine set and accepts it when the projection is
    /// PSD within `tol / 2` and the rationalized residual is within `tol`.
    fn try_certify(&self, x: &[Matrix], b_kept: &[f64], face: bool) -> Result<Option<GramCertificate>, SosError> {
        let xp = self.tm.project_affine(x, b_kept);
        let mut floor = f64::INFINITY;
        for q in &xp {
            if q.n() > 0 {
                floor = floor.min(symmetric_eigen(&q.symmetrize())?.values[0]);
            }
        }
        if floor >= -0.5 * self.opts.tol {
            if let Some(cert) = self.finish(xp)? {
                return Ok(Some(cert));
            }
        }
        if !face {
            return Ok(None);
        }
        for t in FACE_THRESHOLDS {
            if let Some(q) = self.face_refine(x, t)? {
                if let Some(cert) = self.finish(q)? {
                    return Ok(Some(cert));
                }
            }
        }
        Ok(None)
    }

    /// Restricts every block to its eigenvectors above `rel * lambda_max`
    /// and solves the coefficient equations for `Q = L L^T` by least-norm
    /// Gauss-Newton steps on the factor `L`, started from `V diag(sqrt(lambda))`.
    ///
    /// Iterates that approach a rank-deficient solution (no strictly
    /// feasible Gram matrix) stall at a small primal residual; on the right
    /// face the equations are solvable to machine precision. Factor rows
    /// whose squared norm is at the residual floor are set to zero and
    /// frozen before a second round.
    fn face_refine(&self, x: &[Matrix], rel: f64) -> Result<Option<Vec<Matrix>>, SosError> {
        let tm = self.tm;
        let mut eigs = Vec::with_capacity(x.len());
        let mut top = 0.0f64;
        for q in x {
            let e = symmetric_eigen(&q.symmetrize())?;
            top = top.max(e.values.last().copied().unwrap_or(0.0));
            eigs.push(e);
        }
        if !(top > 0.0) {
            return Ok(None);
        }
        // Factor L_b stored row-major n_b x r_b; offsets into the flat unknown vector.
        let mut factors: Vec<(usize, usize, Vec<f64>)> = Vec::with_capacity(x.len());
        let mut offsets = Vec::with_capacity(x.len());
        let mut nunk = 0usize;
        for e in &eigs {
            let n = e.values.len();
            let cols: Vec<usize> = (0..n).filter(|&c| e.values[c] > rel * top).collect();
            let r = cols.len();
            let mut l = vec![0.0; n * r];
            for i in 0..n {
                for (t, &c) in cols.iter().enumerate() {
                    l[i * r + t] = e.vectors.get(i, c) * e.values[c].sqrt();
                }
            }
            offsets.push(nunk);
            nunk += n * r;
            factors.push((n, r, l));
        }
        let scale = 1.0 + self.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let gram_of = |fs: &[(usize, usize, Vec<f64>)]| -> Vec<Matrix> {
            fs.iter()
                .map(|(n, r, l)| {
                    let mut q = Matrix::zeros(*n);
                    for i in 0..*n {
                        for j in i..*n {
                            let v: f64 = (0..*r).map(|t| l[i * r + t] * l[j * r + t]).sum();
                            q.set(i, j, v);
                            q.set(j, i, v);
                        }
                    }
                    q
                })
                .collect()
        };
        let all: Vec<usize> = (0..tm.rows.len()).collect();

        // Rows of L that vanish at the solution make their diagonal equations
        // invisible to the Jacobian; after a first round they are frozen at 0.
        let mut frozen: Vec<Vec<bool>> = factors.iter().map(|(n, _, _)| vec![false; *n]).collect();
        let mut pruned_once = false;
        let mut history: Vec<f64> = Vec::new();
        for _ in 0..=2 * FACE_NEWTON_STEPS {
            let q = gram_of(&factors);
            let got = tm.apply(&q, &all);
            let resid: Vec<f64> = self.b.iter().zip(&got).map(|(b, g)| b - g).collect();
            let worst = resid.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let l1: f64 = resid.iter().map(|v| v.abs()).sum();
            if l1 <= 1e-3 * self.opts.tol || worst <= 1e-14 * scale {
                return Ok(Some(q));
            }
            // A phase ends after its step budget or once two steps fail to
            // halve the residual.
            let stagnant = history.len() >= 2 && l1 > 0.5 * history[history.len() - 2];
            history.push(l1);
            if history.len() > FACE_NEWTON_STEPS || stagnant {
                if pruned_once {
                    break;
                }
                pruned_once = true;
                history.clear();
                let mut pruned = false;
                for ((n, r, l), fz) in factors.iter_mut().zip(&mut frozen) {
                    for i in 0..*n {
                        let row = &mut l[i * *r..(i + 1) * *r];
                        if row.iter().map(|v| v * v).sum::<f64>() <= PRUNE_FACTOR * l1 {
                            row.iter_mut().for_each(|v| *v = 0.0);
                            pruned |= !fz[i];
                            fz[i] = true;
                        }
                    }
                }
                if !pruned {
                    break;
                }
                continue;
            }
            // d<A_k, L L^T>/dL[a, c] = sum_e w_e (d_ia L[j, c] + d_ja L[i, c])
            let mut jac = vec![vec![0.0; nunk]; all.len()];
            for (k, row) in tm.rows.iter().enumerate() {
                for e in row {
                    let (_, r, l) = &factors[e.block];
                    let off = offsets[e.block];
                    let fz = &frozen[e.block];
                    for c in 0..*r {
                        if !fz[e.i] {
                            jac[k][off + e.i * r + c] += e.weight() * l[e.j * r + c];
                        }
                        if !fz[e.j] {
                            jac[k][off + e.j * r + c] += e.weight() * l[e.i * r + c];
                        }
                    }
                }
            }
            let m = jac.len();
            let mut jjt = Matrix::zeros(m);
            for k in 0..m {
                for t in k..m {
                    let v: f64 = jac[k].iter().zip(&jac[t]).map(|(a, b)| a * b).sum();
                    jjt.set(k, t, v);
                    jjt.set(t, k, v);
                }
            }
            let (kept, _, chol) = independent_rows(&jjt);
            if kept.is_empty() {
                return Ok(None);
            }
            let rk: Vec<f64> = kept.iter().map(|&k| resid[k]).collect();
            let u = cholesky_solve(&chol, &rk);
            for (b, (_, _, l)) in factors.iter_mut().enumerate() {
                let off = offsets[b];
                for (&k, uk) in kept.iter().zip(&u) {
                    for (idx, li) in l.iter_mut().enumerate() {
                        *li += uk * jac[k][off + idx];
                    }
                }
            }
        }
        let q = gram_of(&factors);
        let got = tm.apply(&q, &all);
        let l1: f64 = self.b.iter().zip(&got).map(|(b, g)| (b - g).abs()).sum();
        Ok((l1 <= 0.1 * self.opts.tol).then_some(q))
    }

    fn finish(&self, xp: Vec<Matrix>) -> Result<Option<GramCertificate>, SosError> {
        let blocks = self
            .tm
            .blocks
            .iter()
            .zip(xp)
            .map(|(blk, q)| CertificateBlock {
                generator_index: blk.generator_index,
                basis: blk.basis.clone(),
                q: q.symmetrize().into_vec(),
            })
            .collect();
        let mut cert = GramCertificate {
            degree: self.tm.degree,
            blocks,
            residual: f64::NAN,
            min_eigenvalue: f64::NAN,
            tol: self.opts.tol,
            preordering: self.tm.module.is_preordering(),
        };
        let v = verify_certificate(&cert, self.f, &self.tm.module)?;
        if !v.passes(self.opts.tol) {
            return Ok(None);
        }
        cert.residual = v.residual;
        cert.min_eigenvalue = v.min_eigenvalue;
        Ok(Some(cert))
    }

    fn alternating_projections(&self) -> Result<MembershipStatus, SosError> {
        let b_kept = self.b_kept();
        let s = self.initial_scale();
        let mut x: Vec<Matrix> = self.tm.sizes().into_iter().map(|n| Matrix::scaled_identity(n, s)).collect();
        let mut gap = f64::INFINITY;
        for iter in 0..self.opts.max_iter {
            let xa = self.tm.project_affine(&x, &b_kept);
            let mut floor = f64::INFINITY;
            let mut next = Vec::with_capacity(xa.len());
            gap = 0.0;
            for q in &xa {
                if q.n() == 0 {
                    next.push(q.clone());
                    continue;
                }
                let eig = symmetric_eigen(&q.symmetrize())?;
                floor = floor.min(eig.values[0]);
                let clipped: Vec<f64> = eig.values.iter().map(|v| v.max(0.0)).collect();
                let p = eig_rebuild(&eig.vectors, &clipped);
                gap += p.sub(q).frobenius_norm().powi(2);
                next.push(p);
            }
            gap = gap.sqrt();
            if floor >= -0.5 * self.opts.tol {
                if let Some(cert) = self.finish(xa)? {
                    return Ok(MembershipStatus::Certified(cert));
                }
            }
            if gap == 0.0 && floor < -0.5 * self.opts.tol {
                return Ok(MembershipStatus::Unknown { iterations: iter + 1, final_residual: gap });
            }
            x = next;
        }
        Ok(MembershipStatus::Unknown { iterations: self.opts.max_iter, final_residual: gap })
    }

    /// Infeasible primal-dual path following (HKM direction, Mehrotra
    /// predictor-corrector) on `min sum_i tr(Q_i)` subject to the coefficient
    /// constraints, stopping at the first iterate whose affine projection
    /// certifies.
    fn interior_point(&self) -> Result<MembershipStatus, SosError> {
        let tm = self.tm;
        let b_kept = self.b_kept();
        let m = b_kept.len();
        let sizes = tm.sizes();
        let n_total: usize = sizes.iter().sum();
        let s = self.initial_scale();
        let bnorm = b_kept.iter().fold(0.0f64, |a, v| a.max(v.abs()));

        let mut x: Vec<Matrix> = sizes.iter().map(|&n| Matrix::scaled_identity(n, s)).collect();
        let mut z: Vec<Matrix> = sizes.iter().map(|&n| Matrix::identity(n)).collect();
        let c: Vec<Matrix> = sizes.iter().map(|&n| Matrix::identity(n)).collect();
        let mut y = vec![0.0; m];
        let cap = self.opts.max_iter.min(IPM_MAX_ITER);
        let mut stalls = 0;
        let mut rp_norm = f64::INFINITY;
        let mut iterations = cap;

        'ipm: for iter in 0..cap {
            iterations = iter + 1;
            let ax = tm.apply(&x, &tm.kept);
            let rp: Vec<f64> = b_kept.iter().zip(&ax).map(|(b, a)| b - a).collect();
            rp_norm = rp.iter().map(|v| v.abs()).sum();

            if rp_norm <= 1e-2 * (1.0 + bnorm) {
                let face = rp_norm <= FACE_RESIDUAL * (1.0 + bnorm);
                if let Some(cert) = self.try_certify(&x, &b_kept, face)? {
                    return Ok(MembershipStatus::Certified(cert));
                }
            }

            let aty = tm.adjoint(&y);
            let rd: Vec<Matrix> = (0..sizes.len()).map(|i| c[i].sub(&aty[i]).sub(&z[i])).collect();
            let mu = x.iter().zip(&z).map(|(a, b)| a.dot(b)).sum::<f64>() / n_total.max(1) as f64;
            let dual_obj: f64 = b_kept.iter().zip(&y).map(|(b, v)| b * v).sum();
            let primal_trace: f64 = x.iter().map(Matrix::trace).sum();

            // A diverging dual objective signals primal infeasibility.
            if dual_obj > 1e8 * (1.0 + primal_trace) {
                break;
            }
            if mu < 1e-14 && rp_norm < 1e-12 * (1.0 + bnorm) {
                break;
            }

            let mut zinv = Vec::with_capacity(z.len());
            for zi in &z {
                match zi.cholesky() {
                    Some(l) => zinv.push(cholesky_inverse(&l)),
                    None if zi.n() == 0 => zinv.push(Matrix::zeros(0)),
                    None => break 'ipm,
                }
            }
            let schur = self.schur(&x, &zinv);
            let Some(schur_chol) = factor_with_ridge(&schur) else {
                break;
            };

            let dir = |target: f64, corr: Option<&[Matrix]>| -> Direction {
                // H = target Z^-1 - X - corr Z^-1 - X Rd Z^-1
                let h: Vec<Matrix> = (0..sizes.len())
                    .map(|i| {
                        let mut hi = zinv[i].scale(target).sub(&x[i]);
                        if let Some(cr) = corr {
                            hi = hi.sub(&cr[i].matmul(&zinv[i]));
                        }
                        hi.sub(&x[i].matmul(&rd[i]).matmul(&zinv[i])).symmetrize()
                    })
                    .collect();
                let ah = tm.apply(&h, &tm.kept);
                let rhs: Vec<f64> = rp.iter().zip(&ah).map(|(r, a)| r - a).collect();
                let dy = cholesky_solve(&schur_chol, &rhs);
                let atdy = tm.adjoint(&dy);
                let dz: Vec<Matrix> = (0..sizes.len()).map(|i| rd[i].sub(&atdy[i])).collect();
                let dx: Vec<Matrix> = (0..sizes.len())
                    .map(|i| {
                        let mut d = zinv[i].scale(target).sub(&x[i]);
                        if let Some(cr) = corr {
                            d = d.sub(&cr[i].matmul(&zinv[i]));
                        }
                        d.sub(&x[i].matmul(&dz[i]).matmul(&zinv[i])).symmetrize()
                    })
                    .collect();
                Direction { dx, dy, dz }
            };

            let pred = dir(0.0, None);
            let ap = max_step(&x, &pred.dx).min(1.0);
            let ad = max_step(&z, &pred.dz).min(1.0);
            let mu_aff = (0..sizes.len())
                .map(|i| x[i].axpy(ap, &pred.dx[i]).dot(&z[i].axpy(ad, &pred.dz[i])))
                .sum::<f64>()
                / n_total.max(1) as f64;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
            let corr: Vec<Matrix> = (0..sizes.len()).map(|i| pred.dx[i].matmul(&pred.dz[i])).collect();
            let step = dir(sigma * mu, Some(&corr));

            let ap = (STEP_FRACTION * max_step(&x, &step.dx)).min(1.0);
            let ad = (STEP_FRACTION * max_step(&z, &step.dz)).min(1.0);
            for i in 0..sizes.len() {
                x[i] = x[i].axpy(ap, &step.dx[i]);
                z[i] = z[i].axpy(ad, &step.dz[i]);
            }
            for (yi, d) in y.iter_mut().zip(&step.dy) {
                *yi += ad * d;
            }
            if ap < 1e-8 && ad < 1e-8 {
                stalls += 1;
                if stalls >= 3 {
                    break;
                }
            } else {
                stalls = 0;
            }
        }
        // Boundary instances stall here; refine on the face of the final iterate.
        if let Some(cert) = self.try_certify(&x, &b_kept, true)? {
            return Ok(MembershipStatus::Certified(cert));
        }
        Ok(self.unknown(iterations, rp_norm))
    }

    fn unknown(&self, iterations: usize, final_residual: f64) -> MembershipStatus {
        MembershipStatus::Unknown { iterations, final_residual }
    }

    /// Schur complement `M_kl = <A_k, X A_l Z^-1>` over the kept rows.
    fn schur(&self, x: &[Matrix], zinv: &[Matrix]) -> Matrix {
        let tm = self.tm;
        let m = tm.kept.len();
        let mut out = Matrix::zeros(m);
        for (lpos, &l) in tm.kept.iter().enumerate() {
            // G_b = X_b A_l^b Z_b^-1 for every block touched by row l.
            let mut g: HashMap<usize, Matrix> = HashMap::new();
            let mut t: HashMap<usize, Matrix> = HashMap::new();
            for e in &tm.rows[l] {
                let n = x[e.block].n();
                let tb = t.entry(e.block).or_insert_with(|| Matrix::zeros(n));
                let zi = &zinv[e.block];
                for c in 0..n {
                    tb.add_at(e.i, c, e.v * zi.get(e.j, c));
                    if e.i != e.j {
                        tb.add_at(e.j, c, e.v * zi.get(e.i, c));
                    }
                }
            }
            for (blk, tb) in t {
                g.insert(blk, x[blk].matmul(&tb));
            }
            for (kpos, &k) in tm.kept.iter().enumerate() {
                let mut acc = 0.0;
                for e in &tm.rows[k] {
                    if let Some(gb) = g.get(&e.block) {
                        acc += e.v * gb.get(e.j, e.i);
                        if e.i != e.j {
                            acc += e.v * gb.get(e.i, e.j);
                        }
                    }
                }
                out.set(kpos, lpos, acc);
            }
        }
        out.symmetrize()
    }
}

struct Direction {
    dx: Vec<Matrix>,
    dy: Vec<f64>,
    dz: Vec<Matrix>,
}

fn eig_rebuild(v: &Matrix, values: &[f64]) -> Matrix {
    let n = v.n();
    let mut out = Matrix::zeros(n);
    for (k, &lam) in values.iter().enumerate() {
        if lam == 0.0 {
            continue;
        }
        for i in 0..n {
            let a = v.get(i, k) * lam;
            for j in 0..n {
                out.add_at(i, j, a * v.get(j, k));
            }
        }
    }
    out.symmetrize()
}

/// Largest `alpha` with `X + alpha dX ⪰ 0` over all blocks (`X ≻ 0`).
fn max_step(x: &[Matrix], dx: &[Matrix]) -> f64 {
    let mut alpha = f64::INFINITY;
    for (xi, di) in x.iter().zip(dx) {
        if xi.n() == 0 {
            continue;
        }
        let Some(l) = xi.cholesky() else { return 0.0 };
        let w = congruence_by_inverse(&l, di);
        let lam = match symmetric_eigen(&w) {
            Ok(e) => e.values[0],
            Err(_) => return 0.0,
        };
        if lam < 0.0 {
            alpha = alpha.min(-1.0 / lam);
        }
    }
    alpha
}

fn factor_with_ridge(m: &Matrix) -> Option<Matrix> {
    if let Some(l) = m.cholesky() {
        return Some(l);
    }
    let scale = (0..m.n()).map(|i| m.get(i, i).abs()).fold(0.0f64, f64::max).max(1e-300);
    let mut ridge = 1e-14 * scale;
    for _ in 0..8 {
        let mut r = m.clone();
        for i in 0..m.n() {
            r.add_at(i, i, ridge);
        }
        if let Some(l) = r.cholesky() {
            return Some(l);
        }
        ridge *= 100.0;
    }
    None
}
