//! The transformed stage operator `A_q^{-1} ⊗ M + τ I ⊗ K` and its
//! preconditioner `L ⊗ M + τ I ⊗ K`, applied without forming Kronecker products.
//!
//! Vectors of length `q n` are stored stage-major: entries `i*n .. (i+1)*n` are
//! the block of stage `i`.

use nalgebra::DMatrix;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::factor::TriangularFactorization;
use crate::fem::GridOperators;
use crate::krylov::{LinearOperator, Preconditioner};
use crate::linalg::{conjugate_gradient, BandCholesky, CsrMatrix};

/// Largest `q n` for which dense oracles are assembled.
pub const DENSE_LIMIT: usize = 5000;

/// Above this `n` the block solves switch from Cholesky to CG.
pub const DIRECT_SOLVE_LIMIT: usize = 40_000;

pub const INNER_CG_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct StageSystem {
    pub fact: TriangularFactorization,
    pub ops: GridOperators,
    pub tau: f64,
}

impl StageSystem {
    pub fn new(fact: TriangularFactorization, ops: GridOperators, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Domain(format!("tau must be positive, got {tau}")));
        }
        Ok(Self { fact, ops, tau })
    }

    pub fn stages(&self) -> usize {
        self.fact.q
    }

    pub fn n(&self) -> usize {
        self.ops.n
    }

    pub fn dim(&self) -> usize {
        self.stages() * self.n()
    }

    /// Same grid and step with `Û = 0`; its operator coincides with the preconditioner.
    pub fn without_upper(&self) -> Self {
        Self {
            fact: self.fact.without_upper(),
            ..self.clone()
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len == self.dim() {
            Ok(())
        } else {
            Err(Error::Dimension {
                expected: self.dim(),
                got: len,
            })
        }
    }

    /// `(A_q^{-1} ⊗ M + τ I ⊗ K) x`
    pub fn stage_apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        let mut y = vec![0.0; x.len()];
        self.apply_with(&self.fact.ainv, x, &mut y);
        Ok(y)
    }

    /// `(C ⊗ M + τ I ⊗ K) x` for a `q x q` coefficient matrix `C`.
    fn apply_with(&self, coeff: &DMatrix<f64>, x: &[f64], y: &mut [f64]) {
        let n = self.n();
        let q = self.stages();
        let mx: Vec<Vec<f64>> = x.chunks(n).map(|xj| self.ops.mass.mul_vec(xj)).collect();
        for (i, yi) in y.chunks_mut(n).enumerate() {
            self.ops.stiffness.mul_vec_into(&x[i * n..(i + 1) * n], yi);
            for v in yi.iter_mut() {
                *v *= self.tau;
            }
            for (j, mxj) in mx.iter().enumerate().take(q) {
                let c = coeff[(i, j)];
                if c != 0.0 {
                    for (v, m) in yi.iter_mut().zip(mxj) {
                        *v += c * m;
                    }
                }
            }
        }
    }

    /// `(L ⊗ M + τ I ⊗ K) x`
    pub fn preconditioner_apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        let mut y = vec![0.0; x.len()];
        self.apply_with(&self.fact.l, x, &mut y);
        Ok(y)
    }

    /// `(A_q^{-1} ⊗ I) ḡ - (A_q^{-1} ⊗ K)(e_q ⊗ u_0)` with `e_q` the all-ones vector.
    pub fn assemble_rhs(&self, gbar: &[f64], u0: &[f64]) -> Result<Vec<f64>> {
        self.check_len(gbar.len())?;
        let n = self.n();
        if u0.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: u0.len(),
            });
        }
        let ku0 = self.ops.stiffness.mul_vec(u0);
        let ainv = &self.fact.ainv;
        let q = self.stages();
        let mut out = vec![0.0; q * n];
        for (i, oi) in out.chunks_mut(n).enumerate() {
            let row_sum: f64 = (0..q).map(|j| ainv[(i, j)]).sum();
            for (j, gj) in gbar.chunks(n).enumerate() {
                let c = ainv[(i, j)];
                for (o, g) in oi.iter_mut().zip(gj) {
                    *o += c * g;
                }
            }
            for (o, k) in oi.iter_mut().zip(&ku0) {
                *o -= row_sum * k;
            }
        }
        Ok(out)
    }

    fn check_dense(&self) -> Result<()> {
        if self.dim() > DENSE_LIMIT {
            Err(Error::SizeGuard {
                size: self.dim(),
                limit: DENSE_LIMIT,
            })
        } else {
            Ok(())
        }
    }

    fn dense_with(&self, coeff: &DMatrix<f64>) -> DMatrix<f64> {
        let q = self.stages();
        let m = self.ops.mass.to_dense();
        let k = self.ops.stiffness.to_dense();
        coeff.kronecker(&m) + DMatrix::<f64>::identity(q, q).kronecker(&k) * self.tau
    }

    /// Explicit `A_q^{-1} ⊗ M + τ I ⊗ K`; test oracle only.
    pub fn dense_matrix(&self) -> Result<DMatrix<f64>> {
        self.check_dense()?;
        Ok(self.dense_with(&self.fact.ainv))
    }

    /// Explicit `L ⊗ M + τ I ⊗ K`; test oracle only.
    pub fn dense_preconditioner(&self) -> Result<DMatrix<f64>> {
        self.check_dense()?;
        Ok(self.dense_with(&self.fact.l))
    }

    /// Explicit untransformed stage matrix `I ⊗ M + τ A_q ⊗ K`.
    pub fn dense_untransformed(&self) -> Result<DMatrix<f64>> {
        self.check_dense()?;
        let q = self.stages();
        let a = self.fact.ainv.clone().try_inverse().ok_or(Error::Singular)?;
        let m = self.ops.mass.to_dense();
        let k = self.ops.stiffness.to_dense();
        Ok(DMatrix::<f64>::identity(q, q).kronecker(&m) + a.kronecker(&k) * self.tau)
    }

    pub fn preconditioner(&self) -> Result<PreconditionerState> {
        let kind = if self.n() <= DIRECT_SOLVE_LIMIT {
            SolverKind::DirectCholesky
        } else {
            SolverKind::CgInner
        };
        PreconditionerState::new(self, kind)
    }
}

impl LinearOperator for StageSystem {
    fn dim(&self) -> usize {
        StageSystem::dim(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_with(&self.fact.ainv, x, y);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    DirectCholesky,
    CgInner,
}

#[derive(Debug, Clone)]
enum BlockSolver {
    Direct(BandCholesky),
    Cg { matrix: CsrMatrix, max_iter: usize },
}

impl BlockSolver {
    fn solve(&self, block: usize, rhs: &[f64]) -> Result<Vec<f64>> {
        match self {
            BlockSolver::Direct(chol) => Ok(chol.solve(rhs)),
            BlockSolver::Cg { matrix, max_iter } => {
                let out = conjugate_gradient(matrix, rhs, INNER_CG_TOL, *max_iter);
                if out.converged {
                    Ok(out.solution)
                } else {
                    Err(Error::InnerSolve {
                        block,
                        residual: out.relative_residual,
                    })
                }
            }
        }
    }
}

/// `P^{-1} = (T ⊗ I)(Λ ⊗ M + τ I ⊗ K)^{-1}(T^{-1} ⊗ I)`, with one SPD solver per stage.
#[derive(Debug, Clone)]
pub struct PreconditionerState {
    pub lambda: Vec<f64>,
    pub t: DMatrix<f64>,
    pub tinv: DMatrix<f64>,
    pub kind: SolverKind,
    n: usize,
    blocks: Vec<BlockSolver>,
}

impl PreconditionerState {
    pub fn new(sys: &StageSystem, kind: SolverKind) -> Result<Self> {
        let f = &sys.fact;
        let blocks = f
            .lambda
            .iter()
            .map(|&lam| {
                let block = sys.ops.mass.linear_combination(lam, &sys.ops.stiffness, sys.tau)?;
                Ok(match kind {
                    SolverKind::DirectCholesky => BlockSolver::Direct(BandCholesky::factor(&block)?),
                    SolverKind::CgInner => BlockSolver::Cg {
                        max_iter: 10 * block.nrows().max(100),
                        matrix: block,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            lambda: f.lambda.clone(),
            t: f.t.clone(),
            tinv: f.tinv.clone(),
            kind,
            n: sys.n(),
            blocks,
        })
    }

    pub fn stages(&self) -> usize {
        self.lambda.len()
    }

    fn mix(coeff: &DMatrix<f64>, x: &[f64], n: usize) -> Vec<f64> {
        let q = coeff.nrows();
        let mut y = vec![0.0; q * n];
        for (i, yi) in y.chunks_mut(n).enumerate() {
            for (j, xj) in x.chunks(n).enumerate() {
                let c = coeff[(i, j)];
                if c != 0.0 {
                    for (a, b) in yi.iter_mut().zip(xj) {
                        *a += c * b;
                    }
                }
            }
        }
        y
    }

    /// `P^{-1} r`
    pub fn prec_apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if r.len() != self.stages() * n {
            return Err(Error::Dimension {
                expected: self.stages() * n,
                got: r.len(),
            });
        }
        let y = Self::mix(&self.tinv, r, n);
        let solve = |(i, (block, yi)): (usize, (&BlockSolver, &[f64]))| block.solve(i, yi);
        #[cfg(feature = "parallel")]
        let z: Vec<Vec<f64>> = self
            .blocks
            .par_iter()
            .zip(y.par_chunks(n))
            .enumerate()
            .map(solve)
            .collect::<Result<_>>()?;
        #[cfg(not(feature = "parallel"))]
        let z: Vec<Vec<f64>> = self
            .blocks
            .iter()
            .zip(y.chunks(n))
            .enumerate()
            .map(solve)
            .collect::<Result<_>>()?;
        Ok(Self::mix(&self.t, &z.concat(), n))
    }
}

impl Preconditioner for PreconditionerState {
    fn solve(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.prec_apply(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_q1, BoundaryMode};
    use crate::linalg::max_abs;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn system(q: usize, n_side: usize, bc: BoundaryMode, tau: f64) -> StageSystem {
        let fact = TriangularFactorization::radau(q).unwrap();
        StageSystem::new(fact, assemble_q1(n_side, bc).unwrap(), tau).unwrap()
    }

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn one_stage_is_mass_plus_tau_stiffness() {
        let sys = system(1, 5, BoundaryMode::Full, 0.3);
        let x = random(sys.dim(), 1);
        let y = sys.stage_apply(&x).unwrap();
        let m = sys.ops.mass.mul_vec(&x);
        let k = sys.ops.stiffness.mul_vec(&x);
        let expected: Vec<f64> = m.iter().zip(&k).map(|(m, k)| m + 0.3 * k).collect();
        assert!(max_diff(&y, &expected) < 1e-15);
    }

    #[test]
    fn first_unit_block() {
        let sys = system(3, 5, BoundaryMode::DirichletInterior, 0.1);
        let n = sys.n();
        let w = random(n, 2);
        let mut x = vec![0.0; sys.dim()];
        x[..n].copy_from_slice(&w);
        let y = sys.stage_apply(&x).unwrap();
        let mw = sys.ops.mass.mul_vec(&w);
        let kw = sys.ops.stiffness.mul_vec(&w);
        for i in 0..3 {
            for r in 0..n {
                let delta = if i == 0 { 0.1 * kw[r] } else { 0.0 };
                let expected = sys.fact.ainv[(i, 0)] * mw[r] + delta;
                assert!((y[i * n + r] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn matches_dense_assembly() {
        let sys = system(2, 5, BoundaryMode::DirichletInterior, 0.05);
        assert_eq!(sys.dim(), 18);
        let x = random(18, 3);
        let dense = sys.dense_matrix().unwrap() * DVector::from_vec(x.clone());
        assert!(max_diff(&sys.stage_apply(&x).unwrap(), dense.as_slice()) < 1e-13);
        let dp = sys.dense_preconditioner().unwrap() * DVector::from_vec(x.clone());
        assert!(max_diff(&sys.preconditioner_apply(&x).unwrap(), dp.as_slice()) < 1e-13);
    }

    #[test]
    fn dropping_upper_makes_operator_equal_preconditioner() {
        let sys = system(3, 5, BoundaryMode::Full, 0.2).without_upper();
        let x = random(sys.dim(), 4);
        assert!(max_diff(&sys.stage_apply(&x).unwrap(), &sys.preconditioner_apply(&x).unwrap()) < 1e-13);
    }

    #[test]
    fn rhs_against_dense() {
        let sys = system(2, 5, BoundaryMode::DirichletInterior, 0.05);
        let (q, n) = (2, sys.n());
        let g = random(q * n, 5);
        let u0 = random(n, 6);
        let rhs = sys.assemble_rhs(&g, &u0).unwrap();
        let ainv = &sys.fact.ainv;
        let k = sys.ops.stiffness.to_dense();
        let eu0 = DVector::from_iterator(q * n, (0..q).flat_map(|_| u0.iter().copied()));
        let expected = ainv.kronecker(&DMatrix::<f64>::identity(n, n)) * DVector::from_vec(g)
            - ainv.kronecker(&k) * eu0;
        assert!(max_diff(&rhs, expected.as_slice()) < 1e-13);

        let zero_u0 = sys.assemble_rhs(&random(q * n, 7), &vec![0.0; n]).unwrap();
        let plain = ainv.kronecker(&DMatrix::<f64>::identity(n, n)) * DVector::from_vec(random(q * n, 7));
        assert!(max_diff(&zero_u0, plain.as_slice()) < 1e-14);
    }

    #[test]
    fn rhs_one_stage_without_forcing() {
        let sys = system(1, 5, BoundaryMode::Full, 0.5);
        let u0 = random(sys.n(), 8);
        let rhs = sys.assemble_rhs(&vec![0.0; sys.n()], &u0).unwrap();
        let ku = sys.ops.stiffness.mul_vec(&u0);
        assert!(max_diff(&rhs, &ku.iter().map(|v| -v).collect::<Vec<_>>()) < 1e-15);
    }

    #[test]
    fn dimension_errors() {
        let sys = system(2, 5, BoundaryMode::Full, 0.1);
        assert!(matches!(sys.stage_apply(&[1.0; 3]), Err(Error::Dimension { .. })));
        assert!(matches!(sys.assemble_rhs(&vec![0.0; 50], &[0.0; 3]), Err(Error::Dimension { .. })));
        let p = sys.preconditioner().unwrap();
        assert!(matches!(p.prec_apply(&[0.0; 7]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn preconditioner_round_trip() {
        for kind in [SolverKind::DirectCholesky, SolverKind::CgInner] {
            for bc in [BoundaryMode::Full, BoundaryMode::Constrained, BoundaryMode::DirichletInterior] {
                let sys = system(3, 7, bc, 0.02);
                let p = PreconditionerState::new(&sys, kind).unwrap();
                let x = random(sys.dim(), 9);
                let back = p.prec_apply(&sys.preconditioner_apply(&x).unwrap()).unwrap();
                let tol = if kind == SolverKind::DirectCholesky { 1e-11 } else { 1e-8 };
                assert!(max_diff(&back, &x) < tol, "{kind:?} {bc:?}: {}", max_diff(&back, &x));
            }
        }
    }

    #[test]
    fn single_stage_preconditioner_is_one_solve() {
        let sys = system(1, 5, BoundaryMode::Full, 0.1);
        let p = sys.preconditioner().unwrap();
        assert_eq!(p.lambda, vec![1.0]);
        let r = random(sys.n(), 10);
        let z = p.prec_apply(&r).unwrap();
        let back = sys.stage_apply(&z).unwrap();
        assert!(max_diff(&back, &r) < 1e-12);
    }

    #[test]
    fn preconditioner_matches_dense_solve() {
        let sys = system(2, 5, BoundaryMode::DirichletInterior, 0.07);
        let p = sys.preconditioner().unwrap();
        let r = random(sys.dim(), 11);
        let dense = sys.dense_preconditioner().unwrap().lu().solve(&DVector::from_vec(r.clone())).unwrap();
        assert!(max_diff(&p.prec_apply(&r).unwrap(), dense.as_slice()) < 1e-10);
    }

    #[test]
    fn preconditioned_operator_identity() {
        // P^{-1} A x = x + W1^{-1} W2 x with W1 = I + τ(L^{-1} ⊗ M^{-1}K), W2 = Û ⊗ I.
        for q in [2, 3] {
            let sys = system(q, 5, BoundaryMode::DirichletInterior, 0.3);
            let n = sys.n();
            let p = sys.preconditioner().unwrap();
            let x = random(sys.dim(), 12);
            let lhs = p.prec_apply(&sys.stage_apply(&x).unwrap()).unwrap();
            let m = sys.ops.mass.to_dense();
            let k = sys.ops.stiffness.to_dense();
            let minv_k = m.lu().solve(&k).unwrap();
            let w1 = DMatrix::<f64>::identity(q * n, q * n) + sys.fact.linv.kronecker(&minv_k) * sys.tau;
            let w2 = sys.fact.uhat.kronecker(&DMatrix::<f64>::identity(n, n));
            let xv = DVector::from_vec(x.clone());
            let rhs = &xv + w1.lu().solve(&(w2 * &xv)).unwrap();
            assert!(max_diff(&lhs, rhs.as_slice()) < 1e-9);
        }
    }

    #[test]
    fn exact_preconditioner_gives_identity() {
        let sys = system(4, 6, BoundaryMode::Constrained, 0.1).without_upper();
        let p = sys.preconditioner().unwrap();
        let x = random(sys.dim(), 13);
        let back = p.prec_apply(&sys.stage_apply(&x).unwrap()).unwrap();
        assert!(max_diff(&back, &x) < 1e-11);
    }

    #[test]
    fn dense_guard() {
        let sys = system(3, 42, BoundaryMode::Full, 0.1);
        assert!(matches!(sys.dense_matrix(), Err(Error::SizeGuard { .. })));
    }

    #[test]
    fn untransformed_form_is_equivalent() {
        // (A^{-1} ⊗ I) A_0 = A
        let sys = system(2, 5, BoundaryMode::DirichletInterior, 0.1);
        let n = sys.n();
        let a0 = sys.dense_untransformed().unwrap();
        let t = sys.fact.ainv.kronecker(&DMatrix::<f64>::identity(n, n)) * a0;
        assert!(max_abs(&(t - sys.dense_matrix().unwrap())) < 1e-13);
    }
}
