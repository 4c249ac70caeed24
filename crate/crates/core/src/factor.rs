//! Factorizations of `A_q^{-1}` that define the preconditioner.
//!
//! `A_q^{-1} = L U` with `U` unit upper triangular (Crout, no pivoting), and
//! `L = T Λ T^{-1}` with `T` unit lower triangular, so that the preconditioner
//! `L ⊗ M + τ I ⊗ K` splits into `q` independent real solves.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{max_abs, norm_inf};
use crate::tableau::ButcherTableau;

/// Relative tolerance below which two diagonal entries of `L` count as equal.
pub const DISTINCT_EIGENVALUE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct TriangularFactorization {
    pub q: usize,
    pub ainv: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub u: DMatrix<f64>,
    /// `U - I`, strictly upper triangular.
    pub uhat: DMatrix<f64>,
    pub linv: DMatrix<f64>,
    /// Diagonal of `L`.
    pub lambda: Vec<f64>,
    pub t: DMatrix<f64>,
    pub tinv: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UhatNorms {
    pub spectral: f64,
    pub frobenius: f64,
}

impl TriangularFactorization {
    pub fn new(tableau: &ButcherTableau) -> Result<Self> {
        let ainv = invert_tableau(tableau)?;
        let (l, u) = lu_unit_upper(&ainv)?;
        let q = tableau.stages();
        let uhat = &u - DMatrix::identity(q, q);
        let linv = lower_inverse(&l)?;
        let (t, lambda, tinv) = spectral_decompose_lower(&l)?;
        Ok(Self {
            q,
            ainv,
            l,
            u,
            uhat,
            linv,
            lambda,
            t,
            tinv,
        })
    }

    /// Convenience: factorization of the `q`-stage Radau IIA tableau.
    pub fn radau(q: usize) -> Result<Self> {
        Self::new(&crate::tableau::radau_tableau(q)?)
    }

    pub fn uhat_norms(&self) -> UhatNorms {
        UhatNorms {
            spectral: self.uhat.clone().svd(false, false).singular_values.max(),
            frobenius: self.uhat.norm(),
        }
    }

    /// Copy with `Û` replaced by zero, i.e. `A_q^{-1}` replaced by `L`.
    /// With this factorization the preconditioner is exact.
    pub fn without_upper(&self) -> Self {
        let q = self.q;
        Self {
            ainv: self.l.clone(),
            u: DMatrix::identity(q, q),
            uhat: DMatrix::zeros(q, q),
            ..self.clone()
        }
    }
}

/// `A_q^{-1}` via partially pivoted LU, checked against `‖A A^{-1} - I‖∞ < 1e-12`.
pub fn invert_tableau(t: &ButcherTableau) -> Result<DMatrix<f64>> {
    let a = t.a();
    let q = a.nrows();
    let inv = a.clone().try_inverse().ok_or(Error::Singular)?;
    let residual = norm_inf(&(a * &inv - DMatrix::identity(q, q)));
    if !(residual < 1e-12) {
        return Err(Error::Singular);
    }
    Ok(inv)
}

/// Crout factorization `m = L U`, `U` unit upper triangular, no pivoting.
pub fn lu_unit_upper(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let q = m.nrows();
    if m.ncols() != q {
        return Err(Error::Dimension {
            expected: q,
            got: m.ncols(),
        });
    }
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    let mut l = DMatrix::zeros(q, q);
    let mut u = DMatrix::identity(q, q);
    for j in 0..q {
        for i in j..q {
            let s: f64 = (0..j).map(|k| l[(i, k)] * u[(k, j)]).sum();
            l[(i, j)] = m[(i, j)] - s;
        }
        if l[(j, j)].abs() <= f64::EPSILON * scale {
            return Err(Error::ZeroPivot { index: j });
        }
        for k in (j + 1)..q {
            let s: f64 = (0..j).map(|p| l[(j, p)] * u[(p, k)]).sum();
            u[(j, k)] = (m[(j, k)] - s) / l[(j, j)];
        }
    }
    Ok((l, u))
}

/// Inverse of a lower triangular matrix by column-wise forward substitution.
pub fn lower_inverse(l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let q = l.nrows();
    if let Some(index) = (0..q).find(|&i| l[(i, i)] == 0.0) {
        return Err(Error::ZeroPivot { index });
    }
    let mut inv = DMatrix::zeros(q, q);
    for j in 0..q {
        inv[(j, j)] = 1.0 / l[(j, j)];
        for i in (j + 1)..q {
            let s: f64 = (j..i).map(|k| l[(i, k)] * inv[(k, j)]).sum();
            inv[(i, j)] = -s / l[(i, i)];
        }
    }
    Ok(inv)
}

/// `L = T Λ T^{-1}` for lower triangular `L` with distinct diagonal entries.
///
/// Column `i` of `T` solves `(L - λ_i I) t = 0` with `t_i = 1` and `t_k = 0`
/// for `k < i`; the remaining entries follow by forward recursion.
pub fn spectral_decompose_lower(
    l: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let q = l.nrows();
    let lambda: Vec<f64> = (0..q).map(|i| l[(i, i)]).collect();
    let scale = lambda.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut t = DMatrix::identity(q, q);
    for i in 0..q {
        for k in (i + 1)..q {
            let gap = l[(k, k)] - lambda[i];
            if gap.abs() <= DISTINCT_EIGENVALUE_TOL * scale {
                return Err(Error::Degenerate { first: i, second: k });
            }
            let s: f64 = (i..k).map(|j| l[(k, j)] * t[(j, i)]).sum();
            t[(k, i)] = -s / gap;
        }
    }
    // T is unit lower triangular, so its inverse is too.
    let tinv = lower_inverse(&t)?;
    Ok((t, lambda, tinv))
}
