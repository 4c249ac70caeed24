use crate::error::{Error, Result};

use super::CsrMatrix;

/// Cholesky factor `A = C C^T` of a symmetric positive definite band matrix.
///
/// Grid matrices in natural (lexicographic) ordering have half bandwidth
/// `n_side + 1`; the factor has no fill outside the band.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    /// Row `i` holds `C[i, i - bw ..= i]`, left-padded with zeros.
    lower: Vec<f64>,
}

impl BandCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension {
                expected: n,
                got: a.ncols(),
            });
        }
        let bw = a.half_bandwidth();
        let width = bw + 1;
        let mut lower = vec![0.0; n * width];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    lower[i * width + (j + bw - i)] = v;
                }
            }
        }
        for i in 0..n {
            let first = i.saturating_sub(bw);
            for j in first..=i {
                let start = first.max(j.saturating_sub(bw));
                let mut s = lower[i * width + (j + bw - i)];
                for k in start..j {
                    s -= lower[i * width + (k + bw - i)] * lower[j * width + (k + bw - j)];
                }
                if j == i {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite { pivot: i, value: s });
                    }
                    lower[i * width + bw] = s.sqrt();
                } else {
                    lower[i * width + (j + bw - i)] = s / lower[j * width + bw];
                }
            }
        }
        Ok(Self { n, bw, lower })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, bw, width) = (self.n, self.bw, self.bw + 1);
        assert_eq!(b.len(), n);
        for i in 0..n {
            let first = i.saturating_sub(bw);
            let mut s = b[i];
            for k in first..i {
                s -= self.lower[i * width + (k + bw - i)] * b[k];
            }
            b[i] = s / self.lower[i * width + bw];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n.min(i + bw + 1) {
                s -= self.lower[k * width + (i + bw - k)] * b[k];
            }
            b[i] = s / self.lower[i * width + bw];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn solves_tridiagonal() {
        let a = laplace_1d(20);
        let x: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let b = a.mul_vec(&x);
        let chol = BandCholesky::factor(&a).unwrap();
        let y = chol.solve(&b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(matches!(
            BandCholesky::factor(&a),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));
    }
}
