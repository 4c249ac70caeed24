use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

fn dense_cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let mut c = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= c[(j, k)] * c[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let djj = d.sqrt();
        c[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= c[(i, k)] * c[(j, k)];
            }
            c[(i, j)] = s / djj;
        }
    }
    Ok(c)
}

/// Eigenvalues of the symmetric-definite pencil `(k, m)`, ascending.
///
/// Reduces to the standard problem `C^{-1} K C^{-T}` with `m = C C^T`, then
/// runs a tridiagonal implicit-QR eigensolver.
pub fn generalized_symmetric_eigenvalues(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = m.nrows();
    if k.nrows() != n || k.ncols() != n || m.ncols() != n {
        return Err(Error::Dimension {
            expected: n,
            got: k.nrows(),
        });
    }
    let c = dense_cholesky(m)?;
    let y = c.solve_lower_triangular(k).ok_or(Error::Singular)?;
    let s = c
        .solve_lower_triangular(&y.transpose())
        .ok_or(Error::Singular)?;
    let sym = (&s + s.transpose()) * 0.5;
    let mut eigs: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    eigs.sort_by(f64::total_cmp);
    Ok(eigs)
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix, ascending.
///
/// Slow (O(n^3) per sweep) but independent of the QR path; used as a cross-check.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        let scale: f64 = m.iter().map(|v| v * v).sum();
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eigs: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    eigs.sort_by(f64::total_cmp);
    eigs
}

/// Iterations allowed per eigenvalue before giving up.
const QR_MAX_ITER: usize = 60;

/// Eigenvalues of a general real square matrix: Householder reduction to
/// Hessenberg form, then Francis double-shift QR with exceptional shifts.
pub fn nonsymmetric_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Dimension {
            expected: n,
            got: a.ncols(),
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    let h = a.clone().hessenberg().h();
    hessenberg_qr(h)
}

fn hessenberg_qr(mut h: DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = h.nrows();
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += h[(i, j)].abs();
        }
    }
    let mut nn = n as isize - 1;
    let mut t = 0.0;
    let mut total = 0;
    while nn >= 0 {
        let mut its = 0;
        loop {
            // Look for a negligible subdiagonal element.
            let mut l = nn;
            while l >= 1 {
                let lu = l as usize;
                let mut s = h[(lu - 1, lu - 1)].abs() + h[(lu, lu)].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if h[(lu, lu - 1)].abs() + s == s {
                    h[(lu, lu - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let nu = nn as usize;
            let mut x = h[(nu, nu)];
            if l == nn {
                wr[nu] = x + t;
                wi[nu] = 0.0;
                nn -= 1;
                break;
            }
            let mut y = h[(nu - 1, nu - 1)];
            let mut w = h[(nu, nu - 1)] * h[(nu - 1, nu)];
            if l == nn - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + z.copysign(p);
                    wr[nu - 1] = x + z;
                    wr[nu] = if z != 0.0 { x - w / z } else { x + z };
                    wi[nu - 1] = 0.0;
                    wi[nu] = 0.0;
                } else {
                    wr[nu - 1] = x + p;
                    wr[nu] = x + p;
                    wi[nu - 1] = -z;
                    wi[nu] = z;
                }
                nn -= 2;
                break;
            }
            if its == QR_MAX_ITER {
                return Err(Error::NotConverged {
                    iterations: total,
                    residual: h[(nu, nu - 1)].abs(),
                });
            }
            if its == 10 || its == 20 || its == 40 {
                // Exceptional shift.
                t += x;
                for i in 0..=nu {
                    h[(i, i)] -= x;
                }
                let s = h[(nu, nu - 1)].abs() + h[(nu - 1, nu - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            total += 1;
            let lu = l as usize;
            // Find two consecutive small subdiagonal elements.
            let mut m = nu - 2;
            let (mut p, mut q, mut r);
            loop {
                let z = h[(m, m)];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / h[(m + 1, m)] + h[(m, m + 1)];
                q = h[(m + 1, m + 1)] - z - rr - ss;
                r = h[(m + 2, m + 1)];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == lu {
                    break;
                }
                let u = h[(m, m - 1)].abs() * (q.abs() + r.abs());
                let v = p.abs() * (h[(m - 1, m - 1)].abs() + z.abs() + h[(m + 1, m + 1)].abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nu {
                h[(i, i - 2)] = 0.0;
                if i != m + 2 {
                    h[(i, i - 3)] = 0.0;
                }
            }
            // Double QR step on rows l..=nn and columns m..=nn.
            let mut k = m;
            while k + 1 <= nu {
                if k != m {
                    p = h[(k, k - 1)];
                    q = h[(k + 1, k - 1)];
                    r = if k + 1 != nu { h[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s != 0.0 {
                    if k == m {
                        if lu != m {
                            h[(k, k - 1)] = -h[(k, k - 1)];
                        }
                    } else {
                        h[(k, k - 1)] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nu {
                        let mut pp = h[(k, j)] + q * h[(k + 1, j)];
                        if k + 1 != nu {
                            pp += r * h[(k + 2, j)];
                            h[(k + 2, j)] -= pp * z;
                        }
                        h[(k + 1, j)] -= pp * y;
                        h[(k, j)] -= pp * x;
                    }
                    let mmin = nu.min(k + 3);
                    for i in lu..=mmin {
                        let mut pp = x * h[(i, k)] + y * h[(i, k + 1)];
                        if k + 1 != nu {
                            pp += z * h[(i, k + 2)];
                            h[(i, k + 2)] -= pp * r;
                        }
                        h[(i, k + 1)] -= pp * q;
                        h[(i, k)] -= pp;
                    }
                }
                k += 1;
            }
        }
    }
    Ok(wr.into_iter().zip(wi).map(|(re, im)| Complex64::new(re, im)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_matches_qr() {
        let n = 12;
        let a = DMatrix::from_fn(n, n, |i, j| 1.0 / (1.0 + i as f64 + j as f64) + if i == j { 2.0 } else { 0.0 });
        let qr = generalized_symmetric_eigenvalues(&a, &DMatrix::identity(n, n)).unwrap();
        let jac = jacobi_eigenvalues(&a);
        for (x, y) in qr.iter().zip(&jac) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn pencil_with_diagonal_mass() {
        let k = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 6.0]));
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 3.0]));
        let e = generalized_symmetric_eigenvalues(&k, &m).unwrap();
        assert!((e[0] - 1.0).abs() < 1e-14 && (e[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn indefinite_mass_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let err = generalized_symmetric_eigenvalues(&DMatrix::identity(2, 2), &m).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { pivot: 1, .. }));
    }

    #[test]
    fn rotation_has_imaginary_pair() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let mut e = nonsymmetric_eigenvalues(&a).unwrap();
        e.sort_by(|x, y| x.im.total_cmp(&y.im));
        assert!((e[0] - Complex64::new(0.0, -1.0)).norm() < 1e-14);
        assert!((e[1] - Complex64::new(0.0, 1.0)).norm() < 1e-14);
    }

    fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn triangular_and_companion() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 5.0, -1.0, 0.0, -3.0, 4.0, 0.0, 0.0, 7.0]);
        let e = sorted(nonsymmetric_eigenvalues(&a).unwrap());
        for (z, want) in e.iter().zip([-3.0, 2.0, 7.0]) {
            assert!((z - want).norm() < 1e-12 && z.im == 0.0);
        }
        // x^4 - 10x^3 + 35x^2 - 50x + 24 = (x-1)(x-2)(x-3)(x-4)
        let c = DMatrix::from_row_slice(
            4,
            4,
            &[10.0, -35.0, 50.0, -24.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        );
        let e = sorted(nonsymmetric_eigenvalues(&c).unwrap());
        for (z, want) in e.iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert!((z - want).norm() < 1e-10, "{z}");
        }
    }

    #[test]
    fn semisimple_cluster_converges() {
        // Identity plus a rank-deficient perturbation: many eigenvalues exactly 1.
        let n = 60;
        let mut a = DMatrix::<f64>::identity(n, n);
        for i in 0..n {
            for j in (n / 2)..n {
                a[(i, j)] += 0.01 * ((i * 7 + j * 3) % 11) as f64 / 11.0;
            }
        }
        let e = nonsymmetric_eigenvalues(&a).unwrap();
        assert_eq!(e.len(), n);
        let ones = e.iter().filter(|z| (*z - 1.0).norm() < 1e-10).count();
        assert!(ones >= n / 2);
        let trace: f64 = e.iter().map(|z| z.re).sum();
        assert!((trace - a.trace()).abs() < 1e-10);
    }

    #[test]
    fn eigenvalues_preserve_trace_and_determinant() {
        let n = 9;
        let a = DMatrix::from_fn(n, n, |i, j| (((i * 13 + j * 5) % 17) as f64 - 8.0) / 3.0);
        let e = nonsymmetric_eigenvalues(&a).unwrap();
        let tr: Complex64 = e.iter().sum();
        let det: Complex64 = e.iter().product();
        assert!((tr.re - a.trace()).abs() < 1e-9 && tr.im.abs() < 1e-9);
        let d = a.determinant();
        assert!((det.re - d).abs() < 1e-8 * d.abs().max(1.0), "{det} vs {d}");
    }

    #[test]
    fn non_square_and_non_finite() {
        assert!(nonsymmetric_eigenvalues(&DMatrix::zeros(2, 3)).is_err());
        let mut a = DMatrix::<f64>::identity(2, 2);
        a[(0, 1)] = f64::NAN;
        assert!(nonsymmetric_eigenvalues(&a).is_err());
        assert!(nonsymmetric_eigenvalues(&DMatrix::zeros(0, 0)).unwrap().is_empty());
    }
}
