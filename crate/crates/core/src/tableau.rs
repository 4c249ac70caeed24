//! Radau IIA Butcher tableaux built by collocation.
//!
//! Nodes are the right-Radau points: the roots in `(0, 1]` of
//! `d^{q-1}/dt^{q-1} [t^{q-1} (t-1)^q]`. Besides `t = 1` these are the zeros of
//! the Jacobi polynomial `P_{q-1}^{(1,0)}(2t - 1)`, which is what the root finder
//! evaluates (the monomial form loses digits for `q` near 10).

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::MAX_STAGES;

#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    q: usize,
    a: DMatrix<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl ButcherTableau {
    /// Assembles a tableau from raw coefficients. Only shapes are checked, so
    /// this can hold tableaux that violate the order conditions.
    pub fn from_parts(a: DMatrix<f64>, b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        let q = b.len();
        if q == 0 || a.nrows() != q || a.ncols() != q {
            return Err(Error::Dimension {
                expected: q,
                got: a.nrows(),
            });
        }
        if c.len() != q {
            return Err(Error::Dimension {
                expected: q,
                got: c.len(),
            });
        }
        Ok(Self { q, a, b, c })
    }

    pub fn stages(&self) -> usize {
        self.q
    }

    /// Runge-Kutta matrix `A_q`.
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn weights(&self) -> &[f64] {
        &self.b
    }

    pub fn nodes(&self) -> &[f64] {
        &self.c
    }

    pub fn a_rows(&self) -> Vec<Vec<f64>> {
        self.a.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    /// Stability function `R(z) = 1 + z b^T (I - z A)^{-1} 1`.
    pub fn stability_function(&self, z: f64) -> Result<f64> {
        let q = self.q;
        let m = DMatrix::identity(q, q) - &self.a * z;
        let rhs = nalgebra::DVector::from_element(q, 1.0);
        let k = m.lu().solve(&rhs).ok_or(Error::Singular)?;
        Ok(1.0 + z * self.b.iter().zip(k.iter()).map(|(b, k)| b * k).sum::<f64>())
    }
}

fn check_stages(q: usize) -> Result<()> {
    if (1..=MAX_STAGES).contains(&q) {
        Ok(())
    } else {
        Err(Error::Range {
            what: "stages",
            value: q as i64,
            min: 1,
            max: MAX_STAGES as i64,
        })
    }
}

/// `P_n^{(1,0)}(x)` and its derivative by the three-term recurrence.
fn jacobi_p10(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut d0) = (1.0, 0.0);
    let (mut p1, mut d1) = ((3.0 * x + 1.0) / 2.0, 1.5);
    for k in 2..=n {
        let k = k as f64;
        let a1 = 2.0 * k * (k + 1.0) * (2.0 * k - 1.0);
        let a2 = 2.0 * k;
        let a3 = (2.0 * k - 1.0) * (2.0 * k) * (2.0 * k + 1.0);
        let a4 = 2.0 * k * (k - 1.0) * (2.0 * k + 1.0);
        let p2 = ((a2 + a3 * x) * p1 - a4 * p0) / a1;
        let d2 = ((a2 + a3 * x) * d1 + a3 * p1 - a4 * d0) / a1;
        (p0, d0, p1, d1) = (p1, d1, p2, d2);
    }
    (p1, d1)
}

/// Radau IIA nodes, ascending, with the last node exactly 1.
pub fn radau_nodes(q: usize) -> Result<Vec<f64>> {
    check_stages(q)?;
    let degree = q - 1;
    let mut nodes = Vec::with_capacity(q);
    if degree > 0 {
        let samples = 400 * q;
        let f = |x: f64| jacobi_p10(degree, x).0;
        let mut left = -1.0;
        let mut f_left = f(left);
        for s in 1..=samples {
            let right = -1.0 + 2.0 * s as f64 / samples as f64;
            let f_right = f(right);
            if f_left == 0.0 {
                nodes.push(left);
            } else if f_left * f_right < 0.0 {
                nodes.push(bracketed_root(&f, left, right));
            }
            left = right;
            f_left = f_right;
        }
        if nodes.len() != degree {
            return Err(Error::Domain(format!(
                "found {} interior Radau nodes for q = {q}, expected {degree}",
                nodes.len()
            )));
        }
        for x in nodes.iter_mut() {
            for _ in 0..3 {
                let (p, dp) = jacobi_p10(degree, *x);
                if dp == 0.0 {
                    break;
                }
                *x -= p / dp;
            }
        }
    }
    let mut c: Vec<f64> = nodes.into_iter().map(|x| (x + 1.0) / 2.0).collect();
    c.push(1.0);
    Ok(c)
}

fn bracketed_root(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Monomial coefficients (constant term first) of the Lagrange basis polynomial for node `j`.
fn lagrange_basis(nodes: &[f64], j: usize) -> Vec<f64> {
    let mut coeffs = vec![1.0];
    let mut denom = 1.0;
    for (k, &ck) in nodes.iter().enumerate() {
        if k == j {
            continue;
        }
        let mut next = vec![0.0; coeffs.len() + 1];
        for (m, &p) in coeffs.iter().enumerate() {
            next[m + 1] += p;
            next[m] -= ck * p;
        }
        coeffs = next;
        denom *= nodes[j] - ck;
    }
    coeffs.iter().map(|p| p / denom).collect()
}

/// `∫_0^x p(t) dt` for monomial coefficients `p`.
fn integrate_from_zero(p: &[f64], x: f64) -> f64 {
    p.iter()
        .enumerate()
        .rev()
        .fold(0.0, |acc, (m, &coef)| acc * x + coef / (m + 1) as f64)
        * x
}

/// Radau IIA tableau with `q` stages (order `2q - 1`).
pub fn radau_tableau(q: usize) -> Result<ButcherTableau> {
    let c = radau_nodes(q)?;
    let basis: Vec<Vec<f64>> = (0..q).map(|j| lagrange_basis(&c, j)).collect();
    let a = DMatrix::from_fn(q, q, |i, j| integrate_from_zero(&basis[j], c[i]));
    let mut b: Vec<f64> = basis.iter().map(|l| integrate_from_zero(l, 1.0)).collect();
    // c_q = 1, so the last row of A is b up to rounding; make it exact.
    for (j, bj) in b.iter_mut().enumerate() {
        *bj = a[(q - 1, j)];
    }
    Ok(ButcherTableau { q, a, b, c })
}

/// Maximum residuals of each family of order conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderReport {
    /// `|Σ b_j - 1|`
    pub weight_sum: f64,
    /// `max_k |Σ b_j c_j^{k-1} - 1/k|` for `k = 1..=2q-1`
    pub quadrature: f64,
    /// `max_{i,k} |Σ_j a_ij c_j^{k-1} - c_i^k / k|` for `k = 1..=q`
    pub collocation: f64,
    /// `max_j |a_qj - b_j|`
    pub stiff_accuracy: f64,
    /// `|c_q - 1|`
    pub last_node: f64,
}

impl OrderReport {
    pub fn max_residual(&self) -> f64 {
        [
            self.weight_sum,
            self.quadrature,
            self.collocation,
            self.stiff_accuracy,
            self.last_node,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_residual() < tol
    }
}

pub fn verify_order_conditions(t: &ButcherTableau) -> OrderReport {
    let q = t.q;
    let (b, c) = (&t.b, &t.c);
    let quad_residual = |k: i32| {
        let s: f64 = b.iter().zip(c).map(|(b, c)| b * c.powi(k - 1)).sum();
        (s - 1.0 / k as f64).abs()
    };
    let quadrature = (1..=(2 * q as i32 - 1))
        .map(quad_residual)
        .fold(0.0, f64::max);
    let mut collocation = 0.0f64;
    for i in 0..q {
        for k in 1..=q as i32 {
            let s: f64 = (0..q).map(|j| t.a[(i, j)] * c[j].powi(k - 1)).sum();
            collocation = collocation.max((s - c[i].powi(k) / k as f64).abs());
        }
    }
    let stiff_accuracy = (0..q)
        .map(|j| (t.a[(q - 1, j)] - b[j]).abs())
        .fold(0.0, f64::max);
    OrderReport {
        weight_sum: quad_residual(1),
        quadrature,
        collocation,
        stiff_accuracy,
        last_node: (c[q - 1] - 1.0).abs(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact integer coefficients of `d^{q-1}/dt^{q-1}[t^{q-1}(t-1)^q]`.
    fn derivative_poly(q: usize) -> Vec<i128> {
        // (t-1)^q
        let mut p = vec![1i128];
        for _ in 0..q {
            let mut next = vec![0i128; p.len() + 1];
            for (m, &v) in p.iter().enumerate() {
                next[m + 1] += v;
                next[m] -= v;
            }
            p = next;
        }
        let mut p: Vec<i128> = std::iter::repeat_n(0, q - 1).chain(p).collect();
        for _ in 0..q - 1 {
            p = p.iter().enumerate().skip(1).map(|(m, &v)| v * m as i128).collect();
        }
        p
    }

    #[test]
    fn nodes_are_roots_of_derivative_polynomial() {
        for q in 1..=MAX_STAGES {
            let poly = derivative_poly(q);
            for &t in &radau_nodes(q).unwrap() {
                let value: f64 = poly.iter().rev().fold(0.0, |acc, &c| acc * t + c as f64);
                let scale: f64 = poly
                    .iter()
                    .enumerate()
                    .map(|(m, &c)| (c as f64).abs() * t.powi(m as i32))
                    .sum();
                assert!(value.abs() / scale < 1e-10, "q={q} t={t} residual {}", value / scale);
            }
        }
    }

    #[test]
    fn nodes_small_q() {
        assert_eq!(radau_nodes(1).unwrap(), vec![1.0]);
        let c2 = radau_nodes(2).unwrap();
        assert!((c2[0] - 1.0 / 3.0).abs() < 1e-15);
        let c3 = radau_nodes(3).unwrap();
        let s6 = 6f64.sqrt();
        assert!((c3[0] - (0.4 - s6 / 10.0)).abs() < 1e-15);
        assert!((c3[1] - (0.4 + s6 / 10.0)).abs() < 1e-15);
        assert_eq!(c3[2], 1.0);
    }

    #[test]
    fn out_of_range() {
        assert!(matches!(radau_nodes(0), Err(Error::Range { .. })));
        assert!(matches!(radau_tableau(11), Err(Error::Range { .. })));
    }

    #[test]
    fn backward_euler() {
        let t = radau_tableau(1).unwrap();
        assert_eq!(t.a()[(0, 0)], 1.0);
        assert_eq!(t.weights(), &[1.0]);
        assert_eq!(t.nodes(), &[1.0]);
    }

    #[test]
    fn invariants_hold_for_all_supported_q() {
        for q in 1..=MAX_STAGES {
            let t = radau_tableau(q).unwrap();
            let r = verify_order_conditions(&t);
            let tol = if q <= 7 { 1e-12 } else { 1e-9 };
            assert!(r.passes(tol), "q={q}: {r:?}");
            assert_eq!(t.nodes()[q - 1], 1.0);
            assert!(t.nodes().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn deterministic() {
        for q in 1..=MAX_STAGES {
            let (x, y) = (radau_tableau(q).unwrap(), radau_tableau(q).unwrap());
            assert!(x.a().iter().zip(y.a().iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
            assert_eq!(x, y);
        }
    }

    #[test]
    fn tampered_weights_fail() {
        let t = radau_tableau(2).unwrap();
        let b: Vec<f64> = t.weights().iter().map(|b| 2.0 * b).collect();
        let bad = ButcherTableau::from_parts(t.a().clone(), b, t.nodes().to_vec()).unwrap();
        let r = verify_order_conditions(&bad);
        assert!((r.weight_sum - 1.0).abs() < 1e-14);
        assert!(r.stiff_accuracy > 0.5);
    }

    #[test]
    fn stability_function_backward_euler() {
        let t = radau_tableau(1).unwrap();
        for z in [-0.5, -3.0, -100.0] {
            assert!((t.stability_function(z).unwrap() - 1.0 / (1.0 - z)).abs() < 1e-14);
        }
    }
}
