//! Q1 finite elements on the unit square and the matching 2-level Toeplitz symbols.
//!
//! Nodes are numbered lexicographically, `index = iy * n_side + ix`, so the
//! first Toeplitz level runs along `x` (angle `θ1`).

use std::f64::consts::PI;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{generalized_symmetric_eigenvalues, CsrMatrix};

/// Treatment of the boundary nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// All nodes kept, natural (Neumann) boundary: `K` is singular with the
    /// constants as its kernel.
    #[default]
    Full,
    /// Boundary rows and columns eliminated; `n = (n_side - 2)^2`.
    DirichletInterior,
    /// All nodes kept; boundary rows and columns of `K` replaced by the
    /// identity, `M` left unconstrained. This is how FEM libraries typically
    /// impose homogeneous Dirichlet conditions without renumbering.
    Constrained,
}

impl FromStr for BoundaryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "dirichlet" | "dirichlet_interior" => Ok(Self::DirichletInterior),
            "constrained" => Ok(Self::Constrained),
            _ => Err(Error::Domain(format!("unknown boundary mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridOperators {
    /// Nodes per side of the full grid, boundary included.
    pub n_side: usize,
    /// Matrix dimension.
    pub n: usize,
    /// `1 / (n_side - 1)`
    pub h: f64,
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
    pub bc: BoundaryMode,
}

impl GridOperators {
    /// Wraps user-supplied `M`, `K` that do not come from a grid; `n_side`
    /// and `h` are then zero.
    pub fn custom(mass: CsrMatrix, stiffness: CsrMatrix) -> Result<Self> {
        let n = mass.nrows();
        for m in [&mass, &stiffness] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: m.ncols(),
                });
            }
        }
        Ok(Self {
            n_side: 0,
            n,
            h: 0.0,
            mass,
            stiffness,
            bc: BoundaryMode::Full,
        })
    }

    /// Unknowns per side of the grid the matrices act on.
    pub fn points_per_side(&self) -> usize {
        match self.bc {
            BoundaryMode::DirichletInterior => self.n_side - 2,
            BoundaryMode::Full | BoundaryMode::Constrained => self.n_side,
        }
    }
}

const STIFFNESS_ELEMENT: [[f64; 4]; 4] = [
    [4.0, -1.0, -2.0, -1.0],
    [-1.0, 4.0, -1.0, -2.0],
    [-2.0, -1.0, 4.0, -1.0],
    [-1.0, -2.0, -1.0, 4.0],
];

const MASS_ELEMENT: [[f64; 4]; 4] = [
    [4.0, 2.0, 1.0, 2.0],
    [2.0, 4.0, 2.0, 1.0],
    [1.0, 2.0, 4.0, 2.0],
    [2.0, 1.0, 2.0, 4.0],
];

fn is_boundary(ix: usize, iy: usize, n_side: usize) -> bool {
    ix == 0 || iy == 0 || ix == n_side - 1 || iy == n_side - 1
}

/// Element-by-element assembly of bilinear elements on `(n_side - 1)^2` square cells.
pub fn assemble_q1(n_side: usize, bc: BoundaryMode) -> Result<GridOperators> {
    if n_side < 3 {
        return Err(Error::Range {
            what: "n_side",
            value: n_side as i64,
            min: 3,
            max: i64::MAX,
        });
    }
    let h = 1.0 / (n_side - 1) as f64;
    let n_full = n_side * n_side;
    let mut k_trip = Vec::with_capacity(16 * (n_side - 1) * (n_side - 1));
    let mut m_trip = Vec::with_capacity(k_trip.capacity());
    for ey in 0..n_side - 1 {
        for ex in 0..n_side - 1 {
            let local = [
                ey * n_side + ex,
                ey * n_side + ex + 1,
                (ey + 1) * n_side + ex + 1,
                (ey + 1) * n_side + ex,
            ];
            for (a, &ga) in local.iter().enumerate() {
                for (b, &gb) in local.iter().enumerate() {
                    k_trip.push((ga, gb, STIFFNESS_ELEMENT[a][b] / 6.0));
                    m_trip.push((ga, gb, MASS_ELEMENT[a][b] * h * h / 36.0));
                }
            }
        }
    }
    let mass = CsrMatrix::from_triplets(n_full, n_full, &m_trip);
    let stiffness = CsrMatrix::from_triplets(n_full, n_full, &k_trip);
    let (mass, stiffness) = match bc {
        BoundaryMode::Full => (mass, stiffness),
        BoundaryMode::DirichletInterior => {
            let interior: Vec<usize> = (0..n_full)
                .filter(|&i| !is_boundary(i % n_side, i / n_side, n_side))
                .collect();
            (mass.submatrix(&interior), stiffness.submatrix(&interior))
        }
        BoundaryMode::Constrained => {
            let boundary: Vec<bool> = (0..n_full)
                .map(|i| is_boundary(i % n_side, i / n_side, n_side))
                .collect();
            let trip: Vec<_> = (0..n_full)
                .flat_map(|i| stiffness.row(i).map(move |(j, v)| (i, j, v)))
                .filter(|&(i, j, _)| !boundary[i] && !boundary[j])
                .chain((0..n_full).filter(|&i| boundary[i]).map(|i| (i, i, 1.0)))
                .collect();
            (mass, CsrMatrix::from_triplets(n_full, n_full, &trip))
        }
    };
    Ok(GridOperators {
        n_side,
        n: mass.nrows(),
        h,
        mass,
        stiffness,
        bc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolRole {
    Stiffness,
    Mass,
    Ratio,
}

/// Bivariate symbols on `[-π, π]^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SymbolDescriptor {
    /// `(8 - 2cosθ1 - 2cosθ2 (1 + 2cosθ1)) / 3`, the Q1 Laplacian.
    Q1Stiffness,
    /// `4 - 2cosθ1 - 2cosθ2`, the five-point Laplacian scaled by `h^2`.
    FivePointStiffness,
    /// `(h^2 / 9)(2 + cosθ1)(2 + cosθ2)`, the Q1 mass matrix.
    Q1Mass { h: f64 },
    Constant(f64),
    /// `τ · stiffness / mass`, the symbol of `τ M^{-1} K`.
    Ratio { tau: f64, h: f64 },
}

impl SymbolDescriptor {
    pub fn role(&self) -> SymbolRole {
        match self {
            Self::Q1Stiffness | Self::FivePointStiffness => SymbolRole::Stiffness,
            Self::Q1Mass { .. } | Self::Constant(_) => SymbolRole::Mass,
            Self::Ratio { .. } => SymbolRole::Ratio,
        }
    }

    pub fn eval(&self, t1: f64, t2: f64) -> f64 {
        let (c1, c2) = (t1.cos(), t2.cos());
        match *self {
            Self::Q1Stiffness => (8.0 - 2.0 * c1 - 2.0 * c2 * (1.0 + 2.0 * c1)) / 3.0,
            Self::FivePointStiffness => 4.0 - 2.0 * c1 - 2.0 * c2,
            Self::Q1Mass { h } => h * h / 9.0 * (2.0 + c1) * (2.0 + c2),
            Self::Constant(v) => v,
            Self::Ratio { tau, h } => {
                tau * Self::Q1Stiffness.eval(t1, t2) / Self::Q1Mass { h }.eval(t1, t2)
            }
        }
    }

    /// Fourier coefficients `ĝ[k1 + 1][k2 + 1]` for `|k1|, |k2| <= 1`.
    pub fn fourier_coefficients(&self) -> Result<[[f64; 3]; 3]> {
        match *self {
            Self::Q1Stiffness => {
                let e = -1.0 / 3.0;
                Ok([[e, e, e], [e, 8.0 / 3.0, e], [e, e, e]])
            }
            Self::FivePointStiffness => Ok([[0.0, -1.0, 0.0], [-1.0, 4.0, -1.0], [0.0, -1.0, 0.0]]),
            Self::Q1Mass { h } => {
                let s = h * h / 36.0;
                Ok([[s, 4.0 * s, s], [4.0 * s, 16.0 * s, 4.0 * s], [s, 4.0 * s, s]])
            }
            Self::Constant(v) => Ok([[0.0; 3], [0.0, v, 0.0], [0.0; 3]]),
            Self::Ratio { .. } => Err(Error::Unsupported(
                "the stiffness/mass ratio is not a trigonometric polynomial".into(),
            )),
        }
    }
}

/// The 2-level Toeplitz matrix `T_{(n_side, n_side)}(g)`.
pub fn toeplitz_from_symbol(g: &SymbolDescriptor, n_side: usize) -> Result<CsrMatrix> {
    let coef = g.fourier_coefficients()?;
    let n = n_side * n_side;
    let mut trip = Vec::with_capacity(9 * n);
    for iy in 0..n_side {
        for ix in 0..n_side {
            for (dx, row) in coef.iter().enumerate() {
                for (dy, &v) in row.iter().enumerate() {
                    let (jx, jy) = ((ix + dx).wrapping_sub(1), (iy + dy).wrapping_sub(1));
                    if v != 0.0 && jx < n_side && jy < n_side {
                        trip.push((iy * n_side + ix, jy * n_side + jx, v));
                    }
                }
            }
        }
    }
    Ok(CsrMatrix::from_triplets(n, n, &trip))
}

/// Sample grid `θ_m = mπ / (n_side + 1)`, `m = 1..=n_side`.
pub fn sample_angles(n_side: usize) -> Vec<f64> {
    (1..=n_side)
        .map(|m| m as f64 * PI / (n_side + 1) as f64)
        .collect()
}

/// `{g(θ_i, θ_k)}` on the tensor grid, `θ_i` outer.
pub fn sample_symbol(g: &SymbolDescriptor, n_side: usize) -> Vec<f64> {
    let angles = sample_angles(n_side);
    angles
        .iter()
        .flat_map(|&a| angles.iter().map(move |&b| g.eval(a, b)))
        .collect()
}

/// Eigenvalues of `Z_τ = τ M^{-1} K`, ascending and non-negative.
pub fn zt_eigenvalues(ops: &GridOperators, tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("tau must be positive, got {tau}")));
    }
    let k = ops.stiffness.to_dense() * tau;
    let m = ops.mass.to_dense();
    let mut eigs = generalized_symmetric_eigenvalues(&k, &m)?;
    // K is semidefinite; anything below zero is rounding.
    for e in eigs.iter_mut() {
        *e = e.max(0.0);
    }
    Ok(eigs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::jacobi_eigenvalues;

    /// Reference stencils by integrating products of hat functions over the
    /// four cells around an interior node with 2-point Gauss rules (exact for
    /// bilinear products).
    fn integrated_stencils(h: f64) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
        let hat = |x: f64| (1.0 - x.abs() / h).max(0.0);
        let dhat = |x: f64| if x.abs() >= h { 0.0 } else { -x.signum() / h };
        let g = 0.5 / 3f64.sqrt();
        let mut k = [[0.0; 3]; 3];
        let mut m = [[0.0; 3]; 3];
        for (di, row) in k.iter_mut().enumerate() {
            for (dj, kv) in row.iter_mut().enumerate() {
                let (ox, oy) = ((di as f64 - 1.0) * h, (dj as f64 - 1.0) * h);
                let mut ks = 0.0;
                let mut ms = 0.0;
                for cx in [-h, 0.0] {
                    for cy in [-h, 0.0] {
                        for gx in [0.5 - g, 0.5 + g] {
                            for gy in [0.5 - g, 0.5 + g] {
                                let (x, y) = (cx + gx * h, cy + gy * h);
                                let w = h * h / 4.0;
                                let (px, py) = (x - ox, y - oy);
                                ks += w
                                    * (dhat(x) * hat(y) * dhat(px) * hat(py)
                                        + hat(x) * dhat(y) * hat(px) * dhat(py));
                                ms += w * hat(x) * hat(y) * hat(px) * hat(py);
                            }
                        }
                    }
                }
                *kv = ks;
                m[di][dj] = ms;
            }
        }
        (k, m)
    }

    #[test]
    fn interior_stencils_match_integration() {
        let ops = assemble_q1(7, BoundaryMode::Full).unwrap();
        let (k_ref, m_ref) = integrated_stencils(ops.h);
        let centre = 3 * 7 + 3;
        for dy in 0..3 {
            for dx in 0..3 {
                let j = (2 + dy) * 7 + (2 + dx);
                assert!((ops.stiffness.get(centre, j) - k_ref[dx][dy]).abs() < 1e-14);
                assert!((ops.mass.get(centre, j) - m_ref[dx][dy]).abs() < 1e-14);
            }
        }
        assert!((ops.stiffness.get(centre, centre) - 8.0 / 3.0).abs() < 1e-14);
        assert!((ops.mass.get(centre, centre) - 16.0 * ops.h * ops.h / 36.0).abs() < 1e-16);
    }

    #[test]
    fn neumann_kernel_is_constants() {
        let ops = assemble_q1(6, BoundaryMode::Full).unwrap();
        let r = ops.stiffness.mul_vec(&vec![1.0; ops.n]);
        assert!(r.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn too_small_grid() {
        assert!(matches!(assemble_q1(2, BoundaryMode::Full), Err(Error::Range { .. })));
    }

    #[test]
    fn boundary_modes_dimensions() {
        assert_eq!(assemble_q1(5, BoundaryMode::Full).unwrap().n, 25);
        assert_eq!(assemble_q1(5, BoundaryMode::DirichletInterior).unwrap().n, 9);
        let c = assemble_q1(5, BoundaryMode::Constrained).unwrap();
        assert_eq!(c.n, 25);
        assert_eq!(c.stiffness.get(0, 0), 1.0);
        assert_eq!(c.stiffness.get(0, 1), 0.0);
        assert_eq!(c.stiffness.get(6, 1), 0.0);
        assert_eq!(c.mass.get(0, 1), assemble_q1(5, BoundaryMode::Full).unwrap().mass.get(0, 1));
    }

    #[test]
    fn toeplitz_matches_assembly_everywhere_in_dirichlet_mode() {
        // Eliminating the boundary of an (N+2)-grid leaves exactly T_N(g).
        for n_side in [3, 4, 6] {
            let ops = assemble_q1(n_side + 2, BoundaryMode::DirichletInterior).unwrap();
            let k = toeplitz_from_symbol(&SymbolDescriptor::Q1Stiffness, n_side).unwrap();
            let m = toeplitz_from_symbol(&SymbolDescriptor::Q1Mass { h: ops.h }, n_side).unwrap();
            let dk = (ops.stiffness.to_dense() - k.to_dense()).abs().max();
            let dm = (ops.mass.to_dense() - m.to_dense()).abs().max();
            assert!(dk < 1e-14 && dm < 1e-16, "{dk} {dm}");
        }
    }

    #[test]
    fn constant_symbol_gives_identity() {
        let t = toeplitz_from_symbol(&SymbolDescriptor::Constant(1.0), 4).unwrap();
        assert_eq!(t, CsrMatrix::identity(16));
    }

    #[test]
    fn ratio_symbol_has_no_toeplitz_matrix() {
        let g = SymbolDescriptor::Ratio { tau: 1.0, h: 0.1 };
        assert!(matches!(toeplitz_from_symbol(&g, 3), Err(Error::Unsupported(_))));
    }

    #[test]
    fn central_row_of_three_by_three() {
        let t = toeplitz_from_symbol(&SymbolDescriptor::Q1Stiffness, 3).unwrap();
        let row: Vec<f64> = (0..9).map(|j| t.get(4, j)).collect();
        let e = -1.0 / 3.0;
        assert_eq!(row, vec![e, e, e, e, 8.0 / 3.0, e, e, e, e]);
    }

    #[test]
    fn symbol_values() {
        let (tau, h) = (0.3, 0.125);
        let s = SymbolDescriptor::Ratio { tau, h };
        assert!((s.eval(PI, PI) - tau / (h * h) * 24.0).abs() < 1e-10);
        assert!(s.eval(1e-9, 1e-9) < 1e-12);
        let one = sample_symbol(&SymbolDescriptor::Q1Stiffness, 1);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0], SymbolDescriptor::Q1Stiffness.eval(PI / 2.0, PI / 2.0));
        for n_side in [1, 5, 17] {
            let mass = sample_symbol(&SymbolDescriptor::Q1Mass { h }, n_side);
            assert!(mass.iter().all(|&v| v > 0.0));
        }
        assert_eq!(SymbolDescriptor::Q1Stiffness.eval(0.0, 0.0), 0.0);
    }

    #[test]
    fn fourier_coefficients_reproduce_symbols() {
        for g in [
            SymbolDescriptor::Q1Stiffness,
            SymbolDescriptor::FivePointStiffness,
            SymbolDescriptor::Q1Mass { h: 0.2 },
        ] {
            let c = g.fourier_coefficients().unwrap();
            for (t1, t2) in [(0.3, -1.2), (2.0, 0.7), (PI, PI)] {
                let mut v = 0.0;
                for (a, row) in c.iter().enumerate() {
                    for (b, &x) in row.iter().enumerate() {
                        v += x * ((a as f64 - 1.0) * t1 + (b as f64 - 1.0) * t2).cos();
                    }
                }
                assert!((v - g.eval(t1, t2)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zt_spectrum_properties() {
        let ops = assemble_q1(7, BoundaryMode::DirichletInterior).unwrap();
        let tau = 0.01;
        let mu = zt_eigenvalues(&ops, tau).unwrap();
        let upper = tau / (ops.h * ops.h) * 24.0;
        assert!(mu.iter().all(|&m| m > 0.0 && m < upper));
        let mu10 = zt_eigenvalues(&ops, 10.0 * tau).unwrap();
        for (a, b) in mu.iter().zip(&mu10) {
            assert!((10.0 * a - b).abs() <= 1e-10 * b);
        }

        let full = assemble_q1(5, BoundaryMode::Full).unwrap();
        let mu = zt_eigenvalues(&full, 0.1).unwrap();
        assert!(mu[0].abs() < 1e-10);
        assert!(mu[1] > 1e-3);
    }

    #[test]
    fn zt_matches_jacobi_oracle() {
        let ops = assemble_q1(6, BoundaryMode::Constrained).unwrap();
        let tau = 0.05;
        let mu = zt_eigenvalues(&ops, tau).unwrap();
        // Independent route: M^{-1/2} from the eigendecomposition of M, then Jacobi.
        let m = ops.mass.to_dense();
        let eig = nalgebra::SymmetricEigen::new(m);
        let inv_sqrt = &eig.eigenvectors
            * nalgebra::DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()))
            * eig.eigenvectors.transpose();
        let s = &inv_sqrt * (ops.stiffness.to_dense() * tau) * &inv_sqrt;
        let reference = jacobi_eigenvalues(&((&s + s.transpose()) * 0.5));
        for (a, b) in mu.iter().zip(&reference) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "{a} {b}");
        }
    }

    #[test]
    fn zt_invariant_under_permutation() {
        let ops = assemble_q1(6, BoundaryMode::Full).unwrap();
        let n = ops.n;
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
        let permuted = GridOperators {
            mass: ops.mass.permute_symmetric(&perm),
            stiffness: ops.stiffness.permute_symmetric(&perm),
            ..ops.clone()
        };
        let a = zt_eigenvalues(&ops, 0.2).unwrap();
        let b = zt_eigenvalues(&permuted, 0.2).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0));
        }
    }

    #[test]
    fn operators_are_symmetric() {
        for bc in [BoundaryMode::Full, BoundaryMode::DirichletInterior, BoundaryMode::Constrained] {
            let ops = assemble_q1(6, bc).unwrap();
            assert!(ops.mass.is_symmetric(0.0));
            assert!(ops.stiffness.is_symmetric(0.0));
        }
    }
}
