//! Spectrum of the preconditioned stage operator `P^{-1} A`.
//!
//! On an eigenvector `w` of `Z_τ = τ M^{-1} K` with eigenvalue `μ`, the
//! generalized problem `(Û ⊗ I) v = λ (I + L^{-1} ⊗ Z_τ) v` reduces to the
//! `q x q` matrix `R(μ) = (I + μ L^{-1})^{-1} Û`. The eigenvalues of
//! `P^{-1} A` are then `1` (n times) and `1 + λ_i(μ_j)`, where the `λ_i` are
//! the `q - 1` branch values of `R(μ_j)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::factor::TriangularFactorization;
use crate::fem::{sample_symbol, zt_eigenvalues, SymbolDescriptor};
use crate::kron::StageSystem;
use crate::linalg::nonsymmetric_eigenvalues;
use crate::tau::TauRule;
use crate::{BoundaryMode, MAX_STAGES};

fn check_mu(mu: f64) -> Result<()> {
    if mu >= 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("mu must be finite and non-negative, got {mu}")))
    }
}

fn check_stages(q: usize, min: usize) -> Result<()> {
    if (min..=MAX_STAGES).contains(&q) {
        Ok(())
    } else {
        Err(Error::Range {
            what: "stages",
            value: q as i64,
            min: min as i64,
            max: MAX_STAGES as i64,
        })
    }
}

/// `R(μ) = (I + μ L^{-1})^{-1} Û`. `μ = 0` gives `Û`.
pub fn reduced_block(mu: f64, fact: &TriangularFactorization) -> Result<DMatrix<f64>> {
    check_mu(mu)?;
    let q = fact.q;
    let lower = DMatrix::<f64>::identity(q, q) + &fact.linv * mu;
    let mut r = fact.uhat.clone();
    // Forward substitution, column by column.
    for col in 0..q {
        for i in 0..q {
            let d = lower[(i, i)];
            if d == 0.0 || !d.is_finite() {
                return Err(Error::Singular);
            }
            let s: f64 = (0..i).map(|k| lower[(i, k)] * r[(k, col)]).sum();
            r[(i, col)] = (r[(i, col)] - s) / d;
        }
    }
    Ok(r)
}

/// The nonzero eigenvalue of `R(μ)` for two stages: `-(4/μ + 2μ/3 + 11/3)^{-1}`.
pub fn f_q2(mu: f64) -> Result<f64> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::Domain(format!("mu must be positive, got {mu}")));
    }
    Ok(-1.0 / (4.0 / mu + 2.0 * mu / 3.0 + 11.0 / 3.0))
}

/// `3√6 / (11√6 + 24)`, the largest branch magnitude for two stages.
pub fn q2_radius() -> f64 {
    let s6 = 6f64.sqrt();
    3.0 * s6 / (11.0 * s6 + 24.0)
}

fn sort_complex(v: &mut [Complex64]) {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> [Complex64; 2] {
    let disc = b * b - 4.0 * a * c;
    if disc >= 0.0 {
        // Avoid cancellation: compute the larger root first.
        let s = -0.5 * (b + b.signum() * disc.sqrt());
        if s == 0.0 {
            return [Complex64::new(0.0, 0.0); 2];
        }
        [Complex64::new(s / a, 0.0), Complex64::new(c / s, 0.0)]
    } else {
        let re = -b / (2.0 * a);
        let im = (-disc).sqrt() / (2.0 * a).abs();
        [Complex64::new(re, -im), Complex64::new(re, im)]
    }
}

/// The `q - 1` branch values `λ_i(μ)`, sorted by real then imaginary part.
///
/// The first column of `R(μ)` is zero, so `R(μ)` is block upper triangular
/// and the branches are the eigenvalues of its trailing `(q-1) x (q-1)` block.
pub fn branch_eigenvalues(mu: f64, fact: &TriangularFactorization) -> Result<Vec<Complex64>> {
    check_stages(fact.q, 2)?;
    let r = reduced_block(mu, fact)?;
    let q = fact.q;
    let b = r.view((1, 1), (q - 1, q - 1));
    let mut out = match q - 1 {
        1 => vec![Complex64::new(b[(0, 0)], 0.0)],
        2 => {
            let tr = b[(0, 0)] + b[(1, 1)];
            let det = b[(0, 0)] * b[(1, 1)] - b[(0, 1)] * b[(1, 0)];
            quadratic_roots(1.0, -tr, det).to_vec()
        }
        _ => nonsymmetric_eigenvalues(&b.into_owned())?,
    };
    sort_complex(&mut out);
    Ok(out)
}

/// Coefficients `[c2, c1, c0]` of the quadratic in `λ` obtained by eliminating
/// the second and third block rows for three stages. Entries `ℓ_{ij}` are those
/// of `L^{-1}` and `û_{ij}` those of `Û`.
pub fn q3_quadratic(mu: f64, fact: &TriangularFactorization) -> Result<[f64; 3]> {
    if fact.q != 3 {
        return Err(Error::Range {
            what: "stages",
            value: fact.q as i64,
            min: 3,
            max: 3,
        });
    }
    check_mu(mu)?;
    let l = |i: usize, j: usize| fact.linv[(i - 1, j - 1)];
    let u = |i: usize, j: usize| fact.uhat[(i - 1, j - 1)];
    let k = mu / (1.0 + l(3, 3) * mu);
    let (a1, b1) = (-(1.0 + l(2, 2) * mu), -u(2, 3) * l(3, 2) * k);
    let (a2, b2) = (l(2, 1) * mu, u(2, 3) * l(3, 1) * k);
    let p = 1.0 + l(1, 1) * mu;
    let r = 1.0 + l(3, 3) * mu;
    let w2 = u(1, 2) * r - u(1, 3) * l(3, 2) * mu;
    let w1 = -u(1, 3) * l(3, 1) * mu;
    Ok([-p * r * a1, -p * r * b1 + w2 * a2 + w1 * a1, w2 * b2 + w1 * b1])
}

/// Roots of [`q3_quadratic`], sorted like [`branch_eigenvalues`].
pub fn q3_quadratic_roots(mu: f64, fact: &TriangularFactorization) -> Result<Vec<Complex64>> {
    let [a, b, c] = q3_quadratic(mu, fact)?;
    let mut out = quadratic_roots(a, b, c).to_vec();
    sort_complex(&mut out);
    Ok(out)
}

fn check_vector(v: &[f64]) -> Result<()> {
    if v.is_empty() || v.iter().all(|&x| x == 0.0) {
        Err(Error::Domain("eigenvector seed must be nonzero".into()))
    } else {
        Ok(())
    }
}

/// Eigenvector `[-(1 + 4/μ)/3 · v2; v2]` of `P^{-1} A` for the eigenvalue
/// `1 + f_q2(μ)`, given `Z_τ v2 = μ v2`.
pub fn eigenvector_q2(mu: f64, v2: &[f64]) -> Result<Vec<f64>> {
    f_q2(mu)?;
    check_vector(v2)?;
    let s = -(1.0 + 4.0 / mu) / 3.0;
    Ok(v2.iter().map(|x| s * x).chain(v2.iter().copied()).collect())
}

/// `α(λ, μ)` and `β(λ, μ)` such that `[v1; α v1; β v1]` is an eigenvector of
/// `P^{-1} A` for the eigenvalue `1 + λ`, with `λ` a three-stage branch value.
pub fn eigenvector_q3_coefficients(
    mu: f64,
    lambda: Complex64,
    fact: &TriangularFactorization,
) -> Result<(Complex64, Complex64)> {
    if fact.q != 3 {
        return Err(Error::Range {
            what: "stages",
            value: fact.q as i64,
            min: 3,
            max: 3,
        });
    }
    check_mu(mu)?;
    let l = |i: usize, j: usize| fact.linv[(i - 1, j - 1)];
    let u = |i: usize, j: usize| fact.uhat[(i - 1, j - 1)];
    let k = mu / (1.0 + l(3, 3) * mu);
    let l1 = -(1.0 + l(2, 2) * mu) * lambda - u(2, 3) * l(3, 2) * k;
    let l2 = l(2, 1) * mu * lambda + u(2, 3) * l(3, 1) * k;
    if l1.norm() == 0.0 {
        return Err(Error::Domain(format!("l1 vanishes at lambda = {lambda}")));
    }
    let alpha = l2 / l1;
    let beta = -mu * (l(3, 1) + l(3, 2) * alpha) / (1.0 + l(3, 3) * mu);
    Ok((alpha, beta))
}

/// `[v1; α v1; β v1]` for the branch value `lambda`, given `Z_τ v1 = μ v1`.
pub fn eigenvector_q3(
    mu: f64,
    lambda: Complex64,
    v1: &[f64],
    fact: &TriangularFactorization,
) -> Result<Vec<Complex64>> {
    check_vector(v1)?;
    let (alpha, beta) = eigenvector_q3_coefficients(mu, lambda, fact)?;
    let one = Complex64::new(1.0, 0.0);
    Ok([one, alpha, beta]
        .iter()
        .flat_map(|&s| v1.iter().map(move |&x| s * x))
        .collect())
}

/// Log-uniform grid of `μ` values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MuGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for MuGrid {
    fn default() -> Self {
        Self {
            lo: 1e-8,
            hi: 1e8,
            points: 2000,
        }
    }
}

impl MuGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.lo > 0.0 && self.hi >= self.lo && self.hi.is_finite()) || self.points == 0 {
            return Err(Error::Domain(format!(
                "invalid mu grid [{}, {}] with {} points",
                self.lo, self.hi, self.points
            )));
        }
        if self.points == 1 || self.lo == self.hi {
            return Ok(vec![self.lo]);
        }
        let (a, b) = (self.lo.ln(), self.hi.ln());
        let step = (b - a) / (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|i| if i + 1 == self.points { self.hi } else { (a + step * i as f64).exp() })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadiusEstimate {
    pub radius: f64,
    pub mu_star: f64,
}

fn branch_magnitude(mu: f64, fact: &TriangularFactorization) -> Result<f64> {
    Ok(branch_eigenvalues(mu, fact)?
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// `max_i |λ_i(μ)|` maximized over the grid, then refined by golden-section
/// search in `ln μ` between the neighbours of the best grid point.
pub fn radius_estimate_with(fact: &TriangularFactorization, grid: &MuGrid) -> Result<RadiusEstimate> {
    check_stages(fact.q, 2)?;
    let mus = grid.values()?;
    let mags = mus
        .iter()
        .map(|&m| branch_magnitude(m, fact))
        .collect::<Result<Vec<_>>>()?;
    let (best, &radius) = mags
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid is nonempty");
    let mut estimate = RadiusEstimate {
        radius,
        mu_star: mus[best],
    };
    if mus.len() < 3 {
        return Ok(estimate);
    }
    let mut a = mus[best.saturating_sub(1)].ln();
    let mut b = mus[(best + 1).min(mus.len() - 1)].ln();
    let g = |x: f64| branch_magnitude(x.exp(), fact);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut gc, mut gd) = (g(c)?, g(d)?);
    while (b - a).abs() > 1e-12 {
        if gc > gd {
            b = d;
            d = c;
            gd = gc;
            c = b - ratio * (b - a);
            gc = g(c)?;
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + ratio * (b - a);
            gd = g(d)?;
        }
    }
    let x = 0.5 * (a + b);
    let gx = g(x)?;
    if gx > estimate.radius {
        estimate = RadiusEstimate {
            radius: gx,
            mu_star: x.exp(),
        };
    }
    Ok(estimate)
}

/// [`radius_estimate_with`] for the `q`-stage Radau IIA factorization.
pub fn radius_estimate(q: usize, grid: &MuGrid) -> Result<RadiusEstimate> {
    check_stages(q, 2)?;
    radius_estimate_with(&TriangularFactorization::radau(q)?, grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMode {
    /// From the eigenvalues of `Z_τ` and the reduced blocks.
    Structured,
    /// Dense `P^{-1} A` and a general eigensolver.
    DenseOracle,
}

impl std::str::FromStr for SpectrumMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "structured" => Ok(Self::Structured),
            "dense" | "dense_oracle" => Ok(Self::DenseOracle),
            other => Err(Error::Domain(format!("unknown spectrum mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchSample {
    pub mu: f64,
    pub values: Vec<Complex64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CountRow {
    pub eps: f64,
    pub count: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    pub q: usize,
    pub n: usize,
    pub tau: f64,
    pub h: f64,
    pub mode: SpectrumMode,
    /// All `q n` eigenvalues of `P^{-1} A`. In structured mode the first `n`
    /// are the unit eigenvalues, followed by `1 + λ_i(μ_j)` grouped by `j`.
    pub eigenvalues: Vec<Complex64>,
    /// Per eigenvalue of `Z_τ`; empty in dense mode.
    pub branches: Vec<BranchSample>,
    /// `max |λ - 1|` over the eigenvalues.
    pub radius: f64,
    pub counts: Vec<CountRow>,
    /// Sorted `|λ|` over the eigenvalues.
    pub e1: Vec<f64>,
    /// Symbol prediction of `e1`; empty when the grid has no symbol.
    pub e2: Vec<f64>,
}

impl SpectralReport {
    /// Branch index of each eigenvalue (0 for the unit family) and the `μ`
    /// it belongs to, in the order of `eigenvalues`. Dense mode has no labels.
    pub fn labels(&self) -> Vec<(usize, Option<f64>)> {
        if self.mode == SpectrumMode::DenseOracle {
            return vec![(0, None); self.eigenvalues.len()];
        }
        let mut out = vec![(0, None); self.n];
        for b in &self.branches {
            out.extend((1..=b.values.len()).map(|i| (i, Some(b.mu))));
        }
        out
    }
}

fn branch_samples(mus: &[f64], fact: &TriangularFactorization) -> Result<Vec<BranchSample>> {
    let eval = |&mu: &f64| {
        branch_eigenvalues(mu, fact).map(|values| BranchSample { mu, values })
    };
    #[cfg(feature = "parallel")]
    {
        mus.par_iter().map(eval).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        mus.iter().map(eval).collect()
    }
}

fn sorted_magnitudes(values: impl Iterator<Item = Complex64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.map(|z| z.norm()).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// The symbol prediction of the sorted `|λ|`: `n` ones and `|1 + λ_i(s)|`
/// over samples `s` of the symbol of `Z_τ` on the grid `θ_m = mπ/(N+1)`.
pub fn symbol_prediction(sys: &StageSystem) -> Result<Vec<f64>> {
    let ops = &sys.ops;
    if ops.n_side == 0 {
        return Ok(Vec::new());
    }
    let side = ops.points_per_side();
    let samples = sample_symbol(&SymbolDescriptor::Ratio { tau: sys.tau, h: ops.h }, side);
    let one = Complex64::new(1.0, 0.0);
    let branches = branch_samples(&samples, &sys.fact)?;
    Ok(sorted_magnitudes(
        std::iter::repeat(one)
            .take(side * side)
            .chain(branches.iter().flat_map(|b| b.values.iter().map(|l| one + l))),
    ))
}

pub fn preconditioned_spectrum(sys: &StageSystem, mode: SpectrumMode) -> Result<SpectralReport> {
    check_stages(sys.stages(), 2)?;
    let n = sys.n();
    let one = Complex64::new(1.0, 0.0);
    let (eigenvalues, branches) = match mode {
        SpectrumMode::Structured => {
            let mus = zt_eigenvalues(&sys.ops, sys.tau)?;
            let branches = branch_samples(&mus, &sys.fact)?;
            let eigs = std::iter::repeat(one)
                .take(n)
                .chain(branches.iter().flat_map(|b| b.values.iter().map(|l| one + l)))
                .collect();
            (eigs, branches)
        }
        SpectrumMode::DenseOracle => {
            let a = sys.dense_matrix()?;
            let p = sys.dense_preconditioner()?;
            let pa = p.lu().solve(&a).ok_or(Error::Singular)?;
            (nonsymmetric_eigenvalues(&pa)?, Vec::new())
        }
    };
    let radius = eigenvalues.iter().map(|z| (z - one).norm()).fold(0.0, f64::max);
    let e1 = sorted_magnitudes(eigenvalues.iter().copied());
    let e2 = symbol_prediction(sys)?;
    Ok(SpectralReport {
        q: sys.stages(),
        n,
        tau: sys.tau,
        h: sys.ops.h,
        mode,
        eigenvalues,
        branches,
        radius,
        counts: Vec::new(),
        e1,
        e2,
    })
}

/// `N(ε) = #{λ : |λ - 1| < ε}` and `r(ε) = N(ε) / (q n)` for each `ε`.
pub fn test1_counts(report: &SpectralReport, eps_list: &[f64]) -> Result<Vec<CountRow>> {
    if eps_list.is_empty() {
        return Err(Error::Domain("eps list is empty".into()));
    }
    let total = report.eigenvalues.len();
    eps_list
        .iter()
        .map(|&eps| {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::Domain(format!("eps must be positive, got {eps}")));
            }
            let count = report
                .eigenvalues
                .iter()
                .filter(|z| (*z - Complex64::new(1.0, 0.0)).norm() < eps)
                .count();
            Ok(CountRow {
                eps,
                count,
                ratio: count as f64 / total as f64,
            })
        })
        .collect()
}

/// Sorted `|λ|` of `P^{-1} A` and its symbol prediction.
pub fn test2_vectors(sys: &StageSystem) -> Result<(Vec<f64>, Vec<f64>)> {
    let report = preconditioned_spectrum(sys, SpectrumMode::Structured)?;
    Ok((report.e1, report.e2))
}

/// `max_k |a_k - b_k|` for equal-length vectors.
pub fn max_sorted_deviation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// Minimum-cost perfect matching for a square cost matrix (Hungarian method
/// with potentials). Returns `assign[i] = j`.
pub fn min_cost_matching(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "cost matrix must be square");
    // 1-based arrays; column 0 is a sentinel.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// Largest `|a_i - b_σ(i)|` under the matching `σ` of minimal total distance.
pub fn max_pairing_distance(a: &[Complex64], b: &[Complex64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    let cost = DMatrix::from_fn(a.len(), b.len(), |i, j| (a[i] - b[j]).norm());
    let assign = min_cost_matching(&cost);
    Ok(assign
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[(i, j)])
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionRow {
    pub n_side: usize,
    pub n: usize,
    pub h: f64,
    pub tau: f64,
    /// `r(ε, h)`.
    pub fraction_within_eps: f64,
    /// `max_k |E1_k - E2_k|`.
    pub max_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionSummary {
    pub q: usize,
    pub rule: String,
    pub eps: f64,
    pub rows: Vec<DistributionRow>,
    pub fraction_nondecreasing: bool,
    pub deviation_decreasing: bool,
}

/// Cluster fraction and symbol deviation across a sequence of grids.
pub fn distribution_check(
    q: usize,
    n_sides: &[usize],
    bc: BoundaryMode,
    rule: TauRule,
    eps: f64,
) -> Result<DistributionSummary> {
    check_stages(q, 2)?;
    let fact = TriangularFactorization::radau(q)?;
    let mut rows = Vec::with_capacity(n_sides.len());
    for &n_side in n_sides {
        let ops = crate::fem::assemble_q1(n_side, bc)?;
        let tau = rule.resolve(q, ops.h)?;
        let (h, n) = (ops.h, ops.n);
        let sys = StageSystem::new(fact.clone(), ops, tau)?;
        let report = preconditioned_spectrum(&sys, SpectrumMode::Structured)?;
        let counts = test1_counts(&report, &[eps])?;
        rows.push(DistributionRow {
            n_side,
            n,
            h,
            tau,
            fraction_within_eps: counts[0].ratio,
            max_deviation: max_sorted_deviation(&report.e1, &report.e2)?,
        });
    }
    let fraction_nondecreasing = rows
        .windows(2)
        .all(|w| w[1].fraction_within_eps >= w[0].fraction_within_eps);
    let deviation_decreasing = rows.windows(2).all(|w| w[1].max_deviation < w[0].max_deviation);
    Ok(DistributionSummary {
        q,
        rule: rule.to_string(),
        eps,
        rows,
        fraction_nondecreasing,
        deviation_decreasing,
    })
}
