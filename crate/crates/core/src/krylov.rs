//! Right-preconditioned GMRES and the Radau IIA time integrator for
//! `M u' + K u = f(t)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::GridOperators;
use crate::kron::{PreconditionerState, StageSystem};
use crate::linalg::{axpy, dot, norm2};
use crate::tableau::ButcherTableau;
use crate::TriangularFactorization;

pub trait LinearOperator {
    fn dim(&self) -> usize;
    /// `y = A x`
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

pub trait Preconditioner {
    /// `P^{-1} r`
    fn solve(&self, r: &[f64]) -> Result<Vec<f64>>;
}

/// No preconditioning.
pub struct Identity;

impl Preconditioner for Identity {
    fn solve(&self, r: &[f64]) -> Result<Vec<f64>> {
        Ok(r.to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GmresOptions {
    /// Relative residual target `‖b - A x‖ / ‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
    /// Krylov dimension before restarting; `None` means never restart.
    pub restart: Option<usize>,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            restart: None,
        }
    }
}

/// Orthogonality loss that triggers a second Gram-Schmidt pass.
const REORTH_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Relative residual after each iteration, starting with the initial one.
    pub residual_history: Vec<f64>,
    /// True relative residual of the returned solution.
    pub relative_residual: f64,
    pub converged: bool,
    #[serde(skip)]
    pub solution: Vec<f64>,
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let r = a.hypot(b);
        (a / r, b / r)
    }
}

/// GMRES on `A P^{-1} y = b`, `x = P^{-1} y`, from a zero initial guess.
///
/// Hitting `max_iter` is not an error; the report says `converged: false`.
pub fn gmres<A, P>(a: &A, p: &P, rhs: &[f64], options: &GmresOptions) -> Result<SolveReport>
where
    A: LinearOperator + ?Sized,
    P: Preconditioner + ?Sized,
{
    let n = a.dim();
    if rhs.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: rhs.len(),
        });
    }
    if !(options.tol > 0.0 && options.tol < 1.0) {
        return Err(Error::Domain(format!("tolerance must lie in (0, 1), got {}", options.tol)));
    }
    let bnorm = norm2(rhs);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(SolveReport {
            iterations: 0,
            residual_history: vec![0.0],
            relative_residual: 0.0,
            converged: true,
            solution: x,
        });
    }
    let restart = options.restart.unwrap_or(options.max_iter).max(1);
    let mut history = vec![1.0];
    let mut iterations = 0;
    let mut r = rhs.to_vec();
    let mut rel = 1.0;
    let mut w = vec![0.0; n];

    while iterations < options.max_iter {
        let beta = norm2(&r);
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        // Column j of the Hessenberg matrix, already rotated.
        let mut hess: Vec<Vec<f64>> = Vec::new();
        let mut rotations: Vec<(f64, f64)> = Vec::new();
        let mut g = vec![beta];

        for j in 0..restart {
            if iterations >= options.max_iter {
                break;
            }
            let z = p.solve(&basis[j])?;
            a.apply(&z, &mut w);
            let mut h = vec![0.0; j + 2];
            for (i, v) in basis.iter().enumerate() {
                h[i] = dot(&w, v);
                axpy(-h[i], v, &mut w);
            }
            let wn = norm2(&w);
            let loss = basis
                .iter()
                .map(|v| dot(&w, v).abs())
                .fold(0.0, f64::max);
            if wn > 0.0 && loss > REORTH_THRESHOLD * wn {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(&w, v);
                    h[i] += c;
                    axpy(-c, v, &mut w);
                }
            }
            h[j + 1] = norm2(&w);
            for (i, &(c, s)) in rotations.iter().enumerate() {
                let (a0, a1) = (h[i], h[i + 1]);
                h[i] = c * a0 + s * a1;
                h[i + 1] = -s * a0 + c * a1;
            }
            let (c, s) = givens(h[j], h[j + 1]);
            h[j] = c * h[j] + s * h[j + 1];
            let breakdown = h[j + 1].abs() <= f64::EPSILON * beta;
            let next = h[j + 1];
            h[j + 1] = 0.0;
            rotations.push((c, s));
            g.push(-s * g[j]);
            g[j] *= c;
            hess.push(h);
            iterations += 1;
            let estimate = g[j + 1].abs() / bnorm;
            history.push(estimate);
            if estimate <= options.tol || breakdown {
                break;
            }
            basis.push(w.iter().map(|v| v / next).collect());
        }

        // Back substitution for the small triangular system.
        let k = hess.len();
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = ((i + 1)..k).map(|l| hess[l][i] * y[l]).sum();
            y[i] = (g[i] - s) / hess[i][i];
        }
        let mut vy = vec![0.0; n];
        for (v, yi) in basis.iter().zip(&y) {
            axpy(*yi, v, &mut vy);
        }
        let dx = p.solve(&vy)?;
        axpy(1.0, &dx, &mut x);
        a.apply(&x, &mut w);
        for ((ri, bi), ai) in r.iter_mut().zip(rhs).zip(&w) {
            *ri = bi - ai;
        }
        rel = norm2(&r) / bnorm;
        if rel <= options.tol {
            return Ok(SolveReport {
                iterations,
                residual_history: history,
                relative_residual: rel,
                converged: true,
                solution: x,
            });
        }
    }
    Ok(SolveReport {
        iterations,
        residual_history: history,
        relative_residual: rel,
        converged: false,
        solution: x,
    })
}

/// Fixed-step Radau IIA integrator for `M u' + K u = f(t)`.
#[derive(Debug, Clone)]
pub struct RadauIntegrator {
    pub tableau: ButcherTableau,
    pub system: StageSystem,
    pub preconditioner: PreconditionerState,
    pub options: GmresOptions,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub state: Vec<f64>,
    pub reports: Vec<SolveReport>,
}

impl RadauIntegrator {
    pub fn new(tableau: ButcherTableau, ops: GridOperators, tau: f64, options: GmresOptions) -> Result<Self> {
        let fact = TriangularFactorization::new(&tableau)?;
        let system = StageSystem::new(fact, ops, tau)?;
        let preconditioner = system.preconditioner()?;
        Ok(Self {
            tableau,
            system,
            preconditioner,
            options,
        })
    }

    pub fn tau(&self) -> f64 {
        self.system.tau
    }

    /// One step from `(t_n, u_n)`: solve the transformed stage system for the
    /// stage derivatives `k_i`, then `u_{n+1} = u_n + τ Σ b_i k_i`.
    pub fn step<F>(&self, u_n: &[f64], forcing: &F, t_n: f64) -> Result<(Vec<f64>, SolveReport)>
    where
        F: Fn(f64) -> Vec<f64> + ?Sized,
    {
        let n = self.system.n();
        if u_n.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: u_n.len(),
            });
        }
        let tau = self.tau();
        let mut gbar = Vec::with_capacity(self.system.dim());
        for &c in self.tableau.nodes() {
            let f = forcing(t_n + c * tau);
            if f.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: f.len(),
                });
            }
            gbar.extend(f);
        }
        let rhs = self.system.assemble_rhs(&gbar, u_n)?;
        let report = gmres(&self.system, &self.preconditioner, &rhs, &self.options)?;
        if !report.converged {
            return Err(Error::NotConverged {
                iterations: report.iterations,
                residual: report.relative_residual,
            });
        }
        let mut next = u_n.to_vec();
        for (b, k) in self.tableau.weights().iter().zip(report.solution.chunks(n)) {
            axpy(tau * b, k, &mut next);
        }
        Ok((next, report))
    }

    /// `steps` fixed steps from `t0`; the step size is taken from the stage system.
    pub fn run<F>(&self, u0: &[f64], forcing: &F, t0: f64, steps: usize) -> Result<Trajectory>
    where
        F: Fn(f64) -> Vec<f64> + ?Sized,
    {
        let mut state = u0.to_vec();
        let mut reports = Vec::with_capacity(steps);
        for s in 0..steps {
            let t = t0 + s as f64 * self.tau();
            let (next, report) = self.step(&state, forcing, t).map_err(|e| Error::Step {
                step: s,
                source: Box::new(e),
            })?;
            state = next;
            reports.push(report);
        }
        Ok(Trajectory { state, reports })
    }
}

/// Integrates over `[t0, t_end]` with `steps` equal steps `τ = (t_end - t0) / steps`.
pub fn integrate<F>(
    tableau: &ButcherTableau,
    ops: &GridOperators,
    u0: &[f64],
    forcing: &F,
    t0: f64,
    t_end: f64,
    steps: usize,
    options: &GmresOptions,
) -> Result<Trajectory>
where
    F: Fn(f64) -> Vec<f64> + ?Sized,
{
    if steps == 0 {
        return Err(Error::Range {
            what: "steps",
            value: 0,
            min: 1,
            max: i64::MAX,
        });
    }
    let tau = (t_end - t0) / steps as f64;
    let integrator = RadauIntegrator::new(tableau.clone(), ops.clone(), tau, *options)?;
    integrator.run(u0, forcing, t0, steps)
}
