//! Command line driver: argument parsing, experiment orchestration and output.
//!
//! [`run`] parses arguments and writes results either to the given writer or,
//! with `--out`, atomically to a file.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use irk_precond::fem::{assemble_q1, zt_eigenvalues};
use irk_precond::krylov::{gmres, GmresOptions, RadauIntegrator};
use irk_precond::spectrum::{
    distribution_check, max_sorted_deviation, preconditioned_spectrum, radius_estimate, test1_counts, MuGrid,
    SpectrumMode,
};
use irk_precond::tableau::{radau_tableau, verify_order_conditions};
use irk_precond::{BoundaryMode, StageSystem, TauRule, TriangularFactorization};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Numerical(#[from] irk_precond::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    /// 2 for usage errors, 3 for numerical failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 1,
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

#[derive(Debug, Parser)]
#[command(
    name = "irk-precond",
    version,
    about = "Radau IIA stage systems, their Kronecker preconditioner and its spectrum"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the Radau IIA Butcher tableau.
    Tableau(TableauArgs),
    /// Print A^{-1} = L U, L^{-1}, and L = T Λ T^{-1}.
    Factor(FactorArgs),
    /// Assemble the Q1 mass and stiffness matrices.
    Fem(FemArgs),
    /// Solve a manufactured stage system, or run time steps of the heat equation.
    Solve(SolveArgs),
    /// Eigenvalues of the preconditioned stage operator.
    Spectrum(SpectrumArgs),
    /// Cluster radius: the largest branch magnitude over μ > 0.
    Radius(RadiusArgs),
    /// Count eigenvalues within ε of 1.
    Test1(Test1Args),
    /// Sorted eigenvalue magnitudes against their symbol prediction.
    Test2(Test2Args),
    /// Cluster fraction and symbol deviation across refinements.
    Distribution(DistributionArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Pretty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Emit {
    Stencils,
    Eigs,
    MatrixMarket,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Structured,
    Dense,
}

#[derive(Debug, Args)]
struct StagesArg {
    /// Number of Radau IIA stages (1..=10).
    #[arg(long, short = 'q', default_value_t = 3)]
    stages: usize,
}

#[derive(Debug, Args)]
struct OutArg {
    /// Write to this file (atomically) instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Grid points per side of the unit square (n = n_side^2, h = 1/(n_side - 1)).
    #[arg(long, default_value_t = 9)]
    n_side: usize,
    /// Boundary treatment: full, dirichlet (interior nodes only) or constrained
    /// (boundary rows of K replaced by the identity).
    #[arg(long, default_value = "constrained")]
    bc: BoundaryMode,
    /// Time step: matched (τ^{2q-1} = h²), c<C> (τ = C h²) or explicit:<τ>.
    #[arg(long, default_value = "matched")]
    tau_rule: TauRule,
}

#[derive(Debug, Args)]
struct TableauArgs {
    #[command(flatten)]
    stages: StagesArg,
    #[arg(long, value_enum, default_value_t = Format::Pretty)]
    format: Format,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct FactorArgs {
    #[command(flatten)]
    stages: StagesArg,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct FemArgs {
    #[arg(long, default_value_t = 5)]
    n_side: usize,
    #[arg(long, default_value = "full")]
    bc: BoundaryMode,
    /// stencils (JSON), eigs (eigenvalues of τ M^{-1} K) or matrix-market.
    #[arg(long, value_enum, default_value_t = Emit::Stencils)]
    emit: Emit,
    /// Time step scaling the eigenvalues for `--emit eigs`.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Output file; for matrix-market this is a prefix for `<prefix>_mass.mtx`
    /// and `<prefix>_stiffness.mtx`.
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    stages: StagesArg,
    #[command(flatten)]
    grid: GridArgs,
    /// Relative residual target for GMRES.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Restart length; omitted means no restarts.
    #[arg(long)]
    restart: Option<usize>,
    /// Run this many heat-equation steps from sin(πx) sin(πy) instead of the
    /// manufactured stage solve.
    #[arg(long, default_value_t = 0)]
    steps: usize,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    report: Format,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct SpectrumArgs {
    #[command(flatten)]
    stages: StagesArg,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_enum, default_value_t = Mode::Structured)]
    mode: Mode,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct RadiusArgs {
    #[command(flatten)]
    stages: StagesArg,
    #[arg(long, default_value_t = 1e-8)]
    mu_min: f64,
    #[arg(long, default_value_t = 1e8)]
    mu_max: f64,
    #[arg(long, default_value_t = 2000)]
    points: usize,
    #[arg(long, value_enum, default_value_t = Format::Pretty)]
    format: Format,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct Test1Args {
    #[command(flatten)]
    stages: StagesArg,
    /// Comma-separated grid sizes, one table row each.
    #[arg(long, default_value = "5,9,17", value_delimiter = ',')]
    n_side: Vec<usize>,
    #[arg(long, default_value = "constrained")]
    bc: BoundaryMode,
    #[arg(long, default_value = "matched")]
    tau_rule: TauRule,
    /// Comma-separated radii around 1.
    #[arg(long, default_value = "0.2,0.1,0.05", value_delimiter = ',')]
    eps: Vec<f64>,
    #[arg(long, value_enum, default_value_t = Format::Pretty)]
    format: Format,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct Test2Args {
    #[command(flatten)]
    stages: StagesArg,
    #[arg(long, default_value_t = 17)]
    n_side: usize,
    #[arg(long, default_value = "constrained")]
    bc: BoundaryMode,
    #[arg(long, default_value = "c1")]
    tau_rule: TauRule,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct DistributionArgs {
    #[command(flatten)]
    stages: StagesArg,
    #[arg(long, default_value = "9,17,33", value_delimiter = ',')]
    n_side: Vec<usize>,
    #[arg(long, default_value = "constrained")]
    bc: BoundaryMode,
    #[arg(long, default_value = "matched")]
    tau_rule: TauRule,
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    #[arg(long, value_enum, default_value_t = Format::Pretty)]
    format: Format,
    #[command(flatten)]
    out: OutArg,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    write!(stdout, "{}", e.render()).map_err(io_err("writing help"))
                }
                _ => Err(CliError::Usage(e.render().to_string())),
            };
        }
    };
    match cli.command {
        Command::Tableau(a) => tableau(a, stdout),
        Command::Factor(a) => factor(a, stdout),
        Command::Fem(a) => fem(a, stdout),
        Command::Solve(a) => solve(a, stdout),
        Command::Spectrum(a) => spectrum(a, stdout),
        Command::Radius(a) => radius(a, stdout),
        Command::Test1(a) => test1(a, stdout),
        Command::Test2(a) => test2(a, stdout),
        Command::Distribution(a) => distribution(a, stdout),
    }
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let shown = path.display().to_string();
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io_err(format!("creating temp file for {shown}")))?;
    tmp.write_all(contents).map_err(io_err(format!("writing {shown}")))?;
    tmp.as_file().sync_all().map_err(io_err(format!("syncing {shown}")))?;
    tmp.persist(path)
        .map_err(|e| CliError::Io {
            context: format!("renaming into {shown}"),
            source: e.error,
        })?;
    Ok(())
}

fn emit(text: String, out: &OutArg, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &out.out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => stdout.write_all(text.as_bytes()).map_err(io_err("writing output")),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn csv_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn bc_name(bc: BoundaryMode) -> &'static str {
    match bc {
        BoundaryMode::Full => "full",
        BoundaryMode::DirichletInterior => "dirichlet",
        BoundaryMode::Constrained => "constrained",
    }
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("--{name} must be positive, got {v}")))
    }
}

fn build_system(q: usize, n_side: usize, bc: BoundaryMode, rule: TauRule) -> Result<StageSystem, CliError> {
    let fact = TriangularFactorization::radau(q)?;
    let ops = assemble_q1(n_side, bc)?;
    let tau = rule.resolve(q, ops.h)?;
    Ok(StageSystem::new(fact, ops, tau)?)
}

fn tableau(a: TableauArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let q = a.stages.stages;
    let t = radau_tableau(q)?;
    let text = match a.format {
        Format::Json => to_json(&json!({
            "q": q,
            "A": rows(t.a()),
            "b": t.weights(),
            "c": t.nodes(),
        })),
        Format::Csv => {
            let mut s = String::from("kind,i,j,value\n");
            for i in 0..q {
                for j in 0..q {
                    writeln!(s, "A,{i},{j},{}", csv_num(t.a()[(i, j)])).unwrap();
                }
            }
            for (j, b) in t.weights().iter().enumerate() {
                writeln!(s, "b,,{j},{}", csv_num(*b)).unwrap();
            }
            for (i, c) in t.nodes().iter().enumerate() {
                writeln!(s, "c,{i},,{}", csv_num(*c)).unwrap();
            }
            s
        }
        Format::Pretty => {
            let mut s = String::new();
            for i in 0..q {
                write!(s, "{:>13.10} |", t.nodes()[i]).unwrap();
                for j in 0..q {
                    write!(s, " {:>14.10}", t.a()[(i, j)]).unwrap();
                }
                s.push('\n');
            }
            writeln!(s, "{}+{}", "-".repeat(14), "-".repeat(15 * q)).unwrap();
            write!(s, "{:>13} |", "").unwrap();
            for b in t.weights() {
                write!(s, " {:>14.10}", b).unwrap();
            }
            s.push('\n');
            let r = verify_order_conditions(&t);
            writeln!(s, "max order-condition residual: {:.2e}", r.max_residual()).unwrap();
            s
        }
    };
    emit(text, &a.out, stdout)
}

fn factor(a: FactorArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let f = TriangularFactorization::radau(a.stages.stages)?;
    let norms = f.uhat_norms();
    let text = match a.format {
        Format::Json => to_json(&json!({
            "q": f.q,
            "Ainv": rows(&f.ainv),
            "L": rows(&f.l),
            "U": rows(&f.u),
            "Uhat": rows(&f.uhat),
            "Linv": rows(&f.linv),
            "Lambda": f.lambda,
            "T": rows(&f.t),
            "Tinv": rows(&f.tinv),
            "norms": { "uhat_2": norms.spectral, "uhat_fro": norms.frobenius },
        })),
        Format::Csv => {
            let mut s = String::from("matrix,i,j,value\n");
            for (name, m) in [
                ("Ainv", &f.ainv),
                ("L", &f.l),
                ("U", &f.u),
                ("Uhat", &f.uhat),
                ("Linv", &f.linv),
                ("T", &f.t),
                ("Tinv", &f.tinv),
            ] {
                for i in 0..f.q {
                    for j in 0..f.q {
                        writeln!(s, "{name},{i},{j},{}", csv_num(m[(i, j)])).unwrap();
                    }
                }
            }
            s
        }
        Format::Pretty => {
            let mut s = String::new();
            for (name, m) in [("A^-1", &f.ainv), ("L", &f.l), ("U", &f.u), ("L^-1", &f.linv), ("T", &f.t)] {
                writeln!(s, "{name}:").unwrap();
                for i in 0..f.q {
                    for j in 0..f.q {
                        write!(s, " {:>14.8}", m[(i, j)]).unwrap();
                    }
                    s.push('\n');
                }
            }
            writeln!(s, "diag(L): {:?}", f.lambda).unwrap();
            writeln!(s, "||U - I||_2 = {:.6}, ||U - I||_F = {:.6}", norms.spectral, norms.frobenius).unwrap();
            s
        }
    };
    emit(text, &a.out, stdout)
}

fn stencil_at_center(m: &irk_precond::linalg::CsrMatrix, n_side: usize) -> Vec<Vec<f64>> {
    let c = n_side / 2;
    let center = c * n_side + c;
    (0..3)
        .map(|dy| (0..3).map(|dx| m.get(center, (c + dy - 1) * n_side + (c + dx - 1))).collect())
        .collect()
}

fn fem(a: FemArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let ops = assemble_q1(a.n_side, a.bc)?;
    match a.emit {
        Emit::Stencils => {
            if a.n_side < 3 || a.bc == BoundaryMode::DirichletInterior && a.n_side < 5 {
                return Err(CliError::Usage("stencils need an interior node with a full neighbourhood".into()));
            }
            let side = ops.points_per_side();
            let text = to_json(&json!({
                "n_side": a.n_side,
                "n": ops.n,
                "h": ops.h,
                "bc": bc_name(a.bc),
                "stiffness": stencil_at_center(&ops.stiffness, side),
                "mass": stencil_at_center(&ops.mass, side),
            }));
            emit(text, &a.out, stdout)
        }
        Emit::Eigs => {
            let tau = positive("tau", a.tau)?;
            let eigs = zt_eigenvalues(&ops, tau)?;
            let text = match a.format {
                Format::Csv => {
                    let mut s = String::from("index,mu\n");
                    for (i, m) in eigs.iter().enumerate() {
                        writeln!(s, "{i},{}", csv_num(*m)).unwrap();
                    }
                    s
                }
                _ => to_json(&json!({ "n": ops.n, "h": ops.h, "tau": tau, "bc": bc_name(a.bc), "mu": eigs })),
            };
            emit(text, &a.out, stdout)
        }
        Emit::MatrixMarket => {
            let prefix = a
                .out
                .out
                .ok_or_else(|| CliError::Usage("--emit matrix-market needs --out <prefix>".into()))?;
            for (name, m) in [("mass", &ops.mass), ("stiffness", &ops.stiffness)] {
                let path = PathBuf::from(format!("{}_{name}.mtx", prefix.display()));
                let mut buf = Vec::new();
                m.write_matrix_market(&mut buf).map_err(io_err("formatting matrix"))?;
                write_atomic(&path, &buf)?;
                writeln!(stdout, "{}", path.display()).map_err(io_err("writing output"))?;
            }
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct SolveSummary {
    q: usize,
    n_side: usize,
    n: usize,
    h: f64,
    tau: f64,
    tau_rule: String,
    bc: &'static str,
    tol: f64,
    iterations: usize,
    converged: bool,
    relative_residual: f64,
    residual_history: Vec<f64>,
    max_error: f64,
}

#[derive(Serialize)]
struct StepSummary {
    q: usize,
    n: usize,
    h: f64,
    tau: f64,
    steps: usize,
    final_time: f64,
    iterations: Vec<usize>,
    final_max: f64,
}

fn solve(a: SolveArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let q = a.stages.stages;
    let options = GmresOptions {
        tol: a.tol,
        max_iter: a.max_iter,
        restart: a.restart,
    };
    let sys = build_system(q, a.grid.n_side, a.grid.bc, a.grid.tau_rule)?;
    let n = sys.n();
    if a.steps > 0 {
        let ops = sys.ops.clone();
        let side = ops.points_per_side();
        let (offset, h) = match a.grid.bc {
            BoundaryMode::DirichletInterior => (1.0, ops.h),
            _ => (0.0, ops.h),
        };
        let u0: Vec<f64> = (0..n)
            .map(|i| {
                let (ix, iy) = ((i % side) as f64 + offset, (i / side) as f64 + offset);
                (std::f64::consts::PI * ix * h).sin() * (std::f64::consts::PI * iy * h).sin()
            })
            .collect();
        let integ = RadauIntegrator::new(radau_tableau(q)?, ops, sys.tau, options)?;
        let traj = integ.run(&u0, &|_| vec![0.0; n], 0.0, a.steps)?;
        let summary = StepSummary {
            q,
            n,
            h,
            tau: sys.tau,
            steps: a.steps,
            final_time: sys.tau * a.steps as f64,
            iterations: traj.reports.iter().map(|r| r.iterations).collect(),
            final_max: traj.state.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        };
        let text = match a.report {
            Format::Json => to_json(&summary),
            Format::Csv => {
                let mut s = String::from("step,iterations\n");
                for (i, it) in summary.iterations.iter().enumerate() {
                    writeln!(s, "{},{it}", i + 1).unwrap();
                }
                s
            }
            Format::Pretty => format!(
                "{} steps of tau = {:.6e} (t = {:.6}): GMRES iterations {:?}, max |u| = {:.6e}\n",
                summary.steps, summary.tau, summary.final_time, summary.iterations, summary.final_max
            ),
        };
        return emit(text, &a.out, stdout);
    }
    let x_star: Vec<f64> = (0..sys.dim())
        .map(|i| ((i * 7919 % 1000) as f64 / 500.0 - 1.0) + 0.1 * (i as f64).sin())
        .collect();
    let rhs = sys.stage_apply(&x_star)?;
    let prec = sys.preconditioner()?;
    let report = gmres(&sys, &prec, &rhs, &options)?;
    let max_error = report
        .solution
        .iter()
        .zip(&x_star)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let summary = SolveSummary {
        q,
        n_side: a.grid.n_side,
        n,
        h: sys.ops.h,
        tau: sys.tau,
        tau_rule: a.grid.tau_rule.to_string(),
        bc: bc_name(a.grid.bc),
        tol: a.tol,
        iterations: report.iterations,
        converged: report.converged,
        relative_residual: report.relative_residual,
        residual_history: report.residual_history.clone(),
        max_error,
    };
    let text = match a.report {
        Format::Json => to_json(&summary),
        Format::Csv => {
            let mut s = String::from("iteration,relative_residual\n");
            for (i, r) in summary.residual_history.iter().enumerate() {
                writeln!(s, "{i},{}", csv_num(*r)).unwrap();
            }
            s
        }
        Format::Pretty => format!(
            "q = {q}, n = {n}, tau = {:.6e}: {} after {} iterations, relative residual {:.3e}, max error {:.3e}\n",
            summary.tau,
            if summary.converged { "converged" } else { "NOT converged" },
            summary.iterations,
            summary.relative_residual,
            summary.max_error
        ),
    };
    emit(text, &a.out, stdout)?;
    if !report.converged {
        return Err(irk_precond::Error::NotConverged {
            iterations: report.iterations,
            residual: report.relative_residual,
        }
        .into());
    }
    Ok(())
}

fn spectrum(a: SpectrumArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let sys = build_system(a.stages.stages, a.grid.n_side, a.grid.bc, a.grid.tau_rule)?;
    let mode = match a.mode {
        Mode::Structured => SpectrumMode::Structured,
        Mode::Dense => SpectrumMode::DenseOracle,
    };
    let report = preconditioned_spectrum(&sys, mode)?;
    let text = match a.format {
        Format::Json => to_json(&report),
        Format::Csv => {
            let mut s = String::from("re,im,branch_index,mu\n");
            for (z, (branch, mu)) in report.eigenvalues.iter().zip(report.labels()) {
                let mu = mu.map(csv_num).unwrap_or_default();
                writeln!(s, "{},{},{branch},{mu}", csv_num(z.re), csv_num(z.im)).unwrap();
            }
            s
        }
        Format::Pretty => format!(
            "q = {}, n = {}, tau = {:.6e}, h = {:.6e}: {} eigenvalues, max |lambda - 1| = {:.6e}\n",
            report.q,
            report.n,
            report.tau,
            report.h,
            report.eigenvalues.len(),
            report.radius
        ),
    };
    emit(text, &a.out, stdout)
}

fn radius(a: RadiusArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let grid = MuGrid {
        lo: positive("mu-min", a.mu_min)?,
        hi: positive("mu-max", a.mu_max)?,
        points: a.points,
    };
    let est = radius_estimate(a.stages.stages, &grid)?;
    let text = match a.format {
        Format::Json => to_json(&json!({
            "q": a.stages.stages,
            "radius": est.radius,
            "mu_star": est.mu_star,
            "grid": grid,
        })),
        Format::Csv => format!("q,radius,mu_star\n{},{},{}\n", a.stages.stages, csv_num(est.radius), csv_num(est.mu_star)),
        Format::Pretty => format!(
            "q = {}: radius {:.10} at mu = {:.8}\n",
            a.stages.stages, est.radius, est.mu_star
        ),
    };
    emit(text, &a.out, stdout)
}

fn check_eps(eps: &[f64]) -> Result<(), CliError> {
    if eps.is_empty() {
        return Err(CliError::Usage("--eps needs at least one value".into()));
    }
    for &e in eps {
        positive("eps", e)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Test1Row {
    n_side: usize,
    dim: usize,
    h: f64,
    tau: f64,
    counts: Vec<irk_precond::spectrum::CountRow>,
}

fn test1(a: Test1Args, stdout: &mut dyn Write) -> Result<(), CliError> {
    check_eps(&a.eps)?;
    if a.n_side.is_empty() {
        return Err(CliError::Usage("--n-side needs at least one value".into()));
    }
    let mut table = Vec::new();
    for &n_side in &a.n_side {
        let sys = build_system(a.stages.stages, n_side, a.bc, a.tau_rule)?;
        let report = preconditioned_spectrum(&sys, SpectrumMode::Structured)?;
        table.push(Test1Row {
            n_side,
            dim: report.eigenvalues.len(),
            h: sys.ops.h,
            tau: sys.tau,
            counts: test1_counts(&report, &a.eps)?,
        });
    }
    let text = match a.format {
        Format::Json => to_json(&json!({
            "q": a.stages.stages,
            "bc": bc_name(a.bc),
            "tau_rule": a.tau_rule.to_string(),
            "rows": table,
        })),
        Format::Csv => {
            let mut s = String::from("dim,n_side,h,tau,eps,count,ratio\n");
            for row in &table {
                for c in &row.counts {
                    writeln!(
                        s,
                        "{},{},{},{},{},{},{}",
                        row.dim,
                        row.n_side,
                        csv_num(row.h),
                        csv_num(row.tau),
                        csv_num(c.eps),
                        c.count,
                        csv_num(c.ratio)
                    )
                    .unwrap();
                }
            }
            s
        }
        Format::Pretty => {
            let mut s = format!("{:>6} {:>8}", "dim", "h");
            for e in &a.eps {
                write!(s, " {:>8} {:>7}", format!("N({e})"), format!("r({e})")).unwrap();
            }
            s.push('\n');
            for row in &table {
                write!(s, "{:>6} {:>8.5}", row.dim, row.h).unwrap();
                for c in &row.counts {
                    write!(s, " {:>8} {:>7.4}", c.count, c.ratio).unwrap();
                }
                s.push('\n');
            }
            s
        }
    };
    emit(text, &a.out, stdout)
}

fn test2(a: Test2Args, stdout: &mut dyn Write) -> Result<(), CliError> {
    let sys = build_system(a.stages.stages, a.n_side, a.bc, a.tau_rule)?;
    let report = preconditioned_spectrum(&sys, SpectrumMode::Structured)?;
    let deviation = max_sorted_deviation(&report.e1, &report.e2)?;
    let text = match a.format {
        Format::Csv => {
            let mut s = String::from("index,E1,E2\n");
            for (i, (e1, e2)) in report.e1.iter().zip(&report.e2).enumerate() {
                writeln!(s, "{i},{},{}", csv_num(*e1), csv_num(*e2)).unwrap();
            }
            s
        }
        Format::Json => to_json(&json!({
            "q": report.q,
            "n": report.n,
            "h": report.h,
            "tau": report.tau,
            "max_deviation": deviation,
            "E1": report.e1,
            "E2": report.e2,
        })),
        Format::Pretty => format!(
            "q = {}, n = {}, tau = {:.6e}: max |E1 - E2| = {:.6e}\n",
            report.q, report.n, report.tau, deviation
        ),
    };
    emit(text, &a.out, stdout)?;
    if a.out.out.is_some() {
        writeln!(stdout, "max |E1 - E2| = {deviation:.6e}").map_err(io_err("writing output"))?;
    }
    Ok(())
}

fn distribution(a: DistributionArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    positive("eps", a.eps)?;
    if a.n_side.is_empty() {
        return Err(CliError::Usage("--n-side needs at least one value".into()));
    }
    let summary = distribution_check(a.stages.stages, &a.n_side, a.bc, a.tau_rule, a.eps)?;
    let text = match a.format {
        Format::Json => to_json(&summary),
        Format::Csv => {
            let mut s = String::from("n_side,n,h,tau,fraction_within_eps,max_deviation\n");
            for r in &summary.rows {
                writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    r.n_side,
                    r.n,
                    csv_num(r.h),
                    csv_num(r.tau),
                    csv_num(r.fraction_within_eps),
                    csv_num(r.max_deviation)
                )
                .unwrap();
            }
            s
        }
        Format::Pretty => {
            let mut s = format!(
                "q = {}, rule {}, eps = {}\n{:>6} {:>8} {:>12} {:>10} {:>12}\n",
                summary.q, summary.rule, summary.eps, "n_side", "n", "tau", "r(eps)", "max|E1-E2|"
            );
            for r in &summary.rows {
                writeln!(
                    s,
                    "{:>6} {:>8} {:>12.5e} {:>10.4} {:>12.4e}",
                    r.n_side, r.n, r.tau, r.fraction_within_eps, r.max_deviation
                )
                .unwrap();
            }
            writeln!(
                s,
                "fraction nondecreasing: {}, deviation decreasing: {}",
                summary.fraction_nondecreasing, summary.deviation_decreasing
            )
            .unwrap();
            s
        }
    };
    emit(text, &a.out, stdout)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_numbers_round_trip() {
        for v in [0.0, -1.5, 1.0 / 3.0, 6.02e23, 1e-300] {
            assert_eq!(csv_num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.txt");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"second");
    }

    #[test]
    fn atomic_write_into_missing_directory_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = write_atomic(&dir.path().join("missing/x.txt"), b"x").unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn eps_validation() {
        assert!(check_eps(&[]).is_err());
        assert!(check_eps(&[0.1, 0.0]).is_err());
        assert!(check_eps(&[0.2, 0.1]).is_ok());
    }
}
