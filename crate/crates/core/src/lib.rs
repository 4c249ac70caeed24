//! Radau IIA stage systems and their lower-triangular Kronecker preconditioner.
//!
//! The crate builds the pieces bottom-up:
//!
//! - [`tableau`]: Radau IIA Butcher tableaux for `1 <= q <= 10` stages.
//! - [`factor`]: `A_q^{-1} = L U` with unit-diagonal `U`, and the real
//!   eigendecomposition `L = T Λ T^{-1}` used for stage-parallel solves.
//! - [`fem`]: Q1 mass and stiffness matrices on the unit square, their
//!   trigonometric symbols and the eigenvalues of `τ M^{-1} K`.
//! - [`kron`]: the transformed stage operator `A_q^{-1} ⊗ M + τ I ⊗ K` and
//!   the preconditioner `L ⊗ M + τ I ⊗ K`, both matrix-free.
//! - [`krylov`]: right-preconditioned GMRES and a Radau IIA time stepper.
//! - [`spectrum`]: the reduced `q x q` eigenproblem behind the spectrum of
//!   the preconditioned operator, cluster radii and eigenvalue statistics.

pub mod error;
pub mod factor;
pub mod fem;
pub mod kron;
pub mod krylov;
pub mod linalg;
pub mod spectrum;
pub mod tableau;
pub mod tau;

pub use error::{Error, Result};
pub use factor::TriangularFactorization;
pub use fem::{BoundaryMode, GridOperators};
pub use kron::{PreconditionerState, SolverKind, StageSystem};
pub use spectrum::SpectralReport;
pub use tableau::ButcherTableau;
pub use tau::TauRule;

/// Largest supported stage count.
pub const MAX_STAGES: usize = 10;
