//! Iterative data-adaptive RKHS regularization for linear inverse problems.
//!
//! The crate solves `A x + w = b` for ill-posed, matrix-free operators `A`.
//! The centerpiece is [`solver::idarr_solve`], which couples a generalized
//! Golub-Kahan bidiagonalization in the data-adaptive RKHS geometry
//! ([`ggkb`]) with an LSQR-style recursive update and early stopping.
//! Euclidean (IR-l2) and weighted-L2 (IR-L2) Krylov baselines as well as the
//! dense direct methods (DARTR and Tikhonov) live alongside it, and the
//! [`harness`] compares all of them on the same data.

pub mod error;
pub mod ggkb;
pub mod harness;
pub mod io;
pub mod linops;
pub mod oracle;
pub mod problems;
pub mod rkhs;
pub mod solver;
pub mod stats;
pub(crate) mod vector;

pub use error::{Error, Result};
pub use ggkb::{BidiagFactors, GgkbOptions, Metric, StepOutcome};
pub use linops::{DenseMap, DiagonalMap, LinearMap, PsfConvolutionMap};
pub use rkhs::{RkhsGeometry, SpectralDecomposition};
pub use solver::{SolveOutcome, SolveStatus, StopRule};
