//! Lower bounds on matrix factorization ranks via moment relaxations.
//!
//! This crate builds semidefinite relaxations whose optimal values bound four
//! factorization ranks of a nonnegative matrix from below: the completely
//! positive semidefinite rank, the completely positive rank, the nonnegative
//! rank, and the positive semidefinite rank. A companion nuclear-norm style
//! relaxation bounds the nonnegative nuclear norm.
//!
//! Modules, bottom up:
//!
//! * [`polyalg`] — words, monomials, canonical forms, enumeration.
//! * [`momentmodel`] — moment tables and the affine blocks/rows of a
//!   relaxation (moment, localizing, bilinear, tensor; ideal and scalar
//!   positivity constraints).
//! * [`sdpcore`] — a deterministic primal-dual interior-point solver, sparse
//!   SDPA export/import, moment-matrix extraction, and flatness reports.
//! * [`instances`] — named matrix families, file loading, integrity checks,
//!   and simple transforms.
//! * [`hierarchies`] — assembly of the bound programs and their variants,
//!   closed-form and SOS baselines, and the solve-and-report entry point.

pub mod hierarchies;
pub mod instances;
pub mod momentmodel;
pub mod polyalg;
pub mod sdpcore;

pub use hierarchies::{BoundKind, BoundRequest, BoundResult, RequestOptions, Variants};
pub use momentmodel::{AffExpr, AffineBlock, LinearRow, MomentTable, Polynomial, RowSense};
pub use polyalg::{CMonomial, EquivalenceMode, NCWord};
pub use sdpcore::{FlatnessReport, SDPProblem, SDPSolution, SolveOptions, SolveStatus};
