//! Condition numbers of constant-rank elimination problems.
//!
//! A constant-rank elimination problem is a system `F(x, y, z) = c` solved
//! for an output `y` given an input `x`, where a latent `z` must exist but
//! is not reported. Near a solution where the ranks of `DF`, `d(y,z)F` and
//! `dzF` are locally constant, `y` is a smooth function of `x` and its
//! condition number is the norm of that function's derivative.
//!
//! - [`numla`]: rank decisions, subspace bases, minimum-norm solves.
//! - [`crep`]: the problem abstraction, rank certificates, the solution-map
//!   derivative and the condition numbers.
//! - [`oracle`]: nonlinear resolves, finite differences and empirical
//!   condition estimates.
//! - [`tensor`]: flattenings, multilinear multiplication, HOSVD and tangent
//!   spaces.
//! - [`tucker`]: the Tucker decomposition problem and its closed forms.
//! - [`verify`]: the acceptance checks, runnable as a suite.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crep;
pub mod instances;
pub mod numla;
pub mod oracle;
pub mod problems;
pub mod tensor;
pub mod tucker;
pub mod verify;

pub use crep::{
    condition_numbers, AnalysisOptions, ConditionReport, CrepError, CrepPoint, CrepProblem,
    JacobianBlocks, Kappas, RankCertificate, Role, TangentChart,
};
pub use numla::{RealMatrix, RealVector};
pub use tensor::{DenseTensor, TuckerPoint};
