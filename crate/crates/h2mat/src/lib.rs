//! Rank-structured matrices with nested cluster bases.
//!
//! The crate implements hierarchical matrices whose admissible blocks share
//! per-cluster bases (leaf matrices plus transfer matrices), together with
//! the algebra needed to use them as black-box preconditioners:
//!
//! * cluster trees and admissibility-driven block trees ([`cluster`],
//!   [`block`]),
//! * basis recompression driven by weight matrices ([`compression`]),
//! * global and local low-rank updates ([`update`]),
//! * matrix multiplication, triangular solves, LR/Cholesky factorization and
//!   inversion built on those updates ([`arithmetic`]),
//! * model problems (2D Poisson finite elements, single layer potential on
//!   the circle), a preconditioned CG solver, and a benchmark driver
//!   ([`problems`], [`solver`], [`bench`]).
//!
//! Dense reference implementations used for cross-checking live in
//! [`oracle`]; they share no code with the structured kernels.

pub mod arithmetic;
pub mod basis;
pub mod bench;
pub mod block;
pub mod cluster;
pub mod compression;
pub mod dense;
pub mod error;
pub mod h2;
pub mod oracle;
pub mod problems;
pub mod solver;
pub mod update;

pub use dense::{DenseMatrix, DenseVector, TruncationControl};
pub use error::{Error, Result};
