//! Structural analysis, index reduction by embedding, and global numerical
//! solution of polynomially nonlinear integro-differential-algebraic systems.
//!
//! The pipeline: parse a system, build its signature matrices and offsets,
//! prolong, locate witness points on the constraint variety, regularize each
//! component by embedding until the top-block Jacobian has full rank, then
//! integrate with exact integral materialization and residual monitoring.

pub mod error;
pub mod expr;
pub mod integrate;
pub mod ire;
pub mod model;
pub mod numrank;
pub mod offsets;
pub mod parse;
pub mod pipeline;
pub mod prolong;
pub mod report;
pub mod selfcheck;
pub mod signature;
pub mod witness;

pub use error::{IdaeError, ParseError, Phase};
pub use expr::{Expr, JetVar, Rat, UnaryFn, VarKind};
pub use model::{IdaeEquation, IdaeSystem, IntegralTerm};
pub use parse::parse_system;
