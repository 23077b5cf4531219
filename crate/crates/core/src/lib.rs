//! Navigation of quantum control solution submanifolds.
//!
//! Two piecewise-constant control problems, a Landau-Zener qubit flip and
//! friction-less driving of a harmonic trap, are optimized and then moved
//! along their continuous solution sets. Motion follows directions projected
//! onto the null subspace of the cost Hessian, obtained either exactly or by
//! finite differences.

pub mod control;
pub mod error;
pub mod experiments;
pub mod landscape;
pub mod models;
pub mod navigation;
pub mod objectives;
pub mod optimizer;

pub use error::{Error, Result};
