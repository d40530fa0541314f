//! Space-time coarse-graining of compressible flow fields: filtered energy
//! and entropy budgets, Besov-regularity diagnostics, and the shock
//! solutions used to validate them.

pub mod besov;
pub mod budgets;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod fields;
pub mod filter;
pub mod io;
pub mod jet;
pub mod report;
pub mod solver;
pub mod thermo;

pub use error::{Error, Result};
