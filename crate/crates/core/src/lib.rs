//! Certification toolkit for spatial mixing of the hard-core model on
//! multi-type branching trees built from self-avoiding walks on the square lattice.

pub mod branching;
pub mod certify;
pub mod error;
pub mod lattice_walks;
pub mod rational;
pub mod recurrence;
pub mod ssm_lp;

pub use error::{Error, Result};
