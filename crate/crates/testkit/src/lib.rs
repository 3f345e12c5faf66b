//! Shared fixtures and independent numerical oracles for the test suites.
//!
//! Nothing here calls into the solver or the constraint builder of the core crate;
//! the oracles recompute the same quantities from first principles.

pub mod barrier;
pub mod dense;
pub mod fixtures;
pub mod numeric;
