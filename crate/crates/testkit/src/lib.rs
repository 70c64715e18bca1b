//! Generators and independent reference implementations for the test suites.
//!
//! Nothing here calls into the code under test except to build inputs and
//! compare outputs. Each oracle recomputes its answer from first principles.

pub mod grammar;
pub mod ssim_ref;
pub mod twin_gen;
pub mod twinql_oracle;
