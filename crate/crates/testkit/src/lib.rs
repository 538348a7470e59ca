//! Test support shared by the crates' integration suites and the acceptance
//! harness. Nothing here is used by the shipped binaries.

pub mod fuzz;
pub mod leaks;
pub mod oracle;
pub mod wire;
