//! Simulation and verification of competitive exclusion in the n-species chemostat.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificate;
pub mod cli;
pub mod dynamics;
pub mod growth;
pub mod integrate;
pub mod scenario;
pub mod verify;

pub use certificate::{build_certificate, Certificate, CertificateOptions};
pub use dynamics::{Chemostat, ChemostatParams, State};
pub use growth::{break_even, order_species, BreakEven, GrowthFunction};
pub use integrate::{simulate, IntegratorSettings, Trajectory};
pub use scenario::{parse_scenario, Scenario};
pub use verify::{run_report, VerificationReport};
