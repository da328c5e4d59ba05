//! Exact and sampled verification of higher-order concentration inequalities
//! on weakly dependent finite systems.
//!
//! Small systems are enumerated exactly: measures are tabulated, difference
//! operators and functionals are evaluated state by state, and constants are
//! obtained from eigenproblems or certified pipelines. Larger systems are
//! explored by Markov chain sampling with deterministic per-chain streams.

pub mod chaos;
pub mod diff;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod functionals;
pub mod ising;
pub mod num;
pub mod space;
pub mod tensorization;

pub use error::{Error, Result};
pub use ising::{CertificateReport, IsingModel};
pub use space::{IndexFamily, SpaceKind, StateSpace, TabulatedMeasure};
