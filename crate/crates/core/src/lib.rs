//! Simulation laboratory for continuous semimartingales whose finite-variation
//! part lives on their zero set.
//!
//! Everything is built on uniform time grids and seed-addressed random
//! streams, so every number produced by this crate is a pure function of its
//! inputs. The modules mirror the layers of the computation:
//!
//! * [`pathgen`]: Brownian, reflected and drawdown paths, and ensembles.
//! * [`excursion`]: zero sets, excursion intervals, last zeros, sign processes.
//! * [`stochcalc`]: left-point integrals, quadratic variation, local-time
//!   estimators and the Tanaka / balayage identity checkers.
//! * [`sigma`]: class-(Σ) constructions and their verifiers.
//! * [`estimates`]: exceedance laws, stopping boundaries, the Azéma
//!   submartingale and nested Monte Carlo representation checks.
//! * [`cli`]: experiment configuration, suites and reports.

pub mod cli;
pub mod error;
pub mod estimates;
pub mod excursion;
pub mod io;
pub mod path;
pub mod pathgen;
pub mod report;
pub mod seed;
pub mod sigma;
pub mod stats;
pub mod stochcalc;

pub use error::{LabError, Result};
pub use path::{DecomposedPath, Path, TimeGrid};
pub use seed::SeedSpec;
