//! Numerical model of a folded fiber interferometer that encodes oracle
//! queries in photon arrival times and answers Deutsch-Jozsa and
//! Bernstein-Vazirani instances in a single optical query.
//!
//! The crate is organized bottom-up:
//!
//! * [`timebin`] — sparse time-bin amplitude states and bit-string labels.
//! * [`components`] — couplers, unbalanced interferometer stages, mirror.
//! * [`oracles`] — boolean oracle tables, the linear (parity) family, and
//!   the truth-table text format.
//! * [`experiment`] — the assembled setup: forward split pass, modulator,
//!   return pass, bin bookkeeping, loss budget, and configuration checks.
//! * [`reference`] — the abstract gate-model the optics must reproduce, plus
//!   classical query baselines.
//! * [`detection`] — photon counting: source/detector models, Monte Carlo
//!   histograms, and the pairwise visibility estimator.
//! * [`presets`] — named parameter bundles (`ideal`, `realistic`).
//!
//! Every stochastic routine takes an explicit seed and produces identical
//! results for identical inputs, independent of scheduling.

pub mod components;
pub mod detection;
pub mod error;
pub mod experiment;
pub mod oracles;
pub mod presets;
pub mod reference;
pub mod timebin;

pub use error::{Error, Result};
pub use experiment::ExperimentConfig;
pub use oracles::OracleSpec;
pub use timebin::BitString;
