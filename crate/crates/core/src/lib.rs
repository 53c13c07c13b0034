//! Desk-scale simulator and analysis toolkit for energy-time-entanglement
//! storage experiments built around an atomic-frequency-comb (AFC) optical
//! memory.
//!
//! The crate is organized in two layers that are checked against each other:
//!
//! * an analytic layer ([`qstate`], [`protocol`], [`afc`]) with exact
//!   two-qubit linear algebra, the Bell-test protocol algebra, and a linear
//!   spectral-filter model of the memory, and
//! * a stochastic event layer ([`montecarlo`], [`coincidence`]) that
//!   generates detector timestamp streams pair by pair and recovers the
//!   statistics (g² cross-correlation, fringe visibility, CHSH correlators)
//!   with Poissonian error propagation.
//!
//! [`experiments`] wires both layers into reproducible scenario runs.

pub mod afc;
pub mod coincidence;
pub mod experiments;
pub mod montecarlo;
pub mod protocol;
pub mod qstate;
pub mod report;
pub mod units;
