//! Best-possible no-arbitrage bounds on option prices.
//!
//! Given observed call (and basket) prices and no model for the underlying
//! price dynamics, the price of an option with a continuous piecewise-linear
//! payoff is pinned down only up to an interval. This crate computes that
//! interval exactly by reducing each variant of the problem to a linear
//! program over discrete martingale measures:
//!
//! * [`bounds1d`] — one asset, multiple maturities;
//! * [`bounds2d`] — two assets, exact path-indexed LP and an ε-lattice
//!   approximation;
//! * [`basket`] — single-period basket options via hyperplane-arrangement
//!   vertex enumeration.
//!
//! Supporting machinery: [`quotes`] (ingestion and normalization to the
//! zero-rate canonical form), [`psi`] (the call-price transform of atomic
//! laws and its inverse), [`arbitrage`] (convex-hull consistency checks and
//! witness construction) and [`lp`] (the solver facade).

pub mod arbitrage;
pub mod basket;
pub mod bounds1d;
pub mod bounds2d;
pub mod error;
pub mod lp;
pub mod psi;
pub mod quotes;
pub mod report;

pub use error::Error;

/// Default tolerance for data validation comparisons.
pub const VALIDATION_TOL: f64 = 1e-9;
/// Tolerance for atom weights and locations in distributions.
pub const ATOM_TOL: f64 = 1e-12;
/// Default LP feasibility tolerance.
pub const FEASIBILITY_TOL: f64 = 1e-7;
