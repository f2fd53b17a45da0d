//! Closed-form value-function proxies for multi-asset market making.
//!
//! The crate builds the quadratic proxy `θ̌(t,q) = −qᵀA(t)q − qᵀB(t) − C(t)`
//! from a market specification, solves the exact inventory-lattice
//! equation for small problems, estimates the first-order correction by
//! Monte Carlo, derives quotes, and simulates strategies.

pub mod closedform;
pub mod error;
pub mod exact;
pub mod hamiltonian;
pub mod linalg;
pub mod mc;
pub mod model;
pub mod quotes;
pub(crate) mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use model::{CheckedSpec, MarketSpec, Objective, Side};
