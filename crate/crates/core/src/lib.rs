//! Hipster random walks and their partial differential equations.
//!
//! A hipster random walk is a random recursive function on the complete binary
//! tree: when the two children of a node carry equal values the node outputs that
//! value plus a random step, otherwise it outputs the value of a uniformly chosen
//! child. Under i.i.d. leaf inputs the law of the root value obeys an exact
//! one-step recurrence which is, up to mesh scaling, a monotone finite-difference
//! scheme for a degenerate convection-diffusion equation:
//!
//! * Bernoulli(q) steps give a discrete inviscid Burgers equation, and the root
//!   value rescaled by `(4qn)^{1/2}` converges to Beta(2,1);
//! * fair ±1 steps give a discrete porous medium equation, and
//!   `(36n)^{-1/3} G_n + 1/2` converges to Beta(2,2).
//!
//! Modules:
//!
//! * [`dist`]: integer distributions, density discretization, distances;
//! * [`evolution`]: exact evolution of the root law;
//! * [`rde`]: direct simulation and brute-force enumeration of the tree recursion;
//! * [`scheme`]: the explicit finite-difference scheme and its monotonicity;
//! * [`entropy`]: closed-form entropy solutions, entropy residuals and L¹ errors;
//! * [`coupling`]: one-step dominance couplings and their verification;
//! * [`explore`]: report-only studies of the min-plus tree and hierarchical lattice;
//! * [`io`]: CSV and JSON export.

pub mod coupling;
pub mod dist;
pub mod entropy;
mod error;
pub mod evolution;
pub mod explore;
pub mod io;
pub mod rde;
pub mod scheme;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
