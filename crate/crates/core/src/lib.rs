//! Lower bounds on the quantum Fisher information (QFI) of a state `rho`
//! with respect to a generator `H`.
//!
//! The crate computes two hierarchies of lower bounds, both exactly from a
//! known density matrix and statistically from simulated randomized-Pauli
//! classical shadows:
//!
//! * **Krylov bounds** `B_n`: the squared `rho`-weighted norm of the best
//!   approximation to the symmetric logarithmic derivative inside the `n`-th
//!   Krylov subspace of `R_rho(X) = (rho X + X rho) / 2` started at
//!   `i[rho, H]`. They increase strictly with `n` and reach the QFI exactly at
//!   the termination order `n*`.
//! * **Taylor bounds**: truncations of the geometric series of the QFI's
//!   spectral weight, polynomial in `rho`.
//!
//! Module map:
//!
//! * [`qcore`]: states, observables, eigendecomposition, the weighted inner
//!   product and the transition table every spectral sum is built from.
//! * [`exact`]: the QFI, the SLD and `n* = |S| - |J|`.
//! * [`bounds`]: moments, Krylov and Taylor bounds, the condition number and
//!   the exponential convergence envelope.
//! * [`shadows`]: shadow sampling, batch shadows and U-statistic estimators.
//! * [`ensembles`]: seeded random states.
//! * [`experiments`]: the seeded experiment drivers behind the CLI.
//! * [`io`]: matrix and shadow-count file formats.
//!
//! Runnable walk-throughs live in `examples/` (`cargo run --release --example <name>`).

pub mod bounds;
pub mod ensembles;
pub mod error;
pub mod exact;
pub mod experiments;
pub mod io;
pub mod numeric;
pub mod qcore;
pub mod shadows;

pub use error::{Error, Result};
