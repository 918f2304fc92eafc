//! memkern simulates open quantum systems whose reduced dynamics obeys an
//! exact, closed memory-kernel master equation, and certifies that every
//! route to that dynamics agrees.
//!
//! A system S couples coherently to a memory M while M sits in a Markovian
//! bath whose jump operators are built from the spectral decomposition of a
//! fixed memory state η_M (the swap class). For this class the partial
//! trace over M is exact: the reduced state of S solves a closed
//! integro-differential equation with exponential memory. The crate
//! implements that dynamics along independent routes —
//!
//! * integrating the bipartite Lindblad equation and tracing out M,
//! * the discrete memory-kernel recursion and its quadrature counterpart,
//! * a damped convolution series for the dynamical map,
//! * two collision models (an ancilla chain with probabilistic
//!   inter-ancilla swaps, and a memoryless bipartite model),
//! * resolvents in the Laplace domain inverted on a Talbot contour —
//!
//! and ships a comparison harness plus Choi-matrix CPTP certification to
//! verify their mutual agreement.
//!
//! See the book under `book/` for a guided tour, and the `memkern` binary
//! for the config-driven scenario runner.

pub mod cli;
pub mod collision;
pub mod error;
pub mod kernel;
pub mod laplace;
pub mod liouville;
pub mod models;
pub mod qmat;
pub mod verify;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use qmat::{CMat, CVec, DensityMatrix, HermitianOperator, StateTol, TimeGrid};
