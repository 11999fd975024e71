//! Numerical engine for non-autonomous 1D Schrödinger evolution with
//! time-dependent and moving point interactions.
//!
//! The crate is organised in five layers:
//!
//! * [`numkit`] — complex vectors, Hermitian banded (tridiagonal) operators,
//!   linear solves and a dense eigendecomposition oracle;
//! * [`hamiltonians`] — spatial grids, scalar profiles and assembly of the
//!   discretized operator families (static points, moving deltas, and the
//!   transformed-frame operator);
//! * [`propagator`] — unitary Cayley sub-stepping over piecewise-frozen
//!   Hamiltonians: forward, backward and bidirectional product-formula runs;
//! * [`transforms`] — grid realizations of shift, dilation and gauge
//!   unitaries and the lab-frame propagator assembled from the
//!   transformed-frame one;
//! * [`diagnostics`] — quantified verification: propagator axioms, stability
//!   constants, form-norm growth, equivalence constants, convergence studies
//!   and frame cross-validation.

pub mod diagnostics;
pub mod error;
pub mod hamiltonians;
pub mod numkit;
pub mod propagator;
pub mod transforms;

pub use error::{EngineError, Result};
