//! Relaxation of a two-spin-1/2 density matrix in liquids.
//!
//! The library covers the product-operator algebra of the spin pair, analytic
//! Redfield rates with cross-correlations and slow J-fields, closed-form
//! relaxation propagation, executable pulse-sequence programs (Bell
//! pseudo-pure-state preparation, inversion recovery, NOE, CPMG readout),
//! spectral readout and tomography, rate fitting, and two independent
//! validators: a stochastic Monte Carlo simulation and an operator-level
//! reconstruction of the relaxation superoperator.

// `!(x > 0.0)` deliberately rejects NaN; index loops mirror the matrix algebra.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod constants;
pub mod dynamics;
pub mod error;
pub mod fitting;
pub mod measure;
pub mod oracle;
pub mod redfield;
pub mod sequences;
pub mod series;
pub mod spinops;

pub use error::{Error, Result};
