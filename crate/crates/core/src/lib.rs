//! Numerics for virtual photon subtraction in coherent-state CV-QKD.
//!
//! The crate is `no_std` (it needs `alloc`) and covers the whole numerical
//! pipeline:
//!
//! * [`gaussian`]: two-mode covariance algebra, the lossy noisy channel and
//!   the reverse-reconciliation key rate with homodyne detection at Bob.
//! * [`subtraction`]: closed forms for k-photon and on-off subtraction on a
//!   split two-mode squeezed vacuum, including detector inefficiency.
//! * [`fock`]: a truncated Fock-basis oracle that builds the same states
//!   literally and conditions them on photon counts.
//! * [`analysis`]: end-to-end rate evaluation, beamsplitter optimisation,
//!   tolerable-noise search and distance sweeps.
//! * [`montecarlo`]: prepare-and-measure simulation with postselection.
//! * [`reconciliation`]: eight-dimensional reconciliation with LDPC
//!   syndrome decoding.
//!
//! File formats, parallel sweeps and the command-line front end live in the
//! `vpsub` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
mod error;
pub mod fock;
pub mod gaussian;
pub mod math;
pub mod montecarlo;
pub mod reconciliation;
pub mod subtraction;

pub use error::{Error, Result};
pub use gaussian::{ChannelSpec, KeyRateReport, TwoModeCovariance};
pub use subtraction::{Scheme, SourceSpec, SubtractionReport};
