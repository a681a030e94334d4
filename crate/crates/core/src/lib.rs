//! Downlink multi-user MIMO precoding: block diagonalization, coordinated
//! transmit/receive beamforming and adaptive per-user stream selection,
//! with a Monte-Carlo BER harness.

pub mod channel;
pub mod detection;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod precoding;
pub mod selection;

pub use error::{Error, Result};
pub use kernels::ComplexMatrix;
