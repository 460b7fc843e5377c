//! Near-field microwave imaging from modulated-signal observations.
//!
//! The library covers the full chain at desk scale:
//!
//! - a Born-approximation forward model with dipole illumination and a fixed
//!   reference antenna ([`forward`]),
//! - an OFDM transmit/receive chain that turns I/Q records into per-subcarrier
//!   harmonics ([`ofdm`]),
//! - plane-wave-spectrum source representations with the single-level fast
//!   multipole translation operator ([`pws`]),
//! - reference normalization, background subtraction, and a matrix-free
//!   conjugate-gradient inverse source solver ([`solver`]),
//! - per-frequency image generation, phase/magnitude corrections,
//!   multi-frequency fusion, and MIP display projections ([`imaging`]),
//! - binary containers for datasets, spectra, and image volumes ([`io`]).

pub mod error;
pub mod forward;
pub mod imaging;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod ofdm;
pub mod pws;
pub mod solver;
pub mod specfun;

pub use error::CoreError;
pub use linalg::{CVec3, Vec3};

/// Speed of light in vacuum (m/s).
pub const C0: f64 = 299_792_458.0;

/// Free-space wavenumber k = 2πf/c0 in rad/m.
pub fn wavenumber(frequency_hz: f64) -> f64 {
    2.0 * std::f64::consts::PI * frequency_hz / C0
}
