//! Transmission through Cantor-family barrier potentials under the
//! space-fractional Schrödinger equation.
//!
//! The core is generic over the scalar type via [`scalar::Scalar`]
//! (any `num_traits::Float` with the usual extras); the aliases below fix
//! `f64`, which all shipped tooling uses.

pub mod analysis;
pub mod error;
pub mod geometry;
pub mod oracle;
pub mod scalar;
pub mod scattering;

pub use error::{Error, Result};
pub use geometry::{HeightPolicy, PotentialFamily};
pub use scattering::Dispersion;

pub type PotentialSpec = geometry::PotentialSpec<f64>;
pub type SegmentLayout = geometry::SegmentLayout<f64>;
pub type WaveContext = scattering::WaveContext<f64>;
pub type TransferMatrix = scattering::TransferMatrix<f64>;
pub type ScatteringResult = scattering::ScatteringResult<f64>;
pub type ScanGrid = analysis::ScanGrid<f64>;
pub type ScanPoint = analysis::ScanPoint<f64>;
