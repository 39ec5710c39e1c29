//! Semiclassical propagation of Hagedorn wavepackets with an optimally
//! truncated hierarchy of correction coefficients.

pub mod basis;
pub mod classical;
pub mod error;
pub mod fit;
pub mod grid;
pub mod hierarchy;
pub mod linalg;
pub mod multiindex;
pub mod ode;
pub mod oracle;
pub mod potential;
pub mod scattering;
pub mod truncation;
pub mod validate;

pub use error::{Error, Result};
