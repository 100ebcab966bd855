//! Line-source scattering by 2-D dielectric cylinders: exact series,
//! continuous equivalent-current densities, and the discrete null-field and
//! auxiliary-source solvers with their diagnostics.

pub mod continuous;
pub mod diagnostics;
pub mod discrete;
pub mod error;
pub mod exact;
pub mod fields;
pub mod geometry;
pub mod linalg;
pub mod specfun;
pub mod validation;

pub use error::{Error, Result};
