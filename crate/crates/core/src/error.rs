use thiserror::Error;

/// Errors raised by the special functions, geometry, series and solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{func}: argument {arg} is outside the domain (finite, > 0 required)")]
    Domain { func: &'static str, arg: f64 },

    #[error("Y_{order}({arg}) exceeds the floating-point range")]
    Overflow { order: i64, arg: f64 },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("observation point within {distance:e} of a line source")]
    Singular { distance: f64 },

    #[error("observation point lies in region {found}, expected region {expected}")]
    RegionMismatch { expected: u8, found: u8 },

    #[error("series did not converge after {terms} terms (tail estimate {tail:e})")]
    Truncation { terms: usize, tail: f64 },

    #[error("mode {mode}: denominator {magnitude:e} is numerically zero")]
    DegenerateMode { mode: i64, magnitude: f64 },

    #[error("block {block} is not circulant (max deviation {deviation:e})")]
    NotCirculant { block: &'static str, deviation: f64 },

    #[error("matrix is singular to working precision (pivot {pivot} of {size})")]
    SingularMatrix { pivot: usize, size: usize },

    #[error("assembly of {block} failed at entry ({row}, {col}): {source}")]
    Assembly {
        block: &'static str,
        row: usize,
        col: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{0} polarization has no solver; map it through duality first")]
    Unsupported(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
