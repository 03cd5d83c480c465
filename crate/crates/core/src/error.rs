use thiserror::Error;

use crate::tensors::Layout;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("angle index {index} out of range for {np} projections")]
    AngleIndex { index: usize, np: usize },

    #[error("projection stack is empty")]
    EmptyStack,

    #[error("dimensions {0:?} overflow the addressable size")]
    DimensionOverflow(Vec<usize>),

    #[error("data length {actual} does not match dimensions (expected {expected})")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("expected {expected:?} layout, found {found:?}")]
    LayoutMismatch { expected: Layout, found: Layout },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("sample ({x}, {y}) out of bounds for {rows}x{cols} grid")]
    OutOfBounds {
        x: f64,
        y: f64,
        rows: usize,
        cols: usize,
    },

    #[error("projection matrix {0} has non-finite coefficients")]
    NonFiniteMatrix(usize),

    #[error("symmetry kernels require an even nz, got {0}")]
    OddDepth(usize),

    #[error("nb must divide np (nb={nb}, np={np})")]
    BatchNotDivisor { nb: usize, np: usize },

    #[error("nb must lie in 1..=32, got {0}")]
    BatchRange(usize),

    #[error("variant {0} requires the natural-layout baseline entry point")]
    WrongEntryPoint(&'static str),

    #[error("unknown kernel variant {0:?}")]
    UnknownVariant(String),

    #[error("invalid phantom: {0}")]
    Phantom(String),

    #[error("non-positive timing {0}")]
    NonPositiveTime(f64),

    #[error("{0}")]
    Bench(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
