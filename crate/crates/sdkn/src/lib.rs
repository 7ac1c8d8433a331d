//! Structured deep kernel networks.
//!
//! A structured deep kernel network alternates linear layers with kernel
//! activation layers. Each activation layer applies, per coordinate, a
//! one-dimensional kernel expansion whose second arguments are the network's
//! center points propagated through all preceding layers. The result is a
//! trainable deep architecture whose activation functions live in classical
//! reproducing-kernel function spaces.
//!
//! The crate is organized in four modules:
//!
//! - [`kernels`]: one-dimensional kernel families, Gram matrices, Taylor
//!   expansion diagnostics, and near-flat-limit interpolation with a
//!   numerically stable solver.
//! - [`network`]: layers, models, forward/backward passes, deep kernel
//!   evaluation, and text serialization.
//! - [`training`]: datasets, losses, regularization, SGD/Adam optimizers, and
//!   a deterministic training loop.
//! - [`constructions`]: assembling networks that reproduce polynomial maps
//!   (identity, squaring, products, monomials, full polynomials) from small
//!   near-flat kernel interpolation units, plus symmetric function
//!   decomposition and even profile fitting.

pub mod constructions;
pub mod kernels;
pub mod network;
pub mod training;

use thiserror::Error;

/// Errors produced by this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An input collection was empty where at least one element is required.
    #[error("empty input")]
    EmptyInput,
    /// Two dimensions that must agree do not.
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    /// A scalar or structural parameter is out of range; the message names it.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// A value that must be finite is NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    /// The operation requires a radial kernel family.
    #[error("kernel family {0} is not radial")]
    NonRadialKernel(&'static str),
    /// The kernel family lacks the even Taylor expansion terms required for a
    /// well-posed flat-limit interpolation on the given number of nodes.
    #[error("kernel family {family} is not admissible for flat-limit interpolation on {nodes} nodes")]
    InadmissibleKernel {
        /// Name of the offending family.
        family: &'static str,
        /// Number of interpolation nodes requested.
        nodes: usize,
    },
    /// A linear system could not be solved at working precision.
    #[error("singular system: {0}")]
    SingularSystem(String),
    /// A matrix is not representable as combinations of the given center
    /// evaluations; carries the relative residual of the best attempt.
    #[error("matrix not realizable from centers: relative residual {residual:.3e} exceeds {tolerance:.1e}")]
    NotRealizable {
        /// Relative Frobenius residual of the least-squares fit.
        residual: f64,
        /// Acceptance threshold the residual failed.
        tolerance: f64,
    },
    /// Propagated center values collided, so an interpolation unit would see
    /// coincident nodes.
    #[error("center values collide: {0}")]
    CenterCollision(String),
    /// A depth adjustment asked for fewer activation levels than the fragment
    /// already has.
    #[error("target depth {target} is below the current depth {current}")]
    DepthTooSmall {
        /// Activation levels already present.
        current: usize,
        /// Requested total activation levels.
        target: usize,
    },
    /// The training objective became NaN or infinite; training aborted.
    #[error("non-finite objective at epoch {epoch}")]
    NonFiniteObjective {
        /// Epoch (1-based) at which the objective degenerated.
        epoch: usize,
    },
    /// A data file could not be parsed; `line` is 1-based.
    #[error("data format error at line {line}: {message}")]
    DataFormat {
        /// Line number in the offending file.
        line: usize,
        /// Description of what failed to parse.
        message: String,
    },
    /// A serialized model could not be parsed.
    #[error("model format error: {0}")]
    ModelFormat(String),
    /// An underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Convenience result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
