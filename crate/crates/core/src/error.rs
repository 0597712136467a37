//! Error type shared by every module.

use alloc::string::String;
use core::fmt;

/// All failure modes of the toolkit.
///
/// Domain errors carry enough context to be actionable from a CLI message;
/// they are not meant to be matched on payload.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A correlation input had zero variance.
    ConstantInput,
    /// Paired vectors differ in length.
    LengthMismatch { left: usize, right: usize },
    /// Maps or operands differ in grid dimensions.
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    /// A parameter was outside its documented range.
    InvalidParam(&'static str),
    /// Capture alignment could not find a trustworthy offset.
    AlignmentFailed { image: usize, best_ncc: f64 },
    /// Light directions do not span 3D; per-pixel least squares is singular.
    RankDeficientLights,
    /// A capture still carries unresolved misalignment metadata.
    NotAligned,
    /// Enrollment id already present in the store.
    DuplicateId(String),
    /// Lookup id absent from the store.
    UnknownId(String),
    /// Verification attempted against an empty store.
    EmptyStore,
    /// Persistence layer failed (IO, corrupt file, ...).
    StorageFailure(String),
    /// Attack strength outside (0, 1).
    InvalidStrength(f64),
    /// Not enough samples to fit a model.
    InsufficientData { have: usize, need: usize },
    /// Evaluation budget exhausted before the goal was reached.
    BudgetExhausted,
    /// Simplex collapsed and the jittered restart collapsed too.
    DegenerateSimplex,
    /// Collision query outside its domain.
    InvalidQuery(&'static str),
    /// Monte-Carlo settings would produce too few hits to estimate from.
    InfeasibleEstimate { expected_hits: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ConstantInput => write!(f, "correlation input has zero variance"),
            Error::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
            Error::DimensionMismatch { expected, got } => write!(
                f,
                "dimension mismatch: expected {}x{}, got {}x{}",
                expected.0, expected.1, got.0, got.1
            ),
            Error::InvalidParam(what) => write!(f, "invalid parameter: {what}"),
            Error::AlignmentFailed { image, best_ncc } => write!(
                f,
                "alignment failed on image {image}: best NCC {best_ncc:.3} below threshold"
            ),
            Error::RankDeficientLights => {
                write!(f, "light directions do not span 3D (rank < 3)")
            }
            Error::NotAligned => write!(f, "capture carries unresolved misalignment"),
            Error::DuplicateId(id) => write!(f, "id already enrolled: {id}"),
            Error::UnknownId(id) => write!(f, "unknown id: {id}"),
            Error::EmptyStore => write!(f, "store has no enrolled templates"),
            Error::StorageFailure(why) => write!(f, "storage failure: {why}"),
            Error::InvalidStrength(s) => {
                write!(f, "attack strength {s} outside (0, 1)")
            }
            Error::InsufficientData { have, need } => {
                write!(f, "insufficient data: have {have}, need at least {need}")
            }
            Error::BudgetExhausted => write!(f, "evaluation budget exhausted"),
            Error::DegenerateSimplex => {
                write!(f, "simplex degenerated twice; optimization aborted")
            }
            Error::InvalidQuery(what) => write!(f, "invalid collision query: {what}"),
            Error::InfeasibleEstimate { expected_hits } => write!(
                f,
                "Monte-Carlo estimate infeasible: expected hits {expected_hits:.2} < 10"
            ),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
