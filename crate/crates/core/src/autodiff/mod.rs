//! Dense 2-D arrays with tape-based reverse-mode differentiation.
//!
//! Shapes never broadcast, except for [`Tape::add_bias_row`]; any other
//! mismatch is reported as [`AdError::ShapeMismatch`].

mod array;
mod checkpoint;
mod gradcheck;
mod optim;
mod tape;

pub use array::Array2D;
pub use checkpoint::{Checkpoint, MAGIC as CHECKPOINT_MAGIC, VERSION as CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, GradCheckEntry, GradCheckReport};
pub use optim::Adam;
pub use tape::{CustomOp, Gradients, ParamId, ParamStore, Tape, Var};

pub(crate) use tape::sigmoid;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AdError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{op}: range {start}..{end} out of bounds for shape {shape:?}")]
    OutOfRange {
        op: &'static str,
        shape: (usize, usize),
        start: usize,
        end: usize,
    },
    #[error("backward needs a 1x1 loss, got {0:?}")]
    NotScalar((usize, usize)),
    #[error("finite-difference step {0} outside [1e-7, 1e-3]")]
    BadEps(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
