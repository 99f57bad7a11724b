//! Differentiable operations. Each op computes its forward value eagerly and
//! records a closure producing parent gradients.

mod basic;
mod conv;
mod linalg;
mod loss;
mod norm;
mod pool;

pub use conv::{conv2d_output_size, conv_transpose2d_output_size};
pub use norm::BatchNormStats;
pub use pool::adaptive_region;

use crate::error::{Error, Result};

pub(crate) fn check_dim(op: &'static str, axis: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            op,
            axis,
            expected,
            got,
        })
    }
}
