//! Frame-level video anomaly detection by distilling object-level teachers
//! into a fast convolutional-transformer student.

pub mod checkpoint;
pub mod distill;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod rng;
pub mod synthvid;
pub mod teachers;
pub mod tensor;

pub use error::{Error, Result};
