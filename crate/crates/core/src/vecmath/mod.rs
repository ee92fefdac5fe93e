//! Dense vector arithmetic and reproducible random streams.

mod rng;
mod vector;

pub use rng::{Purpose, RngStream};
pub use vector::{axpy, l2_norm_sq, mean_of, mix, ParamVector};
