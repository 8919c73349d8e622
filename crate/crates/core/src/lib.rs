//! Spatially correlated massive-MIMO channels: exponential ULA and Kronecker
//! UPA covariance models with large-scale fading variations over the array,
//! MMSE channel estimation under pilot contamination, and deterministic
//! parameter sweeps over both.

pub mod channel;
pub mod covmodel;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod rng;
pub mod scenarios;

pub use error::{Error, Result};

/// Order-preserving map, parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub(crate) fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T, U>(items: &[T], f: impl Fn(&T) -> U) -> Vec<U> {
    items.iter().map(f).collect()
}
