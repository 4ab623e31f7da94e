//! Heterogeneous-firm general-equilibrium model of bribery and technology
//! choice.
//!
//! The crate covers the full pipeline: ingesting firm-level survey data,
//! classifying firms into modern and traditional technologies, estimating
//! production parameters, calibrating country-specific economies, solving
//! stationary equilibria, and running counterfactual policy scenarios with
//! an intensive/extensive margin decomposition.

// `!(x > 0.0)`-style guards deliberately reject NaN alongside the stated
// bound; index loops in the small linear-algebra kernels mirror the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod calibration;
pub mod counterfactual;
pub mod dist;
pub mod equilibrium;
pub mod error;
pub mod estimation;
pub mod firmdata;
pub mod pipeline;

pub use error::{Error, Result};

/// Maps `f` over `items`, in parallel when the `parallel` feature is on.
pub fn map_batch<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Sequential variant of [`map_batch`], kept available regardless of
/// features so benchmarks can compare the two code paths.
pub fn map_batch_sequential<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}
