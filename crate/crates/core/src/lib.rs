//! Volume-preserving curvature flow of radial graphs in warped products
//! `φ(ρ)² g_{Sⁿ} + dρ²`: warping functions, the flow discretized in the
//! radial variable ρ and in the transformed variable γ, geometric and
//! modulus-of-continuity diagnostics, and explicit blow-up constructions.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blowup;
pub mod diagnostics;
mod error;
pub mod flow;
pub mod quadrature;
pub mod warp;

pub use error::{Error, Result};
pub use warp::{check_condition2, GammaTransform, Interval, WarpFunction, WarpKind};

/// Maps `f` over `items`, in parallel when the `parallel` feature is on.
/// Output order always matches input order.
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
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
