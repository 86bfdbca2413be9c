//! Projection filters for continuously measured spin-J systems, and
//! feedback laws that stabilize a chosen `J_z` eigenstate using only the
//! low-dimensional filter.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod experiment;
pub mod family;
pub mod feedback;
pub mod filters;
pub mod linalg;
pub mod presets;
pub mod quantum;
pub mod sampling;
pub mod sde;

pub use error::{Error, Result};

/// Chapters of the guide under `book/src`, compiled so their snippets run as
/// doctests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/family.md")]
    mod family {}
    #[doc = include_str!("../../../book/src/projection.md")]
    mod projection {}
    #[doc = include_str!("../../../book/src/feedback.md")]
    mod feedback {}
    #[doc = include_str!("../../../book/src/stability.md")]
    mod stability {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
