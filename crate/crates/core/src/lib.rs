//! Finite marked metric measure spaces.
//!
//! An mmm-space is a metric space `(X, r)` together with a probability
//! measure on `X × I`, where `I` is a fixed mark space. Two spaces are
//! identified when a measure- and mark-preserving isometry maps one onto the
//! other, and such a class is determined by its marked distance matrix
//! distribution: the joint law of pairwise distances and marks of an i.i.d.
//! sample. This crate works with finite-support representatives and provides
//!
//! - [`space`]: the data model, validation, canonical forms, exact equivalence
//! - [`dmat`]: sampling and exact enumeration of distance matrix laws
//! - [`poly`]: polynomials `x ↦ E[φ(distances, marks)]`, products and panels
//! - [`prohorov`]: exact Prohorov distance on finite metric spaces
//! - [`mgp`]: bounds and exact values of the marked Gromov-Prohorov distance
//! - [`compact`]: tightness and relative-compactness diagnostics
//! - [`gen`]: Kingman, Moran and Gaussian-cloud generators
//! - [`stats`]: two-sample equality tests and convergence tables
//!
//! Randomness is always passed in as an explicit `u64` seed; see
//! [`numeric::stream_rng`] for the stream-splitting rule.

// `!(x >= 0.0)` also rejects NaN; index loops read better in the matrix code.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::too_many_arguments
)]

pub mod compact;
pub mod dmat;
pub mod error;
pub mod gen;
pub mod io;
pub mod matrix;
pub mod mgp;
pub mod numeric;
pub mod poly;
pub mod prohorov;
pub mod space;
pub mod stats;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use matrix::Matrix;
pub use space::{FiniteMmmSpace, Mark, MarkSpace};
