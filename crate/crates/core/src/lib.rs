//! Dynamic operating envelope (DOE) optimization for distributed energy
//! resources on radial distribution feeders.
//!
//! The crate is `no_std` (it needs `alloc`) and carries every numerical piece
//! of the pipeline:
//!
//! - [`grid`]: radial feeder model and an exact DistFlow power-flow solver
//!   used as ground truth.
//! - [`snapshot`]: reproducible generation and splitting of labeled
//!   power-flow datasets.
//! - [`icnn`]: input-convex and plain ReLU networks, training with a
//!   non-negativity projection, violation heads, metrics and LP-based exact
//!   inference.
//! - [`lp`]: a bounded-variable revised simplex solver.
//! - [`milp`]: interval bound propagation, big-M ReLU encoding and
//!   branch-and-bound.
//! - [`doe`]: DOE instance builders for the five solution methods
//!   (pass-through, ICNN-LP, ICNN-MILP, LinDistFlow, MLP-MILP) and
//!   verification against the power-flow oracle.
//!
//! File formats, persistence, timing and the command line live in the `doe`
//! companion crate.

#![no_std]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(any(test, feature = "oracles"))]
extern crate std;

pub mod clock;
pub mod doe;
pub mod grid;
pub mod icnn;
pub mod lp;
pub(crate) mod math;
pub mod milp;
pub mod snapshot;

#[cfg(any(test, feature = "oracles"))]
pub mod oracles;

pub use clock::{Clock, NoClock};
pub use math::Matrix;
