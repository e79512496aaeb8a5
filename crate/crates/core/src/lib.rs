//! Single-loop primal-dual first-order method for
//!
//! ```text
//! min_x  f(x) + h(x) + H(g(x))
//! ```
//!
//! with `f` smooth, `h` and `H` proximable and `g` a smooth map whose coupling
//! `<y, g(x)>` is convex for every `y` in the domain of `H*`.
//!
//! The crate is organised bottom-up:
//!
//! * [`problem`] describes a problem and its constants,
//! * [`prox`] holds proximal maps and projections,
//! * [`schedule`] generates the per-iteration parameters of the four variants,
//! * [`solver`] runs the iteration,
//! * [`metrics`] evaluates residuals, gaps and the rate certificates,
//! * [`instances`] builds test problems with solution oracles,
//! * [`runner`] drives config-based experiments and writes CSV traces.
//!
//! ```
//! use slpd::instances::build_max_toy;
//! use slpd::schedule::{ScheduleParams, Variant};
//! use slpd::solver::{run, RunOptions};
//! use slpd::problem::Vector;
//!
//! let prob = build_max_toy();
//! let params = ScheduleParams::new(Variant::ErgodicConvex);
//! let x0 = Vector::from_element(1, 1.0);
//! let y0 = Vector::zeros(2);
//! let result = run(&prob, &params, &x0, &y0, &RunOptions::new(200), |_, _| {}).unwrap();
//! assert!(result.trace.last().unwrap().primal_residual.unwrap() < 0.05);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exec;
pub mod instances;
pub mod metrics;
pub mod problem;
pub mod prox;
pub mod runner;
pub mod schedule;
pub mod solver;

pub use error::{Error, Result};
pub use exec::Execution;
pub use problem::{CompositeProblem, Matrix, Vector};
pub use schedule::{Schedule, ScheduleParams, Variant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator for sample `index` of a seeded batch. Each index
/// owns an independent stream, so batches give the same draws whether they
/// are evaluated sequentially or in parallel.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
