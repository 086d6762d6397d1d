//! Grouped symbol-level precoding (G-SLP) for multi-user MISO downlinks.
//!
//! Users are partitioned into groups; each group's precoder is designed per
//! group symbol combination so that intra-group interference is steered into
//! the constructive region of each user's PSK symbol while the interference
//! leaked into other groups is held below a tolerance. The transmitted signal
//! is the sum of the group precoders.
//!
//! The crate is organized bottom-up:
//!
//! - [`constellation`]: PSK points, symbol-vector indexing, detection and
//!   constructive-interference margins.
//! - [`channel`]: Rayleigh and one-ring correlated channel generation.
//! - [`grouping`]: correlation metrics and the greedy user-grouping heuristic.
//! - [`blp`]: block-level precoding baselines and the budgets derived from them.
//! - [`transform`]: the real-valued linear constraint system of one design problem.
//! - [`maxmin`] / [`powermin`]: the majorization-minimization dual solvers.
//! - [`verification`]: KKT residuals, majorization checks and reference oracles.
//! - [`harness`]: precoder tables, Monte Carlo experiments, configuration and CSV.

// NaN-rejecting `!(a > b)` guards and index loops over paired arrays are intentional.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::op_ref)]

pub mod blp;
pub mod channel;
pub mod constellation;
pub mod error;
pub mod grouping;
pub mod harness;
pub mod linalg;
pub mod maxmin;
pub mod powermin;
pub mod rng;
pub mod transform;
pub mod verification;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, RMatrix, RVector};
