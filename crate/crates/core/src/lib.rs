//! Scenario-based design under mixed aleatory and epistemic uncertainty.
//!
//! The crate provides scenario programs that trade robustness for
//! performance by discarding aleatory and epistemic outliers, robust Monte
//! Carlo analysis of a fixed design, distribution-free risk bounds from
//! scenario theory, and a sequential design loop that grows the training
//! data where it matters.

// `!(x > 0.0)` style checks reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod benchmark;
pub mod ecdf;
pub mod error;
pub mod io;
pub mod nlp;
pub mod programs;
pub mod registry;
pub mod rmc;
pub mod scenario_theory;
pub mod seqdesign;
pub mod types;
pub mod weights;

pub use error::{Error, Result};
