// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analyze_gauss;
pub mod error;
pub mod harness;
pub mod ingest;
pub mod ledger;
pub mod linalg;
pub mod ols;
pub mod projected;
pub mod projection;
pub mod report;
pub mod ridge;
pub mod stats;
pub mod synth;
