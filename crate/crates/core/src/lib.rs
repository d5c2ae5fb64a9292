//! Interval reduced-order observers for switched positive linear systems.

// NaN must fail these checks, so negated comparisons are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod fixtures;
pub mod matcore;
pub mod sim;
pub mod synth;
