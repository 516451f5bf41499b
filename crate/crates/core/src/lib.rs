#![allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail these checks

pub mod diagnostics;
pub mod grid;
pub mod io;
pub mod model;
pub mod params;
pub mod potentials;
pub mod stepper;
