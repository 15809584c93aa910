#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod config;
pub mod diagnostics;
pub mod equivalence;
pub mod models;
pub mod numeric;
pub mod samplers;
pub mod cli;
pub mod io;
pub mod pipeline;
