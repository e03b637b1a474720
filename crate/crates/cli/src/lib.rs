//! Batch tools and the annotation server behind the `ctw` binary.

pub mod check;
pub mod commands;
pub mod serve;
