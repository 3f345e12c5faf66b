//! Command-line front end: configuration and filter files, and the three subcommands.
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod doc;
pub mod filter_file;
