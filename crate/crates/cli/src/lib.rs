//! Library surface of the `impulsive` binary: configuration schema,
//! expression grammar, commands, and report bundles. Exposed so integration
//! tests can drive the same code paths the binary does.

pub mod commands;
pub mod config;
pub mod expr;
pub mod report;
pub mod reproduce;
