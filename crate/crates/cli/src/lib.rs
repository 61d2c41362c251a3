//! Library half of the `ambit` command-line tool: the model-document format,
//! the report schema, and the subcommand implementations. The binary in
//! `main.rs` is a thin argument-parsing shell over this crate so that
//! integration tests can drive the same code paths directly.

pub mod model_doc;
pub mod report;
pub mod commands;
