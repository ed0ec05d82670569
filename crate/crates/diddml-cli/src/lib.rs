//! Library surface of the command-line pipeline: config parsing, command
//! implementations and the SVG plot emitter. The binary in `main.rs` is a
//! thin clap wrapper; integration tests and fuzz targets drive these
//! functions directly.

pub mod commands;
pub mod config;
pub mod plot;
