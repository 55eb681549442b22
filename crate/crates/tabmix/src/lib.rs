//! Files, configuration and subcommands around `tabmix-core`.

pub mod checkpoint;
pub mod config;
pub mod io;
pub mod pipeline;

pub use config::RunConfig;
