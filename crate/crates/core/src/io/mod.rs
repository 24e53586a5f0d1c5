//! Run configuration and trajectory files.

pub mod config;
pub mod dump;

pub use config::RunConfig;
pub use dump::{dump_to_string, parse_dump, read_dump, write_dump};
