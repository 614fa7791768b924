//! File formats and configuration parsing for the `tone` command-line tool.
//!
//! The library half of the binary: corpus text files, the binary model
//! container, flat key=value configuration files, and report rendering. The
//! numerical work all lives in `tone-core`; this crate owns everything that
//! touches the filesystem.

pub mod config;
pub mod corpus;
pub mod model;
pub mod report;
