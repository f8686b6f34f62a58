//! Files, configuration and command-line front end for `weightscape-core`.

pub mod cli;
pub mod config;
pub mod emit;
pub mod error;
pub mod explore;
pub mod fsutil;
pub mod report;
pub mod store;
pub mod table;

pub use error::{Error, Result};
