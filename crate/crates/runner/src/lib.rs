//! File formats, multi-threaded drivers and experiment commands around
//! `udp-core`. The `udp` binary is a thin shell over [`pipeline`].

pub mod cache;
pub mod checkpoint;
pub mod config;
pub mod csv;
pub mod edges;
pub mod error;
pub mod idx;
pub mod parallel;
pub mod pipeline;

pub use config::RunConfig;
pub use error::{Error, Result};
