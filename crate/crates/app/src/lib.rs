//! Command-line tool and HTTP service around `matra-core`.

pub mod cli;
pub mod error;
pub mod ratelimit;
pub mod server;
pub mod store;
