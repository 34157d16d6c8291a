//! HTTP API, session persistence and command-line front end.

pub mod api;
pub mod cli;
pub mod pipeline;
pub mod store;
