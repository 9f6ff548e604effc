//! Command-line pipeline and HTTP session service.

pub mod cli;
pub mod config;
pub mod http;
pub mod models;
