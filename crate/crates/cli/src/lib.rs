//! Runner, HTTP control API and command-line plumbing for `wsn-twin`.

pub mod api;
pub mod commands;
pub mod config;
pub mod runner;
pub mod transport;
