//! Configuration-driven front end for the `jforms` library: experiment
//! configs, report envelopes, individual commands and the verification suite.

pub mod commands;
pub mod config;
pub mod report;
pub mod suite;
