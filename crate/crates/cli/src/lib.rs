//! Command-line front end for the row-density-matrix simulator.

pub mod commands;
pub mod config;
pub mod output;
