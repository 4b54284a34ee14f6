//! Configuration, persistence, experiment drivers and the command line.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod experiment;
pub mod gradcheck;
pub mod importance;
pub mod results;
