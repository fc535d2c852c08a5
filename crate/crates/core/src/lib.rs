pub mod cli;
pub mod embedding;
pub mod manifest;
pub mod rng;
pub mod sampling;
pub mod synthetic;
pub mod harness;
pub mod nn;
