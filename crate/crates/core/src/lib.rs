//! Monte Carlo laboratory for diffusion heat kernels: part-process
//! transition kernels, Dynkin-Hunt decompositions, space-time scaling
//! transforms, and sub-Gaussian exit-time bound verification, validated
//! against exact one-dimensional oracles.

pub mod acceptance;
pub mod bounds;
pub mod cli;
pub mod config;
pub mod dynkin_hunt;
pub mod error;
pub mod estimate;
pub mod gasket;
pub mod oracle;
pub mod process;
pub mod rng;
pub mod scale;
pub mod space;
pub mod stopping;
