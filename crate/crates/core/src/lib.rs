//! Partitioned summation-by-parts finite difference solver for a coupled
//! advection-diffusion / heat-conduction problem.

pub mod assembly;
pub mod cli;
pub mod config;
pub mod geometry;
pub mod linalg;
pub mod output;
pub mod physics;
pub mod sbp;
pub mod spectral;
pub mod timeloop;
