#![no_std]

extern crate alloc;

pub mod atoms;
pub mod dct;
pub mod deconvolve;
pub mod dense;
pub mod error;
pub mod instance;
pub mod linops;
pub mod nnls;
pub mod rng;
pub mod solver;
pub mod spectral;
pub mod theory;

pub use atoms::{equilibrate_weights, materialize, Atom, AtomicSet, ExposedFace, Shape, Sign};
pub use error::{Error, Result};
pub use linops::{sample_gaussian_operator, sample_rotation, Block, LinearOperator};
pub use rng::RngSeed;
pub use deconvolve::{demix, DemixConfig, RecoverySource, Solution};
pub use instance::{generate_instance, InstanceSpec};
pub use solver::{level_set_solve, Component, DemixProblem, InnerMode, LevelSetConfig, SolveStatus};
