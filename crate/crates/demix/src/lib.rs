pub mod error;
pub mod experiments;
pub mod io;
pub mod problem;
pub mod runner;
pub mod scenes;
