//! Simulator and algorithms for sorting inputs made of two record sizes in
//! the disk-access-machine model, plus a priced-comparison RAM model.

pub mod bounds;
pub mod cli;
pub mod dam;
pub mod em_sort;
pub mod error;
pub mod experiment;
pub mod full_sort;
pub mod model;
pub mod ple;
pub mod ple_special;
pub mod ram;

pub use error::{Error, Result};
