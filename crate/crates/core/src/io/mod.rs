//! Configuration, file formats and the run driver.

pub mod config;
pub mod driver;
pub mod render;
pub mod snapshot;
pub mod trace;
