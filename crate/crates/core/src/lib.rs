//! Unpaired MRI field-strength translation (3T <-> 1.5T) with CycleGAN, plus a
//! DCGAN synthesis baseline, built on a small CPU tensor core.

pub mod cli;
pub mod datapipe;
pub mod error;
pub mod evalmetrics;
pub mod gantrain;
pub mod models;
pub mod nncore;

pub use error::{Error, Result};
