pub mod bench;
pub mod controller;
pub mod dataset;
pub mod error;
pub mod grid;
pub mod observer;
pub mod policy;
pub mod rig;
pub mod sim;
pub mod tactile;
pub mod tasks;
pub mod teleop;

pub use error::{Error, Result};
