//! Learned visual homing.
//!
//! A desk-scale pipeline that renders omnidirectional views around a nest in a
//! procedural landmark world, trains a compact convolutional network to
//! regress the egocentric home direction, and flies a simulated agent home.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod homing;
pub mod image;
pub mod network;
pub mod omni;
pub mod svg;
pub mod world;

pub use error::{Error, Result};
