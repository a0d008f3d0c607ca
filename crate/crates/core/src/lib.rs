//! Desk-scale smart-intersection edge node.
//!
//! Synthetic bird's-eye traffic stands in for the cameras and an emulated
//! detector stands in for the neural network; everything downstream
//! (calibration, SORT tracking, traffic analytics, anonymization audit and
//! the radar-screen broadcast with its latency budget) is the real thing.

pub mod analytics;
pub mod anonymize;
pub mod detemu;
pub mod geometry;
pub mod pipeline;
pub mod radar;
pub mod scenesim;
pub mod tracker;
pub mod types;

pub use types::{ObjectClass, PixelBox, PixelPoint, WorldPoint};
