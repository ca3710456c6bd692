//! Domain-randomization laboratory: procedural tabletop scenes, a
//! deterministic software renderer, dataset generation, a from-scratch CNN
//! position regressor and the evaluation/ablation harness around them.

pub mod bench;
pub mod camera;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod geom;
pub mod image;
pub mod mesh;
pub mod nn;
pub mod noise;
pub mod par;
pub mod raster;
pub mod rng;
pub mod scene;
pub mod texgen;

pub use error::{Error, Result};
