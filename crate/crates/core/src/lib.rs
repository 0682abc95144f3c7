//! End-to-end parking: surround-view images and a target slot go in, a
//! tokenized trajectory comes out, and a rear-wheel-feedback tracker drives a
//! kinematic vehicle along it.
//!
//! Module map:
//! - [`world`]: SE(2) geometry, vehicle footprint, slots and garage worlds
//! - [`sensing`]: pinhole surround rig and the flat-color renderer
//! - [`bev`]: bird's-eye-view grid conventions, lift-splat and slot heatmaps
//! - [`tokenizer`]: trajectory ⇄ token sequence serialization
//! - [`nn`]: tensors, kernels and the reverse-mode tape used by [`model`]
//! - [`model`]: encoders, target-query fusion, token decoder, training, inference
//! - [`expert`]: Reeds-Shepp expert demonstrations and dataset assembly
//! - [`control`]: rear-wheel feedback, cascade PID and dead reckoning
//! - [`simulator`]: closed-loop kinematic episodes and parking outcomes
//! - [`metrics`]: open-loop trajectory metrics and closed-loop parking scores
//! - [`harness`]: run configuration and the `gen-data`/`train`/`eval`/`sim` workflows

pub mod bev;
pub mod control;
pub mod error;
pub mod expert;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod par;
pub mod seed;
pub mod sensing;
pub mod simulator;
pub mod tokenizer;
pub mod world;

pub use error::{Error, Result};
