//! Batched multirotor flight simulation.
//!
//! Robots are single rigid bodies flown through SE(3) geometric attitude and
//! velocity controllers, one robot per environment. Environments hold
//! randomized obstacles built from analytic primitives, and each robot can
//! carry a ray-cast depth and segmentation camera.
//!
//! Module map:
//! - [`se3`]: rotation primitives (hat/vee, ZYX Euler angles, exponential map)
//! - [`dynamics`]: rigid-body integration and actuation limits
//! - [`control`]: attitude- and velocity-mode geometric controllers
//! - [`geometry`]: collision primitives, poses and bounding boxes
//! - [`assets`]: URDF subset parsing, asset pools, sampling and tree generation
//! - [`env`]: the batched environment (reset/step, collisions, reward)
//! - [`sensor`]: ray-cast depth and segmentation cameras
//! - [`bench`]: throughput measurement and the scripted demo run
//! - [`config`]: the simulator configuration file
//! - [`exchange`]: flat array layout for language bindings

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assets;
pub mod bench;
pub mod config;
pub mod control;
pub mod dynamics;
pub mod env;
pub mod exchange;
pub mod geometry;
pub mod rng;
pub mod se3;
pub mod sensor;
