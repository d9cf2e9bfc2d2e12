//! Leader-follower formation control for 6-DOF autonomous underwater
//! vehicles in a layered meandering-jet current.
//!
//! The math modules are generic over the scalar type (`f32` or `f64`);
//! the aliases at the bottom of this file fix it to `f64`.

// Validation is written as `!(x > 0)` and similar so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod flow;
pub mod formation;
pub mod io;
pub mod mpc;
pub mod plant;
pub mod scalar;
pub mod sim;
pub mod smc;
pub mod thruster;
pub mod vehicle;

pub use error::{Error, Result};
pub use scalar::Real;

pub type VehicleState64 = vehicle::VehicleState<f64>;
pub type RigidBodyParams64 = vehicle::RigidBodyParams<f64>;
pub type FlowField64 = flow::FlowField<f64>;
pub type SuperTwistGains64 = smc::SuperTwistGains<f64>;
