//! Hierarchical towing controller: an SE(2) roadmap planner hands waypoints to a
//! short-horizon diffusion policy, evaluated in a surrogate chair-towing simulator.

pub mod config;
pub mod demo;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod executor;
pub mod geometry;
pub mod layouts;
pub mod map;
pub mod network;
pub mod planner;
pub mod render;
pub mod rrt;
pub mod sim;
pub mod snippet;

pub use config::Config;
pub use error::{Error, Result};
pub use geometry::{pose_distance, Pose2};
pub use map::{CollisionChecker, FootprintModel, OccupancyMap};
pub use sim::{SimParams, SimState, Simulator};
