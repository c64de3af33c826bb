//! Trajectory-occupancy observations for learned local navigation.
//!
//! The offline stage samples one motion primitive per discrete velocity
//! command and classifies the voxels of a robot-centered grid around each
//! primitive. Online, range hits are binned into that grid and every
//! primitive is scored with a single occupancy value in `[0, 1]`. Stacks of
//! those scores, plus target and previous-action terms, form the policy
//! observation for PPO training.

pub mod bench;
pub mod config;
pub mod env;
pub mod error;
pub mod kinematics;
pub mod learn;
pub mod occupancy;
pub mod voxel_grid;
pub mod world;

pub use error::{Error, Result};
