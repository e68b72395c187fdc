//! Leader-follower game controller for highway forced merges.

pub mod agents;
pub mod beliefs;
pub mod dataset;
pub mod dynamics;
pub mod error;
pub mod game;
pub mod planner;
pub mod rewards;
pub mod road;
pub mod selection;
pub mod sim;
pub mod trajectories;

pub use error::{Error, FieldError, Result};
