//! Hierarchical game-theoretic planning for two-car highway interactions.
//!
//! A long-horizon strategic game over simplified relative dynamics is solved
//! offline by feedback Stackelberg dynamic programming ([`game`]). Its value
//! table becomes the terminal reward of a short-horizon receding-horizon
//! trajectory optimizer ([`planner`]) that plays iterated local best
//! response against a predicted human. [`human`] provides the simulated
//! drivers and [`sim`] the closed-loop scenarios and metrics.

pub mod dynamics;
pub mod error;
pub mod game;
pub mod human;
pub mod planner;
pub mod reward;
pub mod sim;

pub use dynamics::{JointState, VehicleControl, VehicleParams, VehicleState};
pub use error::{Error, Result};
pub use game::{ModelTag, ValueTable};
pub use reward::{Player, RewardConfig};
