//! Long-horizon strategic game over simplified relative dynamics.
//!
//! The AV leads and the human follows with a Boltzmann (noisy-rational)
//! decision rule at every stage. [`solve`] runs the feedback Stackelberg
//! backward recursion on a discretized state grid and produces a
//! [`ValueTable`] the tactical planner queries as a terminal reward.

mod boltzmann;
mod grid;
mod heatmap;
mod solver;
mod table;

pub use boltzmann::{boltzmann, ActionDistribution};
pub use grid::{GridDim, GridSpec, MAX_DIMS};
pub use heatmap::{export_heatmap_slice, HeatmapSlice};
pub use solver::{solve, solve_with_progress, solve_with_threads};
pub use table::{ValueTable, FORMAT_VERSION, MAGIC};

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    Strat3State, Strat4State, StratActionA, StratActionH, LEFT_LANE_CENTER, MAX_LATERAL_VELOCITY, ROAD_WIDTH,
};
use crate::error::{Error, Result};
use crate::reward::{strategic_reward, Player, RewardConfig, StrategicPoint};

/// Which simplified model a table was solved for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelTag {
    /// Any other game implementing [`StrategicGame`].
    Custom,
    /// `[x_rel, y_av, v_rel]`, human pinned to the left lane.
    ThreeD,
    /// `[x_rel, y_av, y_human, v_rel]`.
    FourD,
}

impl ModelTag {
    pub fn to_byte(self) -> u8 {
        match self {
            ModelTag::Custom => 0,
            ModelTag::ThreeD => 3,
            ModelTag::FourD => 4,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(ModelTag::Custom),
            3 => Ok(ModelTag::ThreeD),
            4 => Ok(ModelTag::FourD),
            _ => Err(Error::Format(format!("unknown model tag {b}"))),
        }
    }

    pub fn dim_names(self, ndims: usize) -> Vec<String> {
        match self {
            ModelTag::ThreeD => ["x_rel", "y_av", "v_rel"].map(String::from).to_vec(),
            ModelTag::FourD => ["x_rel", "y_av", "y_human", "v_rel"].map(String::from).to_vec(),
            ModelTag::Custom => (0..ndims).map(|i| format!("d{i}")).collect(),
        }
    }
}

impl std::fmt::Display for ModelTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelTag::Custom => "custom",
            ModelTag::ThreeD => "3d",
            ModelTag::FourD => "4d",
        })
    }
}

impl std::str::FromStr for ModelTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "3d" => Ok(ModelTag::ThreeD),
            "4d" => Ok(ModelTag::FourD),
            other => Err(Error::config("model", format!("expected `3d` or `4d`, got `{other}`"))),
        }
    }
}

/// A query point for a solved table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrategicState {
    ThreeD(Strat3State),
    FourD(Strat4State),
}

impl StrategicState {
    pub fn ndims(&self) -> usize {
        match self {
            StrategicState::ThreeD(_) => 3,
            StrategicState::FourD(_) => 4,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            StrategicState::ThreeD(s) => s.to_array().to_vec(),
            StrategicState::FourD(s) => s.to_array().to_vec(),
        }
    }
}

/// The minimal interface the backward recursion needs from a game.
pub trait StrategicGame: Sync {
    fn model(&self) -> ModelTag;
    fn dims(&self) -> usize;
    fn leader_actions(&self) -> usize;
    fn follower_actions(&self) -> usize;
    /// Writes `φ(state, leader, follower)` into `out`.
    fn successor(&self, state: &[f64], leader: usize, follower: usize, out: &mut [f64]);
    fn leader_reward(&self, state: &[f64], leader: usize, follower: usize) -> f64;
    fn follower_reward(&self, state: &[f64], leader: usize, follower: usize) -> f64;
    /// Action tuples recorded in the table header.
    fn action_descriptors(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>);
    fn reward_hash(&self) -> [u8; 32];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionGrid {
    pub leader: Vec<StratActionA>,
    pub follower: Vec<StratActionH>,
}

impl ActionGrid {
    /// Leader `w_A ∈ {−2.5, 0, 2.5}` × `a_A ∈ {−4, 0, 4}`; follower
    /// `a_H ∈ {−4, 0, 4}`.
    pub fn default_3d() -> Self {
        let lat = [-MAX_LATERAL_VELOCITY, 0.0, MAX_LATERAL_VELOCITY];
        let acc = [-4.0, 0.0, 4.0];
        Self {
            leader: lat
                .iter()
                .flat_map(|&w| {
                    acc.iter().map(move |&a| StratActionA {
                        lateral_velocity: w,
                        accel: a,
                    })
                })
                .collect(),
            follower: acc
                .iter()
                .map(|&a| StratActionH {
                    accel: a,
                    lateral_velocity: 0.0,
                })
                .collect(),
        }
    }

    /// As [`ActionGrid::default_3d`] with the follower also choosing
    /// `w_H ∈ {−2.5, 0, 2.5}`.
    pub fn default_4d() -> Self {
        let lat = [-MAX_LATERAL_VELOCITY, 0.0, MAX_LATERAL_VELOCITY];
        let acc = [-4.0, 0.0, 4.0];
        Self {
            follower: lat
                .iter()
                .flat_map(|&w| {
                    acc.iter().map(move |&a| StratActionH {
                        accel: a,
                        lateral_velocity: w,
                    })
                })
                .collect(),
            ..Self::default_3d()
        }
    }

    pub fn for_model(model: ModelTag) -> Self {
        match model {
            ModelTag::FourD => Self::default_4d(),
            _ => Self::default_3d(),
        }
    }

    pub fn validate(&self, params: &crate::dynamics::VehicleParams) -> Result<()> {
        if self.leader.is_empty() {
            return Err(Error::config("actions.leader", "must not be empty"));
        }
        if self.follower.is_empty() {
            return Err(Error::config("actions.follower", "must not be empty"));
        }
        if self.leader.len() > u16::MAX as usize {
            return Err(Error::config(
                "actions.leader",
                "too many actions for u16 policy indices",
            ));
        }
        let accel_ok = |a: f64| a >= params.accel_min && a <= params.accel_max;
        let lat_ok = |w: f64| w.abs() <= MAX_LATERAL_VELOCITY;
        for a in &self.leader {
            if !accel_ok(a.accel) || !lat_ok(a.lateral_velocity) {
                return Err(Error::config("actions.leader", format!("{a:?} outside bounds")));
            }
        }
        for h in &self.follower {
            if !accel_ok(h.accel) || !lat_ok(h.lateral_velocity) {
                return Err(Error::config("actions.follower", format!("{h:?} outside bounds")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// Inverse temperature of the follower's Boltzmann rule.
    pub beta: f64,
    /// Number of decision stages minus one (stages `0..=horizon`).
    pub horizon: usize,
    /// Relative-speed friction (1/s).
    pub alpha: f64,
    /// Stage duration (s).
    pub dk: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            beta: 1.0,
            horizon: 10,
            alpha: 0.1,
            dk: 0.5,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config("beta", "must be finite and non-negative"));
        }
        if self.horizon > u16::MAX as usize - 1 {
            return Err(Error::config("horizon", "too many stages"));
        }
        if !(self.dk > 0.0) {
            return Err(Error::config("dk", "must be positive"));
        }
        if !self.alpha.is_finite() {
            return Err(Error::config("alpha", "must be finite"));
        }
        Ok(())
    }
}

/// The two-car highway game in either simplified model.
#[derive(Debug, Clone)]
pub struct HighwayGame {
    model: ModelTag,
    actions: ActionGrid,
    rewards: RewardConfig,
    alpha: f64,
    dk: f64,
    hash: [u8; 32],
}

impl HighwayGame {
    pub fn new(model: ModelTag, actions: ActionGrid, rewards: RewardConfig, params: &SolverParams) -> Result<Self> {
        if model == ModelTag::Custom {
            return Err(Error::config("model", "highway game is 3d or 4d"));
        }
        rewards.validate()?;
        params.validate()?;
        actions.validate(&crate::dynamics::VehicleParams::default())?;
        let hash = rewards.hash();
        Ok(Self {
            model,
            actions,
            rewards,
            alpha: params.alpha,
            dk: params.dk,
            hash,
        })
    }

    pub fn actions(&self) -> &ActionGrid {
        &self.actions
    }

    pub fn rewards(&self) -> &RewardConfig {
        &self.rewards
    }

    #[inline]
    fn point(&self, s: &[f64]) -> StrategicPoint {
        match self.model {
            ModelTag::FourD => StrategicPoint {
                x_rel: s[0],
                y_av: s[1],
                y_human: s[2],
                v_rel: s[3],
            },
            _ => StrategicPoint {
                x_rel: s[0],
                y_av: s[1],
                y_human: LEFT_LANE_CENTER,
                v_rel: s[2],
            },
        }
    }
}

impl StrategicGame for HighwayGame {
    fn model(&self) -> ModelTag {
        self.model
    }

    fn dims(&self) -> usize {
        match self.model {
            ModelTag::FourD => 4,
            _ => 3,
        }
    }

    fn leader_actions(&self) -> usize {
        self.actions.leader.len()
    }

    fn follower_actions(&self) -> usize {
        self.actions.follower.len()
    }

    #[inline]
    fn successor(&self, s: &[f64], leader: usize, follower: usize, out: &mut [f64]) {
        let a = &self.actions.leader[leader];
        let h = &self.actions.follower[follower];
        let dk = self.dk;
        // Same update as `step_strategic_3d/4d`, inlined on slices.
        let (xi, vi) = match self.model {
            ModelTag::FourD => (0, 3),
            _ => (0, 2),
        };
        out[xi] = s[xi] + s[vi] * dk;
        out[1] = (s[1] + a.lateral_velocity * dk).clamp(0.0, ROAD_WIDTH);
        if self.model == ModelTag::FourD {
            out[2] = (s[2] + h.lateral_velocity * dk).clamp(0.0, ROAD_WIDTH);
        }
        out[vi] = s[vi] + (a.accel - h.accel - self.alpha * s[vi]) * dk;
    }

    fn leader_reward(&self, s: &[f64], leader: usize, follower: usize) -> f64 {
        strategic_reward(
            Player::Av,
            &self.point(s),
            &self.actions.leader[leader],
            &self.actions.follower[follower],
            &self.rewards,
        )
    }

    fn follower_reward(&self, s: &[f64], leader: usize, follower: usize) -> f64 {
        strategic_reward(
            Player::Human,
            &self.point(s),
            &self.actions.leader[leader],
            &self.actions.follower[follower],
            &self.rewards,
        )
    }

    fn action_descriptors(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        (
            self.actions
                .leader
                .iter()
                .map(|a| vec![a.lateral_velocity, a.accel])
                .collect(),
            self.actions
                .follower
                .iter()
                .map(|h| vec![h.accel, h.lateral_velocity])
                .collect(),
        )
    }

    fn reward_hash(&self) -> [u8; 32] {
        self.hash
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{step_strategic_3d, step_strategic_4d};

    #[test]
    fn successor_matches_dynamics() {
        let params = SolverParams::default();
        let g3 = HighwayGame::new(
            ModelTag::ThreeD,
            ActionGrid::default_3d(),
            RewardConfig::default(),
            &params,
        )
        .unwrap();
        let g4 = HighwayGame::new(
            ModelTag::FourD,
            ActionGrid::default_4d(),
            RewardConfig::default(),
            &params,
        )
        .unwrap();
        let s3 = Strat3State {
            x_rel: -4.0,
            y_av: 6.9,
            v_rel: 2.5,
        };
        let s4 = Strat4State {
            x_rel: -4.0,
            y_av: 6.9,
            y_human: 0.3,
            v_rel: 2.5,
        };
        let mut out = [0.0; 4];
        for a in 0..9 {
            for h in 0..3 {
                g3.successor(&s3.to_array(), a, h, &mut out[..3]);
                let e = step_strategic_3d(&s3, &g3.actions.leader[a], &g3.actions.follower[h], 0.5, 0.1).unwrap();
                assert_eq!(&out[..3], &e.to_array());
            }
            for h in 0..9 {
                g4.successor(&s4.to_array(), a, h, &mut out);
                let e = step_strategic_4d(&s4, &g4.actions.leader[a], &g4.actions.follower[h], 0.5, 0.1).unwrap();
                assert_eq!(out, e.to_array());
            }
        }
    }

    #[test]
    fn default_action_grids() {
        assert_eq!(ActionGrid::default_3d().leader.len(), 9);
        assert_eq!(ActionGrid::default_3d().follower.len(), 3);
        assert_eq!(ActionGrid::default_4d().follower.len(), 9);
    }

    #[test]
    fn out_of_bounds_action_rejected() {
        let mut a = ActionGrid::default_3d();
        a.leader[0].lateral_velocity = 3.0;
        assert!(a.validate(&Default::default()).is_err());
    }
}
