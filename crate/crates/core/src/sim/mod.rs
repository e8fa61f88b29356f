//! Closed-loop scenarios, metrics, logging and inverse-temperature sweeps.

mod log;
mod metrics;
mod sweep;

use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use log::{EpisodeLog, StepRecord};
pub use metrics::{
    evaluate, footprints_overlap, Metrics, COLLISION_DISTANCE, FOOTPRINT_LENGTH, FOOTPRINT_WIDTH, LEFT_LANE_BAND,
    SUCCESS_MARGIN,
};
pub use sweep::{sweep_beta, SweepInputs, SweepRow, TableCache, CACHE_ENV};

use crate::dynamics::{step_joint, JointState, VehicleControl, VehicleState, LEFT_LANE_CENTER, RIGHT_LANE_CENTER};
use crate::error::{Error, Result};
use crate::game::{ModelTag, ValueTable};
use crate::human::{HumanKind, HumanModel, HumanModelConfig};
use crate::planner::{Planner, PlannerConfig};
use crate::reward::{tactical_reward_a, tactical_reward_h, Player, RewardConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    EasyMerge,
    HardMerge,
    Overtaking,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 3] = [Self::EasyMerge, Self::HardMerge, Self::Overtaking];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::EasyMerge => "easy_merge",
            Self::HardMerge => "hard_merge",
            Self::Overtaking => "overtaking",
        }
    }

    /// Default start: human at 30 m/s in the left lane, AV at 32 m/s.
    /// Easy merge puts the AV 15 m ahead in the right lane, hard merge 15 m
    /// behind in the right lane, overtaking 20 m behind in the left lane.
    pub fn initial_state(self) -> JointState {
        let (gap, y_av) = match self {
            Self::EasyMerge => (15.0, RIGHT_LANE_CENTER),
            Self::HardMerge => (-15.0, RIGHT_LANE_CENTER),
            Self::Overtaking => (-20.0, LEFT_LANE_CENTER),
        };
        JointState::new(
            VehicleState::new(gap, y_av, 0.0, 32.0),
            VehicleState::new(0.0, LEFT_LANE_CENTER, 0.0, 30.0),
        )
    }
}

impl std::fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::config("scenario", format!("unknown scenario {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Tactical,
    Hier3d,
    Hier4d,
    LongHorizon,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 4] = [Self::Tactical, Self::Hier3d, Self::Hier4d, Self::LongHorizon];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Tactical => "tactical",
            Self::Hier3d => "hier3d",
            Self::Hier4d => "hier4d",
            Self::LongHorizon => "long_horizon",
        }
    }

    /// Strategic model whose table this planner needs.
    pub fn model(self) -> Option<ModelTag> {
        match self {
            Self::Hier3d => Some(ModelTag::ThreeD),
            Self::Hier4d => Some(ModelTag::FourD),
            _ => None,
        }
    }

    pub fn horizon(self) -> usize {
        match self {
            Self::LongHorizon => 20,
            _ => 5,
        }
    }
}

impl std::fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlannerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::config("planner", format!("unknown planner {s:?}")))
    }
}

/// Serializable part of the simulated human's configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanSpec {
    #[serde(flatten)]
    pub kind: HumanKind,
    pub preview: f64,
    /// Whether the human carries the strategic value table.
    pub use_value: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: ScenarioName,
    pub initial: JointState,
    pub planner: PlannerKind,
    pub human: HumanSpec,
    /// Seconds.
    pub episode_length: f64,
    pub dt: f64,
    pub influence_term: bool,
    pub rewards: RewardConfig,
    pub av_value: Option<PathBuf>,
    pub human_value: Option<PathBuf>,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Named scenario with its default start. The human optimizes her own
    /// objective and carries the strategic value whenever the AV does.
    pub fn new(name: ScenarioName, planner: PlannerKind) -> Self {
        Self {
            name,
            initial: name.initial_state(),
            planner,
            human: HumanSpec {
                kind: HumanKind::Optimizer,
                preview: 0.5,
                use_value: planner.model().is_some(),
            },
            episode_length: 15.0,
            dt: 0.1,
            influence_term: false,
            rewards: RewardConfig::default(),
            av_value: None,
            human_value: None,
            seed: 0,
        }
    }

    /// Multi-start long-horizon planner in the overtaking scenario against
    /// a human holding 24 m/s.
    pub fn long_horizon_analysis() -> Self {
        let mut cfg = Self::new(ScenarioName::Overtaking, PlannerKind::LongHorizon);
        cfg.initial.human.v = 24.0;
        cfg.human = HumanSpec {
            kind: HumanKind::ConstantSpeed { speed: 24.0 },
            preview: 0.5,
            use_value: false,
        };
        cfg
    }

    pub fn steps(&self) -> usize {
        (self.episode_length / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::config("scenario.dt", "must be positive"));
        }
        if !(self.episode_length > 0.0) {
            return Err(Error::config("scenario.episode_length", "must be positive"));
        }
        if !self.initial.is_finite() {
            return Err(Error::config("scenario.initial", "must be finite"));
        }
        let ordering_ok = match self.name {
            ScenarioName::EasyMerge => {
                self.initial.av.x > self.initial.human.x
                    && self.initial.av.y < crate::dynamics::LANE_WIDTH
                    && self.initial.human.y > crate::dynamics::LANE_WIDTH
            }
            ScenarioName::HardMerge => {
                self.initial.av.x < self.initial.human.x && self.initial.av.y < crate::dynamics::LANE_WIDTH
            }
            ScenarioName::Overtaking => {
                self.initial.av.x < self.initial.human.x
                    && self.initial.av.y > crate::dynamics::LANE_WIDTH
                    && self.initial.human.y > crate::dynamics::LANE_WIDTH
            }
        };
        if !ordering_ok {
            return Err(Error::config(
                "scenario.initial",
                format!("inconsistent with {}", self.name),
            ));
        }
        self.rewards.validate()
    }

    /// Loads the tables named by the config's paths.
    pub fn load_tables(&self) -> Result<ScenarioTables> {
        let load = |p: &Option<PathBuf>| -> Result<Option<Arc<ValueTable>>> {
            p.as_ref().map(|p| ValueTable::load(p).map(Arc::new)).transpose()
        };
        Ok(ScenarioTables {
            av: load(&self.av_value)?,
            human: load(&self.human_value)?,
        })
    }
}

/// Value tables for one episode. For hierarchical planners a missing human
/// table falls back to the AV's.
#[derive(Debug, Clone, Default)]
pub struct ScenarioTables {
    pub av: Option<Arc<ValueTable>>,
    pub human: Option<Arc<ValueTable>>,
}

impl ScenarioTables {
    pub fn shared(table: Arc<ValueTable>) -> Self {
        Self {
            av: Some(table.clone()),
            human: Some(table),
        }
    }
}

/// Runs the scenario with tables loaded from the config's paths.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<EpisodeLog> {
    let tables = cfg.load_tables()?;
    run_scenario_with(cfg, &tables)
}

/// Runs the closed loop: the AV replans and executes its first control, the
/// human acts on the AV's committed preview, and the dynamics advance.
/// Stops early on collision.
pub fn run_scenario_with(cfg: &ScenarioConfig, tables: &ScenarioTables) -> Result<EpisodeLog> {
    cfg.validate()?;
    let av_table = match cfg.planner.model() {
        Some(model) => {
            let t = tables.av.clone().ok_or_else(|| {
                Error::MissingValueTable(format!("planner {} needs a {model} value table", cfg.planner))
            })?;
            if t.model != model {
                return Err(Error::config(
                    "scenario.av_value",
                    format!("planner {} needs a {model} table, got {}", cfg.planner, t.model),
                ));
            }
            Some(t)
        }
        None => None,
    };
    let human_table = if cfg.human.use_value {
        Some(
            tables
                .human
                .clone()
                .or_else(|| av_table.clone())
                .ok_or_else(|| Error::MissingValueTable("human model needs a value table".into()))?,
        )
    } else {
        None
    };

    let planner_cfg = PlannerConfig {
        horizon: cfg.planner.horizon(),
        dt: cfg.dt,
        influence_term: cfg.influence_term,
        use_value: av_table.is_some(),
        av_value: av_table.clone(),
        human_value: human_table.clone(),
        ..Default::default()
    };
    let mut planner = Planner::new(planner_cfg.clone(), cfg.rewards.clone())?;
    let mut human = HumanModel::new(HumanModelConfig {
        kind: cfg.human.kind,
        rewards: cfg.rewards.clone(),
        preview: cfg.human.preview,
        dt: cfg.dt,
        value: human_table.clone(),
        vehicle: planner_cfg.vehicle,
        inner: planner_cfg.inner,
    })?;
    let preview = human.preview_steps();

    let mut x = cfg.initial;
    let mut records = Vec::with_capacity(cfg.steps());
    let mut collided = false;
    for _ in 0..cfg.steps() {
        let plan = match cfg.planner {
            PlannerKind::LongHorizon => planner.plan_long_horizon(&x)?,
            _ => planner.step(&x)?,
        };
        let mut committed: Vec<VehicleControl> = plan.controls_av.iter().take(preview).copied().collect();
        committed.resize(preview, *plan.controls_av.last().unwrap());
        let u_av = plan.controls_av[0];
        let u_h = human.act(&x, &committed)?;
        let value = |t: &Option<Arc<ValueTable>>, p| t.as_ref().map(|t| crate::planner::terminal_value_at(t, p, &x));
        records.push(StepRecord {
            t: x.t,
            state: x,
            u_av,
            u_human: u_h,
            reward_av: tactical_reward_a(&x, &u_av, &u_h, &cfg.rewards),
            reward_human: tactical_reward_h(&x, &u_h, &u_av, &cfg.rewards),
            objective: plan.objective,
            plan_rounds: plan.rounds,
            influence_fallback: plan.influence_fallback,
            value_av: value(&av_table, Player::Av),
            value_human: value(&human_table, Player::Human),
        });
        x = step_joint(&x, &u_av, &u_h, cfg.dt, &planner_cfg.vehicle)?;
        if footprints_overlap(&x) {
            collided = true;
            break;
        }
    }
    Ok(EpisodeLog {
        config: cfg.clone(),
        records,
        final_state: x,
        halted_on_collision: collided,
    })
}

#[cfg(test)]
mod tests;
