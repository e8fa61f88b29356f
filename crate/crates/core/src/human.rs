//! Simulated human drivers for closed-loop episodes.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{JointState, VehicleControl, VehicleParams, LANE_WIDTH, LEFT_LANE_CENTER, RIGHT_LANE_CENTER};
use crate::error::{Error, Result};
use crate::game::ValueTable;
use crate::planner::{optimize_own, PlannerConfig, QuasiNewtonSettings};
use crate::reward::{Player, RewardConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HumanKind {
    /// Optimizes her own short-horizon objective against the AV's
    /// committed controls.
    Optimizer,
    /// Holds her lane and regulates speed to `speed`.
    ConstantSpeed { speed: f64 },
}

#[derive(Debug, Clone)]
pub struct HumanModelConfig {
    pub kind: HumanKind,
    pub rewards: RewardConfig,
    /// Seconds of AV controls the human sees ahead.
    pub preview: f64,
    pub dt: f64,
    pub value: Option<Arc<ValueTable>>,
    pub vehicle: VehicleParams,
    pub inner: QuasiNewtonSettings,
}

impl Default for HumanModelConfig {
    fn default() -> Self {
        Self {
            kind: HumanKind::Optimizer,
            rewards: RewardConfig::default(),
            preview: 0.5,
            dt: 0.1,
            value: None,
            vehicle: VehicleParams::default(),
            inner: QuasiNewtonSettings::default(),
        }
    }
}

impl HumanModelConfig {
    pub fn constant_speed(speed: f64) -> Self {
        Self {
            kind: HumanKind::ConstantSpeed { speed },
            ..Default::default()
        }
    }

    /// Preview length in steps.
    pub fn preview_steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) {
            return Err(Error::config("human.dt", "must be positive"));
        }
        let n = self.preview / self.dt;
        let steps = n.round();
        if !(steps >= 1.0) || (n - steps).abs() > 1e-9 {
            return Err(Error::config("human.preview", "must be a positive multiple of dt"));
        }
        Ok(steps as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.preview_steps()?;
        if let HumanKind::ConstantSpeed { speed } = self.kind {
            if !(speed >= 0.0 && speed.is_finite()) {
                return Err(Error::config("human.speed", "must be finite and non-negative"));
            }
        }
        self.rewards.validate()
    }

    fn planner_config(&self) -> Result<PlannerConfig> {
        Ok(PlannerConfig {
            horizon: self.preview_steps()?,
            dt: self.dt,
            inner: self.inner,
            use_value: self.value.is_some(),
            human_value: self.value.clone(),
            vehicle: self.vehicle,
            ..Default::default()
        })
    }
}

const LATERAL_GAIN: f64 = 4.0;
const LATERAL_DAMPING: f64 = 4.0;
const SPEED_GAIN: f64 = 1.0;

fn track_lane(x: &JointState, speed: f64, params: &VehicleParams) -> VehicleControl {
    let s = &x.human;
    let center = if s.y >= LANE_WIDTH {
        LEFT_LANE_CENTER
    } else {
        RIGHT_LANE_CENTER
    };
    let v = s.v.max(1.0);
    // Critically damped lateral loop; lateral acceleration is about v^2/L * steer.
    let lat_accel = -LATERAL_GAIN * (s.y - center) - LATERAL_DAMPING * v * s.psi.sin();
    let steer = (lat_accel * params.wheelbase / (v * v))
        .atan()
        .clamp(-params.steer_max, params.steer_max);
    let accel = (SPEED_GAIN * (speed - s.v)).clamp(params.accel_min, params.accel_max);
    VehicleControl::new(steer, accel)
}

/// Stateless human action: plans from zeros and returns the first control.
pub fn human_act(x: &JointState, av_committed: &[VehicleControl], cfg: &HumanModelConfig) -> Result<VehicleControl> {
    HumanModel::new(cfg.clone())?.act(x, av_committed)
}

/// Stateful human driver, warm-started from her previous plan.
pub struct HumanModel {
    cfg: HumanModelConfig,
    planner: PlannerConfig,
    warm: Option<Vec<VehicleControl>>,
}

impl HumanModel {
    pub fn new(cfg: HumanModelConfig) -> Result<Self> {
        cfg.validate()?;
        let planner = cfg.planner_config()?;
        Ok(Self {
            cfg,
            planner,
            warm: None,
        })
    }

    pub fn config(&self) -> &HumanModelConfig {
        &self.cfg
    }

    pub fn preview_steps(&self) -> usize {
        self.planner.horizon
    }

    pub fn act(&mut self, x: &JointState, av_committed: &[VehicleControl]) -> Result<VehicleControl> {
        let m = self.planner.horizon;
        if av_committed.len() != m {
            return Err(Error::LengthMismatch {
                expected: m,
                found: av_committed.len(),
            });
        }
        if !x.is_finite() {
            return Err(Error::InvalidState(format!("non-finite state {x:?}")));
        }
        match self.cfg.kind {
            HumanKind::ConstantSpeed { speed } => Ok(track_lane(x, speed, &self.cfg.vehicle)),
            HumanKind::Optimizer => {
                let init = self.warm.as_ref().map(|w| {
                    let mut s: Vec<VehicleControl> = w.iter().skip(1).copied().collect();
                    s.resize(m, VehicleControl::ZERO);
                    s
                });
                let r = optimize_own(
                    x,
                    av_committed,
                    Player::Human,
                    init.as_deref(),
                    &self.planner,
                    &self.cfg.rewards,
                )?;
                let first = r.controls[0];
                self.warm = Some(r.controls);
                Ok(first)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{step_bicycle, VehicleState};

    fn zeros(m: usize) -> Vec<VehicleControl> {
        vec![VehicleControl::ZERO; m]
    }

    #[test]
    fn constant_speed_at_setpoint_is_quiet() {
        let cfg = HumanModelConfig::constant_speed(24.0);
        let x = JointState::new(
            VehicleState::new(-20.0, LEFT_LANE_CENTER, 0.0, 30.0),
            VehicleState::new(0.0, LEFT_LANE_CENTER, 0.0, 24.0),
        );
        let u = human_act(&x, &zeros(5), &cfg).unwrap();
        assert!(u.accel.abs() < 0.05 && u.steer.abs() < 0.01, "{u:?}");
    }

    #[test]
    fn constant_speed_settles_on_lane() {
        let cfg = HumanModelConfig::constant_speed(24.0);
        let mut model = HumanModel::new(cfg.clone()).unwrap();
        let mut s = VehicleState::new(0.0, LEFT_LANE_CENTER + 0.1, 0.005, 28.0);
        for _ in 0..150 {
            let x = JointState::new(VehicleState::new(-50.0, RIGHT_LANE_CENTER, 0.0, 30.0), s);
            let u = model.act(&x, &zeros(5)).unwrap();
            s = step_bicycle(&s, &u, 0.1, &cfg.vehicle).unwrap();
            assert!((s.y - LEFT_LANE_CENTER).abs() < 0.2);
        }
        assert!((s.v - 24.0).abs() < 0.1);
        assert!((s.y - LEFT_LANE_CENTER).abs() < 0.01);
    }

    #[test]
    fn optimizer_ignores_distant_av() {
        let cfg = HumanModelConfig::default();
        let x = JointState::new(
            VehicleState::new(500.0, RIGHT_LANE_CENTER, 0.0, 32.0),
            VehicleState::new(0.0, LEFT_LANE_CENTER, 0.0, 27.0),
        );
        let a = human_act(&x, &zeros(5), &cfg).unwrap();
        let b = human_act(&x, &vec![VehicleControl::new(0.3, 4.0); 5], &cfg).unwrap();
        let planner = cfg.planner_config().unwrap();
        let alone = optimize_own(&x, &zeros(5), Player::Human, None, &planner, &cfg.rewards).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, alone.controls[0]);
        // Below her target speed she speeds up.
        assert!(a.accel > 0.0);
    }

    #[test]
    fn optimizer_is_deterministic_and_bounded() {
        let cfg = HumanModelConfig::default();
        let x = JointState::new(
            VehicleState::new(-8.0, LEFT_LANE_CENTER, 0.0, 34.0),
            VehicleState::new(0.0, LEFT_LANE_CENTER, 0.0, 30.0),
        );
        let committed = vec![VehicleControl::new(0.0, 2.0); 5];
        let mut a = HumanModel::new(cfg.clone()).unwrap();
        let mut b = HumanModel::new(cfg.clone()).unwrap();
        for _ in 0..3 {
            let (ua, ub) = (a.act(&x, &committed).unwrap(), b.act(&x, &committed).unwrap());
            assert_eq!(ua, ub);
            assert!(ua.steer.abs() <= cfg.vehicle.steer_max);
            assert!(ua.accel >= cfg.vehicle.accel_min && ua.accel <= cfg.vehicle.accel_max);
        }
    }

    #[test]
    fn preview_must_match() {
        let cfg = HumanModelConfig::default();
        let x = JointState::new(
            VehicleState::new(0.0, 1.85, 0.0, 30.0),
            VehicleState::new(10.0, 5.55, 0.0, 30.0),
        );
        assert!(matches!(
            human_act(&x, &zeros(4), &cfg),
            Err(Error::LengthMismatch { .. })
        ));
        let bad = HumanModelConfig {
            preview: 0.25,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
