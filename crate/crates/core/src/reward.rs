//! Rewards for both players at both planning levels.
//!
//! Every reward is a weighted sum of the same feature family: a Gaussian
//! collision kernel, lane-keeping and left-lane bonuses, a speed-tracking
//! error, a sigmoid bonus for leading the other car (AV only), quadratic
//! control effort, a road-edge barrier and a heading-alignment penalty.
//! Tactical rewards are per 0.1 s step; strategic rewards cover one coarse
//! stage and are scaled by `strategic_stage_scale`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{
    JointState, VehicleControl, VehicleState, LANE_WIDTH, LEFT_LANE_CENTER, NOMINAL_SPEED, RIGHT_LANE_CENTER,
    ROAD_WIDTH,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    /// Must be non-positive.
    pub collision_avoidance: f64,
    pub lane_center: f64,
    pub left_lane_preference: f64,
    pub target_speed: f64,
    /// Only evaluated for the AV.
    pub ahead_of_other: f64,
    pub control_effort: f64,
    pub road_bounds: f64,
    pub heading: f64,
}

impl RewardWeights {
    fn scaled(&self, c: f64) -> Self {
        Self {
            collision_avoidance: c * self.collision_avoidance,
            lane_center: c * self.lane_center,
            left_lane_preference: c * self.left_lane_preference,
            target_speed: c * self.target_speed,
            ahead_of_other: c * self.ahead_of_other,
            control_effort: c * self.control_effort,
            road_bounds: c * self.road_bounds,
            heading: c * self.heading,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    pub av: RewardWeights,
    pub human: RewardWeights,
    pub target_speed_av: f64,
    pub target_speed_human: f64,
    /// Longitudinal and lateral length scales of the collision kernel (m).
    pub collision_length_x: f64,
    pub collision_length_y: f64,
    /// Width of the lane-center Gaussian (m).
    pub lane_center_width: f64,
    /// Transition width of the left-lane sigmoid (m).
    pub left_lane_scale: f64,
    /// Transition width of the ahead-of-other sigmoid (m).
    pub ahead_scale: f64,
    /// Multiplies steer² in the effort term, so steering in radians is
    /// commensurate with acceleration in m/s².
    pub steer_effort_scale: f64,
    /// Distance from the road edge where the barrier starts (m).
    pub road_margin: f64,
    /// Tactical steps represented by one strategic stage.
    pub strategic_stage_scale: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            av: RewardWeights {
                collision_avoidance: -50.0,
                lane_center: 0.3,
                left_lane_preference: 3.0,
                target_speed: 0.02,
                ahead_of_other: 3.0,
                control_effort: 0.01,
                road_bounds: 100.0,
                heading: 240.0,
            },
            human: RewardWeights {
                collision_avoidance: -0.5,
                lane_center: 0.25,
                left_lane_preference: 0.2,
                target_speed: 0.025,
                ahead_of_other: 0.0,
                control_effort: 0.0005,
                road_bounds: 5.0,
                heading: 1.0,
            },
            target_speed_av: 35.0,
            target_speed_human: 30.0,
            collision_length_x: 6.0,
            collision_length_y: 1.5,
            lane_center_width: 1.0,
            left_lane_scale: 1.5,
            ahead_scale: 5.0,
            steer_effort_scale: 100.0,
            road_margin: 0.9,
            strategic_stage_scale: 5.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        for (who, w) in [("av", &self.av), ("human", &self.human)] {
            if !(w.collision_avoidance <= 0.0) {
                return Err(Error::config(
                    format!("{who}.collision_avoidance"),
                    "collision weight must be non-positive",
                ));
            }
        }
        let positive = [
            ("collision_length_x", self.collision_length_x),
            ("collision_length_y", self.collision_length_y),
            ("lane_center_width", self.lane_center_width),
            ("left_lane_scale", self.left_lane_scale),
            ("ahead_scale", self.ahead_scale),
            ("strategic_stage_scale", self.strategic_stage_scale),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, "must be positive and finite"));
            }
        }
        Ok(())
    }

    /// Same config with the AV's weights multiplied by `c`.
    pub fn with_av_scaled(&self, c: f64) -> Self {
        Self {
            av: self.av.scaled(c),
            ..self.clone()
        }
    }

    /// Same config with both players' weights multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            av: self.av.scaled(c),
            human: self.human.scaled(c),
            ..self.clone()
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("reward config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config("reward config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> [u8; 32] {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        let mut out = [0u8; 32];
        out.copy_from_slice(&digest);
        out
    }
}

/// Which player's reward is being evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Player {
    Av,
    Human,
}

impl Player {
    pub fn other(self) -> Self {
        match self {
            Player::Av => Player::Human,
            Player::Human => Player::Av,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

// Each helper returns (value, derivative) of the unweighted feature.

fn collision_kernel(dx: f64, dy: f64, cfg: &RewardConfig) -> (f64, f64, f64) {
    let (lx, ly) = (cfg.collision_length_x, cfg.collision_length_y);
    let k = (-(dx / lx).powi(2) - (dy / ly).powi(2)).exp();
    (k, -2.0 * dx / (lx * lx) * k, -2.0 * dy / (ly * ly) * k)
}

fn lane_center(y: f64, cfg: &RewardConfig) -> (f64, f64) {
    let s2 = cfg.lane_center_width * cfg.lane_center_width;
    [RIGHT_LANE_CENTER, LEFT_LANE_CENTER]
        .iter()
        .fold((0.0, 0.0), |(v, d), &c| {
            let e = (-(y - c).powi(2) / s2).exp();
            (v + e, d - 2.0 * (y - c) / s2 * e)
        })
}

fn left_lane(y: f64, cfg: &RewardConfig) -> (f64, f64) {
    let s = sigmoid((y - LANE_WIDTH) / cfg.left_lane_scale);
    (s, s * (1.0 - s) / cfg.left_lane_scale)
}

fn ahead(x_rel: f64, cfg: &RewardConfig) -> (f64, f64) {
    let s = sigmoid(x_rel / cfg.ahead_scale);
    (s, s * (1.0 - s) / cfg.ahead_scale)
}

/// Negative squared overshoot past the edge margins; C¹ at the margins.
fn road_barrier(y: f64, cfg: &RewardConfig) -> (f64, f64) {
    let lo = cfg.road_margin - y;
    let hi = y - (ROAD_WIDTH - cfg.road_margin);
    if lo > 0.0 {
        (-lo * lo, 2.0 * lo)
    } else if hi > 0.0 {
        (-hi * hi, -2.0 * hi)
    } else {
        (0.0, 0.0)
    }
}

/// Gradient of a single-player tactical reward.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RewardGrad {
    pub own_state: [f64; 4],
    pub other_state: [f64; 4],
    pub own_control: [f64; 2],
}

fn player_reward(
    me: &VehicleState,
    other: &VehicleState,
    u: &VehicleControl,
    w: &RewardWeights,
    target_speed: f64,
    with_ahead: bool,
    cfg: &RewardConfig,
) -> (f64, RewardGrad) {
    let mut g = RewardGrad::default();
    let mut r = 0.0;

    let (k, kdx, kdy) = collision_kernel(me.x - other.x, me.y - other.y, cfg);
    r += w.collision_avoidance * k;
    g.own_state[0] += w.collision_avoidance * kdx;
    g.own_state[1] += w.collision_avoidance * kdy;
    g.other_state[0] -= w.collision_avoidance * kdx;
    g.other_state[1] -= w.collision_avoidance * kdy;

    let (lc, dlc) = lane_center(me.y, cfg);
    let (ll, dll) = left_lane(me.y, cfg);
    let (rb, drb) = road_barrier(me.y, cfg);
    r += w.lane_center * lc + w.left_lane_preference * ll + w.road_bounds * rb;
    g.own_state[1] += w.lane_center * dlc + w.left_lane_preference * dll + w.road_bounds * drb;

    let dv = me.v - target_speed;
    r -= w.target_speed * dv * dv;
    g.own_state[3] -= 2.0 * w.target_speed * dv;

    r -= w.heading * me.psi * me.psi;
    g.own_state[2] -= 2.0 * w.heading * me.psi;

    if with_ahead {
        let (a, da) = ahead(me.x - other.x, cfg);
        r += w.ahead_of_other * a;
        g.own_state[0] += w.ahead_of_other * da;
        g.other_state[0] -= w.ahead_of_other * da;
    }

    let ks = cfg.steer_effort_scale;
    r -= w.control_effort * (ks * u.steer * u.steer + u.accel * u.accel);
    g.own_control[0] -= 2.0 * w.control_effort * ks * u.steer;
    g.own_control[1] -= 2.0 * w.control_effort * u.accel;

    (r, g)
}

/// Tactical reward and its gradient for `player`.
pub fn tactical_reward_with_grad(
    player: Player,
    x: &JointState,
    u_own: &VehicleControl,
    cfg: &RewardConfig,
) -> (f64, RewardGrad) {
    match player {
        Player::Av => player_reward(&x.av, &x.human, u_own, &cfg.av, cfg.target_speed_av, true, cfg),
        Player::Human => player_reward(&x.human, &x.av, u_own, &cfg.human, cfg.target_speed_human, false, cfg),
    }
}

/// The other car's control does not enter either reward; it is accepted to
/// keep the signature of the general game reward.
pub fn tactical_reward_a(x: &JointState, u_av: &VehicleControl, _u_human: &VehicleControl, cfg: &RewardConfig) -> f64 {
    tactical_reward_with_grad(Player::Av, x, u_av, cfg).0
}

pub fn tactical_reward_h(x: &JointState, u_human: &VehicleControl, _u_av: &VehicleControl, cfg: &RewardConfig) -> f64 {
    tactical_reward_with_grad(Player::Human, x, u_human, cfg).0
}

/// A strategic state in either model, as `[x_rel, y_av, y_human, v_rel]`.
/// The 3-D model pins `y_human` to the left-lane center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategicPoint {
    pub x_rel: f64,
    pub y_av: f64,
    pub y_human: f64,
    pub v_rel: f64,
}

impl From<crate::dynamics::Strat3State> for StrategicPoint {
    fn from(s: crate::dynamics::Strat3State) -> Self {
        Self {
            x_rel: s.x_rel,
            y_av: s.y_av,
            y_human: LEFT_LANE_CENTER,
            v_rel: s.v_rel,
        }
    }
}

impl From<crate::dynamics::Strat4State> for StrategicPoint {
    fn from(s: crate::dynamics::Strat4State) -> Self {
        Self {
            x_rel: s.x_rel,
            y_av: s.y_av,
            y_human: s.y_human,
            v_rel: s.v_rel,
        }
    }
}

/// Strategic stage reward for `player`.
///
/// The human is assumed to travel at the nominal speed, so the AV's speed is
/// `NOMINAL_SPEED + v_rel`. Lateral velocities are charged through the
/// heading weight as `(w / NOMINAL_SPEED)²`.
pub fn strategic_reward(
    player: Player,
    s: &StrategicPoint,
    a_av: &crate::dynamics::StratActionA,
    a_human: &crate::dynamics::StratActionH,
    cfg: &RewardConfig,
) -> f64 {
    let (w, y_me, y_other, x_rel, speed, target, accel, lateral) = match player {
        Player::Av => (
            &cfg.av,
            s.y_av,
            s.y_human,
            s.x_rel,
            NOMINAL_SPEED + s.v_rel,
            cfg.target_speed_av,
            a_av.accel,
            a_av.lateral_velocity,
        ),
        Player::Human => (
            &cfg.human,
            s.y_human,
            s.y_av,
            -s.x_rel,
            NOMINAL_SPEED,
            cfg.target_speed_human,
            a_human.accel,
            a_human.lateral_velocity,
        ),
    };
    let mut r = w.collision_avoidance * collision_kernel(x_rel, y_me - y_other, cfg).0;
    r += w.lane_center * lane_center(y_me, cfg).0;
    r += w.left_lane_preference * left_lane(y_me, cfg).0;
    r += w.road_bounds * road_barrier(y_me, cfg).0;
    r -= w.target_speed * (speed - target).powi(2);
    r -= w.heading * (lateral / NOMINAL_SPEED).powi(2);
    if player == Player::Av {
        r += w.ahead_of_other * ahead(x_rel, cfg).0;
    }
    r -= w.control_effort * accel * accel;
    cfg.strategic_stage_scale * r
}

pub fn strategic_reward_a(
    s: &StrategicPoint,
    a_av: &crate::dynamics::StratActionA,
    a_human: &crate::dynamics::StratActionH,
    cfg: &RewardConfig,
) -> f64 {
    strategic_reward(Player::Av, s, a_av, a_human, cfg)
}

pub fn strategic_reward_h(
    s: &StrategicPoint,
    a_av: &crate::dynamics::StratActionA,
    a_human: &crate::dynamics::StratActionH,
    cfg: &RewardConfig,
) -> f64 {
    strategic_reward(Player::Human, s, a_av, a_human, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Strat3State, Strat4State, StratActionA, StratActionH};

    fn joint(xa: f64, ya: f64, va: f64, xh: f64, yh: f64, vh: f64) -> JointState {
        JointState::new(VehicleState::new(xa, ya, 0.0, va), VehicleState::new(xh, yh, 0.0, vh))
    }

    const Z: VehicleControl = VehicleControl::ZERO;

    #[test]
    fn separated_av_reward_is_lane_and_ahead_terms() {
        let cfg = RewardConfig::default();
        let x = joint(
            200.0,
            LEFT_LANE_CENTER,
            cfg.target_speed_av,
            0.0,
            LEFT_LANE_CENTER,
            30.0,
        );
        let r = tactical_reward_a(&x, &Z, &Z, &cfg);
        let expected = cfg.av.lane_center * lane_center(LEFT_LANE_CENTER, &cfg).0
            + cfg.av.left_lane_preference * left_lane(LEFT_LANE_CENTER, &cfg).0
            + cfg.av.ahead_of_other * ahead(200.0, &cfg).0;
        assert!((r - expected).abs() < 1e-12);
    }

    #[test]
    fn doubling_weights_doubles_reward() {
        let cfg = RewardConfig::default();
        let x = joint(3.0, 2.0, 31.0, 0.0, 5.0, 29.0);
        let u = VehicleControl::new(0.05, 1.0);
        let r1 = tactical_reward_a(&x, &u, &Z, &cfg);
        let r2 = tactical_reward_a(&x, &u, &Z, &cfg.scaled(2.0));
        assert!((r2 - 2.0 * r1).abs() < 1e-12 * r1.abs().max(1.0));
        let h1 = tactical_reward_h(&x, &u, &Z, &cfg);
        let h2 = tactical_reward_h(&x, &u, &Z, &cfg.scaled(2.0));
        assert!((h2 - 2.0 * h1).abs() < 1e-12 * h1.abs().max(1.0));
    }

    #[test]
    fn side_by_side_worse_than_separated() {
        let cfg = RewardConfig::default();
        let same = joint(0.0, LEFT_LANE_CENTER, 30.0, 0.0, LEFT_LANE_CENTER, 30.0);
        let apart = joint(10.0, LEFT_LANE_CENTER, 30.0, 0.0, LEFT_LANE_CENTER, 30.0);
        // Evaluate the collision and ahead features independently.
        let oracle = |dx: f64| {
            cfg.av.collision_avoidance * (-(dx / 6.0f64).powi(2)).exp()
                + cfg.av.ahead_of_other / (1.0 + (-dx / 5.0f64).exp())
        };
        assert!(oracle(0.0) < oracle(10.0));
        assert!(tactical_reward_a(&same, &Z, &Z, &cfg) < tactical_reward_a(&apart, &Z, &Z, &cfg));
        // Human's perspective: same oracle without the ahead term.
        let apart_h = joint(0.0, LEFT_LANE_CENTER, 30.0, 10.0, LEFT_LANE_CENTER, 30.0);
        assert!(tactical_reward_h(&same, &Z, &Z, &cfg) < tactical_reward_h(&apart_h, &Z, &Z, &cfg));
    }

    #[test]
    fn human_reward_mirrors() {
        let cfg = RewardConfig::default();
        let x = joint(
            0.0,
            LEFT_LANE_CENTER,
            30.0,
            200.0,
            LEFT_LANE_CENTER,
            cfg.target_speed_human,
        );
        let r = tactical_reward_h(&x, &Z, &Z, &cfg);
        let expected = cfg.human.lane_center * lane_center(LEFT_LANE_CENTER, &cfg).0
            + cfg.human.left_lane_preference * left_lane(LEFT_LANE_CENTER, &cfg).0;
        assert!((r - expected).abs() < 1e-12);
    }

    #[test]
    fn collision_symmetric_under_swap() {
        let cfg = RewardConfig::default();
        let (k1, _, _) = collision_kernel(3.0, -1.0, &cfg);
        let (k2, _, _) = collision_kernel(-3.0, 1.0, &cfg);
        assert_eq!(k1, k2);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = RewardConfig::default();
        let x = JointState::new(
            VehicleState::new(2.0, 6.8, 0.02, 33.0),
            VehicleState::new(-1.5, 4.9, -0.01, 29.0),
        );
        let u = VehicleControl::new(0.03, -0.7);
        for player in [Player::Av, Player::Human] {
            let (_, g) = tactical_reward_with_grad(player, &x, &u, &cfg);
            let f = |x: &JointState, u: &VehicleControl| tactical_reward_with_grad(player, x, u, &cfg).0;
            let h = 1e-6;
            for i in 0..4 {
                for own in [true, false] {
                    let bump = |d: f64| {
                        let mut y = x;
                        let target = match (player, own) {
                            (Player::Av, true) | (Player::Human, false) => &mut y.av,
                            _ => &mut y.human,
                        };
                        match i {
                            0 => target.x += d,
                            1 => target.y += d,
                            2 => target.psi += d,
                            _ => target.v += d,
                        }
                        f(&y, &u)
                    };
                    let fd = (bump(h) - bump(-h)) / (2.0 * h);
                    let an = if own { g.own_state[i] } else { g.other_state[i] };
                    assert!((fd - an).abs() < 1e-5, "{player:?} own={own} i={i}: {fd} vs {an}");
                }
            }
            let fd_s = (f(&x, &VehicleControl::new(u.steer + h, u.accel))
                - f(&x, &VehicleControl::new(u.steer - h, u.accel)))
                / (2.0 * h);
            let fd_a = (f(&x, &VehicleControl::new(u.steer, u.accel + h))
                - f(&x, &VehicleControl::new(u.steer, u.accel - h)))
                / (2.0 * h);
            assert!((fd_s - g.own_control[0]).abs() < 1e-5);
            assert!((fd_a - g.own_control[1]).abs() < 1e-5);
        }
    }

    #[test]
    fn strategic_far_apart_has_no_collision_or_effort() {
        let cfg = RewardConfig::default();
        let s = StrategicPoint::from(Strat3State {
            x_rel: 50.0,
            y_av: LEFT_LANE_CENTER,
            v_rel: cfg.target_speed_av - NOMINAL_SPEED,
        });
        let za = StratActionA {
            lateral_velocity: 0.0,
            accel: 0.0,
        };
        let zh = StratActionH {
            accel: 0.0,
            lateral_velocity: 0.0,
        };
        let r = strategic_reward_a(&s, &za, &zh, &cfg);
        let expected = cfg.strategic_stage_scale
            * (cfg.av.lane_center * lane_center(LEFT_LANE_CENTER, &cfg).0
                + cfg.av.left_lane_preference * left_lane(LEFT_LANE_CENTER, &cfg).0
                + cfg.av.ahead_of_other * ahead(50.0, &cfg).0);
        // The kernel at 50 m is below 1e-30.
        assert!((r - expected).abs() < 1e-9);
    }

    #[test]
    fn strategic_3d_and_4d_agree_on_left_lane_human() {
        let cfg = RewardConfig::default();
        let a = StratActionA {
            lateral_velocity: 2.5,
            accel: -4.0,
        };
        let h = StratActionH {
            accel: 4.0,
            lateral_velocity: 0.0,
        };
        let s3 = Strat3State {
            x_rel: -3.0,
            y_av: 4.0,
            v_rel: 1.0,
        };
        let s4 = Strat4State {
            x_rel: -3.0,
            y_av: 4.0,
            y_human: LEFT_LANE_CENTER,
            v_rel: 1.0,
        };
        for p in [Player::Av, Player::Human] {
            assert_eq!(
                strategic_reward(p, &s3.into(), &a, &h, &cfg),
                strategic_reward(p, &s4.into(), &a, &h, &cfg)
            );
        }
    }

    #[test]
    fn strategic_collision_ordering() {
        let cfg = RewardConfig::default();
        let za = StratActionA {
            lateral_velocity: 0.0,
            accel: 0.0,
        };
        let zh = StratActionH {
            accel: 0.0,
            lateral_velocity: 0.0,
        };
        let at = |x_rel: f64| {
            StrategicPoint::from(Strat4State {
                x_rel,
                y_av: LEFT_LANE_CENTER,
                y_human: LEFT_LANE_CENTER,
                v_rel: 0.0,
            })
        };
        // Oracle: only the collision and ahead features differ between the two states.
        let oracle = |dx: f64| {
            cfg.strategic_stage_scale
                * (cfg.av.collision_avoidance * (-(dx / 6.0f64).powi(2)).exp()
                    + cfg.av.ahead_of_other / (1.0 + (-dx / 5.0f64).exp()))
        };
        assert!(oracle(0.0) < oracle(20.0));
        assert!(strategic_reward_a(&at(0.0), &za, &zh, &cfg) < strategic_reward_a(&at(20.0), &za, &zh, &cfg));
        assert!(strategic_reward_h(&at(0.0), &za, &zh, &cfg) < strategic_reward_h(&at(20.0), &za, &zh, &cfg));
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = RewardConfig::default();
        let back = RewardConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_ne!(cfg.with_av_scaled(2.0).hash(), cfg.hash());
    }

    #[test]
    fn positive_collision_weight_rejected() {
        let mut cfg = RewardConfig::default();
        cfg.av.collision_avoidance = 1.0;
        let err = RewardConfig::from_toml(&cfg.to_toml()).unwrap_err();
        assert!(err.to_string().contains("av.collision_avoidance"));
    }
}
