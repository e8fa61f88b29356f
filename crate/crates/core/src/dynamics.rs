//! Vehicle dynamics at both planning levels.
//!
//! The tactical level integrates a kinematic bicycle for each car at a fine
//! time step. The strategic level works on a reduced relative state whose
//! lateral velocities are direct inputs, integrated at a coarse step.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LANE_WIDTH: f64 = 3.7;
pub const ROAD_WIDTH: f64 = 2.0 * LANE_WIDTH;
pub const RIGHT_LANE_CENTER: f64 = 0.5 * LANE_WIDTH;
pub const LEFT_LANE_CENTER: f64 = 1.5 * LANE_WIDTH;
/// Speed the relative strategic coordinates are anchored to.
pub const NOMINAL_SPEED: f64 = 30.0;
/// Bound on strategic lateral velocities (m/s).
pub const MAX_LATERAL_VELOCITY: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub v: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, psi: f64, v: f64) -> Self {
        Self { x, y, psi, v }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.psi.is_finite() && self.v.is_finite()
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.psi, self.v]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub av: VehicleState,
    pub human: VehicleState,
    pub t: f64,
}

impl JointState {
    pub fn new(av: VehicleState, human: VehicleState) -> Self {
        Self { av, human, t: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.av.is_finite() && self.human.is_finite() && self.t.is_finite()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleControl {
    pub steer: f64,
    pub accel: f64,
}

impl VehicleControl {
    pub const ZERO: VehicleControl = VehicleControl { steer: 0.0, accel: 0.0 };

    pub fn new(steer: f64, accel: f64) -> Self {
        Self { steer, accel }
    }
}

/// Physical limits of the kinematic bicycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub steer_max: f64,
    pub accel_min: f64,
    pub accel_max: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 2.7,
            steer_max: 0.5,
            accel_min: -8.0,
            accel_max: 4.0,
        }
    }
}

impl VehicleParams {
    pub fn clamp(&self, u: VehicleControl) -> VehicleControl {
        VehicleControl {
            steer: u.steer.clamp(-self.steer_max, self.steer_max),
            accel: u.accel.clamp(self.accel_min, self.accel_max),
        }
    }
}

pub(crate) fn wrap_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// One forward-Euler step of the kinematic bicycle.
///
/// Controls are saturated to `params`; speed is clamped at zero (no reverse)
/// and the lateral position to the road.
pub fn step_bicycle(s: &VehicleState, u: &VehicleControl, dt: f64, params: &VehicleParams) -> Result<VehicleState> {
    if !s.is_finite() {
        return Err(Error::InvalidState(format!("non-finite vehicle state {s:?}")));
    }
    if !(dt > 0.0) {
        return Err(Error::config("dt", "time step must be positive"));
    }
    if !(u.steer.is_finite() && u.accel.is_finite()) {
        return Err(Error::InvalidState(format!("non-finite control {u:?}")));
    }
    Ok(step_bicycle_unchecked(s, u, dt, params))
}

pub(crate) fn step_bicycle_unchecked(
    s: &VehicleState,
    u: &VehicleControl,
    dt: f64,
    params: &VehicleParams,
) -> VehicleState {
    let u = params.clamp(*u);
    VehicleState {
        x: s.x + s.v * s.psi.cos() * dt,
        y: (s.y + s.v * s.psi.sin() * dt).clamp(0.0, ROAD_WIDTH),
        psi: wrap_angle(s.psi + s.v / params.wheelbase * u.steer.tan() * dt),
        v: (s.v + u.accel * dt).max(0.0),
    }
}

/// Jacobians of [`step_bicycle`] with respect to state `(x, y, psi, v)` and
/// control `(steer, accel)`. Saturated components have zero derivative.
pub(crate) fn bicycle_jacobians(
    s: &VehicleState,
    u: &VehicleControl,
    dt: f64,
    params: &VehicleParams,
) -> ([[f64; 4]; 4], [[f64; 2]; 4]) {
    let steer_active = u.steer.abs() <= params.steer_max;
    let accel_active = u.accel >= params.accel_min && u.accel <= params.accel_max;
    let uc = params.clamp(*u);
    let (sin, cos) = s.psi.sin_cos();

    let mut ds = [[0.0; 4]; 4];
    let mut du = [[0.0; 2]; 4];

    ds[0] = [1.0, 0.0, -s.v * sin * dt, cos * dt];

    let y_next = s.y + s.v * sin * dt;
    if (0.0..=ROAD_WIDTH).contains(&y_next) {
        ds[1] = [0.0, 1.0, s.v * cos * dt, sin * dt];
    }

    let tan = uc.steer.tan();
    ds[2] = [0.0, 0.0, 1.0, tan / params.wheelbase * dt];
    if steer_active {
        du[2][0] = s.v / params.wheelbase * (1.0 + tan * tan) * dt;
    }

    if s.v + uc.accel * dt >= 0.0 {
        ds[3] = [0.0, 0.0, 0.0, 1.0];
        if accel_active {
            du[3][1] = dt;
        }
    }
    (ds, du)
}

pub fn step_joint(
    x: &JointState,
    u_av: &VehicleControl,
    u_human: &VehicleControl,
    dt: f64,
    params: &VehicleParams,
) -> Result<JointState> {
    Ok(JointState {
        av: step_bicycle(&x.av, u_av, dt, params)?,
        human: step_bicycle(&x.human, u_human, dt, params)?,
        t: x.t + dt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strat3State {
    pub x_rel: f64,
    pub y_av: f64,
    pub v_rel: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strat4State {
    pub x_rel: f64,
    pub y_av: f64,
    pub y_human: f64,
    pub v_rel: f64,
}

impl Strat3State {
    pub fn to_array(self) -> [f64; 3] {
        [self.x_rel, self.y_av, self.v_rel]
    }
}

impl Strat4State {
    pub fn to_array(self) -> [f64; 4] {
        [self.x_rel, self.y_av, self.y_human, self.v_rel]
    }
}

/// Leader (AV) action in the strategic game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratActionA {
    pub lateral_velocity: f64,
    pub accel: f64,
}

/// Follower (human) action in the strategic game. The lateral velocity is
/// ignored by the 3-D model, where the human holds the left lane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratActionH {
    pub accel: f64,
    pub lateral_velocity: f64,
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidState(format!("non-finite strategic input {values:?}")))
    }
}

pub fn step_strategic_3d(
    s: &Strat3State,
    a_av: &StratActionA,
    a_human: &StratActionH,
    dk: f64,
    alpha: f64,
) -> Result<Strat3State> {
    check_finite(&[
        s.x_rel,
        s.y_av,
        s.v_rel,
        a_av.lateral_velocity,
        a_av.accel,
        a_human.accel,
        dk,
        alpha,
    ])?;
    Ok(Strat3State {
        x_rel: s.x_rel + s.v_rel * dk,
        y_av: (s.y_av + a_av.lateral_velocity * dk).clamp(0.0, ROAD_WIDTH),
        v_rel: s.v_rel + (a_av.accel - a_human.accel - alpha * s.v_rel) * dk,
    })
}

pub fn step_strategic_4d(
    s: &Strat4State,
    a_av: &StratActionA,
    a_human: &StratActionH,
    dk: f64,
    alpha: f64,
) -> Result<Strat4State> {
    check_finite(&[
        s.x_rel,
        s.y_av,
        s.y_human,
        s.v_rel,
        a_av.lateral_velocity,
        a_av.accel,
        a_human.accel,
        a_human.lateral_velocity,
        dk,
        alpha,
    ])?;
    Ok(Strat4State {
        x_rel: s.x_rel + s.v_rel * dk,
        y_av: (s.y_av + a_av.lateral_velocity * dk).clamp(0.0, ROAD_WIDTH),
        y_human: (s.y_human + a_human.lateral_velocity * dk).clamp(0.0, ROAD_WIDTH),
        v_rel: s.v_rel + (a_av.accel - a_human.accel - alpha * s.v_rel) * dk,
    })
}

/// Longitudinal speed along the road.
pub(crate) fn road_speed(s: &VehicleState) -> f64 {
    s.v * s.psi.cos()
}

pub fn project_3d(x: &JointState) -> Strat3State {
    Strat3State {
        x_rel: x.av.x - x.human.x,
        y_av: x.av.y,
        v_rel: road_speed(&x.av) - road_speed(&x.human),
    }
}

pub fn project_4d(x: &JointState) -> Strat4State {
    Strat4State {
        x_rel: x.av.x - x.human.x,
        y_av: x.av.y,
        y_human: x.human.y,
        v_rel: road_speed(&x.av) - road_speed(&x.human),
    }
}
