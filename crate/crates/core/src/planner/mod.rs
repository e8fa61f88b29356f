//! Short-horizon receding-horizon trajectory optimization for the AV.
//!
//! The AV and a predicted human alternate local best responses over `M`
//! fine steps. When enabled, each player's objective gains its strategic
//! value at the terminal state, which stands in for the reward-to-go beyond
//! the horizon.

mod lbfgs;
mod objective;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use lbfgs::{maximize, Outcome, QuasiNewtonSettings};
pub use objective::{StageGrad, StageReward};

use crate::dynamics::{step_joint, JointState, VehicleControl, VehicleParams, LANE_WIDTH};
use crate::error::{Error, Result};
use crate::game::ValueTable;
use crate::reward::{Player, RewardConfig};
use objective::{evaluate, flatten, unflatten, ObjectiveContext};

#[derive(Debug, Clone)]
pub struct PlannerConfig {
    /// Planning steps `M`.
    pub horizon: usize,
    pub dt: f64,
    pub max_rounds: usize,
    /// Max-norm change in both control sequences that ends best response.
    pub round_tol: f64,
    pub inner: QuasiNewtonSettings,
    pub influence_term: bool,
    pub use_value: bool,
    pub av_value: Option<Arc<ValueTable>>,
    pub human_value: Option<Arc<ValueTable>>,
    pub vehicle: VehicleParams,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: 5,
            dt: 0.1,
            max_rounds: 10,
            round_tol: 1e-3,
            inner: QuasiNewtonSettings::default(),
            influence_term: false,
            use_value: false,
            av_value: None,
            human_value: None,
            vehicle: VehicleParams::default(),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("planner.horizon", "must be at least 1"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::config("planner.dt", "must be positive"));
        }
        if !(self.round_tol > 0.0 && self.inner.grad_tol > 0.0 && self.inner.step_tol > 0.0) {
            return Err(Error::config("planner.tolerances", "must be positive"));
        }
        Ok(())
    }

    /// The terminal table a player's objective uses, if any.
    pub fn value_for(&self, player: Player) -> Option<&ValueTable> {
        if !self.use_value {
            return None;
        }
        match player {
            Player::Av => self.av_value.as_deref(),
            Player::Human => self.human_value.as_deref(),
        }
    }
}

/// States and controls over one planning window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<JointState>,
    pub controls_av: Vec<VehicleControl>,
    pub controls_human: Vec<VehicleControl>,
    pub dt: f64,
}

impl Trajectory {
    pub fn rollout(
        x0: &JointState,
        controls_av: &[VehicleControl],
        controls_human: &[VehicleControl],
        dt: f64,
        params: &VehicleParams,
    ) -> Result<Self> {
        if controls_av.len() != controls_human.len() {
            return Err(Error::LengthMismatch {
                expected: controls_av.len(),
                found: controls_human.len(),
            });
        }
        let mut states = vec![*x0];
        for (ua, uh) in controls_av.iter().zip(controls_human) {
            let next = step_joint(states.last().unwrap(), ua, uh, dt, params)?;
            states.push(next);
        }
        Ok(Self {
            states,
            controls_av: controls_av.to_vec(),
            controls_human: controls_human.to_vec(),
            dt,
        })
    }

    /// Whether every state follows from its predecessor under the dynamics.
    pub fn is_consistent(&self, params: &VehicleParams) -> bool {
        self.states.len() == self.controls_av.len() + 1
            && self.states.windows(2).enumerate().all(|(t, w)| {
                step_joint(&w[0], &self.controls_av[t], &self.controls_human[t], self.dt, params)
                    .map(|n| n == w[1])
                    .unwrap_or(false)
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub controls_av: Vec<VehicleControl>,
    pub controls_human: Vec<VehicleControl>,
    /// AV objective on the returned controls.
    pub objective: f64,
    pub rounds: usize,
    pub converged: bool,
    /// Set when influence mode fell back to plain best response.
    pub influence_fallback: bool,
}

impl PlanResult {
    pub fn trajectory(&self, x0: &JointState, cfg: &PlannerConfig) -> Result<Trajectory> {
        Trajectory::rollout(x0, &self.controls_av, &self.controls_human, cfg.dt, &cfg.vehicle)
    }
}

/// Result of one player's trajectory optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct OwnResult {
    pub controls: Vec<VehicleControl>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn check_len(controls: &[VehicleControl], m: usize) -> Result<()> {
    if controls.len() != m {
        Err(Error::LengthMismatch {
            expected: m,
            found: controls.len(),
        })
    } else {
        Ok(())
    }
}

fn context<'a>(x0: &JointState, cfg: &'a PlannerConfig, rewards: &'a dyn StageReward) -> Result<ObjectiveContext<'a>> {
    if !x0.is_finite() {
        return Err(Error::InvalidState(format!("non-finite initial state {x0:?}")));
    }
    Ok(ObjectiveContext {
        x0: *x0,
        dt: cfg.dt,
        params: &cfg.vehicle,
        rewards,
    })
}

/// Objective of `player` for the given control sequences, including its
/// terminal value when configured.
pub fn player_objective(
    x0: &JointState,
    player: Player,
    controls_av: &[VehicleControl],
    controls_human: &[VehicleControl],
    cfg: &PlannerConfig,
    rewards: &dyn StageReward,
) -> Result<f64> {
    check_len(controls_av, cfg.horizon)?;
    check_len(controls_human, cfg.horizon)?;
    let ctx = context(x0, cfg, rewards)?;
    Ok(evaluate(
        &ctx,
        player,
        cfg.value_for(player),
        controls_av,
        controls_human,
        None,
    ))
}

/// AV objective: running reward over the window plus `V_A` of the projected
/// terminal state when `value` is given.
pub fn objective(
    x0: &JointState,
    controls_av: &[VehicleControl],
    controls_human: &[VehicleControl],
    cfg: &PlannerConfig,
    rewards: &dyn StageReward,
    value: Option<&ValueTable>,
) -> Result<f64> {
    check_len(controls_av, cfg.horizon)?;
    check_len(controls_human, cfg.horizon)?;
    let ctx = context(x0, cfg, rewards)?;
    Ok(evaluate(&ctx, Player::Av, value, controls_av, controls_human, None))
}

/// Gradient of `player`'s objective with respect to its own controls and
/// the other player's, flattened `[steer_0, accel_0, …]`.
pub fn objective_gradient(
    x0: &JointState,
    player: Player,
    controls_av: &[VehicleControl],
    controls_human: &[VehicleControl],
    cfg: &PlannerConfig,
    rewards: &dyn StageReward,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check_len(controls_av, cfg.horizon)?;
    check_len(controls_human, cfg.horizon)?;
    let ctx = context(x0, cfg, rewards)?;
    let m = cfg.horizon;
    let mut ga = vec![0.0; 2 * m];
    let mut gh = vec![0.0; 2 * m];
    let v = evaluate(
        &ctx,
        player,
        cfg.value_for(player),
        controls_av,
        controls_human,
        Some((&mut ga, &mut gh)),
    );
    Ok(match player {
        Player::Av => (v, ga, gh),
        Player::Human => (v, gh, ga),
    })
}

/// Stage-0 strategic value of the projected joint state.
pub fn terminal_value_at(table: &ValueTable, player: Player, x: &JointState) -> f64 {
    objective::terminal_value(table, player, x).0
}

fn bounds(cfg: &PlannerConfig) -> (Vec<f64>, Vec<f64>) {
    let p = &cfg.vehicle;
    let lo = (0..cfg.horizon).flat_map(|_| [-p.steer_max, p.accel_min]).collect();
    let hi = (0..cfg.horizon).flat_map(|_| [p.steer_max, p.accel_max]).collect();
    (lo, hi)
}

/// Locally maximizes `who`'s objective over its own controls with the other
/// player's controls held fixed, starting from `init` (zeros if `None`).
pub fn optimize_own(
    x0: &JointState,
    fixed_other: &[VehicleControl],
    who: Player,
    init: Option<&[VehicleControl]>,
    cfg: &PlannerConfig,
    rewards: &dyn StageReward,
) -> Result<OwnResult> {
    let m = cfg.horizon;
    check_len(fixed_other, m)?;
    if let Some(i) = init {
        check_len(i, m)?;
    }
    let ctx = context(x0, cfg, rewards)?;
    let value = cfg.value_for(who);
    let start = init.map(flatten).unwrap_or_else(|| vec![0.0; 2 * m]);
    let (lo, hi) = bounds(cfg);
    let mut other_grad = vec![0.0; 2 * m];
    let mut own = vec![VehicleControl::ZERO; m];
    let f = |x: &[f64], g: &mut [f64]| {
        for (c, v) in own.iter_mut().zip(x.chunks(2)) {
            *c = VehicleControl::new(v[0], v[1]);
        }
        match who {
            Player::Av => evaluate(&ctx, who, value, &own, fixed_other, Some((g, &mut other_grad))),
            Player::Human => evaluate(&ctx, who, value, fixed_other, &own, Some((&mut other_grad, g))),
        }
    };
    let out = maximize(f, &start, &lo, &hi, &cfg.inner)?;
    Ok(OwnResult {
        controls: unflatten(&out.x),
        objective: out.value,
        iterations: out.iterations,
        converged: out.converged,
    })
}

fn max_change(a: &[VehicleControl], b: &[VehicleControl]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x.steer - y.steer).abs().max((x.accel - y.accel).abs()))
        .fold(0.0, f64::max)
}

/// Iterated local best response from explicit initial guesses: the human
/// responds to the current AV plan, then the AV responds to that
/// prediction, until neither sequence moves by more than `round_tol`.
pub fn best_response(
    x0: &JointState,
    init_av: &[VehicleControl],
    init_human: &[VehicleControl],
    cfg: &PlannerConfig,
    rewards: &dyn StageReward,
) -> Result<PlanResult> {
    cfg.validate()?;
    let mut u_av = init_av.to_vec();
    let mut u_h = init_human.to_vec();
    check_len(&u_av, cfg.horizon)?;
    check_len(&u_h, cfg.horizon)?;
    let mut converged = false;
    let mut rounds = 0;
    while rounds < cfg.max_rounds {
        rounds += 1;
        let h = optimize_own(x0, &u_av, Player::Human, Some(&u_h), cfg, rewards)?;
        let a = optimize_own(x0, &h.controls, Player::Av, Some(&u_av), cfg, rewards)?;
        let change = max_change(&a.controls, &u_av).max(max_change(&h.controls, &u_h));
        u_av = a.controls;
        u_h = h.controls;
        if change < cfg.round_tol {
            converged = true;
            break;
        }
    }
    let objective = player_objective(x0, Player::Av, &u_av, &u_h, cfg, rewards)?;
    Ok(PlanResult {
        controls_av: u_av,
        controls_human: u_h,
        objective,
        rounds,
        converged,
        influence_fallback: false,
    })
}

/// Sensitivity `∂u_H*/∂u_A` of the human's best response, by implicit
/// differentiation of its stationarity condition. Hessian blocks come from
/// central differences of the human's objective gradient. Rows of human
/// controls resting on a bound are zero. Returns `None` when the human
/// Hessian is numerically singular.
pub fn response_sensitivity(
    x0: &JointState,
    u_av: &[VehicleControl],
    u_h: &[VehicleControl],
    cfg: &PlannerConfig,
    rewards: &dyn StageReward,
) -> Result<Option<DMatrix<f64>>> {
    let n = 2 * cfg.horizon;
    let h = 1e-5;
    let base_av = flatten(u_av);
    let base_h = flatten(u_h);
    let grad_h = |fa: &[f64], fh: &[f64]| -> Result<Vec<f64>> {
        Ok(objective_gradient(x0, Player::Human, &unflatten(fa), &unflatten(fh), cfg, rewards)?.1)
    };
    let mut hess_hh = DMatrix::zeros(n, n);
    let mut hess_ha = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut p = base_h.clone();
        let mut m = base_h.clone();
        p[j] += h;
        m[j] -= h;
        let (gp, gm) = (grad_h(&base_av, &p)?, grad_h(&base_av, &m)?);
        for i in 0..n {
            hess_hh[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
        let mut p = base_av.clone();
        let mut m = base_av.clone();
        p[j] += h;
        m[j] -= h;
        let (gp, gm) = (grad_h(&p, &base_h)?, grad_h(&m, &base_h)?);
        for i in 0..n {
            hess_ha[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    let hess_hh = (&hess_hh + hess_hh.transpose()) * 0.5;
    let lu = hess_hh.full_piv_lu();
    let u_abs: Vec<f64> = (0..n).map(|i| lu.u()[(i, i)].abs()).collect();
    let pivot_max = u_abs.iter().copied().fold(0.0, f64::max);
    let pivot_min = u_abs.iter().copied().fold(f64::INFINITY, f64::min);
    if !(pivot_min > 1e-10 * pivot_max.max(1e-300)) {
        return Ok(None);
    }
    // ∂u_H*/∂u_A = -H_HH⁻¹ H_HA
    let Some(mut sens) = lu.solve(&(-hess_ha)) else {
        return Ok(None);
    };
    let (lo, hi) = bounds(cfg);
    for i in 0..n {
        if base_h[i] <= lo[i] || base_h[i] >= hi[i] {
            sens.row_mut(i).fill(0.0);
        }
    }
    Ok(Some(sens))
}

/// Best response where the AV's gradient includes the influence of its plan
/// on the human's best response, `∂R_A/∂u_A + (∂R_A/∂u_H)(∂u_H*/∂u_A)`.
/// Within a round the AV maximizes its objective under the linearized
/// human response around the current prediction.
pub fn best_response_with_influence(
    x0: &JointState,
    init_av: &[VehicleControl],
    init_human: &[VehicleControl],
    cfg: &PlannerConfig,
    rewards: &dyn StageReward,
) -> Result<PlanResult> {
    cfg.validate()?;
    let m = cfg.horizon;
    let mut u_av = init_av.to_vec();
    let mut u_h = init_human.to_vec();
    check_len(&u_av, m)?;
    check_len(&u_h, m)?;
    let ctx = context(x0, cfg, rewards)?;
    let value = cfg.value_for(Player::Av);
    let (lo, hi) = bounds(cfg);
    let mut converged = false;
    let mut rounds = 0;
    while rounds < cfg.max_rounds {
        rounds += 1;
        let h = optimize_own(x0, &u_av, Player::Human, Some(&u_h), cfg, rewards)?;
        let Some(sens) = response_sensitivity(x0, &u_av, &h.controls, cfg, rewards)? else {
            let mut fallback = best_response(x0, init_av, init_human, cfg, rewards)?;
            fallback.influence_fallback = true;
            return Ok(fallback);
        };
        let anchor_av = DVector::from_vec(flatten(&u_av));
        let anchor_h = DVector::from_vec(flatten(&h.controls));
        let mut ga = vec![0.0; 2 * m];
        let mut gh = vec![0.0; 2 * m];
        let f = |x: &[f64], g: &mut [f64]| {
            let xa = DVector::from_column_slice(x);
            let mut resp = &anchor_h + &sens * (&xa - &anchor_av);
            for i in 0..2 * m {
                resp[i] = resp[i].clamp(lo[i], hi[i]);
            }
            let ua = unflatten(x);
            let uh = unflatten(resp.as_slice());
            let v = evaluate(&ctx, Player::Av, value, &ua, &uh, Some((&mut ga, &mut gh)));
            let total = DVector::from_column_slice(&ga) + sens.transpose() * DVector::from_column_slice(&gh);
            g.copy_from_slice(total.as_slice());
            v
        };
        let out = maximize(f, anchor_av.as_slice(), &lo, &hi, &cfg.inner)?;
        let new_av = unflatten(&out.x);
        let change = max_change(&new_av, &u_av).max(max_change(&h.controls, &u_h));
        u_av = new_av;
        u_h = h.controls;
        if change < cfg.round_tol {
            converged = true;
            break;
        }
    }
    // Report the prediction as the human's best response to the final plan.
    let h = optimize_own(x0, &u_av, Player::Human, Some(&u_h), cfg, rewards)?;
    u_h = h.controls;
    let objective = player_objective(x0, Player::Av, &u_av, &u_h, cfg, rewards)?;
    Ok(PlanResult {
        controls_av: u_av,
        controls_human: u_h,
        objective,
        rounds,
        converged,
        influence_fallback: false,
    })
}

/// Initial control sequences for multi-start planning: full-left steer,
/// full-right steer and straight, all with zero acceleration. "Full" steer
/// is the constant angle that moves a car at `speed` one lane width
/// sideways over the horizon, capped at the steering bound.
pub fn diverse_initializations(cfg: &PlannerConfig, speed: f64) -> [Vec<VehicleControl>; 3] {
    let p = &cfg.vehicle;
    let span = cfg.horizon as f64 * cfg.dt;
    let v = speed.max(1.0);
    let s = (2.0 * p.wheelbase * LANE_WIDTH / (v * span).powi(2))
        .atan()
        .min(p.steer_max);
    [
        vec![VehicleControl::new(s, 0.0); cfg.horizon],
        vec![VehicleControl::new(-s, 0.0); cfg.horizon],
        vec![VehicleControl::ZERO; cfg.horizon],
    ]
}

/// Stateful receding-horizon planner; warm-starts each plan from the
/// previous solution shifted by one step.
pub struct Planner {
    cfg: PlannerConfig,
    rewards: Arc<dyn StageReward + Send + Sync>,
    warm: Option<(Vec<VehicleControl>, Vec<VehicleControl>)>,
}

impl Planner {
    pub fn new(cfg: PlannerConfig, rewards: RewardConfig) -> Result<Self> {
        rewards.validate()?;
        Self::with_rewards(cfg, Arc::new(rewards))
    }

    pub fn with_rewards(cfg: PlannerConfig, rewards: Arc<dyn StageReward + Send + Sync>) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            rewards,
            warm: None,
        })
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.cfg
    }

    pub fn rewards(&self) -> &dyn StageReward {
        self.rewards.as_ref()
    }

    pub fn reset(&mut self) {
        self.warm = None;
    }

    fn initial_guess(&self) -> (Vec<VehicleControl>, Vec<VehicleControl>) {
        let m = self.cfg.horizon;
        match &self.warm {
            Some((a, h)) => {
                let shift = |u: &Vec<VehicleControl>| {
                    let mut s: Vec<VehicleControl> = u.iter().skip(1).copied().collect();
                    s.resize(m, VehicleControl::ZERO);
                    s
                };
                (shift(a), shift(h))
            }
            None => (vec![VehicleControl::ZERO; m], vec![VehicleControl::ZERO; m]),
        }
    }

    fn remember(&mut self, r: &PlanResult) {
        self.warm = Some((r.controls_av.clone(), r.controls_human.clone()));
    }

    /// Plans with the mode set in the config (influence term on or off).
    pub fn step(&mut self, x0: &JointState) -> Result<PlanResult> {
        if self.cfg.influence_term {
            self.plan_with_influence(x0)
        } else {
            self.plan(x0)
        }
    }

    pub fn plan(&mut self, x0: &JointState) -> Result<PlanResult> {
        let (ia, ih) = self.initial_guess();
        let r = best_response(x0, &ia, &ih, &self.cfg, self.rewards.as_ref())?;
        self.remember(&r);
        Ok(r)
    }

    pub fn plan_with_influence(&mut self, x0: &JointState) -> Result<PlanResult> {
        let (ia, ih) = self.initial_guess();
        let r = best_response_with_influence(x0, &ia, &ih, &self.cfg, self.rewards.as_ref())?;
        self.remember(&r);
        Ok(r)
    }

    /// Runs best response from every pair of diverse initializations and
    /// keeps the plan with the highest AV objective (first on ties).
    pub fn plan_long_horizon(&mut self, x0: &JointState) -> Result<PlanResult> {
        let inits_av = diverse_initializations(&self.cfg, x0.av.v);
        let inits_h = diverse_initializations(&self.cfg, x0.human.v);
        let mut best: Option<PlanResult> = None;
        for ia in &inits_av {
            for ih in &inits_h {
                let r = if self.cfg.influence_term {
                    best_response_with_influence(x0, ia, ih, &self.cfg, self.rewards.as_ref())?
                } else {
                    best_response(x0, ia, ih, &self.cfg, self.rewards.as_ref())?
                };
                if best.as_ref().is_none_or(|b| r.objective > b.objective) {
                    best = Some(r);
                }
            }
        }
        let best = best.expect("at least one initialization");
        self.remember(&best);
        Ok(best)
    }
}
