//! Rolled-out tactical objective and its adjoint gradient.

use crate::dynamics::{bicycle_jacobians, step_bicycle_unchecked, JointState, VehicleControl, VehicleParams};
use crate::game::{ModelTag, ValueTable};
use crate::reward::{tactical_reward_with_grad, Player, RewardConfig, RewardGrad};

/// Per-step reward of either player, with its gradient. Implemented by
/// [`RewardConfig`]; other implementations let the planner run on toy games.
pub trait StageReward: Sync {
    fn eval(
        &self,
        player: Player,
        x: &JointState,
        u_own: &VehicleControl,
        u_other: &VehicleControl,
    ) -> (f64, StageGrad);
}

/// Gradient of a stage reward: the own/other state blocks are
/// `(x, y, psi, v)`, controls are `(steer, accel)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageGrad {
    pub own_state: [f64; 4],
    pub other_state: [f64; 4],
    pub own_control: [f64; 2],
    pub other_control: [f64; 2],
}

impl From<RewardGrad> for StageGrad {
    fn from(g: RewardGrad) -> Self {
        Self {
            own_state: g.own_state,
            other_state: g.other_state,
            own_control: g.own_control,
            other_control: [0.0; 2],
        }
    }
}

impl StageReward for RewardConfig {
    fn eval(
        &self,
        player: Player,
        x: &JointState,
        u_own: &VehicleControl,
        _u_other: &VehicleControl,
    ) -> (f64, StageGrad) {
        let (r, g) = tactical_reward_with_grad(player, x, u_own, self);
        (r, g.into())
    }
}

/// Everything fixed while one player's controls vary.
pub(crate) struct ObjectiveContext<'a> {
    pub x0: JointState,
    pub dt: f64,
    pub params: &'a VehicleParams,
    pub rewards: &'a dyn StageReward,
}

/// Projects the joint state onto the table's strategic coordinates and
/// returns `(point, d point / d joint)` with joint order
/// `[x_A, y_A, psi_A, v_A, x_H, y_H, psi_H, v_H]`.
pub(crate) fn strategic_projection(model: ModelTag, x: &JointState) -> (Vec<f64>, Vec<[f64; 8]>) {
    let x_rel = x.av.x - x.human.x;
    let (sa, ca) = x.av.psi.sin_cos();
    let (sh, ch) = x.human.psi.sin_cos();
    let v_rel = x.av.v * ca - x.human.v * ch;
    let mut d_x = [0.0; 8];
    d_x[0] = 1.0;
    d_x[4] = -1.0;
    let mut d_ya = [0.0; 8];
    d_ya[1] = 1.0;
    let mut d_yh = [0.0; 8];
    d_yh[5] = 1.0;
    let mut d_v = [0.0; 8];
    d_v[2] = -x.av.v * sa;
    d_v[3] = ca;
    d_v[6] = x.human.v * sh;
    d_v[7] = -ch;
    match model {
        ModelTag::FourD => (vec![x_rel, x.av.y, x.human.y, v_rel], vec![d_x, d_ya, d_yh, d_v]),
        _ => (vec![x_rel, x.av.y, v_rel], vec![d_x, d_ya, d_v]),
    }
}

/// Strategic value of `x` for `player` at stage 0 and its gradient with
/// respect to the joint state.
pub(crate) fn terminal_value(table: &ValueTable, player: Player, x: &JointState) -> (f64, [f64; 8]) {
    let (p, jac) = strategic_projection(table.model, x);
    let mut gp = vec![0.0; p.len()];
    let v = table.lookup_with_grad(&p, 0, player, &mut gp);
    let mut g = [0.0; 8];
    for (row, gi) in jac.iter().zip(&gp) {
        for j in 0..8 {
            g[j] += gi * row[j];
        }
    }
    (v, g)
}

pub(crate) fn rollout(ctx: &ObjectiveContext, u_av: &[VehicleControl], u_human: &[VehicleControl]) -> Vec<JointState> {
    let mut states = Vec::with_capacity(u_av.len() + 1);
    let mut x = ctx.x0;
    states.push(x);
    for (ua, uh) in u_av.iter().zip(u_human) {
        x = JointState {
            av: step_bicycle_unchecked(&x.av, ua, ctx.dt, ctx.params),
            human: step_bicycle_unchecked(&x.human, uh, ctx.dt, ctx.params),
            t: x.t + ctx.dt,
        };
        states.push(x);
    }
    states
}

/// `Σ_{t<M} r_player(x^t, u^t) + V_player(g(x^M))`, optionally with the
/// gradient with respect to both control sequences (flattened as
/// `[steer_0, accel_0, steer_1, …]`).
pub(crate) fn evaluate(
    ctx: &ObjectiveContext,
    player: Player,
    value: Option<&ValueTable>,
    u_av: &[VehicleControl],
    u_human: &[VehicleControl],
    grad: Option<(&mut [f64], &mut [f64])>,
) -> f64 {
    let states = rollout(ctx, u_av, u_human);
    let m = u_av.len();
    let (own_u, other_u) = match player {
        Player::Av => (u_av, u_human),
        Player::Human => (u_human, u_av),
    };

    let Some((g_av, g_human)) = grad else {
        let mut total = 0.0;
        for t in 0..m {
            total += ctx.rewards.eval(player, &states[t], &own_u[t], &other_u[t]).0;
        }
        if let Some(table) = value {
            total += terminal_value(table, player, &states[m]).0;
        }
        return total;
    };

    let mut total = 0.0;
    // Adjoint over the joint state, AV block first.
    let mut lambda = [0.0; 8];
    if let Some(table) = value {
        let (v, g) = terminal_value(table, player, &states[m]);
        total += v;
        lambda = g;
    }
    for t in (0..m).rev() {
        let x = &states[t];
        let (r, rg) = ctx.rewards.eval(player, x, &own_u[t], &other_u[t]);
        total += r;
        let (ds_a, du_a) = bicycle_jacobians(&x.av, &u_av[t], ctx.dt, ctx.params);
        let (ds_h, du_h) = bicycle_jacobians(&x.human, &u_human[t], ctx.dt, ctx.params);

        let (state_a, state_h, ctrl_a, ctrl_h) = match player {
            Player::Av => (rg.own_state, rg.other_state, rg.own_control, rg.other_control),
            Player::Human => (rg.other_state, rg.own_state, rg.other_control, rg.own_control),
        };

        for j in 0..2 {
            let mut ga = ctrl_a[j];
            let mut gh = ctrl_h[j];
            for i in 0..4 {
                ga += du_a[i][j] * lambda[i];
                gh += du_h[i][j] * lambda[4 + i];
            }
            g_av[2 * t + j] = ga;
            g_human[2 * t + j] = gh;
        }

        let mut next = [0.0; 8];
        for j in 0..4 {
            let mut la = state_a[j];
            let mut lh = state_h[j];
            for i in 0..4 {
                la += ds_a[i][j] * lambda[i];
                lh += ds_h[i][j] * lambda[4 + i];
            }
            next[j] = la;
            next[4 + j] = lh;
        }
        lambda = next;
    }
    total
}

pub(crate) fn flatten(u: &[VehicleControl]) -> Vec<f64> {
    u.iter().flat_map(|c| [c.steer, c.accel]).collect()
}

pub(crate) fn unflatten(v: &[f64]) -> Vec<VehicleControl> {
    v.chunks(2).map(|c| VehicleControl::new(c[0], c[1])).collect()
}
