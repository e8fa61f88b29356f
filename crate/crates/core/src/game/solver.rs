use std::time::{Duration, Instant};

use rayon::prelude::*;

use super::boltzmann::boltzmann_into;
use super::grid::GridSpec;
use super::table::ValueTable;
use super::{SolverParams, StrategicGame, MAX_DIMS};
use crate::error::{Error, Result};

struct Scratch {
    coords: [f64; MAX_DIMS],
    next: [f64; MAX_DIMS],
    q_human: Vec<f64>,
    q_av: Vec<f64>,
    probs: Vec<f64>,
}

/// Feedback Stackelberg backward recursion with a Boltzmann follower.
///
/// For each stage `k = K..0`, cell `s` and leader action `a`:
/// `q_H(h) = r_H + V_H(φ(s,a,h), k+1)`, `P = boltzmann(q_H, β)`,
/// `q_A(a) = Σ_h P(h) (r_A + V_A(φ(s,a,h), k+1))`. The leader takes the
/// first maximizer of `q_A`; `V_H` is the follower's expected `q_H` under it.
/// Successors are clamped into the grid and read by multilinear
/// interpolation.
///
/// Cells within a stage run on the current rayon pool; results do not depend
/// on the number of threads.
pub fn solve<G: StrategicGame>(game: &G, grid: &GridSpec, params: &SolverParams) -> Result<ValueTable> {
    solve_with_progress(game, grid, params, |_, _| {})
}

/// [`solve`], calling `on_stage(k, elapsed)` after each stage completes.
pub fn solve_with_progress<G: StrategicGame>(
    game: &G,
    grid: &GridSpec,
    params: &SolverParams,
    mut on_stage: impl FnMut(usize, Duration),
) -> Result<ValueTable> {
    grid.validate()?;
    params.validate()?;
    if grid.ndims() != game.dims() {
        return Err(Error::DimensionMismatch {
            table: grid.ndims(),
            query: game.dims(),
        });
    }
    let na = game.leader_actions();
    let nh = game.follower_actions();
    if na == 0 || nh == 0 {
        return Err(Error::config(
            "actions",
            "leader and follower action sets must be non-empty",
        ));
    }
    if na > u16::MAX as usize {
        return Err(Error::config(
            "actions.leader",
            "too many actions for u16 policy indices",
        ));
    }

    let cells = grid.cell_count();
    let stages = params.horizon + 1;
    let interp = grid.interpolator();
    let d = grid.ndims();
    let beta = params.beta;

    let mut values_av = vec![0.0; cells * stages];
    let mut values_human = vec![0.0; cells * stages];
    let mut policy = vec![0u16; cells * stages];
    let zeros = vec![0.0; cells];

    for k in (0..stages).rev() {
        let started = Instant::now();
        let (head_av, tail_av) = values_av.split_at_mut((k + 1) * cells);
        let (head_h, tail_h) = values_human.split_at_mut((k + 1) * cells);
        let (next_av, next_h): (&[f64], &[f64]) = if k + 1 == stages {
            (&zeros, &zeros)
        } else {
            (&tail_av[..cells], &tail_h[..cells])
        };
        let cur_av = &mut head_av[k * cells..];
        let cur_h = &mut head_h[k * cells..];
        let cur_pol = &mut policy[k * cells..(k + 1) * cells];

        cur_av
            .par_iter_mut()
            .zip(cur_h.par_iter_mut())
            .zip(cur_pol.par_iter_mut())
            .enumerate()
            .try_for_each_init(
                || Scratch {
                    coords: [0.0; MAX_DIMS],
                    next: [0.0; MAX_DIMS],
                    q_human: vec![0.0; nh],
                    q_av: vec![0.0; nh],
                    probs: vec![0.0; nh],
                },
                |sc, (cell, ((va, vh), pol))| -> Result<()> {
                    grid.node_coords(cell, &mut sc.coords[..d]);
                    let mut best = f64::NEG_INFINITY;
                    let mut best_h = 0.0;
                    let mut best_a = 0usize;
                    for a in 0..na {
                        for h in 0..nh {
                            game.successor(&sc.coords[..d], a, h, &mut sc.next[..d]);
                            let rh = game.follower_reward(&sc.coords[..d], a, h);
                            let ra = game.leader_reward(&sc.coords[..d], a, h);
                            if !(rh.is_finite() && ra.is_finite()) {
                                return Err(Error::NonFiniteReward {
                                    stage: k,
                                    cell,
                                    leader: a,
                                    follower: h,
                                });
                            }
                            sc.q_human[h] = rh + interp.eval(next_h, &sc.next[..d]);
                            sc.q_av[h] = ra + interp.eval(next_av, &sc.next[..d]);
                        }
                        boltzmann_into(&sc.q_human, beta, &mut sc.probs);
                        let mut qa = 0.0;
                        let mut qh = 0.0;
                        for h in 0..nh {
                            qa += sc.probs[h] * sc.q_av[h];
                            qh += sc.probs[h] * sc.q_human[h];
                        }
                        if qa > best {
                            best = qa;
                            best_h = qh;
                            best_a = a;
                        }
                    }
                    *va = best;
                    *vh = best_h;
                    *pol = best_a as u16;
                    Ok(())
                },
            )?;
        on_stage(k, started.elapsed());
    }

    let (leader_actions, follower_actions) = game.action_descriptors();
    Ok(ValueTable::from_parts(
        game.model(),
        grid.clone(),
        params.horizon,
        beta,
        params.dk,
        leader_actions,
        follower_actions,
        game.reward_hash(),
        values_av,
        values_human,
        policy,
    ))
}

/// [`solve`] on a dedicated pool of `threads` workers.
pub fn solve_with_threads<G: StrategicGame>(
    game: &G,
    grid: &GridSpec,
    params: &SolverParams,
    threads: usize,
) -> Result<ValueTable> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::config("threads", e.to_string()))?;
    pool.install(|| solve(game, grid, params))
}
