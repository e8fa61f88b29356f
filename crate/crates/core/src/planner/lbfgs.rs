//! Projected limited-memory BFGS for box-constrained maximization.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasiNewtonSettings {
    pub max_iter: usize,
    pub memory: usize,
    /// Stop when the projected gradient max-norm drops below this.
    pub grad_tol: f64,
    /// Stop when an accepted step moves every variable less than this.
    pub step_tol: f64,
}

impl Default for QuasiNewtonSettings {
    fn default() -> Self {
        Self {
            max_iter: 50,
            memory: 8,
            grad_tol: 1e-4,
            step_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, &l), &h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(l, h);
    }
}

fn projected_grad_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    // g is the ascent gradient.
    x.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((&xi, &gi), (&l, &h))| ((xi + gi).clamp(l, h) - xi).abs())
        .fold(0.0, f64::max)
}

/// Maximizes `f` over the box `[lo, hi]` from `x0`. `f` writes the ascent
/// gradient into its second argument and returns the objective.
///
/// Every accepted step satisfies an Armijo condition along the projected
/// path, so the returned value is never below the value at the projected
/// start.
pub fn maximize<F>(mut f: F, x0: &[f64], lo: &[f64], hi: &[f64], settings: &QuasiNewtonSettings) -> Result<Outcome>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteObjective(format!("at initial point {x:?}")));
    }

    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut alpha_buf = vec![0.0; settings.memory];

    for iter in 0..settings.max_iter {
        if projected_grad_norm(&x, &g, lo, hi) < settings.grad_tol {
            return Ok(Outcome {
                x,
                value: fx,
                iterations: iter,
                converged: true,
            });
        }

        // Two-loop recursion on the ascent problem (minimizing -f).
        for (di, gi) in d.iter_mut().zip(&g) {
            *di = *gi;
        }
        for (i, (s, y, rho)) in history.iter().enumerate().rev() {
            let a = rho * dot(s, &d);
            alpha_buf[i] = a;
            // y is stored as the gradient change of -f.
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|di| *di *= gamma);
        }
        for (i, (s, y, rho)) in history.iter().enumerate() {
            let b = rho * dot(y, &d);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (alpha_buf[i] - b) * si;
            }
        }
        // Drop components that push into active bounds.
        for i in 0..n {
            if (x[i] <= lo[i] && d[i] < 0.0) || (x[i] >= hi[i] && d[i] > 0.0) {
                d[i] = 0.0;
            }
        }
        if dot(&d, &g) <= 0.0 {
            history.clear();
            for i in 0..n {
                d[i] = g[i];
                if (x[i] <= lo[i] && d[i] < 0.0) || (x[i] >= hi[i] && d[i] > 0.0) {
                    d[i] = 0.0;
                }
            }
        }

        let mut step = if history.is_empty() {
            // Unscaled first step: cap the largest move at 0.1 in any variable.
            let m = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if m > 0.0 {
                (0.1 / m).min(1.0)
            } else {
                1.0
            }
        } else {
            1.0
        };
        let mut accepted = false;
        for _ in 0..40 {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            project(&mut x_new, lo, hi);
            let f_new = f(&x_new, &mut g_new);
            if !f_new.is_finite() {
                return Err(Error::NonFiniteObjective(format!("during line search at {x_new:?}")));
            }
            let gain: f64 = g
                .iter()
                .zip(x_new.iter().zip(&x))
                .map(|(gi, (a, b))| gi * (a - b))
                .sum();
            if f_new >= fx + 1e-4 * gain && f_new >= fx {
                let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g.iter().zip(&g_new).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                let max_step = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if sy > 1e-12 {
                    if history.len() == settings.memory {
                        history.pop_front();
                    }
                    history.push_back((s, y, 1.0 / sy));
                }
                std::mem::swap(&mut x, &mut x_new);
                std::mem::swap(&mut g, &mut g_new);
                fx = f_new;
                accepted = true;
                if max_step < settings.step_tol {
                    return Ok(Outcome {
                        x,
                        value: fx,
                        iterations: iter + 1,
                        converged: true,
                    });
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No ascent along the projected direction: numerically stationary.
            return Ok(Outcome {
                x,
                value: fx,
                iterations: iter + 1,
                converged: true,
            });
        }
    }
    let converged = projected_grad_norm(&x, &g, lo, hi) < settings.grad_tol;
    Ok(Outcome {
        x,
        value: fx,
        iterations: settings.max_iter,
        converged,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concave_quadratic_unconstrained() {
        let target = [1.0, -2.0, 0.5];
        let scale = [1.0, 10.0, 0.1];
        let f = |x: &[f64], g: &mut [f64]| {
            let mut v = 0.0;
            for i in 0..3 {
                v -= scale[i] * (x[i] - target[i]).powi(2);
                g[i] = -2.0 * scale[i] * (x[i] - target[i]);
            }
            v
        };
        let out = maximize(
            f,
            &[0.0; 3],
            &[-10.0; 3],
            &[10.0; 3],
            &QuasiNewtonSettings {
                max_iter: 200,
                ..Default::default()
            },
        )
        .unwrap();
        for i in 0..3 {
            assert!((out.x[i] - target[i]).abs() < 1e-3, "{:?}", out.x);
        }
    }

    #[test]
    fn linear_objective_hits_bounds() {
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 1.0;
            g[1] = -1.0;
            x[0] - x[1]
        };
        let out = maximize(f, &[0.0, 0.0], &[-1.0, -2.0], &[3.0, 4.0], &Default::default()).unwrap();
        assert_eq!(out.x, vec![3.0, -2.0]);
    }

    #[test]
    fn already_optimal_stops_immediately() {
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = -2.0 * (x[0] - 1.0);
            -(x[0] - 1.0).powi(2)
        };
        let out = maximize(f, &[1.0], &[-5.0], &[5.0], &Default::default()).unwrap();
        assert!(out.iterations <= 2);
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn nan_objective_is_an_error() {
        let f = |_: &[f64], g: &mut [f64]| {
            g[0] = 0.0;
            f64::NAN
        };
        assert!(maximize(f, &[0.0], &[-1.0], &[1.0], &Default::default()).is_err());
    }
}
