//! Levenberg-Marquardt over a stroke objective.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::objective::{directional_mismatch, FdSteps, Objective, SparseJacobian};
use crate::brush::BrushState;
use crate::chebyshev::TrajectorySpec;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub lambda0: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    /// Upper bound on step trials (accepted or rejected).
    pub max_iters: usize,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub rel_tol: f64,
    /// Damping beyond which the solver gives up on Gauss-Newton steps.
    pub lambda_max: f64,
    pub fd_steps: FdSteps,
    /// Depression step of the fallback coordinate search.
    pub z_search_step: f64,
    /// Cross-check the Jacobian along a fixed direction every n trials.
    pub jacobian_check_every: Option<usize>,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            lambda0: 1e-3,
            lambda_up: 10.0,
            lambda_down: 10.0,
            max_iters: 100,
            rel_tol: 1e-6,
            lambda_max: 1e10,
            fd_steps: FdSteps::default(),
            z_search_step: 0.05,
            jacobian_check_every: None,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda0 > 0.0
            && self.lambda_up > 1.0
            && self.lambda_down > 1.0
            && self.rel_tol > 0.0
            && self.lambda_max > self.lambda0
            && self.fd_steps.xy > 0.0
            && self.fd_steps.z > 0.0
            && self.z_search_step > 0.0;
        if ok {
            Ok(())
        } else {
            Err(crate::Error::Config(format!("invalid LM configuration {self:?}")))
        }
    }
}

/// One entry of the iteration log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub lambda: f64,
    pub cost: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// The start point already has zero cost.
    Stationary,
    RelativeTolerance,
    MaxIterations,
    /// Damping overflowed and the coordinate search found nothing.
    NoProgress,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrokeSolution {
    pub spec: TrajectorySpec,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub order: usize,
    /// Step trials performed.
    pub iterations: usize,
    pub accepted_steps: usize,
    pub termination: Termination,
    pub initial_state: BrushState,
    pub final_state: BrushState,
    pub log: Vec<IterationRecord>,
    /// `(order, final cost)` for every order tried, when produced by a sweep.
    pub order_costs: Vec<(usize, f64)>,
}

impl StrokeSolution {
    /// True when the solver stopped without improving on its start point.
    pub fn made_no_progress(&self) -> bool {
        self.termination == Termination::NoProgress && self.accepted_steps == 0
    }
}

/// Minimizes the objective from `spec0`.
///
/// A trial step is accepted only if it strictly lowers the cost. When the
/// damping overflows (or the gradient vanishes) a coordinate search over
/// the depression nodes is attempted before giving up.
pub fn solve(objective: &Objective<'_>, spec0: &TrajectorySpec, cfg: &LmConfig) -> Result<StrokeSolution> {
    cfg.validate()?;
    let order = objective.order();
    let mut x = spec0.to_flat();
    let mut r = objective.residuals(&x)?;
    let initial_cost = sq(&r);
    let mut cost = initial_cost;
    let mut log = Vec::new();
    let mut iterations = 0;
    let mut accepted_steps = 0;
    let mut termination = Termination::MaxIterations;

    if cost == 0.0 {
        termination = Termination::Stationary;
    } else if cfg.max_iters > 0 {
        let mut lambda = cfg.lambda0;
        let mut jac = objective.jacobian(&x, &cfg.fd_steps)?;
        let (mut jtj, mut jtr) = jac.normal_equations(&r);

        loop {
            if iterations >= cfg.max_iters {
                termination = Termination::MaxIterations;
                break;
            }
            let flat_model = jtr.iter().all(|g| *g == 0.0);
            let mut improved = false;
            if !flat_model {
                iterations += 1;
                let trial = match damped_step(&jtj, &jtr, lambda) {
                    Some(delta) => {
                        let candidate: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
                        let r_new = objective.residuals(&candidate)?;
                        let c = sq(&r_new);
                        (c < cost).then_some((candidate, r_new, c))
                    }
                    None => None,
                };
                match trial {
                    Some((candidate, r_new, new_cost)) => {
                        let rel = (cost - new_cost) / cost;
                        x = candidate;
                        r = r_new;
                        cost = new_cost;
                        accepted_steps += 1;
                        lambda = (lambda / cfg.lambda_down).max(f64::MIN_POSITIVE);
                        log.push(IterationRecord { iter: iterations, lambda, cost, accepted: true });
                        if rel < cfg.rel_tol || cost == 0.0 {
                            termination = Termination::RelativeTolerance;
                            break;
                        }
                        improved = true;
                    }
                    None => {
                        lambda *= cfg.lambda_up;
                        log.push(IterationRecord { iter: iterations, lambda, cost, accepted: false });
                    }
                }
            }

            if !improved && (flat_model || lambda > cfg.lambda_max) {
                if iterations >= cfg.max_iters {
                    termination = Termination::MaxIterations;
                    break;
                }
                iterations += 1;
                match coordinate_search(objective, &x, cost, cfg.z_search_step)? {
                    Some((x_new, r_new)) => {
                        x = x_new;
                        r = r_new;
                        cost = sq(&r);
                        accepted_steps += 1;
                        lambda = cfg.lambda0;
                        log.push(IterationRecord { iter: iterations, lambda, cost, accepted: true });
                        improved = true;
                    }
                    None => {
                        log.push(IterationRecord { iter: iterations, lambda, cost, accepted: false });
                        termination = Termination::NoProgress;
                        break;
                    }
                }
            }

            if improved {
                jac = objective.jacobian(&x, &cfg.fd_steps)?;
                (jtj, jtr) = jac.normal_equations(&r);
                if let Some(every) = cfg.jacobian_check_every {
                    if every > 0 && iterations % every == 0 {
                        check_jacobian(objective, &jac, &x, &cfg.fd_steps)?;
                    }
                }
            }
        }
    }

    let spec = TrajectorySpec::from_flat(order, &x)?;
    let (_, final_state) = objective.render_flat(&x)?;
    Ok(StrokeSolution {
        spec,
        initial_cost,
        final_cost: cost,
        order,
        iterations,
        accepted_steps,
        termination,
        initial_state: objective.initial_state(),
        final_state,
        log,
        order_costs: Vec::new(),
    })
}

fn sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Solves `(J^T J + lambda diag(J^T J)) delta = -J^T r`.
///
/// Zero diagonal entries (parameters that currently do not move any pixel)
/// are floored at a tiny fraction of the largest one so the system stays
/// positive definite.
fn damped_step(jtj: &DMatrix<f64>, jtr: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let n = jtj.nrows();
    let max_diag = (0..n).map(|i| jtj[(i, i)]).fold(0.0, f64::max);
    let floor = (max_diag * 1e-9).max(1e-12);
    let mut a = jtj.clone();
    for i in 0..n {
        a[(i, i)] += lambda * jtj[(i, i)].max(floor);
    }
    let chol = a.cholesky()?;
    let delta = chol.solve(&(-jtr));
    delta.iter().all(|v| v.is_finite()).then_some(delta)
}

/// Tries `z_k +- step` for each node in turn, keeping every improvement.
fn coordinate_search(
    objective: &Objective<'_>,
    x: &[f64],
    cost: f64,
    step: f64,
) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    let n = objective.order() + 1;
    let mut best_x = x.to_vec();
    let mut best: Option<Vec<f64>> = None;
    let mut best_cost = cost;
    for k in 0..n {
        for sign in [1.0, -1.0] {
            let mut trial = best_x.clone();
            trial[2 * n + k] += sign * step;
            let r = objective.residuals(&trial)?;
            let c = sq(&r);
            if c < best_cost {
                best_cost = c;
                best_x = trial;
                best = Some(r);
                break;
            }
        }
    }
    Ok(best.map(|r| (best_x, r)))
}

fn check_jacobian(objective: &Objective<'_>, jac: &SparseJacobian, x: &[f64], steps: &FdSteps) -> Result<()> {
    let deltas = steps.per_variable(objective.order());
    let direction: Vec<f64> = deltas
        .iter()
        .enumerate()
        .map(|(j, d)| if j % 2 == 0 { *d } else { -0.5 * d })
        .collect();
    let mismatch = directional_mismatch(objective, jac, x, &direction, 0.5)?;
    if mismatch > 5e-3 {
        log::warn!("jacobian cross-check: relative mismatch {mismatch:.3e}");
    } else {
        log::debug!("jacobian cross-check: relative mismatch {mismatch:.3e}");
    }
    Ok(())
}
