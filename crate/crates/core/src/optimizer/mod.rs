//! Per-stroke trajectory optimization and the character-level driver.

pub mod lm;
pub mod objective;

use rayon::prelude::*;

use crate::brush::{reset_after_dip, BrushModel, BrushState};
use crate::calibration::CalibrationModel;
use crate::chebyshev::{TrajectorySpec, MAX_TRAJECTORY_ORDER, MIN_TRAJECTORY_ORDER};
use crate::error::{Error, Result};
use crate::raster::{render_stroke, Canvas, RenderConfig};
use crate::strokes::{extract_strokes, rasterize_stroke, CharacterEntry, StrokeRecord};

pub use lm::{IterationRecord, LmConfig, StrokeSolution, Termination};
pub use objective::{cost, end_betas, jacobian, FdSteps, Objective, ObjectiveConfig, SparseJacobian};

/// Everything the stroke and character optimizers need besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub canvas_size: usize,
    pub render: RenderConfig,
    /// Weight on the last two depression nodes; `None` uses
    /// `0.05 * size^2 / (N + 1)`.
    pub beta_end: Option<f64>,
    /// Constant initial depression.
    pub z0: f64,
    pub min_order: usize,
    pub max_order: usize,
    pub lm: LmConfig,
    /// Start each stroke from the previous stroke's final brush state
    /// instead of the post-dip reset.
    pub thread_state: bool,
}

impl OptimizerConfig {
    pub fn new(canvas_size: usize, model: BrushModel) -> Self {
        OptimizerConfig {
            canvas_size,
            render: RenderConfig::for_canvas(model, canvas_size),
            beta_end: None,
            z0: 0.7,
            min_order: MIN_TRAJECTORY_ORDER,
            max_order: MAX_TRAJECTORY_ORDER,
            lm: LmConfig::default(),
            thread_state: false,
        }
    }

    pub fn objective(&self, order: usize) -> ObjectiveConfig {
        let betas = match self.beta_end {
            Some(end) => end_betas(order, end),
            None => ObjectiveConfig::default_betas(order, self.canvas_size),
        };
        ObjectiveConfig {
            betas,
            canvas_size: self.canvas_size,
            render: self.render,
        }
    }

    fn orders(&self) -> Result<std::ops::RangeInclusive<usize>> {
        if self.min_order < MIN_TRAJECTORY_ORDER
            || self.max_order > MAX_TRAJECTORY_ORDER
            || self.min_order > self.max_order
        {
            return Err(Error::Config(format!(
                "order range {}..{} outside {MIN_TRAJECTORY_ORDER}..{MAX_TRAJECTORY_ORDER}",
                self.min_order, self.max_order
            )));
        }
        Ok(self.min_order..=self.max_order)
    }
}

/// Runs Levenberg-Marquardt from `spec0` against one stroke.
pub fn lm_solve(
    spec0: &TrajectorySpec,
    record: &StrokeRecord,
    state0: &BrushState,
    obj_cfg: &ObjectiveConfig,
    lm_cfg: &LmConfig,
    calib: &CalibrationModel,
) -> Result<StrokeSolution> {
    let objective = Objective::new(spec0.order(), record, *state0, obj_cfg, calib)?;
    lm::solve(&objective, spec0, lm_cfg)
}

/// Optimizes every order in the configured range from the skeleton
/// initialization and keeps the cheapest (lowest order on ties).
pub fn optimize_stroke(
    record: &StrokeRecord,
    state0: &BrushState,
    cfg: &OptimizerConfig,
    calib: &CalibrationModel,
) -> Result<StrokeSolution> {
    let orders: Vec<usize> = cfg.orders()?.collect();
    let solutions = orders
        .par_iter()
        .map(|&order| {
            let spec0 = record.initial_trajectory(order, cfg.z0)?;
            let sol = lm_solve(&spec0, record, state0, &cfg.objective(order), &cfg.lm, calib)?;
            log::debug!(
                "stroke {} order {order}: cost {:.3} -> {:.3} after {} trials ({:?})",
                record.index,
                sol.initial_cost,
                sol.final_cost,
                sol.iterations,
                sol.termination
            );
            Ok(sol)
        })
        .collect::<Result<Vec<_>>>()?;
    let order_costs: Vec<(usize, f64)> = solutions.iter().map(|s| (s.order, s.final_cost)).collect();
    let mut best = solutions
        .into_iter()
        .reduce(|best, s| if s.final_cost < best.final_cost { s } else { best })
        .expect("order range is non-empty");
    best.order_costs = order_costs;
    log::info!("stroke {}: order {} selected, cost {:.3}", record.index, best.order, best.final_cost);
    Ok(best)
}

/// Result for one stroke of a character.
#[derive(Debug)]
pub struct StrokeOutcome {
    pub index: usize,
    pub record: Option<StrokeRecord>,
    pub solution: Result<StrokeSolution>,
}

/// Brush state before a stroke in dip-reset mode: undeformed, trailing
/// the skeleton's initial direction.
pub fn dipped_state(record: &StrokeRecord) -> Result<BrushState> {
    reset_after_dip(&BrushState::default(), record.initial_direction()?)
}

/// Optimizes all strokes of `entry` in database order. A failing stroke is
/// reported in its outcome and does not stop the others.
pub fn optimize_character(
    entry: &CharacterEntry,
    cfg: &OptimizerConfig,
    calib: &CalibrationModel,
) -> Vec<StrokeOutcome> {
    let records: Vec<Result<StrokeRecord>> = (0..entry.stroke_count())
        .map(|i| rasterize_stroke(entry, i, cfg.canvas_size))
        .collect();

    if cfg.thread_state {
        let mut outcomes = Vec::with_capacity(records.len());
        let mut previous: Option<BrushState> = None;
        for (index, record) in records.into_iter().enumerate() {
            let outcome = match record {
                Ok(record) => {
                    let solution = match previous {
                        Some(state) => Ok(state),
                        None => dipped_state(&record),
                    }
                    .and_then(|state0| optimize_stroke(&record, &state0, cfg, calib));
                    previous = solution.as_ref().ok().map(|s| s.final_state);
                    StrokeOutcome { index, record: Some(record), solution }
                }
                Err(e) => {
                    previous = None;
                    StrokeOutcome { index, record: None, solution: Err(e) }
                }
            };
            outcomes.push(outcome);
        }
        outcomes
    } else {
        records
            .into_par_iter()
            .enumerate()
            .map(|(index, record)| match record {
                Ok(record) => {
                    let solution = dipped_state(&record)
                        .and_then(|state0| optimize_stroke(&record, &state0, cfg, calib));
                    StrokeOutcome { index, record: Some(record), solution }
                }
                Err(e) => StrokeOutcome { index, record: None, solution: Err(e) },
            })
            .collect()
    }
}

/// Renders solved strokes onto one shared canvas.
pub fn render_character<'a>(
    solutions: impl IntoIterator<Item = &'a StrokeSolution>,
    canvas_size: usize,
    render: &RenderConfig,
    calib: &CalibrationModel,
) -> Result<Canvas> {
    let mut canvas = Canvas::square(canvas_size)?;
    for s in solutions {
        render_stroke(&s.spec, &s.initial_state, calib, &mut canvas, render)?;
    }
    Ok(canvas)
}

/// Initial trajectories of every stroke rendered on one canvas, for
/// before/after comparisons.
pub fn render_initial_character(
    entry: &CharacterEntry,
    cfg: &OptimizerConfig,
    order: usize,
    calib: &CalibrationModel,
) -> Result<Canvas> {
    let mut canvas = Canvas::square(cfg.canvas_size)?;
    for record in extract_strokes(entry, cfg.canvas_size)? {
        let spec = record.initial_trajectory(order, cfg.z0)?;
        render_stroke(&spec, &dipped_state(&record)?, calib, &mut canvas, &cfg.render)?;
    }
    Ok(canvas)
}
