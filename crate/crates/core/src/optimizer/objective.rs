//! Residual vector of one stroke: per-pixel image differences followed by
//! the depression penalties `sqrt(beta_k) * z_k`, and its finite-difference
//! Jacobian.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::brush::BrushState;
use crate::calibration::CalibrationModel;
use crate::chebyshev::{CglGrid, SamplingBasis, TrajectorySpec};
use crate::error::{Error, Result};
use crate::raster::{image_residuals, render_samples, Canvas, RenderConfig};
use crate::strokes::StrokeRecord;

/// Weights and rendering settings of the per-stroke objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveConfig {
    /// One non-negative weight per CGL index.
    pub betas: Vec<f64>,
    pub canvas_size: usize,
    pub render: RenderConfig,
}

impl ObjectiveConfig {
    /// Default weights: zero inside, `0.05 * size^2 / (N + 1)` on the last
    /// two nodes in stroke time, which pushes the brush up at the stroke end.
    pub fn default_betas(order: usize, canvas_size: usize) -> Vec<f64> {
        let end = 0.05 * (canvas_size * canvas_size) as f64 / (order + 1) as f64;
        end_betas(order, end)
    }

    pub fn new(order: usize, canvas_size: usize, render: RenderConfig) -> Self {
        ObjectiveConfig {
            betas: Self::default_betas(order, canvas_size),
            canvas_size,
            render,
        }
    }
}

/// Zero weights except `end` on the final two nodes.
pub fn end_betas(order: usize, end: f64) -> Vec<f64> {
    let mut betas = vec![0.0; order + 1];
    for b in betas.iter_mut().skip(order.saturating_sub(1)) {
        *b = end;
    }
    betas
}

/// Finite-difference step sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdSteps {
    /// For x and y node values, in pixels.
    pub xy: f64,
    /// For z node values, in depression units.
    pub z: f64,
}

impl Default for FdSteps {
    fn default() -> Self {
        FdSteps { xy: 0.5, z: 0.02 }
    }
}

impl FdSteps {
    /// Step for each entry of a flat `x | y | z` vector.
    pub fn per_variable(&self, order: usize) -> Vec<f64> {
        let n = order + 1;
        (0..3 * n).map(|j| if j < 2 * n { self.xy } else { self.z }).collect()
    }
}

/// A prepared stroke objective for one polynomial order.
pub struct Objective<'a> {
    order: usize,
    record: &'a StrokeRecord,
    state0: BrushState,
    calib: &'a CalibrationModel,
    render: RenderConfig,
    sqrt_betas: Vec<f64>,
    basis: SamplingBasis,
}

impl<'a> Objective<'a> {
    pub fn new(
        order: usize,
        record: &'a StrokeRecord,
        state0: BrushState,
        cfg: &ObjectiveConfig,
        calib: &'a CalibrationModel,
    ) -> Result<Self> {
        if cfg.betas.len() != order + 1 {
            return Err(Error::Dimension {
                expected: order + 1,
                actual: cfg.betas.len(),
            });
        }
        if cfg.betas.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
            return Err(Error::Config("regularization weights must be non-negative".into()));
        }
        let reference = &record.reference;
        if reference.width() != cfg.canvas_size || reference.height() != cfg.canvas_size {
            return Err(Error::Dimension {
                expected: cfg.canvas_size * cfg.canvas_size,
                actual: reference.width() * reference.height(),
            });
        }
        let basis = SamplingBasis::new(&CglGrid::new(order)?, cfg.render.samples)?;
        Ok(Objective {
            order,
            record,
            state0,
            calib,
            render: cfg.render,
            sqrt_betas: cfg.betas.iter().map(|b| b.sqrt()).collect(),
            basis,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn parameter_count(&self) -> usize {
        3 * (self.order + 1)
    }

    pub fn residual_count(&self) -> usize {
        self.record.reference.pixels().len() + self.order + 1
    }

    pub fn initial_state(&self) -> BrushState {
        self.state0
    }

    /// Simulated image and final brush state for a flat decision vector.
    pub fn render_flat(&self, flat: &[f64]) -> Result<(Canvas, BrushState)> {
        let samples = self.basis.sample_flat(flat)?;
        let reference = &self.record.reference;
        let mut canvas = Canvas::new(reference.width(), reference.height())?;
        let state = render_samples(&samples, &self.state0, self.calib, &mut canvas, &self.render);
        Ok((canvas, state))
    }

    fn z_values<'b>(&self, flat: &'b [f64]) -> &'b [f64] {
        &flat[2 * (self.order + 1)..]
    }

    /// Full residual vector: image differences, then `sqrt(beta_k) z_k`.
    pub fn residuals(&self, flat: &[f64]) -> Result<Vec<f64>> {
        let (canvas, _) = self.render_flat(flat)?;
        let mut r = image_residuals(&canvas, &self.record.reference)?;
        r.extend(
            self.sqrt_betas
                .iter()
                .zip(self.z_values(flat))
                .map(|(sb, z)| sb * z),
        );
        Ok(r)
    }

    pub fn cost(&self, flat: &[f64]) -> Result<f64> {
        Ok(squared_norm(&self.residuals(flat)?))
    }

    /// Central-difference Jacobian; columns are evaluated independently and
    /// in parallel, with results identical to a sequential evaluation.
    pub fn jacobian(&self, flat: &[f64], steps: &FdSteps) -> Result<SparseJacobian> {
        let deltas = steps.per_variable(self.order);
        if flat.len() != deltas.len() {
            return Err(Error::Dimension {
                expected: deltas.len(),
                actual: flat.len(),
            });
        }
        let pixels = self.record.reference.pixels().len();
        let n = self.order + 1;
        let columns = (0..flat.len())
            .into_par_iter()
            .map(|j| -> Result<Vec<(u32, f64)>> {
                let delta = deltas[j];
                let mut plus = flat.to_vec();
                plus[j] += delta;
                let mut minus = flat.to_vec();
                minus[j] -= delta;
                let (sim_plus, _) = self.render_flat(&plus)?;
                let (sim_minus, _) = self.render_flat(&minus)?;
                let scale = 1.0 / (2.0 * delta);
                let mut col: Vec<(u32, f64)> = sim_plus
                    .pixels()
                    .iter()
                    .zip(sim_minus.pixels())
                    .enumerate()
                    .filter(|(_, (a, b))| a != b)
                    .map(|(i, (a, b))| (i as u32, (a - b) * scale))
                    .collect();
                if j >= 2 * n {
                    let k = j - 2 * n;
                    let sb = self.sqrt_betas[k];
                    let d = (sb * plus[j] - sb * minus[j]) * scale;
                    if d != 0.0 {
                        col.push(((pixels + k) as u32, d));
                    }
                }
                Ok(col)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SparseJacobian {
            rows: pixels + n,
            columns,
        })
    }
}

pub(crate) fn squared_norm(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Column-compressed Jacobian; each column lists `(row, value)` pairs in
/// increasing row order.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseJacobian {
    rows: usize,
    columns: Vec<Vec<(u32, f64)>>,
}

impl SparseJacobian {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[(u32, f64)] {
        &self.columns[j]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.columns.len());
        for (j, col) in self.columns.iter().enumerate() {
            for &(i, v) in col {
                m[(i as usize, j)] = v;
            }
        }
        m
    }

    /// `J v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        for (col, &vj) in self.columns.iter().zip(v) {
            for &(i, x) in col {
                out[i as usize] += x * vj;
            }
        }
        out
    }

    /// `(J^T J, J^T r)`.
    pub fn normal_equations(&self, r: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.columns.len();
        let mut jtj = DMatrix::zeros(n, n);
        let mut jtr = DVector::zeros(n);
        for a in 0..n {
            jtr[a] = self.columns[a].iter().map(|&(i, v)| v * r[i as usize]).sum();
            for b in a..n {
                let dot = sparse_dot(&self.columns[a], &self.columns[b]);
                jtj[(a, b)] = dot;
                jtj[(b, a)] = dot;
            }
        }
        (jtj, jtr)
    }
}

fn sparse_dot(a: &[(u32, f64)], b: &[(u32, f64)]) -> f64 {
    let (mut i, mut j, mut sum) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                sum += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    sum
}

/// Residuals and scalar cost of `spec` against `record`.
pub fn cost(
    spec: &TrajectorySpec,
    record: &StrokeRecord,
    state0: &BrushState,
    cfg: &ObjectiveConfig,
    calib: &CalibrationModel,
) -> Result<(Vec<f64>, f64)> {
    let objective = Objective::new(spec.order(), record, *state0, cfg, calib)?;
    let r = objective.residuals(&spec.to_flat())?;
    let c = squared_norm(&r);
    Ok((r, c))
}

/// Dense finite-difference Jacobian of the residual vector.
pub fn jacobian(
    spec: &TrajectorySpec,
    record: &StrokeRecord,
    state0: &BrushState,
    cfg: &ObjectiveConfig,
    calib: &CalibrationModel,
    steps: &FdSteps,
) -> Result<DMatrix<f64>> {
    let objective = Objective::new(spec.order(), record, *state0, cfg, calib)?;
    Ok(objective.jacobian(&spec.to_flat(), steps)?.to_dense())
}

/// Relative disagreement between `J p` and the central difference of the
/// residuals along `p` with step `h`:
/// `|J p - (r(x + h p) - r(x - h p)) / 2h| / |(r(x + h p) - r(x - h p)) / 2h|`.
pub fn directional_mismatch(
    objective: &Objective<'_>,
    jac: &SparseJacobian,
    flat: &[f64],
    direction: &[f64],
    h: f64,
) -> Result<f64> {
    let plus: Vec<f64> = flat.iter().zip(direction).map(|(x, p)| x + h * p).collect();
    let minus: Vec<f64> = flat.iter().zip(direction).map(|(x, p)| x - h * p).collect();
    let rp = objective.residuals(&plus)?;
    let rm = objective.residuals(&minus)?;
    let fd: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
    let jp = jac.apply(direction);
    let diff: Vec<f64> = jp.iter().zip(&fd).map(|(a, b)| a - b).collect();
    let denom = squared_norm(&fd).sqrt();
    let num = squared_norm(&diff).sqrt();
    Ok(if denom > 0.0 {
        num / denom
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        0.0
    })
}
