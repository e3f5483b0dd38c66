//! Chebyshev-Gauss-Lobatto collocation: nodes, barycentric weights,
//! interpolation and dense sampling of three-axis stroke trajectories.
//!
//! Parameter time runs from `t = 1` (stroke start, node 0) down to
//! `t = -1` (stroke end, node `N`), so node order matches the order of
//! points along a stroke skeleton.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Lowest polynomial order accepted for a stroke trajectory.
pub const MIN_TRAJECTORY_ORDER: usize = 3;
/// Highest polynomial order accepted for a stroke trajectory.
pub const MAX_TRAJECTORY_ORDER: usize = 8;

/// Distance below which `t` is treated as coinciding with a node.
const NODE_EPS: f64 = 1e-14;

/// CGL nodes `t_k = cos(pi k / N)` together with their barycentric weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CglGrid {
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl CglGrid {
    pub fn new(order: usize) -> Result<Self> {
        Ok(CglGrid {
            order,
            nodes: cgl_nodes(order)?,
            weights: barycentric_weights(order)?,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Normalized Lagrange basis values at `t`, written into `row`.
    ///
    /// `row` sums to one; at a node it is the corresponding unit vector.
    fn basis_row(&self, t: f64, row: &mut [f64]) {
        debug_assert_eq!(row.len(), self.nodes.len());
        if let Some(k) = self
            .nodes
            .iter()
            .position(|&tk| t == tk || (t - tk).abs() <= NODE_EPS)
        {
            row.iter_mut().for_each(|r| *r = 0.0);
            row[k] = 1.0;
            return;
        }
        let mut denom = 0.0;
        for ((r, &tk), &wk) in row.iter_mut().zip(&self.nodes).zip(&self.weights) {
            *r = wk / (t - tk);
            denom += *r;
        }
        row.iter_mut().for_each(|r| *r /= denom);
    }
}

/// Chebyshev-Gauss-Lobatto nodes for order `n`, ordered from 1 down to -1.
pub fn cgl_nodes(n: usize) -> Result<Vec<f64>> {
    if n < 1 {
        return Err(Error::InvalidOrder(n));
    }
    Ok((0..=n)
        .map(|k| {
            // exact endpoints and centre; cos() gives 6e-17 at pi/2
            if k == 0 {
                1.0
            } else if k == n {
                -1.0
            } else if 2 * k == n {
                0.0
            } else {
                (PI * k as f64 / n as f64).cos()
            }
        })
        .collect())
}

/// Barycentric weights: `(-1)^k / 2` at both ends, `(-1)^k` inside.
pub fn barycentric_weights(n: usize) -> Result<Vec<f64>> {
    if n < 1 {
        return Err(Error::InvalidOrder(n));
    }
    Ok((0..=n)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            if k == 0 || k == n {
                sign / 2.0
            } else {
                sign
            }
        })
        .collect())
}

/// Barycentric interpolation of nodal `values` at `t`.
pub fn interpolate(values: &[f64], grid: &CglGrid, t: f64) -> Result<f64> {
    if values.len() != grid.len() {
        return Err(Error::Dimension {
            expected: grid.len(),
            actual: values.len(),
        });
    }
    let mut row = vec![0.0; grid.len()];
    grid.basis_row(t, &mut row);
    Ok(dot(&row, values))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `M` evenly spaced parameters from 1 down to -1 inclusive.
pub fn dense_parameters(m: usize) -> Result<Vec<f64>> {
    if m < 2 {
        return Err(Error::InvalidSampling(m));
    }
    let last = (m - 1) as f64;
    Ok((0..m).map(|i| 1.0 - 2.0 * i as f64 / last).collect())
}

/// Precomputed Lagrange basis for a fixed grid and a fixed set of parameters.
///
/// Evaluating a trajectory through the basis gives exactly the same numbers
/// as calling [`interpolate`] at each parameter.
#[derive(Debug, Clone)]
pub struct SamplingBasis {
    order: usize,
    samples: usize,
    rows: Vec<f64>,
}

impl SamplingBasis {
    pub fn new(grid: &CglGrid, m: usize) -> Result<Self> {
        let params = dense_parameters(m)?;
        let width = grid.len();
        let mut rows = vec![0.0; m * width];
        for (row, &t) in rows.chunks_exact_mut(width).zip(&params) {
            grid.basis_row(t, row);
        }
        Ok(SamplingBasis {
            order: grid.order(),
            samples: m,
            rows,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Dense `(x, y, z)` samples of `spec`.
    pub fn sample(&self, spec: &TrajectorySpec) -> Result<Vec<[f64; 3]>> {
        if spec.order() != self.order {
            return Err(Error::Dimension {
                expected: self.order + 1,
                actual: spec.order() + 1,
            });
        }
        Ok(self.sample_axes(&spec.x, &spec.y, &spec.z))
    }

    /// Dense samples of a flat `x | y | z` decision vector.
    pub fn sample_flat(&self, flat: &[f64]) -> Result<Vec<[f64; 3]>> {
        let n = self.order + 1;
        if flat.len() != 3 * n {
            return Err(Error::Dimension {
                expected: 3 * n,
                actual: flat.len(),
            });
        }
        Ok(self.sample_axes(&flat[..n], &flat[n..2 * n], &flat[2 * n..]))
    }

    fn sample_axes(&self, x: &[f64], y: &[f64], z: &[f64]) -> Vec<[f64; 3]> {
        self.rows
            .chunks_exact(self.order + 1)
            .map(|row| [dot(row, x), dot(row, y), dot(row, z)])
            .collect()
    }
}

/// A stroke trajectory given by its values at the CGL nodes of each axis.
///
/// `x` and `y` are canvas pixels, `z` is brush depression.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySpec {
    order: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl TrajectorySpec {
    /// Builds a trajectory, checking order range, lengths and finiteness.
    pub fn new(order: usize, x: Vec<f64>, y: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        if !(MIN_TRAJECTORY_ORDER..=MAX_TRAJECTORY_ORDER).contains(&order) {
            return Err(Error::InvalidOrder(order));
        }
        for axis in [&x, &y, &z] {
            if axis.len() != order + 1 {
                return Err(Error::Dimension {
                    expected: order + 1,
                    actual: axis.len(),
                });
            }
            if axis.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("trajectory values must be finite".into()));
            }
        }
        Ok(TrajectorySpec { order, x, y, z })
    }

    /// Trajectory from a flat decision vector laid out as `x | y | z`.
    pub fn from_flat(order: usize, flat: &[f64]) -> Result<Self> {
        let n = order + 1;
        if flat.len() != 3 * n {
            return Err(Error::Dimension {
                expected: 3 * n,
                actual: flat.len(),
            });
        }
        Self::new(
            order,
            flat[..n].to_vec(),
            flat[n..2 * n].to_vec(),
            flat[2 * n..].to_vec(),
        )
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of nodes per axis (`N + 1`).
    pub fn node_count(&self) -> usize {
        self.order + 1
    }

    /// Decision vector `x | y | z`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(3 * self.node_count());
        flat.extend_from_slice(&self.x);
        flat.extend_from_slice(&self.y);
        flat.extend_from_slice(&self.z);
        flat
    }
}

/// Samples `spec` at `m` evenly spaced parameters from stroke start to end.
pub fn sample_dense(spec: &TrajectorySpec, m: usize) -> Result<Vec<[f64; 3]>> {
    let grid = CglGrid::new(spec.order())?;
    SamplingBasis::new(&grid, m)?.sample(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn nodes_small_orders() {
        assert_eq!(cgl_nodes(1).unwrap(), vec![1.0, -1.0]);
        assert_eq!(cgl_nodes(2).unwrap(), vec![1.0, 0.0, -1.0]);
        let n4 = cgl_nodes(4).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for (a, b) in n4.iter().zip([1.0, h, 0.0, -h, -1.0]) {
            assert!(close(*a, b, 1e-15), "{a} vs {b}");
        }
        assert!(matches!(cgl_nodes(0), Err(Error::InvalidOrder(0))));
    }

    #[test]
    fn nodes_symmetric_and_decreasing() {
        for n in 1..=12 {
            let t = cgl_nodes(n).unwrap();
            assert_eq!(t[0], 1.0);
            assert_eq!(t[n], -1.0);
            for k in 0..n {
                assert!(t[k] > t[k + 1]);
            }
            for k in 0..=n {
                assert!(close(t[k], -t[n - k], 1e-15));
            }
        }
    }

    #[test]
    fn weights_follow_sign_pattern() {
        assert_eq!(barycentric_weights(2).unwrap(), vec![0.5, -1.0, 0.5]);
        assert_eq!(barycentric_weights(3).unwrap(), vec![0.5, -1.0, 1.0, -0.5]);
        assert_eq!(barycentric_weights(1).unwrap(), vec![0.5, -0.5]);
        assert!(barycentric_weights(0).is_err());
    }

    #[test]
    fn interpolate_constant_and_nodes() {
        let grid = CglGrid::new(5).unwrap();
        let c = vec![3.25; 6];
        for t in [-1.0, -0.77, 0.0, 0.1234, 0.999, 1.0] {
            assert!(close(interpolate(&c, &grid, t).unwrap(), 3.25, 1e-14));
        }
        let v: Vec<f64> = (0..6).map(|k| k as f64 * 1.5 - 2.0).collect();
        for (k, &tk) in grid.nodes().iter().enumerate() {
            assert_eq!(interpolate(&v, &grid, tk).unwrap(), v[k]);
        }
    }

    #[test]
    fn interpolate_square_at_point_three() {
        let grid = CglGrid::new(4).unwrap();
        let v: Vec<f64> = grid.nodes().iter().map(|t| t * t).collect();
        assert!(close(interpolate(&v, &grid, 0.3).unwrap(), 0.09, 1e-12));
    }

    #[test]
    fn interpolate_rejects_length_mismatch() {
        let grid = CglGrid::new(4).unwrap();
        assert!(matches!(
            interpolate(&[1.0, 2.0], &grid, 0.0),
            Err(Error::Dimension { expected: 5, actual: 2 })
        ));
    }

    #[test]
    fn dense_sampling_examples() {
        let spec = TrajectorySpec::new(3, vec![10.0; 4], vec![10.0; 4], vec![1.0; 4]).unwrap();
        let pts = sample_dense(&spec, 5).unwrap();
        assert_eq!(pts.len(), 5);
        for p in pts {
            for (a, b) in p.iter().zip([10.0, 10.0, 1.0]) {
                assert!(close(*a, b, 1e-12));
            }
        }

        let grid = CglGrid::new(4).unwrap();
        let x = grid.nodes().to_vec();
        let spec = TrajectorySpec::new(4, x, vec![0.0; 5], vec![0.0; 5]).unwrap();
        let xs: Vec<f64> = sample_dense(&spec, 3).unwrap().iter().map(|p| p[0]).collect();
        assert!(close(xs[0], 1.0, 1e-15) && close(xs[1], 0.0, 1e-15) && close(xs[2], -1.0, 1e-15));

        let ends = sample_dense(&spec, 2).unwrap();
        assert_eq!(ends[0][0], 1.0);
        assert_eq!(ends[1][0], -1.0);

        assert!(matches!(sample_dense(&spec, 1), Err(Error::InvalidSampling(1))));
    }

    #[test]
    fn trajectory_validation() {
        assert!(TrajectorySpec::new(2, vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]).is_err());
        assert!(TrajectorySpec::new(9, vec![0.0; 10], vec![0.0; 10], vec![0.0; 10]).is_err());
        assert!(TrajectorySpec::new(3, vec![0.0; 4], vec![0.0; 3], vec![0.0; 4]).is_err());
        assert!(TrajectorySpec::new(3, vec![f64::NAN, 0.0, 0.0, 0.0], vec![0.0; 4], vec![0.0; 4]).is_err());
        let spec = TrajectorySpec::new(3, vec![1.0; 4], vec![2.0; 4], vec![3.0; 4]).unwrap();
        assert_eq!(TrajectorySpec::from_flat(3, &spec.to_flat()).unwrap(), spec);
    }
}
