//! Virtual brush models.
//!
//! The simple brush stamps a disk whose radius grows linearly with the
//! depression `z`. The dynamic brush carries a 7-dimensional state: the
//! handle position `(x, y, z)` plus mark width `w`, drag `d`, root offset
//! `o` and orientation `theta`. The root of the mark sits at
//! `(x, y) - o * V(theta)` with `V(theta) = (cos theta, sin theta)`, so
//! `V(theta)` points from the root toward the handle and the droplet
//! extends from the root along `-V(theta)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationModel;
use crate::error::{Error, Result};
use crate::geom::{normalize_angle, Vec2};

/// Inertia used for both width and drag unless configured otherwise.
pub const DEFAULT_INERTIA: f64 = 0.02;

/// Below this distance the handle is considered to sit on the old root.
const DEGENERATE_OFFSET: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BrushState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
    pub d: f64,
    pub o: f64,
    pub theta: f64,
}

impl BrushState {
    /// State at rest at `(x, y, z)` with an undeformed brush.
    pub fn at(x: f64, y: f64, z: f64) -> Self {
        BrushState {
            x,
            y,
            z,
            ..Default::default()
        }
    }

    /// Handle position projected onto the paper.
    pub fn handle(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// Per-step handle displacement (velocity already multiplied by the step).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
}

impl ControlInput {
    pub fn between(from: [f64; 3], to: [f64; 3]) -> Self {
        ControlInput {
            vx: to[0] - from[0],
            vy: to[1] - from[1],
            vz: to[2] - from[2],
        }
    }
}

/// Inked droplet left by the dynamic brush at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    /// Middle of the flat end.
    pub root: Vec2,
    pub width: f64,
    pub drag: f64,
    /// Unit vector from the root toward the tip.
    pub direction: Vec2,
}

impl Footprint {
    pub fn translated(&self, by: Vec2) -> Footprint {
        Footprint {
            root: self.root + by,
            ..*self
        }
    }
}

/// Inertia constants of the dynamic brush.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicParams {
    pub k_w: f64,
    pub k_d: f64,
}

impl Default for DynamicParams {
    fn default() -> Self {
        DynamicParams {
            k_w: DEFAULT_INERTIA,
            k_d: DEFAULT_INERTIA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BrushModel {
    Simple,
    Dynamic,
}

impl fmt::Display for BrushModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BrushModel::Simple => "simple",
            BrushModel::Dynamic => "dynamic",
        })
    }
}

impl FromStr for BrushModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simple" => Ok(BrushModel::Simple),
            "dynamic" => Ok(BrushModel::Dynamic),
            other => Err(Error::Config(format!("unknown brush model '{other}'"))),
        }
    }
}

/// `pi(X) - o * V(theta)`.
pub fn root_location(state: &BrushState) -> Vec2 {
    state.handle() - Vec2::from_angle(state.theta) * state.o
}

/// Advances the dynamic brush by one control step.
pub fn step_dynamic(
    state: &BrushState,
    u: ControlInput,
    calib: &CalibrationModel,
    params: DynamicParams,
) -> BrushState {
    let x = state.x + u.vx;
    let y = state.y + u.vy;
    let z = state.z + u.vz;
    let target = calib.evaluate(z);

    let w = state.w * params.k_w + target.width * (1.0 - params.k_w);
    let d = state.d * params.k_d + target.drag * (1.0 - params.k_d);

    // Friction: the old root holds until the handle drags it further than
    // the relaxed offset allows.
    let old_root = root_location(state);
    let to_handle = Vec2::new(x, y) - old_root;
    let stay_put = to_handle.length();
    let o = target.offset.min(stay_put);
    let theta = if stay_put > DEGENERATE_OFFSET {
        normalize_angle(to_handle.angle())
    } else {
        state.theta
    };

    BrushState {
        x,
        y,
        z,
        w,
        d,
        o,
        theta,
    }
}

/// Brush state after an ink dip: width, drag and offset are cleared and
/// the mark is oriented to trail behind `initial_direction`.
pub fn reset_after_dip(state: &BrushState, initial_direction: Vec2) -> Result<BrushState> {
    let len = initial_direction.length();
    if !(len > 0.0 && len.is_finite()) {
        return Err(Error::InvalidDirection(initial_direction.x, initial_direction.y));
    }
    let dir = initial_direction * (1.0 / len);
    Ok(BrushState {
        w: 0.0,
        d: 0.0,
        o: 0.0,
        theta: normalize_angle((-dir).angle()),
        ..*state
    })
}

/// The droplet drawn by `state`, or `None` when the brush leaves no mark.
pub fn footprint_of(state: &BrushState) -> Option<Footprint> {
    if !(state.z > 0.0 && state.w > 0.0 && state.d > 0.0) {
        return None;
    }
    Some(Footprint {
        root: root_location(state),
        width: state.w,
        drag: state.d,
        direction: -Vec2::from_angle(state.theta),
    })
}

/// Disk radius of the simple brush: proportional to depression, never negative.
pub fn simple_brush_radius(z: f64, gain: f64) -> f64 {
    (gain * z).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn state(x: f64, y: f64, z: f64, w: f64, d: f64, o: f64, theta: f64) -> BrushState {
        BrushState { x, y, z, w, d, o, theta }
    }

    #[test]
    fn root_location_examples() {
        let r = root_location(&state(50.0, 50.0, 1.0, 0.0, 0.0, 0.0, 1.234));
        assert_eq!(r, Vec2::new(50.0, 50.0));
        let r = root_location(&state(50.0, 50.0, 1.0, 0.0, 0.0, 5.0, 0.0));
        assert_eq!(r, Vec2::new(45.0, 50.0));
        let r = root_location(&state(50.0, 50.0, 1.0, 0.0, 0.0, 5.0, FRAC_PI_2));
        assert!(r.distance(Vec2::new(50.0, 45.0)) < 1e-12);
    }

    #[test]
    fn width_relaxes_with_inertia() {
        let calib = CalibrationModel::new(2.0, vec![0.0, 10.0], vec![0.0, 20.0], vec![0.0, 5.0]).unwrap();
        let s = state(0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0);
        let next = step_dynamic(&s, ControlInput::default(), &calib, DynamicParams::default());
        assert!((next.w - 9.8).abs() < 1e-12);
        assert!((next.d - 19.6).abs() < 1e-12);
    }

    #[test]
    fn fixed_point_is_stationary() {
        let calib = CalibrationModel::default();
        let shape = calib.evaluate(0.5);
        let s = state(40.0, 60.0, 0.5, shape.width, shape.drag, 3.0, 0.7);
        let next = step_dynamic(&s, ControlInput::default(), &calib, DynamicParams::default());
        for (a, b) in [(next.x, s.x), (next.y, s.y), (next.z, s.z), (next.w, s.w), (next.d, s.d), (next.o, s.o), (next.theta, s.theta)] {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn small_move_keeps_root() {
        // old root at (45, 50), handle moves to (46, 50), Offset(z') = 5
        let calib = CalibrationModel::new(10.0, vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0, 5.0]).unwrap();
        let s = state(50.0, 50.0, 1.0, 1.0, 1.0, 5.0, 0.0);
        assert_eq!(root_location(&s), Vec2::new(45.0, 50.0));
        let next = step_dynamic(&s, ControlInput { vx: -4.0, vy: 0.0, vz: 0.0 }, &calib, DynamicParams::default());
        assert!((next.o - 1.0).abs() < 1e-12);
        assert!(root_location(&next).distance(Vec2::new(45.0, 50.0)) < 1e-12);
    }

    #[test]
    fn far_move_snaps_offset() {
        let calib = CalibrationModel::new(10.0, vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0, 5.0]).unwrap();
        let s = state(50.0, 50.0, 1.0, 1.0, 1.0, 5.0, 0.0);
        let next = step_dynamic(&s, ControlInput { vx: 3.0, vy: 0.0, vz: 0.0 }, &calib, DynamicParams::default());
        assert_eq!(next.o, 5.0);
        // root pulled along the line from the old root, 5 px behind the handle
        assert!(root_location(&next).distance(Vec2::new(48.0, 50.0)) < 1e-12);
        assert!(next.theta.abs() < 1e-15);
    }

    #[test]
    fn degenerate_offset_keeps_theta() {
        let calib = CalibrationModel::default();
        let s = state(10.0, 10.0, 0.5, 1.0, 1.0, 2.0, 0.3);
        let root = root_location(&s);
        let u = ControlInput { vx: root.x - s.x, vy: root.y - s.y, vz: 0.0 };
        let next = step_dynamic(&s, u, &calib, DynamicParams::default());
        assert_eq!(next.theta, 0.3);
        assert_eq!(next.o, 0.0);
    }

    #[test]
    fn airborne_brush_decays() {
        let calib = CalibrationModel::default();
        let s = state(0.0, 0.0, -0.5, 10.0, 20.0, 3.0, 0.0);
        let next = step_dynamic(&s, ControlInput::default(), &calib, DynamicParams::default());
        assert!((next.w - 0.2).abs() < 1e-12);
        assert!((next.d - 0.4).abs() < 1e-12);
        assert_eq!(next.o, 0.0);
        assert!(footprint_of(&next).is_none());
    }

    #[test]
    fn dip_reset_orientation() {
        let s = state(3.0, 4.0, 0.5, 9.0, 9.0, 9.0, 0.1);
        let r = reset_after_dip(&s, Vec2::new(1.0, 0.0)).unwrap();
        assert_eq!((r.w, r.d, r.o), (0.0, 0.0, 0.0));
        assert_eq!(r.theta, PI);
        assert_eq!((r.x, r.y, r.z), (3.0, 4.0, 0.5));
        let r = reset_after_dip(&s, Vec2::new(0.0, 1.0)).unwrap();
        assert!((r.theta + FRAC_PI_2).abs() < 1e-15);
        let trail = -Vec2::from_angle(r.theta);
        assert!(trail.distance(Vec2::new(0.0, 1.0)) < 1e-15);
        assert!(matches!(reset_after_dip(&s, Vec2::new(0.0, 0.0)), Err(Error::InvalidDirection(..))));
    }

    #[test]
    fn footprint_examples() {
        assert!(footprint_of(&state(0.0, 0.0, -1.0, 6.0, 12.0, 0.0, 0.0)).is_none());
        assert!(footprint_of(&state(0.0, 0.0, 1.0, 0.0, 12.0, 0.0, 0.0)).is_none());
        let fp = footprint_of(&state(7.0, 8.0, 0.5, 6.0, 12.0, 0.0, 0.4)).unwrap();
        assert_eq!((fp.width, fp.drag), (6.0, 12.0));
        assert_eq!(fp.root, Vec2::new(7.0, 8.0));
        assert!((fp.direction.length() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn simple_radius() {
        assert_eq!(simple_brush_radius(0.0, 3.0), 0.0);
        assert_eq!(simple_brush_radius(2.0, 3.0), 6.0);
        assert_eq!(simple_brush_radius(-1.0, 3.0), 0.0);
    }
}
