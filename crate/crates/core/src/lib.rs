//! Brush trajectory synthesis for Chinese calligraphy.
//!
//! Strokes come from a vector character database. Each stroke's
//! trajectory is a three-axis polynomial given by its values at
//! Chebyshev-Gauss-Lobatto nodes. The trajectory is drawn by a simulated
//! brush and fitted to the stroke's reference raster with
//! Levenberg-Marquardt.
//!
//! Pipeline: [`strokes`] loads a character and rasterizes per-stroke
//! references; [`optimizer`] sweeps polynomial orders per stroke and
//! renders through [`raster`] with a [`brush`] model whose shape comes from
//! a [`calibration`]; [`chebyshev`] supplies the trajectory
//! parameterization.

pub mod brush;
pub mod calibration;
pub mod chebyshev;
pub mod cli;
pub mod error;
pub mod geom;
pub mod optimizer;
pub mod raster;
pub mod strokes;

pub use brush::{BrushModel, BrushState, ControlInput, Footprint};
pub use calibration::CalibrationModel;
pub use chebyshev::{CglGrid, TrajectorySpec};
pub use error::{Error, Result};
pub use geom::Vec2;
pub use optimizer::{LmConfig, ObjectiveConfig, OptimizerConfig, StrokeSolution};
pub use raster::{Canvas, RenderConfig};
pub use strokes::{CharacterEntry, StrokeRecord};
