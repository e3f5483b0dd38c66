//! Command-line front end: `optimize`, `simulate`, `calibrate`, `extract`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::brush::{reset_after_dip, BrushModel, BrushState};
use crate::calibration::{fit, read_samples_csv, CalibrationModel, Degrees, FitOptions};
use crate::chebyshev::{cgl_nodes, TrajectorySpec};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::optimizer::{optimize_character, render_initial_character, OptimizerConfig, StrokeSolution};
use crate::raster::{render_stroke, write_diff_png, Canvas, RenderConfig};
use crate::strokes::{extract_strokes, load_entry, rasterize_character};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "brushopt", version, about = "Optimize calligraphy brush trajectories for character strokes")]
pub struct Cli {
    /// Worker threads for parallel evaluation (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize every stroke of a character and write images, trajectories and a manifest.
    Optimize(OptimizeArgs),
    /// Render trajectory files without optimizing.
    Simulate(SimulateArgs),
    /// Fit width/drag/offset polynomials from footprint measurements.
    Calibrate(CalibrateArgs),
    /// Write per-stroke reference images and skeletons.
    Extract(ExtractArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Simple,
    Dynamic,
}

impl From<ModelArg> for BrushModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Simple => BrushModel::Simple,
            ModelArg::Dynamic => BrushModel::Dynamic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImageFormat {
    Png,
    Pgm,
}

impl ImageFormat {
    fn extension(self) -> &'static str {
        match self {
            ImageFormat::Png => "png",
            ImageFormat::Pgm => "pgm",
        }
    }
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Canvas side length in pixels.
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[arg(long, value_enum, default_value_t = ModelArg::Dynamic)]
    pub model: ModelArg,
    /// Calibration JSON; the bundled default model is used when absent.
    #[arg(long)]
    pub calib: Option<PathBuf>,
    /// Disk radius per unit depression for the simple brush.
    #[arg(long, default_value_t = 7.0)]
    pub simple_gain: f64,
    #[arg(long, value_enum, default_value_t = ImageFormat::Png)]
    pub format: ImageFormat,
}

impl RenderArgs {
    fn calibration(&self) -> Result<CalibrationModel> {
        match &self.calib {
            Some(path) => CalibrationModel::load(path),
            None => Ok(CalibrationModel::default()),
        }
    }

    fn render_config(&self) -> RenderConfig {
        RenderConfig {
            simple_gain: self.simple_gain,
            ..RenderConfig::for_canvas(self.model.into(), self.size)
        }
    }
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Character as a literal, `U+XXXX`, `0xXXXX` or a decimal code point.
    #[arg(long = "char", value_parser = parse_character)]
    pub character: char,
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub render: RenderArgs,
    /// Start each stroke from the previous stroke's final brush state.
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_value_t = false, default_missing_value = "true")]
    pub thread_state: bool,
    /// Polynomial orders to try, `min..max`.
    #[arg(long, default_value = "3..8", value_parser = parse_orders)]
    pub orders: (usize, usize),
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    /// Constant initial depression.
    #[arg(long, default_value_t = 0.7)]
    pub z0: f64,
    /// Weight on the last two depression nodes (default scales with canvas size).
    #[arg(long)]
    pub beta_end: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Trajectory JSON; repeat to composite several strokes.
    #[arg(long, required = true)]
    pub traj: Vec<PathBuf>,
    /// Output image path.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub render: RenderArgs,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// CSV with header `z,width,drag,offset`.
    #[arg(long)]
    pub data: PathBuf,
    /// Polynomial degrees `width,drag,offset`.
    #[arg(long, default_value = "1,1,2")]
    pub degrees: Degrees,
    #[arg(long)]
    pub out: PathBuf,
    /// Drop samples whose residual exceeds this (pixels) and refit.
    #[arg(long)]
    pub outlier_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long = "char", value_parser = parse_character)]
    pub character: char,
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[arg(long, value_enum, default_value_t = ImageFormat::Png)]
    pub format: ImageFormat,
}

pub fn parse_character(s: &str) -> std::result::Result<char, String> {
    let mut chars = s.chars();
    if let (Some(c), None) = (chars.next(), chars.next()) {
        return Ok(c);
    }
    let code = if let Some(hex) = s.strip_prefix("U+").or_else(|| s.strip_prefix("u+")).or_else(|| s.strip_prefix("0x")) {
        u32::from_str_radix(hex, 16).map_err(|e| format!("invalid code point '{s}': {e}"))?
    } else {
        s.parse::<u32>().map_err(|_| format!("expected a character or code point, got '{s}'"))?
    };
    char::from_u32(code).ok_or_else(|| format!("U+{code:04X} is not a valid character"))
}

pub fn parse_orders(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected 'min..max', got '{s}'"))?;
    let lo: usize = a.trim().parse().map_err(|_| format!("invalid order '{a}'"))?;
    let hi: usize = b.trim().parse().map_err(|_| format!("invalid order '{b}'"))?;
    use crate::chebyshev::{MAX_TRAJECTORY_ORDER, MIN_TRAJECTORY_ORDER};
    if lo < MIN_TRAJECTORY_ORDER || hi > MAX_TRAJECTORY_ORDER || lo > hi {
        return Err(format!("orders must satisfy {MIN_TRAJECTORY_ORDER} <= min <= max <= {MAX_TRAJECTORY_ORDER}"));
    }
    Ok((lo, hi))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if cli.jobs == Some(0) {
        eprintln!("error: --jobs must be at least 1");
        return EXIT_USAGE;
    }
    let execute = || match cli.command {
        Command::Optimize(args) => cmd_optimize(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Calibrate(args) => cmd_calibrate(&args),
        Command::Extract(args) => cmd_extract(&args),
    };
    let result = match cli.jobs {
        Some(jobs) => match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            Ok(pool) => pool.install(execute),
            Err(e) => Err(CommandError::Other(e.to_string())),
        },
        None => execute(),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error[{}]: {}", e.class(), e);
            EXIT_FAILURE
        }
    }
}

/// Failure of a subcommand, grouped for diagnostics.
#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Pipeline(#[from] Error),
    #[error("{0}")]
    StrokeFailures(String),
    #[error("{0}")]
    Other(String),
}

impl CommandError {
    pub fn class(&self) -> &'static str {
        match self {
            CommandError::Pipeline(e) => error_class(e),
            CommandError::StrokeFailures(_) => "stroke-failure",
            CommandError::Other(_) => "runtime",
        }
    }
}

pub fn error_class(e: &Error) -> &'static str {
    match e {
        Error::NotFound(_) => "not-found",
        Error::Parse { .. } | Error::PathSyntax(_) | Error::UnsupportedCommand(_) | Error::Json(_) | Error::Csv(_) => "parse",
        Error::DegenerateSkeleton => "degenerate-skeleton",
        Error::InsufficientData(_) => "insufficient-data",
        Error::Io { .. } | Error::Image(_) => "io",
        _ => "runtime",
    }
}

type CmdResult = std::result::Result<(), CommandError>;

/// Interchange format for one stroke trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub order: usize,
    pub nodes: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    /// Dense `[x, y, z]` samples as executed by the simulator.
    pub dense: Vec<[f64; 3]>,
    /// Brush state the stroke starts from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<BrushState>,
    /// Stroke median in canvas pixels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skeleton: Option<Vec<[f64; 2]>>,
}

impl TrajectoryFile {
    pub fn new(spec: &TrajectorySpec, samples: usize) -> Result<Self> {
        Ok(TrajectoryFile {
            order: spec.order(),
            nodes: cgl_nodes(spec.order())?,
            x: spec.x.clone(),
            y: spec.y.clone(),
            z: spec.z.clone(),
            dense: crate::chebyshev::sample_dense(spec, samples)?,
            initial_state: None,
            skeleton: None,
        })
    }

    pub fn spec(&self) -> Result<TrajectorySpec> {
        TrajectorySpec::new(self.order, self.x.clone(), self.y.clone(), self.z.clone())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Starting brush state: the stored one, else a dip reset trailing the
    /// first move of the dense path.
    fn start_state(&self) -> BrushState {
        if let Some(state) = self.initial_state {
            return state;
        }
        let direction = self
            .dense
            .windows(2)
            .map(|w| Vec2::new(w[1][0] - w[0][0], w[1][1] - w[0][1]))
            .find(|d| d.length() > 0.0);
        direction
            .and_then(|d| reset_after_dip(&BrushState::default(), d).ok())
            .unwrap_or_default()
    }
}

/// Files and results of one `optimize` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub character: String,
    pub codepoint: String,
    pub canvas_size: usize,
    pub model: BrushModel,
    pub thread_state: bool,
    pub orders: [usize; 2],
    pub strokes: Vec<StrokeEntry>,
    pub total_final_cost: f64,
    pub character_mean_abs_error: f64,
    pub files: Vec<String>,
    pub timings: Timings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrokeEntry {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_abs_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_costs: Option<Vec<(usize, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub optimize_seconds: f64,
}

pub fn mean_abs_error(a: &Canvas, b: &Canvas) -> Result<f64> {
    let r = crate::raster::image_residuals(a, b)?;
    Ok(r.iter().map(|v| v.abs()).sum::<f64>() / r.len() as f64)
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn write_image(canvas: &Canvas, path: &Path, format: ImageFormat) -> Result<()> {
    match format {
        ImageFormat::Png => canvas.write_png(path),
        ImageFormat::Pgm => canvas.write_pgm(path),
    }
}

fn write_log_csv(path: &Path, solution: &StrokeSolution) -> Result<()> {
    let mut text = String::from("iter,lambda,cost,accepted\n");
    for rec in &solution.log {
        text.push_str(&format!("{},{:e},{},{}\n", rec.iter, rec.lambda, rec.cost, rec.accepted));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn stroke_failure_class(e: &Error) -> String {
    format!("{}: {e}", error_class(e))
}

pub fn cmd_optimize(args: &OptimizeArgs) -> CmdResult {
    let started = Instant::now();
    let calib = args.render.calibration()?;
    let entry = load_entry(&args.db, args.character)?;
    create_dir(&args.out)?;
    let size = args.render.size;
    let ext = args.render.format.extension();

    let mut cfg = OptimizerConfig::new(size, args.render.model.into());
    cfg.render = args.render.render_config();
    cfg.min_order = args.orders.0;
    cfg.max_order = args.orders.1;
    cfg.lm.max_iters = args.max_iters;
    cfg.z0 = args.z0;
    cfg.beta_end = args.beta_end;
    cfg.thread_state = args.thread_state;

    let opt_started = Instant::now();
    let outcomes = optimize_character(&entry, &cfg, &calib);
    let optimize_seconds = opt_started.elapsed().as_secs_f64();

    let mut files = Vec::new();
    let mut strokes = Vec::new();
    let mut failures = Vec::new();
    let mut solved = Vec::new();
    for outcome in &outcomes {
        let i = outcome.index;
        let mut stroke_files = Vec::new();
        if let Some(record) = &outcome.record {
            let name = format!("stroke_{i:02}_reference.{ext}");
            write_image(&record.reference, &args.out.join(&name), args.render.format)?;
            stroke_files.push(name);
        }
        let solution = match &outcome.solution {
            Ok(s) => s,
            Err(e) => {
                failures.push(format!("stroke {i}: {}", stroke_failure_class(e)));
                strokes.push(StrokeEntry {
                    index: i,
                    order: None,
                    initial_cost: None,
                    final_cost: None,
                    iterations: None,
                    termination: None,
                    mean_abs_error: None,
                    order_costs: None,
                    error: Some(stroke_failure_class(e)),
                    files: stroke_files.clone(),
                });
                files.extend(stroke_files);
                continue;
            }
        };
        let record = outcome.record.as_ref().expect("solved strokes have a record");
        if solution.made_no_progress() {
            failures.push(format!("stroke {i}: no-progress: optimizer could not improve the initial trajectory"));
        }

        let mut sim = Canvas::square(size)?;
        render_stroke(&solution.spec, &solution.initial_state, &calib, &mut sim, &cfg.render)?;
        let sim_name = format!("stroke_{i:02}_simulated.{ext}");
        write_image(&sim, &args.out.join(&sim_name), args.render.format)?;
        let diff_name = format!("stroke_{i:02}_diff.png");
        write_diff_png(&sim, &record.reference, &args.out.join(&diff_name))?;

        let mut traj = TrajectoryFile::new(&solution.spec, cfg.render.samples)?;
        traj.initial_state = Some(solution.initial_state);
        traj.skeleton = Some(record.skeleton.iter().map(|p| [p.x, p.y]).collect());
        let traj_name = format!("stroke_{i:02}_trajectory.json");
        write_json(&args.out.join(&traj_name), &traj)?;
        let log_name = format!("stroke_{i:02}_log.csv");
        write_log_csv(&args.out.join(&log_name), solution)?;

        stroke_files.extend([sim_name, diff_name, traj_name, log_name]);
        strokes.push(StrokeEntry {
            index: i,
            order: Some(solution.order),
            initial_cost: Some(solution.initial_cost),
            final_cost: Some(solution.final_cost),
            iterations: Some(solution.iterations),
            termination: Some(format!("{:?}", solution.termination)),
            mean_abs_error: Some(mean_abs_error(&sim, &record.reference)?),
            order_costs: Some(solution.order_costs.clone()),
            error: None,
            files: stroke_files.clone(),
        });
        files.extend(stroke_files);
        solved.push(solution);
    }

    let reference = rasterize_character(&entry, size)?;
    let composite = crate::optimizer::render_character(solved.iter().copied(), size, &cfg.render, &calib)?;
    let initial = render_initial_character(&entry, &cfg, cfg.min_order, &calib)?;
    for (name, canvas) in [("reference", &reference), ("simulated", &composite), ("initial", &initial)] {
        let file = format!("character_{name}.{ext}");
        write_image(canvas, &args.out.join(&file), args.render.format)?;
        files.push(file);
    }
    for (name, canvas) in [("diff", &composite), ("initial_diff", &initial)] {
        let file = format!("character_{name}.png");
        write_diff_png(canvas, &reference, &args.out.join(&file))?;
        files.push(file);
    }

    let manifest = RunManifest {
        character: entry.character.to_string(),
        codepoint: format!("U+{:04X}", entry.character as u32),
        canvas_size: size,
        model: cfg.render.model,
        thread_state: cfg.thread_state,
        orders: [cfg.min_order, cfg.max_order],
        total_final_cost: solved.iter().map(|s| s.final_cost).sum(),
        character_mean_abs_error: mean_abs_error(&composite, &reference)?,
        strokes,
        files,
        timings: Timings {
            total_seconds: started.elapsed().as_secs_f64(),
            optimize_seconds,
        },
    };
    write_json(&args.out.join("manifest.json"), &manifest)?;
    println!(
        "{} ({}): {} strokes, total cost {:.3}, mean abs error {:.4}",
        manifest.character,
        manifest.codepoint,
        manifest.strokes.len(),
        manifest.total_final_cost,
        manifest.character_mean_abs_error
    );

    if failures.is_empty() {
        Ok(())
    } else {
        Err(CommandError::StrokeFailures(failures.join("; ")))
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> CmdResult {
    let calib = args.render.calibration()?;
    let size = args.render.size;
    let mut canvas = Canvas::square(size)?;
    for path in &args.traj {
        let traj = TrajectoryFile::load(path)?;
        let spec = traj.spec()?;
        let mut render = args.render.render_config();
        if traj.dense.len() >= 2 {
            render.samples = traj.dense.len();
        }
        render_stroke(&spec, &traj.start_state(), &calib, &mut canvas, &render)?;
    }
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let format = match args.out.extension().and_then(|e| e.to_str()) {
        Some("pgm") => ImageFormat::Pgm,
        Some("png") => ImageFormat::Png,
        _ => args.render.format,
    };
    write_image(&canvas, &args.out, format)?;
    Ok(())
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> CmdResult {
    let samples = read_samples_csv(&args.data)?;
    let options = FitOptions {
        residual_threshold: args.outlier_threshold,
    };
    let (model, report) = fit(&samples, args.degrees, options)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_json(&args.out, &model)?;
    println!("samples used: {} (removed {})", report.samples_used, report.samples_removed);
    println!("width  rss: {:e}", report.width_rss);
    println!("drag   rss: {:e}", report.drag_rss);
    println!("offset rss: {:e}", report.offset_rss);
    Ok(())
}

#[derive(Serialize)]
struct SkeletonFile {
    index: usize,
    skeleton: Vec<[f64; 2]>,
}

pub fn cmd_extract(args: &ExtractArgs) -> CmdResult {
    let entry = load_entry(&args.db, args.character)?;
    create_dir(&args.out)?;
    let ext = args.format.extension();
    for record in extract_strokes(&entry, args.size)? {
        let i = record.index;
        write_image(&record.reference, &args.out.join(format!("stroke_{i:02}_reference.{ext}")), args.format)?;
        let skeleton = SkeletonFile {
            index: i,
            skeleton: record.skeleton.iter().map(|p| [p.x, p.y]).collect(),
        };
        write_json(&args.out.join(format!("stroke_{i:02}_skeleton.json")), &skeleton)?;
    }
    let full = rasterize_character(&entry, args.size)?;
    write_image(&full, &args.out.join(format!("character_reference.{ext}")), args.format)?;
    println!("{}: {} strokes", entry.character, entry.stroke_count());
    Ok(())
}
