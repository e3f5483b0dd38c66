//! Polynomial maps from brush depression `z` to footprint width, drag and
//! offset in pixels, plus least-squares fitting from measured footprints.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width, drag and offset of the brush mark at a given depression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkShape {
    pub width: f64,
    pub drag: f64,
    pub offset: f64,
}

/// Polynomial coefficient sets (ascending degree, zero constant term).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub z_max: f64,
    pub width: Vec<f64>,
    pub drag: Vec<f64>,
    pub offset: Vec<f64>,
}

impl Default for CalibrationModel {
    /// `Width = 14z`, `Drag = 28z`, `Offset = 10z(2 - z)` on `z in [0, 1]`.
    fn default() -> Self {
        CalibrationModel {
            z_max: 1.0,
            width: vec![0.0, 14.0],
            drag: vec![0.0, 28.0],
            offset: vec![0.0, 20.0, -10.0],
        }
    }
}

impl CalibrationModel {
    pub fn new(z_max: f64, width: Vec<f64>, drag: Vec<f64>, offset: Vec<f64>) -> Result<Self> {
        let model = CalibrationModel {
            z_max,
            width,
            drag,
            offset,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        if !(self.z_max.is_finite() && self.z_max > 0.0) {
            return Err(Error::Config(format!("z_max must be positive, got {}", self.z_max)));
        }
        for (name, coeffs) in [("width", &self.width), ("drag", &self.drag), ("offset", &self.offset)] {
            if coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::Config(format!("{name} coefficients must be finite")));
            }
            if coeffs.first().is_some_and(|&c0| c0 != 0.0) {
                return Err(Error::Config(format!("{name} constant term must be zero")));
            }
        }
        Ok(())
    }

    /// Mark shape at depression `z`; `z` is clamped to `[0, z_max]` and
    /// every channel is clamped below at zero.
    pub fn evaluate(&self, z: f64) -> MarkShape {
        if !(z > 0.0) {
            return MarkShape {
                width: 0.0,
                drag: 0.0,
                offset: 0.0,
            };
        }
        let z = z.min(self.z_max);
        MarkShape {
            width: polyval(&self.width, z).max(0.0),
            drag: polyval(&self.drag, z).max(0.0),
            offset: polyval(&self.offset, z).max(0.0),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let model: CalibrationModel = serde_json::from_str(s)?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration model serializes")
    }
}

/// Horner evaluation, ascending coefficients.
pub fn polyval(coeffs: &[f64], z: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * z + c)
}

/// One measured footprint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootprintSample {
    pub z: f64,
    pub width: f64,
    pub drag: f64,
    pub offset: f64,
}

/// Polynomial degree per channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Degrees {
    pub width: usize,
    pub drag: usize,
    pub offset: usize,
}

impl Default for Degrees {
    fn default() -> Self {
        Degrees {
            width: 1,
            drag: 1,
            offset: 2,
        }
    }
}

impl Degrees {
    pub fn max(&self) -> usize {
        self.width.max(self.drag).max(self.offset)
    }
}

impl std::str::FromStr for Degrees {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let parse = |p: &str| {
            p.parse::<usize>()
                .map_err(|_| Error::Config(format!("invalid degree '{p}'")))
        };
        match parts.as_slice() {
            [w, d, o] => Ok(Degrees {
                width: parse(w)?,
                drag: parse(d)?,
                offset: parse(o)?,
            }),
            _ => Err(Error::Config(format!("expected three degrees 'dw,dd,do', got '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FitOptions {
    /// Samples whose absolute residual exceeds this in any channel are
    /// dropped after a first fit, and the model is refitted once.
    pub residual_threshold: Option<f64>,
}

/// Residual sums of squares per channel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub samples_used: usize,
    pub samples_removed: usize,
    pub width_rss: f64,
    pub drag_rss: f64,
    pub offset_rss: f64,
}

pub fn fit(
    samples: &[FootprintSample],
    degrees: Degrees,
    options: FitOptions,
) -> Result<(CalibrationModel, FitReport)> {
    let (model, report) = fit_once(samples, degrees)?;
    let Some(threshold) = options.residual_threshold else {
        return Ok((model, report));
    };
    let kept: Vec<FootprintSample> = samples
        .iter()
        .copied()
        .filter(|s| {
            let e = model.evaluate_raw(s.z);
            (e.width - s.width).abs() <= threshold
                && (e.drag - s.drag).abs() <= threshold
                && (e.offset - s.offset).abs() <= threshold
        })
        .collect();
    if kept.len() == samples.len() {
        return Ok((model, report));
    }
    let (model, mut report) = fit_once(&kept, degrees)?;
    report.samples_removed = samples.len() - kept.len();
    Ok((model, report))
}

impl CalibrationModel {
    /// Unclamped polynomial values, used for residuals.
    fn evaluate_raw(&self, z: f64) -> MarkShape {
        MarkShape {
            width: polyval(&self.width, z),
            drag: polyval(&self.drag, z),
            offset: polyval(&self.offset, z),
        }
    }
}

fn fit_once(samples: &[FootprintSample], degrees: Degrees) -> Result<(CalibrationModel, FitReport)> {
    for s in samples {
        if !(s.z >= 0.0 && s.width >= 0.0 && s.drag >= 0.0 && s.offset >= 0.0) {
            return Err(Error::Config(format!(
                "footprint samples must be non-negative, got {s:?}"
            )));
        }
    }
    let mut zs: Vec<f64> = samples.iter().map(|s| s.z).collect();
    zs.sort_by(f64::total_cmp);
    zs.dedup();
    let needed = degrees.max() + 1;
    if zs.len() < needed {
        return Err(Error::InsufficientData(format!(
            "{} distinct depths, need at least {needed}",
            zs.len()
        )));
    }
    let z_max = zs.last().copied().unwrap_or(0.0);
    if z_max <= 0.0 {
        return Err(Error::InsufficientData("all samples at z = 0".into()));
    }

    let (width, width_rss) = fit_channel(samples, degrees.width, |s| s.width)?;
    let (drag, drag_rss) = fit_channel(samples, degrees.drag, |s| s.drag)?;
    let (offset, offset_rss) = fit_channel(samples, degrees.offset, |s| s.offset)?;
    let model = CalibrationModel::new(z_max, width, drag, offset)?;
    Ok((
        model,
        FitReport {
            samples_used: samples.len(),
            samples_removed: 0,
            width_rss,
            drag_rss,
            offset_rss,
        },
    ))
}

/// Least squares on columns `z, z^2, .., z^degree`; returns coefficients
/// with a leading zero constant term and the residual sum of squares.
fn fit_channel(
    samples: &[FootprintSample],
    degree: usize,
    value: impl Fn(&FootprintSample) -> f64,
) -> Result<(Vec<f64>, f64)> {
    if degree == 0 {
        let rss = samples.iter().map(|s| value(s).powi(2)).sum();
        return Ok((vec![0.0], rss));
    }
    let a = DMatrix::from_fn(samples.len(), degree, |i, j| samples[i].z.powi(j as i32 + 1));
    let b = DVector::from_iterator(samples.len(), samples.iter().map(&value));
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= smax * 1e-12 {
        return Err(Error::InsufficientData("rank-deficient design matrix".into()));
    }
    let x = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::InsufficientData(e.to_string()))?;
    let rss = (&a * &x - &b).norm_squared();
    let mut coeffs = Vec::with_capacity(degree + 1);
    coeffs.push(0.0);
    coeffs.extend(x.iter());
    Ok((coeffs, rss))
}

/// Reads samples from CSV with header `z,width,drag,offset`.
pub fn read_samples_csv(path: &Path) -> Result<Vec<FootprintSample>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_samples(file)
}

pub fn read_samples(reader: impl std::io::Read) -> Result<Vec<FootprintSample>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["z", "width", "drag", "offset"];
    if headers.len() != 4 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header 'z,width,drag,offset', got '{}'", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    rdr.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(z: f64, width: f64, drag: f64, offset: f64) -> FootprintSample {
        FootprintSample {
            z,
            width,
            drag,
            offset,
        }
    }

    #[test]
    fn default_model_values() {
        let m = CalibrationModel::default();
        let s = m.evaluate(1.0);
        assert_eq!((s.width, s.drag, s.offset), (14.0, 28.0, 10.0));
        let s = m.evaluate(0.5);
        assert_eq!((s.width, s.drag, s.offset), (7.0, 14.0, 7.5));
    }

    #[test]
    fn evaluate_clamps() {
        let m = CalibrationModel::default();
        for z in [0.0, -1.0, -1e-9, f64::NAN] {
            assert_eq!(m.evaluate(z), MarkShape { width: 0.0, drag: 0.0, offset: 0.0 });
        }
        // z above z_max behaves like z_max
        assert_eq!(m.evaluate(3.0), m.evaluate(1.0));
        let m = CalibrationModel::new(10.0, vec![0.0, 3.0], vec![0.0, -1.0], vec![]).unwrap();
        let s = m.evaluate(2.0);
        assert_eq!((s.width, s.drag, s.offset), (6.0, 0.0, 0.0));
    }

    #[test]
    fn nonzero_constant_rejected() {
        assert!(CalibrationModel::new(1.0, vec![1.0, 2.0], vec![], vec![]).is_err());
        assert!(CalibrationModel::new(0.0, vec![], vec![], vec![]).is_err());
    }

    #[test]
    fn fit_exact_linear() {
        let samples: Vec<_> = (1..=6)
            .map(|i| {
                let z = i as f64 * 0.15;
                sample(z, 3.0 * z, 5.0 * z, z * (2.0 - z))
            })
            .collect();
        let (m, report) = fit(&samples, Degrees { width: 1, drag: 1, offset: 2 }, FitOptions::default()).unwrap();
        assert_eq!(m.width.len(), 2);
        assert_eq!(m.width[0], 0.0);
        assert!((m.width[1] - 3.0).abs() < 1e-9);
        assert!((m.drag[1] - 5.0).abs() < 1e-9);
        assert!((m.offset[1] - 2.0).abs() < 1e-9 && (m.offset[2] + 1.0).abs() < 1e-9);
        assert!(report.width_rss < 1e-18 && report.offset_rss < 1e-18);
        assert!((m.z_max - 0.9).abs() < 1e-15);
    }

    #[test]
    fn fit_insufficient() {
        let samples = vec![sample(0.2, 1.0, 2.0, 1.0), sample(0.4, 2.0, 4.0, 2.0)];
        let err = fit(&samples, Degrees { width: 3, drag: 3, offset: 3 }, FitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
        let dup = vec![sample(0.2, 1.0, 2.0, 1.0); 5];
        assert!(matches!(
            fit(&dup, Degrees::default(), FitOptions::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn fit_recovers_offset_maximum() {
        // offset = 12 z - 7 z^2 peaks inside the sampled range
        let samples: Vec<_> = (0..12)
            .map(|i| {
                let z = 0.05 + i as f64 * 0.1;
                sample(z, 14.0 * z, 28.0 * z, 12.0 * z - 7.0 * z * z)
            })
            .collect();
        let (m, _) = fit(&samples, Degrees::default(), FitOptions::default()).unwrap();
        assert!((m.offset[1] - 12.0).abs() < 1e-6);
        assert!((m.offset[2] + 7.0).abs() < 1e-6);
    }

    #[test]
    fn outlier_threshold_drops_bad_rows() {
        let mut samples: Vec<_> = (1..=8).map(|i| {
            let z = i as f64 * 0.1;
            sample(z, 10.0 * z, 20.0 * z, 5.0 * z)
        }).collect();
        samples.push(sample(0.45, 40.0, 9.0, 2.25));
        let opts = FitOptions { residual_threshold: Some(15.0) };
        let (m, report) = fit(&samples, Degrees { width: 1, drag: 1, offset: 1 }, opts).unwrap();
        assert_eq!(report.samples_removed, 1);
        assert!((m.width[1] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn csv_header_and_rows() {
        let text = "z,width,drag,offset\n0.5,7,14,7.5\n1.0, 14, 28, 10\n";
        let rows = read_samples(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1], sample(1.0, 14.0, 28.0, 10.0));
        assert!(read_samples("a,b,c,d\n1,2,3,4\n".as_bytes()).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = CalibrationModel::new(0.93, vec![0.0, 1.0 / 3.0], vec![0.0, 0.1 + 0.2], vec![0.0, 7.1, -2.0 / 7.0]).unwrap();
        let back = CalibrationModel::from_json_str(&m.to_json_string()).unwrap();
        assert_eq!(back, m);
        for z in [0.1, 0.33, 0.9] {
            assert_eq!(back.evaluate(z), m.evaluate(z));
        }
    }
}
