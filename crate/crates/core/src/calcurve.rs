//! Calibration curves and single-date calibration.
//!
//! Calendar dates use a signed year axis: `-200` is 200 BC, `20` is AD 20.
//! There is no year zero correction, so `cal_bp = 1950 - date` holds exactly.

use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Reference year of the BP scale.
pub const BP_REFERENCE_YEAR: f64 = 1950.0;

/// Target mass of the 1-sigma HPD set.
pub const HPD_68: f64 = 0.6827;
/// Target mass of the 2-sigma HPD set.
pub const HPD_95: f64 = 0.9545;

/// Half-exponent beyond which `exp(-x)` underflows to exactly zero in f64.
const UNDERFLOW_EXPONENT: f64 = 750.0;
const BLOCK: usize = 32;

static INTCAL20: &str = include_str!("../data/intcal20.14c");

/// A point on the signed calendar axis (negative = BC, positive = AD).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct CalendarDate(pub f64);

impl CalendarDate {
    pub fn new(value: f64) -> Self {
        CalendarDate(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn from_cal_bp(cal_bp: f64) -> Self {
        CalendarDate(BP_REFERENCE_YEAR - cal_bp)
    }

    pub fn to_cal_bp(self) -> f64 {
        BP_REFERENCE_YEAR - self.0
    }
}

impl fmt::Display for CalendarDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<f64> for CalendarDate {
    fn from(v: f64) -> Self {
        CalendarDate(v)
    }
}

/// Accepts signed years (`-200`) or era-marked years (`200BC`, `200 BC`, `20AD`, `AD 20`).
impl FromStr for CalendarDate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let upper = t.to_ascii_uppercase();
        let (num, sign) = if let Some(rest) = upper.strip_suffix("BC") {
            (rest.trim(), -1.0)
        } else if let Some(rest) = upper.strip_suffix("AD") {
            (rest.trim(), 1.0)
        } else if let Some(rest) = upper.strip_prefix("AD") {
            (rest.trim(), 1.0)
        } else {
            (upper.as_str(), 1.0)
        };
        let v: f64 = num
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad calendar date '{s}'")))?;
        if sign < 0.0 && v < 0.0 {
            return Err(Error::InvalidArgument(format!("bad calendar date '{s}'")));
        }
        Ok(CalendarDate(sign * v))
    }
}

/// A measured (or simulated) radiocarbon age.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    /// Uncalibrated age in integer years BP.
    pub age: i64,
    /// One-sigma measurement error in years.
    pub sd: f64,
}

impl Measurement {
    pub fn new(age: i64, sd: f64) -> Self {
        Measurement { age, sd }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Knot {
    pub cal_bp: f64,
    pub c14_age: f64,
    pub error: f64,
}

/// Column delimiter of a curve file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CurveFormat {
    /// Comma if the first data row contains one, whitespace otherwise.
    #[default]
    Auto,
    Comma,
    Whitespace,
}

/// Piecewise-linear calibration curve, knots ascending by cal BP.
#[derive(Debug, Clone, PartialEq)]
pub struct CalCurve {
    name: String,
    knots: Vec<Knot>,
}

impl CalCurve {
    /// Builds a curve from knots given in either ascending or descending cal BP order.
    pub fn from_knots(name: impl Into<String>, mut knots: Vec<Knot>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::NoKnots);
        }
        if knots.len() < 2 {
            return Err(Error::InvalidArgument(
                "a curve needs at least 2 knots".into(),
            ));
        }
        if let Some(i) = knots.iter().position(|k| !(k.error > 0.0)) {
            return Err(Error::InvalidCurveError { line: i + 1 });
        }
        let ascending = knots.windows(2).all(|w| w[0].cal_bp < w[1].cal_bp);
        let descending = knots.windows(2).all(|w| w[0].cal_bp > w[1].cal_bp);
        if descending {
            knots.reverse();
        } else if !ascending {
            return Err(Error::UnsortedCurve);
        }
        Ok(CalCurve {
            name: name.into(),
            knots,
        })
    }

    /// Parses `#`-commented delimited text with rows `cal_bp, c14_age, error[, ...]`.
    pub fn load<R: Read>(source: R, format: CurveFormat) -> Result<Self> {
        let reader = BufReader::new(source);
        let mut knots = Vec::new();
        let mut format = format;
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if format == CurveFormat::Auto {
                format = if trimmed.contains(',') {
                    CurveFormat::Comma
                } else {
                    CurveFormat::Whitespace
                };
            }
            let fields: Vec<&str> = match format {
                CurveFormat::Comma => trimmed.split(',').map(str::trim).collect(),
                _ => trimmed.split_whitespace().collect(),
            };
            if fields.len() < 3 {
                return Err(Error::parse(lineno, "expected at least 3 columns"));
            }
            let num = |i: usize| -> Result<f64> {
                fields[i]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(lineno, format!("not a number: '{}'", fields[i])))
            };
            let knot = Knot {
                cal_bp: num(0)?,
                c14_age: num(1)?,
                error: num(2)?,
            };
            if !(knot.error > 0.0) {
                return Err(Error::InvalidCurveError { line: lineno });
            }
            knots.push(knot);
        }
        CalCurve::from_knots("unnamed", knots)
    }

    /// Loads a curve file, naming the curve after the file stem.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("unnamed")
            .to_string();
        Ok(CalCurve::load(file, CurveFormat::Auto)?.with_name(name))
    }

    /// The bundled IntCal20 northern hemisphere atmospheric curve.
    pub fn intcal20() -> Self {
        CalCurve::load(INTCAL20.as_bytes(), CurveFormat::Comma)
            .expect("bundled curve parses")
            .with_name("intcal20")
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn knots(&self) -> &[Knot] {
        &self.knots
    }

    /// Calendar range covered by the curve, oldest first.
    pub fn domain(&self) -> (CalendarDate, CalendarDate) {
        let last = self.knots[self.knots.len() - 1].cal_bp;
        (
            CalendarDate::from_cal_bp(last),
            CalendarDate::from_cal_bp(self.knots[0].cal_bp),
        )
    }

    pub fn contains(&self, t: CalendarDate) -> bool {
        let (lo, hi) = self.domain();
        t.0 >= lo.0 && t.0 <= hi.0
    }

    /// Curve mean and one-sigma error at `t`, linearly interpolated between knots.
    pub fn at(&self, t: CalendarDate) -> Result<(f64, f64)> {
        if !self.contains(t) {
            let (lo, hi) = self.domain();
            return Err(Error::OutOfCurveRange {
                date: t.0,
                min: lo.0,
                max: hi.0,
            });
        }
        let bp = t.to_cal_bp();
        let i = self.knots.partition_point(|k| k.cal_bp < bp);
        let hi = &self.knots[i];
        if hi.cal_bp == bp || i == 0 {
            return Ok((hi.c14_age, hi.error));
        }
        let lo = &self.knots[i - 1];
        let w = (bp - lo.cal_bp) / (hi.cal_bp - lo.cal_bp);
        Ok((
            lo.c14_age + w * (hi.c14_age - lo.c14_age),
            lo.error + w * (hi.error - lo.error),
        ))
    }

    /// Largest curve error over the knots bracketing `[a, b]`.
    pub fn max_error_between(&self, a: CalendarDate, b: CalendarDate) -> f64 {
        let (lo_bp, hi_bp) = {
            let (x, y) = (a.to_cal_bp(), b.to_cal_bp());
            (x.min(y), x.max(y))
        };
        let start = self.knots.partition_point(|k| k.cal_bp < lo_bp).saturating_sub(1);
        let end = self.knots.partition_point(|k| k.cal_bp <= hi_bp).min(self.knots.len() - 1);
        self.knots[start..=end]
            .iter()
            .map(|k| k.error)
            .fold(0.0, f64::max)
    }
}

/// Curve mean and error at `t`.
pub fn curve_at(curve: &CalCurve, t: CalendarDate) -> Result<(f64, f64)> {
    curve.at(t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HpdSegment {
    pub start: f64,
    pub end: f64,
    pub probability: f64,
}

/// Posterior of one calibrated age.
///
/// `grid` is uniform and covers every cell with nonzero mass; cells outside it
/// carry exactly zero probability.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub grid: Vec<f64>,
    pub pdf: Vec<f64>,
    pub step: f64,
    pub mean: CalendarDate,
    pub median: CalendarDate,
    pub sigma: f64,
    pub hpd68: Vec<HpdSegment>,
    pub hpd95: Vec<HpdSegment>,
}

impl CalibrationResult {
    pub fn hpd_mass(segments: &[HpdSegment]) -> f64 {
        segments.iter().map(|s| s.probability).sum()
    }
}

/// A curve resampled on a uniform calendar grid, reusable across many calibrations.
#[derive(Debug, Clone)]
pub struct Calibrator {
    start: f64,
    step: f64,
    mu: Vec<f64>,
    var: Vec<f64>,
    blocks: Vec<BlockBounds>,
}

#[derive(Debug, Clone, Copy)]
struct BlockBounds {
    mu_min: f64,
    mu_max: f64,
    var_max: f64,
}

impl Calibrator {
    pub fn new(curve: &CalCurve, grid_step: f64) -> Result<Self> {
        if !(grid_step > 0.0) || !grid_step.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "grid step must be positive, got {grid_step}"
            )));
        }
        let (lo, hi) = curve.domain();
        let cells = ((hi.0 - lo.0) / grid_step + 1e-9).floor() as usize + 1;
        let mut mu = Vec::with_capacity(cells);
        let mut var = Vec::with_capacity(cells);
        for k in 0..cells {
            let t = (lo.0 + k as f64 * grid_step).min(hi.0);
            let (m, s) = curve.at(CalendarDate(t))?;
            mu.push(m);
            var.push(s * s);
        }
        let blocks = mu
            .chunks(BLOCK)
            .zip(var.chunks(BLOCK))
            .map(|(m, v)| BlockBounds {
                mu_min: m.iter().copied().fold(f64::INFINITY, f64::min),
                mu_max: m.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                var_max: v.iter().copied().fold(0.0, f64::max),
            })
            .collect();
        Ok(Calibrator {
            start: lo.0,
            step: grid_step,
            mu,
            var,
            blocks,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    fn date(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step
    }

    pub fn calibrate(&self, meas: Measurement) -> Result<CalibrationResult> {
        let age = meas.age as f64;
        let sd2 = meas.sd * meas.sd;

        // Blocks whose smallest possible exponent already underflows contribute exact zeros.
        let mut first = usize::MAX;
        let mut last = 0usize;
        let mut weights: Vec<(usize, f64)> = Vec::new();
        for (b, bounds) in self.blocks.iter().enumerate() {
            let gap = if age < bounds.mu_min {
                bounds.mu_min - age
            } else if age > bounds.mu_max {
                age - bounds.mu_max
            } else {
                0.0
            };
            if gap * gap / (2.0 * (sd2 + bounds.var_max)) > UNDERFLOW_EXPONENT {
                continue;
            }
            let lo = b * BLOCK;
            let hi = (lo + BLOCK).min(self.mu.len());
            for k in lo..hi {
                let d = age - self.mu[k];
                let w = (-(d * d) / (2.0 * (sd2 + self.var[k]))).exp();
                if w > 0.0 {
                    first = first.min(k);
                    last = last.max(k);
                    weights.push((k, w));
                }
            }
        }
        let total: f64 = weights.iter().map(|&(_, w)| w).sum();
        if weights.is_empty() || total < 1e-300 {
            return Err(Error::AgeOutsideCalibratableRange { age: meas.age });
        }

        let len = last - first + 1;
        let mut pdf = vec![0.0; len];
        for &(k, w) in &weights {
            pdf[k - first] = w / total;
        }
        let grid: Vec<f64> = (first..=last).map(|k| self.date(k)).collect();
        summarize(grid, pdf, self.step)
    }
}

fn summarize(grid: Vec<f64>, pdf: Vec<f64>, step: f64) -> Result<CalibrationResult> {
    let mean: f64 = grid.iter().zip(&pdf).map(|(t, p)| t * p).sum();
    let var: f64 = grid
        .iter()
        .zip(&pdf)
        .map(|(t, p)| p * (t - mean) * (t - mean))
        .sum();

    let mut cum = 0.0;
    let mut median = grid[grid.len() - 1];
    for (t, &p) in grid.iter().zip(&pdf) {
        if p > 0.0 && cum + p >= 0.5 {
            median = t - step / 2.0 + step * (0.5 - cum) / p;
            break;
        }
        cum += p;
    }

    let hpd68 = hpd(&grid, &pdf, step, HPD_68);
    let hpd95 = hpd(&grid, &pdf, step, HPD_95);
    Ok(CalibrationResult {
        grid,
        pdf,
        step,
        mean: CalendarDate(mean),
        median: CalendarDate(median),
        sigma: var.sqrt(),
        hpd68,
        hpd95,
    })
}

/// Greedy highest-density set: cells by descending mass (older date first on ties)
/// until the target is reached, then adjacent cells merged into segments.
///
/// The last cell taken contributes only the mass still missing, with its interval
/// shortened on the side away from the rest of the set (kept whole when it fills a gap).
fn hpd(grid: &[f64], pdf: &[f64], step: f64, target: f64) -> Vec<HpdSegment> {
    let mut order: Vec<usize> = (0..pdf.len()).filter(|&i| pdf[i] > 0.0).collect();
    order.sort_by(|&a, &b| pdf[b].total_cmp(&pdf[a]).then(a.cmp(&b)));
    let mut frac = vec![0.0; pdf.len()];
    let mut mass = 0.0;
    let mut last = None;
    for i in order {
        if mass >= target - 1e-12 {
            break;
        }
        frac[i] = ((target - mass) / pdf[i]).min(1.0);
        mass += frac[i] * pdf[i];
        last = Some(i);
    }
    // (lower, upper) edge of each included cell
    let mut edges: Vec<(f64, f64)> = grid.iter().map(|t| (t - step / 2.0, t + step / 2.0)).collect();
    if let Some(k) = last.filter(|&k| frac[k] < 1.0) {
        let older = k > 0 && frac[k - 1] > 0.0;
        let younger = k + 1 < pdf.len() && frac[k + 1] > 0.0;
        let (t, w) = (grid[k], frac[k] * step);
        match (older, younger) {
            (true, true) => {}
            (true, false) => edges[k].1 = t - step / 2.0 + w,
            (false, true) => edges[k].0 = t + step / 2.0 - w,
            (false, false) => edges[k] = (t - w / 2.0, t + w / 2.0),
        }
    }

    let mut segments = Vec::new();
    let mut i = 0;
    while i < pdf.len() {
        if frac[i] == 0.0 {
            i += 1;
            continue;
        }
        let begin = i;
        let mut prob = 0.0;
        while i < pdf.len() && frac[i] > 0.0 {
            prob += frac[i] * pdf[i];
            i += 1;
        }
        segments.push(HpdSegment {
            start: edges[begin].0,
            end: edges[i - 1].1,
            probability: prob,
        });
    }
    segments
}

/// Calibrates one measurement on a fresh grid of `grid_step` years.
///
/// Batch work should build a [`Calibrator`] once and reuse it.
pub fn calibrate(curve: &CalCurve, meas: Measurement, grid_step: f64) -> Result<CalibrationResult> {
    Calibrator::new(curve, grid_step)?.calibrate(meas)
}
