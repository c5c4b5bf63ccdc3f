//! Most-probable-date search over a pool of reference indicator values.
//!
//! The tolerance window around the reported value widens in fixed steps until it
//! holds enough reference values or reaches its maximum; the mode of the window
//! is the most probable date.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpdParams {
    pub t0: f64,
    pub dt: f64,
    pub t_max: f64,
    pub m_min: usize,
}

impl Default for MpdParams {
    fn default() -> Self {
        MpdParams {
            t0: 1.0,
            dt: 1.0,
            t_max: 10.0,
            m_min: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpdResult {
    pub indicator_name: String,
    pub input_value: f64,
    pub tolerance_used: f64,
    pub match_count: usize,
    pub mpd: f64,
    pub range: f64,
    /// `mpd - original date`, when the original date is known.
    pub delta: Option<f64>,
    /// Fewer than `m_min` matches even at the maximum tolerance.
    pub under_min: bool,
}

impl MpdResult {
    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.indicator_name = name.into();
        self
    }

    pub fn with_original(mut self, original: f64) -> Self {
        self.delta = Some(self.mpd - original);
        self
    }
}

/// A sorted reference pool, reusable across many searches.
#[derive(Debug, Clone)]
pub struct MpdPool {
    sorted: Vec<f64>,
}

impl MpdPool {
    pub fn new(values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut sorted: Vec<f64> = values.into_iter().filter(|v| v.is_finite()).collect();
        if sorted.is_empty() {
            return Err(Error::EmptyPool);
        }
        sorted.sort_by(f64::total_cmp);
        Ok(MpdPool { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Reference values within `tolerance` of `x`, sorted.
    pub fn window(&self, x: f64, tolerance: f64) -> &[f64] {
        let lo = self.sorted.partition_point(|&r| r < x - tolerance);
        let hi = self.sorted.partition_point(|&r| r <= x + tolerance);
        // exact |x - r| <= T check at the boundaries
        let (mut lo, mut hi) = (lo, hi);
        while lo < hi && (x - self.sorted[lo]).abs() > tolerance {
            lo += 1;
        }
        while hi > lo && (x - self.sorted[hi - 1]).abs() > tolerance {
            hi -= 1;
        }
        &self.sorted[lo..hi]
    }

    pub fn search(&self, x: f64, params: MpdParams) -> Result<MpdResult> {
        if !(params.dt > 0.0) || params.t0 > params.t_max {
            return Err(Error::InvalidArgument(format!("bad tolerance schedule {params:?}")));
        }
        let mut k = 0usize;
        let mut t = params.t0;
        let mut window = self.window(x, t);
        while window.len() < params.m_min {
            let next = params.t0 + (k + 1) as f64 * params.dt;
            if next > params.t_max + 1e-9 {
                break;
            }
            k += 1;
            t = next.min(params.t_max);
            window = self.window(x, t);
        }
        if window.is_empty() {
            return Err(Error::NoneWithinTolerance { value: x });
        }
        Ok(MpdResult {
            indicator_name: String::new(),
            input_value: x,
            tolerance_used: t,
            match_count: window.len(),
            mpd: mode(window, x),
            range: window[window.len() - 1] - window[0],
            delta: None,
            under_min: window.len() < params.m_min,
        })
    }
}

/// Mode of a sorted slice; ties go to the value closest to `x`, then the older one.
fn mode(sorted: &[f64], x: f64) -> f64 {
    let mut best = sorted[0];
    let mut best_count = 0;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == v {
            j += 1;
        }
        let count = j - i;
        let closer = (v - x).abs() < (best - x).abs();
        if count > best_count || (count == best_count && closer) {
            best = v;
            best_count = count;
        }
        i = j;
    }
    best
}

pub fn mpd_search(pool: &[f64], x: f64, params: MpdParams) -> Result<MpdResult> {
    MpdPool::new(pool.iter().copied())?.search(x, params)
}

/// Mean and median of the MPD values.
pub fn overall_aggregate(results: &[MpdResult]) -> Result<(f64, f64)> {
    if results.is_empty() {
        return Err(Error::Empty("mpd results"));
    }
    let mpds: Vec<f64> = results.iter().map(|r| r.mpd).collect();
    Ok((crate::finedate::mean(&mpds), crate::finedate::median(&mpds)))
}
