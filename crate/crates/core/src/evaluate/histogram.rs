use std::io::Write;

use crate::error::{Error, Result};
use crate::table_io::fmt_f64;

/// Rice rule: the smallest integer `k` with `k >= 2 n^(1/3)`, i.e. `k^3 >= 8 n`.
pub fn rice_bins(n: usize) -> usize {
    let n = n.max(1) as u128;
    let mut k = (2.0 * (n as f64).cbrt()).ceil() as u128;
    while k > 1 && (k - 1).pow(3) >= 8 * n {
        k -= 1;
    }
    while k.pow(3) < 8 * n {
        k += 1;
    }
    k as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn write_csv<W: Write>(&self, header: &[String], mut sink: W) -> Result<()> {
        for line in header {
            writeln!(sink, "# {line}")?;
        }
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["bin", "left", "right", "count"])?;
        for (i, c) in self.counts.iter().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                fmt_f64(self.edges[i]),
                fmt_f64(self.edges[i + 1]),
                c.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Equal-width bins over `[min, max]`, right-open except the last.
///
/// A constant sample gets unit-width bins starting at its value.
pub fn histogram(sample: &[f64], bins: Option<usize>) -> Result<Histogram> {
    if sample.is_empty() {
        return Err(Error::Empty("histogram sample"));
    }
    let bins = bins.unwrap_or_else(|| rice_bins(sample.len())).max(1);
    let lo = sample.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
    if hi > lo {
        edges[bins] = hi;
    }
    let mut counts = vec![0; bins];
    for &x in sample {
        let mut i = ((x - lo) / width).floor() as usize;
        if i >= bins {
            i = bins - 1;
        }
        // floating rounding at interior edges
        while i > 0 && x < edges[i] {
            i -= 1;
        }
        while i + 1 < bins && x >= edges[i + 1] {
            i += 1;
        }
        counts[i] += 1;
    }
    Ok(Histogram { edges, counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rice_rule_values() {
        assert_eq!(rice_bins(300), 14);
        assert_eq!(rice_bins(1163), 22);
        assert_eq!(rice_bins(12), 5);
        assert_eq!(rice_bins(6100), 37);
        // exact cubes: 2 * 1000^(1/3) = 20
        assert_eq!(rice_bins(1000), 20);
        assert_eq!(rice_bins(1001), 21);
        assert_eq!(rice_bins(1), 2);
    }

    #[test]
    fn constant_sample() {
        let h = histogram(&[0.0; 4], None).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.total(), 4);
    }

    #[test]
    fn hand_binning() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let h = histogram(&x, Some(5)).unwrap();
        assert_eq!(h.counts, vec![2, 2, 2, 2, 2]);
        assert_eq!(h.edges.first(), Some(&0.0));
        assert_eq!(h.edges.last(), Some(&9.0));
        assert!(histogram(&[], None).is_err());
    }
}
