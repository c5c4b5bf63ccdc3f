//! Indicator-quality lookup table: per value bucket and indicator, how often the
//! simulated evaluations landed within 12 and 25 years of the true date.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::evaluate::EvaluationTable;
use crate::finedate::Indicator;
use crate::table_io::{fmt_f64, CsvSource};

pub const DEFAULT_BUCKET_WIDTH: f64 = 5.0;
pub const TOLERANCES: (f64, f64) = (12.0, 25.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LookupCell {
    pub total_count: usize,
    /// Percent, 0.01 resolution. `None` for empty buckets.
    pub frac12: Option<f64>,
    pub frac25: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LookupTable {
    pub bucket_width: f64,
    /// Left edges, ascending and contiguous.
    pub buckets: Vec<f64>,
    /// `cells[bucket][indicator.index()]`.
    pub cells: Vec<[LookupCell; 12]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LookupHit {
    pub bucket_left: f64,
    pub total_count: usize,
    pub frac12: Option<f64>,
    pub frac25: Option<f64>,
}

/// Left edge of the half-open bucket containing `value`.
pub fn bucket_left(value: f64, width: f64) -> f64 {
    (value / width).floor() * width
}

fn percent(k: usize, n: usize) -> f64 {
    (k as f64 / n as f64 * 10_000.0).round() / 100.0
}

const EMPTY: LookupCell = LookupCell {
    total_count: 0,
    frac12: None,
    frac25: None,
};

pub fn build_lookup(eval: &EvaluationTable, bucket_width: f64) -> Result<LookupTable> {
    if !(bucket_width > 0.0) || !bucket_width.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "bucket width must be positive, got {bucket_width}"
        )));
    }
    let rows: Vec<(Indicator, f64, f64)> = eval
        .rows
        .iter()
        .filter_map(|r| Some((r.indicator, r.value?, r.delta?)))
        .collect();
    if rows.is_empty() {
        return Err(Error::NothingToAggregate);
    }
    let lo = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let first = bucket_left(lo, bucket_width);
    let n = ((bucket_left(hi, bucket_width) - first) / bucket_width).round() as usize + 1;
    let buckets: Vec<f64> = (0..n).map(|i| first + i as f64 * bucket_width).collect();

    let mut counts = vec![[(0usize, 0usize, 0usize); 12]; n];
    for &(ind, value, delta) in &rows {
        let b = ((bucket_left(value, bucket_width) - first) / bucket_width).round() as usize;
        let c = &mut counts[b][ind.index()];
        c.0 += 1;
        if delta.abs() <= TOLERANCES.0 {
            c.1 += 1;
        }
        if delta.abs() <= TOLERANCES.1 {
            c.2 += 1;
        }
    }
    let cells = counts
        .into_iter()
        .map(|row| {
            row.map(|(t, k12, k25)| {
                if t == 0 {
                    EMPTY
                } else {
                    LookupCell {
                        total_count: t,
                        frac12: Some(percent(k12, t)),
                        frac25: Some(percent(k25, t)),
                    }
                }
            })
        })
        .collect();
    Ok(LookupTable {
        bucket_width,
        buckets,
        cells,
    })
}

impl LookupTable {
    pub fn range(&self) -> (f64, f64) {
        let last = self.buckets.last().copied().unwrap_or(0.0);
        (self.buckets.first().copied().unwrap_or(0.0), last + self.bucket_width)
    }

    pub fn total(&self, ind: Indicator) -> usize {
        self.cells.iter().map(|c| c[ind.index()].total_count).sum()
    }

    pub fn query(&self, ind: Indicator, value: f64) -> Result<LookupHit> {
        let (lo, hi) = self.range();
        if self.buckets.is_empty() || !(value >= lo && value < hi) {
            return Err(Error::OutsideLookupRange(value));
        }
        let left = bucket_left(value, self.bucket_width);
        let i = ((left - lo) / self.bucket_width).round() as usize;
        let cell = self.cells[i][ind.index()];
        Ok(LookupHit {
            bucket_left: self.buckets[i],
            total_count: cell.total_count,
            frac12: cell.frac12,
            frac25: cell.frac25,
        })
    }

    pub fn write_csv<W: Write>(&self, header: &[String], mut sink: W) -> Result<()> {
        for line in header {
            writeln!(sink, "# {line}")?;
        }
        writeln!(sink, "# bucket_width={}", fmt_f64(self.bucket_width))?;
        let mut w = csv::Writer::from_writer(sink);
        let mut cols = vec!["BucketLeft".to_string()];
        for ind in Indicator::ALL {
            for suffix in ["TotalCount", "Frac12", "Frac25"] {
                cols.push(format!("{}_{suffix}", ind.name()));
            }
        }
        w.write_record(&cols)?;
        for (left, row) in self.buckets.iter().zip(&self.cells) {
            let mut rec = vec![fmt_f64(*left)];
            for c in row {
                rec.push(c.total_count.to_string());
                rec.push(c.frac12.map(|f| format!("{f:.2}")).unwrap_or_default());
                rec.push(c.frac25.map(|f| format!("{f:.2}")).unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R) -> Result<LookupTable> {
        let src = CsvSource::read(source)?;
        let c_left = src.column("BucketLeft")?;
        let mut cols = [(0, 0, 0); 12];
        for ind in Indicator::ALL {
            let name = ind.name();
            cols[ind.index()] = (
                src.column(&format!("{name}_TotalCount"))?,
                src.column(&format!("{name}_Frac12"))?,
                src.column(&format!("{name}_Frac25"))?,
            );
        }
        let mut buckets = Vec::with_capacity(src.len());
        let mut cells = Vec::with_capacity(src.len());
        for (line, row) in src.rows() {
            buckets.push(src.parse::<f64>(line, row, c_left)?);
            let mut cell_row = [EMPTY; 12];
            for (k, &(ct, c12, c25)) in cols.iter().enumerate() {
                cell_row[k] = LookupCell {
                    total_count: src.parse(line, row, ct)?,
                    frac12: crate::table_io::parse_opt_f64(line, row.get(c12).unwrap_or(""))?,
                    frac25: crate::table_io::parse_opt_f64(line, row.get(c25).unwrap_or(""))?,
                };
            }
            cells.push(cell_row);
        }
        let bucket_width = match src.meta("bucket_width") {
            Some(w) => w
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad bucket_width '{w}'")))?,
            None if buckets.len() >= 2 => buckets[1] - buckets[0],
            None => DEFAULT_BUCKET_WIDTH,
        };
        Ok(LookupTable {
            bucket_width,
            buckets,
            cells,
        })
    }
}

pub fn query_lookup(table: &LookupTable, indicator: &str, value: f64) -> Result<LookupHit> {
    let ind: Indicator = indicator
        .parse()
        .map_err(|_| Error::UnknownIndicator(indicator.to_string()))?;
    table.query(ind, value)
}
