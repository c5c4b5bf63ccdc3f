//! Quality assessment of fine-dating results.

mod histogram;
mod mpd;
mod normality;
mod series;

use std::fmt;
use std::str::FromStr;

pub use histogram::{histogram, rice_bins, Histogram};
pub use mpd::{mpd_search, overall_aggregate, MpdParams, MpdPool, MpdResult};
pub use normality::{anderson_darling, anderson_darling_a2, dagostino_pearson, NormalityResult};
pub use series::{
    average_deviation, delta_fractions, evaluate_test_series, mpd_report, normality_by_interval,
    performance_curves, read_eval_long, AverageDeviation, DatasetMpd, DatasetOutcome, EvalRow,
    EvaluationTable, IntervalNormality, PerformancePoint, PERFORMANCE_THRESHOLDS,
    write_mpd_report, write_normality, write_performance,
};

use crate::error::{Error, Result};

/// Quality class of an absolute deviation from the known date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DeltaCategory {
    /// |delta| <= 10
    Excellent,
    /// 10 < |delta| <= 25
    HighQuality,
    /// 25 < |delta| <= 35
    Satisfactory,
    /// |delta| > 35
    Improvable,
}

impl DeltaCategory {
    pub const ALL: [DeltaCategory; 4] = [
        DeltaCategory::Excellent,
        DeltaCategory::HighQuality,
        DeltaCategory::Satisfactory,
        DeltaCategory::Improvable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DeltaCategory::Excellent => "excellent",
            DeltaCategory::HighQuality => "high_quality",
            DeltaCategory::Satisfactory => "satisfactory",
            DeltaCategory::Improvable => "improvable",
        }
    }
}

impl fmt::Display for DeltaCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DeltaCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DeltaCategory::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown delta category '{s}'")))
    }
}

pub fn classify_delta(delta: f64) -> DeltaCategory {
    let d = delta.abs();
    if d <= 10.0 {
        DeltaCategory::Excellent
    } else if d <= 25.0 {
        DeltaCategory::HighQuality
    } else if d <= 35.0 {
        DeltaCategory::Satisfactory
    } else {
        DeltaCategory::Improvable
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories() {
        assert_eq!(classify_delta(-9.0), DeltaCategory::Excellent);
        assert_eq!(classify_delta(10.0), DeltaCategory::Excellent);
        assert_eq!(classify_delta(25.0), DeltaCategory::HighQuality);
        assert_eq!(classify_delta(35.0), DeltaCategory::Satisfactory);
        assert_eq!(classify_delta(-40.0), DeltaCategory::Improvable);
        for c in DeltaCategory::ALL {
            assert_eq!(c.name().parse::<DeltaCategory>().unwrap(), c);
        }
    }
}
