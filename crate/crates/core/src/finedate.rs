//! Exact-match fine-dating against a reference table.
//!
//! Every measured age pulls all reference records with the identical integer age.
//! The pooled calendar dates, calibrated means and calibrated medians of those
//! records are then summarised by mean and median, each also over the distinct
//! values only, giving twelve point estimates.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::calcurve::Measurement;
use crate::error::{Error, Result};
use crate::reftable::{RefRecord, RefTable};
use crate::table_io::{fmt_f64, CsvSource};

/// Which pooled quantity an indicator summarises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    CalDate,
    Mean,
    Median,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::CalDate, Family::Mean, Family::Median];

    pub fn name(self) -> &'static str {
        match self {
            Family::CalDate => "CalDate",
            Family::Mean => "Mean",
            Family::Median => "Median",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Indicator {
    CalDateMean,
    CalDateMedian,
    UniqueCalDateMean,
    UniqueCalDateMedian,
    MeanMean,
    MeanMedian,
    UniqueMeanMean,
    UniqueMeanMedian,
    MedianMean,
    MedianMedian,
    UniqueMedianMean,
    UniqueMedianMedian,
}

impl Indicator {
    pub const ALL: [Indicator; 12] = [
        Indicator::CalDateMean,
        Indicator::CalDateMedian,
        Indicator::UniqueCalDateMean,
        Indicator::UniqueCalDateMedian,
        Indicator::MeanMean,
        Indicator::MeanMedian,
        Indicator::UniqueMeanMean,
        Indicator::UniqueMeanMedian,
        Indicator::MedianMean,
        Indicator::MedianMedian,
        Indicator::UniqueMedianMean,
        Indicator::UniqueMedianMedian,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn family(self) -> Family {
        Family::ALL[self.index() / 4]
    }

    pub fn is_unique(self) -> bool {
        self.index() % 4 >= 2
    }

    /// True for the median-of-pool statistic, false for the mean.
    pub fn is_median(self) -> bool {
        self.index() % 2 == 1
    }

    /// Compact identifier, e.g. `UniqueCalDateMedian`.
    pub fn name(self) -> &'static str {
        match self {
            Indicator::CalDateMean => "CalDateMean",
            Indicator::CalDateMedian => "CalDateMedian",
            Indicator::UniqueCalDateMean => "UniqueCalDateMean",
            Indicator::UniqueCalDateMedian => "UniqueCalDateMedian",
            Indicator::MeanMean => "MeanMean",
            Indicator::MeanMedian => "MeanMedian",
            Indicator::UniqueMeanMean => "UniqueMeanMean",
            Indicator::UniqueMeanMedian => "UniqueMeanMedian",
            Indicator::MedianMean => "MedianMean",
            Indicator::MedianMedian => "MedianMedian",
            Indicator::UniqueMedianMean => "UniqueMedianMean",
            Indicator::UniqueMedianMedian => "UniqueMedianMedian",
        }
    }

    /// Report label, e.g. `unique_CalDate Median`.
    pub fn label(self) -> String {
        let stat = if self.is_median() { "Median" } else { "Mean" };
        let prefix = if self.is_unique() { "unique_" } else { "" };
        format!("{prefix}{} {stat}", self.family().name())
    }
}

impl fmt::Display for Indicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn normalize(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

/// Accepts the compact name, the report label, or snake case such as `u_caldate_median`.
impl FromStr for Indicator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut key = normalize(s);
        if let Some(rest) = key.strip_prefix('u') {
            if !key.starts_with("unique") && (rest.starts_with("caldate") || rest.starts_with("mean") || rest.starts_with("median")) {
                key = format!("unique{rest}");
            }
        }
        Indicator::ALL
            .into_iter()
            .find(|i| normalize(i.name()) == key)
            .ok_or_else(|| Error::UnknownIndicator(s.to_string()))
    }
}

/// A reference record pulled in by one measured age.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedRecord {
    pub measurement_index: usize,
    pub measured_age: i64,
    pub ref_id: u64,
    pub cal_date: f64,
    pub cal_mean: f64,
    pub cal_median: f64,
    pub cal_sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchSet {
    pub measurements: Vec<Measurement>,
    /// Matches of each measurement, in measurement order.
    pub per_measurement: Vec<Vec<MatchedRecord>>,
    /// Measured ages without any identical reference age.
    pub unmatched: Vec<i64>,
}

impl MatchSet {
    pub fn total(&self) -> usize {
        self.per_measurement.iter().map(Vec::len).sum()
    }

    pub fn records(&self) -> impl Iterator<Item = &MatchedRecord> {
        self.per_measurement.iter().flatten()
    }

    pub fn pooled(&self, family: Family) -> Vec<f64> {
        self.records()
            .map(|r| match family {
                Family::CalDate => r.cal_date,
                Family::Mean => r.cal_mean,
                Family::Median => r.cal_median,
            })
            .collect()
    }

    /// Number of distinct measured ages.
    pub fn unique_measured_ages(&self) -> usize {
        let mut ages: Vec<i64> = self.measurements.iter().map(|m| m.age).collect();
        ages.sort_unstable();
        ages.dedup();
        ages.len()
    }
}

/// Age-keyed index over a reference table.
#[derive(Debug, Clone)]
pub struct RefIndex<'a> {
    table: &'a RefTable,
    by_age: HashMap<i64, Vec<usize>>,
}

impl<'a> RefIndex<'a> {
    pub fn new(table: &'a RefTable) -> Self {
        let mut by_age: HashMap<i64, Vec<usize>> = HashMap::new();
        for (i, r) in table.records.iter().enumerate() {
            by_age.entry(r.age).or_default().push(i);
        }
        RefIndex { table, by_age }
    }

    pub fn lookup(&self, age: i64) -> impl Iterator<Item = &'a RefRecord> + '_ {
        let table = self.table;
        self.by_age
            .get(&age)
            .into_iter()
            .flatten()
            .map(move |&i| &table.records[i])
    }

    /// Matches every measurement independently; repeated ages each get the full list.
    pub fn match_measurements(&self, measurements: &[Measurement]) -> Result<MatchSet> {
        if measurements.is_empty() {
            return Err(Error::Empty("measurements"));
        }
        let mut per_measurement = Vec::with_capacity(measurements.len());
        let mut unmatched = Vec::new();
        for (i, m) in measurements.iter().enumerate() {
            let hits: Vec<MatchedRecord> = self
                .lookup(m.age)
                .map(|r| MatchedRecord {
                    measurement_index: i,
                    measured_age: m.age,
                    ref_id: r.id,
                    cal_date: r.cal_date.0,
                    cal_mean: r.cal_mean.0,
                    cal_median: r.cal_median.0,
                    cal_sigma: r.cal_sigma,
                })
                .collect();
            if hits.is_empty() {
                unmatched.push(m.age);
            }
            per_measurement.push(hits);
        }
        if unmatched.len() == measurements.len() {
            return Err(Error::NoMatches);
        }
        Ok(MatchSet {
            measurements: measurements.to_vec(),
            per_measurement,
            unmatched,
        })
    }
}

pub fn match_measurements(table: &RefTable, measurements: &[Measurement]) -> Result<MatchSet> {
    RefIndex::new(table).match_measurements(measurements)
}

/// The twelve estimates plus pool sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSet {
    values: [f64; 12],
    /// Size of the pooled multiset (shared by all families).
    pub n_pooled: usize,
    /// Number of distinct values per family, indexed like [`Family::ALL`].
    pub n_unique: [usize; 3],
}

impl IndicatorSet {
    pub fn get(&self, ind: Indicator) -> f64 {
        self.values[ind.index()]
    }

    pub fn n_used(&self, ind: Indicator) -> usize {
        if ind.is_unique() {
            self.n_unique[ind.family().index()]
        } else {
            self.n_pooled
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Indicator, f64)> + '_ {
        Indicator::ALL.into_iter().map(|i| (i, self.get(i)))
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Median of a sorted slice; even lengths average the central pair.
pub fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    median_sorted(&v)
}

pub fn compute_indicators(matches: &MatchSet) -> Result<IndicatorSet> {
    let n = matches.total();
    if n == 0 {
        return Err(Error::NothingToAggregate);
    }
    let mut values = [0.0; 12];
    let mut n_unique = [0; 3];
    for family in Family::ALL {
        let mut pool = matches.pooled(family);
        pool.sort_by(f64::total_cmp);
        let mut unique = pool.clone();
        unique.dedup();
        let base = family.index() * 4;
        values[base] = mean(&pool);
        values[base + 1] = median_sorted(&pool);
        values[base + 2] = mean(&unique);
        values[base + 3] = median_sorted(&unique);
        n_unique[family.index()] = unique.len();
    }
    Ok(IndicatorSet {
        values,
        n_pooled: n,
        n_unique,
    })
}

pub const OVERVIEW_COLUMNS: [&str; 7] = [
    "measurement_index",
    "measured_age",
    "ref_id",
    "ref_cal_date",
    "ref_cal_mean",
    "ref_cal_median",
    "ref_cal_sigma",
];

/// One row per matched record.
pub fn write_overview<W: Write>(matches: &MatchSet, header: &[String], mut sink: W) -> Result<()> {
    for line in header {
        writeln!(sink, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(OVERVIEW_COLUMNS)?;
    for r in matches.records() {
        w.write_record([
            (r.measurement_index + 1).to_string(),
            r.measured_age.to_string(),
            r.ref_id.to_string(),
            fmt_f64(r.cal_date),
            fmt_f64(r.cal_mean),
            fmt_f64(r.cal_median),
            fmt_f64(r.cal_sigma),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Twelve indicator rows; match diagnostics and unmatched ages go in the preamble.
pub fn write_summary<W: Write>(
    matches: &MatchSet,
    indicators: &IndicatorSet,
    header: &[String],
    mut sink: W,
) -> Result<()> {
    for line in header {
        writeln!(sink, "# {line}")?;
    }
    writeln!(sink, "# measurements={}", matches.measurements.len())?;
    writeln!(sink, "# unique_measured_ages={}", matches.unique_measured_ages())?;
    writeln!(sink, "# matches={}", matches.total())?;
    let per: Vec<String> = matches.per_measurement.iter().map(|v| v.len().to_string()).collect();
    writeln!(sink, "# matches_per_measurement={}", per.join(","))?;
    let unmatched: Vec<String> = matches.unmatched.iter().map(i64::to_string).collect();
    writeln!(sink, "# unmatched_ages={}", unmatched.join(","))?;
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["indicator", "value", "n_used"])?;
    for (ind, v) in indicators.iter() {
        w.write_record([ind.label(), fmt_f64(v), indicators.n_used(ind).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a summary file back into an indicator set.
pub fn read_summary<R: Read>(source: R) -> Result<IndicatorSet> {
    let src = CsvSource::read(source)?;
    let c_ind = src.column("indicator")?;
    let c_val = src.column("value")?;
    let c_n = src.column("n_used")?;
    let mut values = [f64::NAN; 12];
    let mut seen = [false; 12];
    let mut n_pooled = 0;
    let mut n_unique = [0; 3];
    for (line, row) in src.rows() {
        let ind: Indicator = row.get(c_ind).unwrap_or("").parse()?;
        values[ind.index()] = src.parse(line, row, c_val)?;
        let n: usize = src.parse(line, row, c_n)?;
        if ind.is_unique() {
            n_unique[ind.family().index()] = n;
        } else {
            n_pooled = n;
        }
        seen[ind.index()] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::parse(0, format!("summary lacks {}", Indicator::ALL[missing])));
    }
    Ok(IndicatorSet {
        values,
        n_pooled,
        n_unique,
    })
}

/// Writes `<prefix>_overview.csv` and `<prefix>_summary.csv`, returning both paths.
pub fn write_report(
    matches: &MatchSet,
    indicators: &IndicatorSet,
    prefix: &Path,
    header: &[String],
) -> Result<(PathBuf, PathBuf)> {
    let base = prefix.to_string_lossy().to_string();
    let overview = PathBuf::from(format!("{base}_overview.csv"));
    let summary = PathBuf::from(format!("{base}_summary.csv"));
    if let Some(dir) = overview.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_overview(matches, header, BufWriter::new(File::create(&overview)?))?;
    write_summary(matches, indicators, header, BufWriter::new(File::create(&summary)?))?;
    Ok((overview, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calcurve::CalendarDate;
    use crate::reftable::RefTableSpec;

    pub(crate) fn rec(id: u64, date: f64, age: i64, mean: f64, median: f64) -> RefRecord {
        RefRecord {
            id,
            cal_date: CalendarDate(date),
            age,
            sd: 5.0,
            cal_mean: CalendarDate(mean),
            cal_median: CalendarDate(median),
            cal_sigma: 20.0,
            hpd68: vec![],
            hpd95: vec![],
        }
    }

    fn table(records: Vec<RefRecord>) -> RefTable {
        RefTable {
            label: "t".into(),
            curve_name: "c".into(),
            specs: vec![RefTableSpec::from_label("5_20_5", 0).unwrap()],
            records,
        }
    }

    fn m(age: i64) -> Measurement {
        Measurement::new(age, 20.0)
    }

    #[test]
    fn single_hit() {
        let t = table(vec![rec(1, -50.0, 2000, -52.0, -51.0), rec(2, -55.0, 2005, -57.0, -56.0)]);
        let ms = match_measurements(&t, &[m(2000)]).unwrap();
        assert_eq!(ms.total(), 1);
        assert_eq!(ms.pooled(Family::CalDate), vec![-50.0]);
        assert!(matches!(match_measurements(&t, &[m(1900)]), Err(Error::NoMatches)));
    }

    #[test]
    fn duplicate_ages_each_match_everything() {
        let t = table((1..=3).map(|i| rec(i, -50.0 - i as f64, 2000, 0.0, 0.0)).collect());
        let ms = match_measurements(&t, &[m(2000), m(2000)]).unwrap();
        assert_eq!(ms.total(), 6);
        assert_eq!(ms.unique_measured_ages(), 1);
    }

    #[test]
    fn unmatched_reported_not_fatal() {
        let t = table(vec![rec(1, -50.0, 2000, 0.0, 0.0)]);
        let ms = match_measurements(&t, &[m(2000), m(1111)]).unwrap();
        assert_eq!(ms.unmatched, vec![1111]);
        assert!(match_measurements(&t, &[]).is_err());
    }

    #[test]
    fn singleton_indicators() {
        let t = table(vec![rec(1, -100.0, 2000, -102.0, -101.0)]);
        let ind = compute_indicators(&match_measurements(&t, &[m(2000)]).unwrap()).unwrap();
        for i in Indicator::ALL {
            let want = match i.family() {
                Family::CalDate => -100.0,
                Family::Mean => -102.0,
                Family::Median => -101.0,
            };
            assert_eq!(ind.get(i), want, "{i}");
        }
    }

    #[test]
    fn three_value_hand_computation() {
        let t = table(vec![
            rec(1, -100.0, 2000, 0.0, 0.0),
            rec(2, -100.0, 2000, 0.0, 0.0),
            rec(3, -90.0, 2000, 0.0, 0.0),
        ]);
        let ind = compute_indicators(&match_measurements(&t, &[m(2000)]).unwrap()).unwrap();
        assert!((ind.get(Indicator::CalDateMean) + 96.666_666_666_666_67).abs() < 1e-9);
        assert_eq!(ind.get(Indicator::CalDateMedian), -100.0);
        assert_eq!(ind.get(Indicator::UniqueCalDateMean), -95.0);
        assert_eq!(ind.get(Indicator::UniqueCalDateMedian), -95.0);
        assert_eq!(ind.n_used(Indicator::CalDateMean), 3);
        assert_eq!(ind.n_used(Indicator::UniqueCalDateMean), 2);
        assert_eq!(ind.n_used(Indicator::UniqueMeanMean), 1);
    }

    #[test]
    fn empty_matchset_errors() {
        let ms = MatchSet {
            measurements: vec![m(1)],
            per_measurement: vec![vec![]],
            unmatched: vec![1],
        };
        assert!(matches!(compute_indicators(&ms), Err(Error::NothingToAggregate)));
    }

    #[test]
    fn indicator_names_parse() {
        for i in Indicator::ALL {
            assert_eq!(i.name().parse::<Indicator>().unwrap(), i);
            assert_eq!(i.label().parse::<Indicator>().unwrap(), i);
        }
        assert_eq!("caldate_median".parse::<Indicator>().unwrap(), Indicator::CalDateMedian);
        assert_eq!("u_mean_median".parse::<Indicator>().unwrap(), Indicator::UniqueMeanMedian);
        assert_eq!("unique_CalDate Mean".parse::<Indicator>().unwrap(), Indicator::UniqueCalDateMean);
        assert!("bogus".parse::<Indicator>().is_err());
        assert_eq!(Indicator::UniqueMedianMean.label(), "unique_Median Mean");
    }

    #[test]
    fn summary_round_trip_and_row_counts() {
        let t = table(vec![rec(1, -100.0, 2000, -102.5, -101.25)]);
        let ms = match_measurements(&t, &[m(2000)]).unwrap();
        let ind = compute_indicators(&ms).unwrap();
        let mut overview = Vec::new();
        write_overview(&ms, &[], &mut overview).unwrap();
        let ov = CsvSource::read(overview.as_slice()).unwrap();
        assert_eq!(ov.len(), 1);
        let mut summary = Vec::new();
        write_summary(&ms, &ind, &["run=x".into()], &mut summary).unwrap();
        let src = CsvSource::read(summary.as_slice()).unwrap();
        assert_eq!(src.len(), 12);
        assert_eq!(src.meta("matches"), Some("1"));
        assert_eq!(read_summary(summary.as_slice()).unwrap(), ind);
    }
}
