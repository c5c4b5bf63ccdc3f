//! Test-series evaluation: fine-date every simulated dataset against a reference
//! table and compare each indicator with the known original date.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;

use super::mpd::{MpdParams, MpdPool, MpdResult};
use super::normality::{anderson_darling, dagostino_pearson};
use super::{classify_delta, overall_aggregate, DeltaCategory};
use crate::error::{Error, Result};
use crate::finedate::{compute_indicators, Family, Indicator, IndicatorSet, RefIndex};
use crate::reftable::RefTable;
use crate::simulate::TestDataset;
use crate::table_io::{fmt_f64, fmt_opt, parse_opt_f64, CsvSource};

/// Thresholds accepted by [`performance_curves`].
pub const PERFORMANCE_THRESHOLDS: [f64; 2] = [25.0, 35.0];

/// One dataset x indicator row. Value, delta and category are empty when the
/// dataset had no matches at all.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub data_id: u64,
    pub original_date: f64,
    pub indicator: Indicator,
    pub value: Option<f64>,
    pub delta: Option<f64>,
    pub category: Option<DeltaCategory>,
}

/// Per-dataset detail kept alongside the long table.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetOutcome {
    pub data_id: u64,
    pub original_date: f64,
    pub ages: Vec<i64>,
    pub indicators: Option<IndicatorSet>,
    pub match_count: usize,
    pub unmatched: Vec<i64>,
    pub matched_dates: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvaluationTable {
    pub rows: Vec<EvalRow>,
    /// Empty when the table was read back from CSV.
    pub outcomes: Vec<DatasetOutcome>,
}

impl EvaluationTable {
    pub fn from_rows(rows: Vec<EvalRow>) -> Self {
        EvaluationTable {
            rows,
            outcomes: Vec::new(),
        }
    }

    /// Rows carrying a value.
    pub fn matched_rows(&self) -> impl Iterator<Item = &EvalRow> {
        self.rows.iter().filter(|r| r.value.is_some())
    }

    pub fn values(&self, indicator: Indicator) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.indicator == indicator)
            .filter_map(|r| r.value)
            .collect()
    }

    /// Number of datasets with indicator values.
    pub fn matched_datasets(&self) -> usize {
        let mut ids: Vec<u64> = self.matched_rows().map(|r| r.data_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Category counts per indicator, indexed like [`DeltaCategory::ALL`].
    pub fn category_counts(&self) -> BTreeMap<Indicator, [usize; 4]> {
        let mut out: BTreeMap<Indicator, [usize; 4]> =
            Indicator::ALL.iter().map(|&i| (i, [0; 4])).collect();
        for r in &self.rows {
            if let Some(c) = r.category {
                out.get_mut(&r.indicator).expect("all indicators")[c as usize] += 1;
            }
        }
        out
    }

    pub fn write_long<W: Write>(&self, header: &[String], mut sink: W) -> Result<()> {
        for line in header {
            writeln!(sink, "# {line}")?;
        }
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["data_id", "original_cal_date", "indicator", "value", "delta", "category"])?;
        for r in &self.rows {
            w.write_record([
                r.data_id.to_string(),
                fmt_f64(r.original_date),
                r.indicator.name().to_string(),
                fmt_opt(r.value),
                fmt_opt(r.delta),
                r.category.map(|c| c.name().to_string()).unwrap_or_else(|| "unmatched".into()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn read_eval_long<R: Read>(source: R) -> Result<EvaluationTable> {
    let src = CsvSource::read(source)?;
    let c_id = src.column("data_id")?;
    let c_date = src.column("original_cal_date")?;
    let c_ind = src.column("indicator")?;
    let c_val = src.column("value")?;
    let c_delta = src.column("delta")?;
    let c_cat = src.column("category")?;
    let mut rows = Vec::with_capacity(src.len());
    for (line, row) in src.rows() {
        let cat = row.get(c_cat).unwrap_or("");
        rows.push(EvalRow {
            data_id: src.parse(line, row, c_id)?,
            original_date: src.parse(line, row, c_date)?,
            indicator: row.get(c_ind).unwrap_or("").parse()?,
            value: parse_opt_f64(line, row.get(c_val).unwrap_or(""))?,
            delta: parse_opt_f64(line, row.get(c_delta).unwrap_or(""))?,
            category: if cat == "unmatched" || cat.is_empty() {
                None
            } else {
                Some(cat.parse()?)
            },
        });
    }
    Ok(EvaluationTable::from_rows(rows))
}

fn evaluate_one(index: &RefIndex<'_>, ds: &TestDataset) -> DatasetOutcome {
    let measurements = ds.measurements();
    let ages: Vec<i64> = measurements.iter().map(|m| m.age).collect();
    match index.match_measurements(&measurements) {
        Ok(ms) => DatasetOutcome {
            data_id: ds.data_id,
            original_date: ds.original_date.0,
            ages,
            indicators: compute_indicators(&ms).ok(),
            match_count: ms.total(),
            unmatched: ms.unmatched.clone(),
            matched_dates: ms.pooled(Family::CalDate),
        },
        Err(_) => DatasetOutcome {
            data_id: ds.data_id,
            original_date: ds.original_date.0,
            unmatched: ages.clone(),
            ages,
            indicators: None,
            match_count: 0,
            matched_dates: Vec::new(),
        },
    }
}

/// Fine-dates every dataset and records `indicator - original date` per indicator.
///
/// Datasets without any match produce flagged rows rather than an error.
pub fn evaluate_test_series(table: &RefTable, datasets: &[TestDataset]) -> EvaluationTable {
    let index = RefIndex::new(table);
    let outcomes: Vec<DatasetOutcome> = datasets.par_iter().map(|ds| evaluate_one(&index, ds)).collect();
    let rows = outcomes
        .iter()
        .flat_map(|o| {
            Indicator::ALL.into_iter().map(move |ind| {
                let value = o.indicators.as_ref().map(|s| s.get(ind));
                let delta = value.map(|v| v - o.original_date);
                EvalRow {
                    data_id: o.data_id,
                    original_date: o.original_date,
                    indicator: ind,
                    value,
                    delta,
                    category: delta.map(classify_delta),
                }
            })
        })
        .collect();
    EvaluationTable { rows, outcomes }
}

/// Groups matched rows per dataset: `data_id -> (original date, deltas by indicator)`.
fn deltas_by_dataset(eval: &EvaluationTable) -> BTreeMap<u64, (f64, [Option<f64>; 12])> {
    let mut out: BTreeMap<u64, (f64, [Option<f64>; 12])> = BTreeMap::new();
    for r in eval.matched_rows() {
        let e = out.entry(r.data_id).or_insert((r.original_date, [None; 12]));
        e.1[r.indicator.index()] = r.delta;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerformancePoint {
    pub original_date: f64,
    pub n_datasets: usize,
    /// Success fraction per family, indexed like [`Family::ALL`].
    pub fractions: [f64; 3],
}

/// Per original date, the share of datasets whose family score is within
/// `threshold`. A family's score is the mean absolute delta of its four indicators.
pub fn performance_curves(eval: &EvaluationTable, threshold: f64) -> Result<Vec<PerformancePoint>> {
    if !PERFORMANCE_THRESHOLDS.contains(&threshold) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be one of 25 or 35, got {threshold}"
        )));
    }
    let mut by_date: BTreeMap<i64, (f64, usize, [usize; 3])> = BTreeMap::new();
    for (_, (date, deltas)) in deltas_by_dataset(eval) {
        let e = by_date
            .entry((date * 1000.0).round() as i64)
            .or_insert((date, 0, [0; 3]));
        e.1 += 1;
        for f in Family::ALL {
            let members: Vec<f64> = Indicator::ALL
                .iter()
                .filter(|i| i.family() == f)
                .filter_map(|i| deltas[i.index()])
                .map(f64::abs)
                .collect();
            if !members.is_empty() && crate::finedate::mean(&members) <= threshold {
                e.2[f as usize] += 1;
            }
        }
    }
    Ok(by_date
        .into_values()
        .map(|(date, n, ok)| PerformancePoint {
            original_date: date,
            n_datasets: n,
            fractions: ok.map(|k| k as f64 / n as f64),
        })
        .collect())
}

pub fn write_performance<W: Write>(points: &[PerformancePoint], header: &[String], mut sink: W) -> Result<()> {
    for line in header {
        writeln!(sink, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["original_cal_date", "n_datasets", "CalDate", "Mean", "Median"])?;
    for p in points {
        w.write_record([
            fmt_f64(p.original_date),
            p.n_datasets.to_string(),
            fmt_f64(p.fractions[0]),
            fmt_f64(p.fractions[1]),
            fmt_f64(p.fractions[2]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Signed mean deltas per original date and over the whole span.
#[derive(Debug, Clone, PartialEq)]
pub struct AverageDeviation {
    pub dates: Vec<f64>,
    pub per_date: Vec<[Option<f64>; 12]>,
    pub overall: [Option<f64>; 12],
}

impl AverageDeviation {
    pub fn overall_of(&self, ind: Indicator) -> Option<f64> {
        self.overall[ind.index()]
    }

    /// Whole-year display value.
    pub fn display(v: Option<f64>) -> String {
        v.map(|x| format!("{}", x.round() as i64)).unwrap_or_default()
    }

    pub fn write_csv<W: Write>(&self, header: &[String], mut sink: W) -> Result<()> {
        for line in header {
            writeln!(sink, "# {line}")?;
        }
        let mut w = csv::Writer::from_writer(sink);
        let mut cols = vec!["original_cal_date".to_string()];
        cols.extend(Indicator::ALL.iter().map(|i| i.name().to_string()));
        w.write_record(&cols)?;
        for (d, vals) in self.dates.iter().zip(&self.per_date) {
            let mut row = vec![fmt_f64(*d)];
            row.extend(vals.iter().map(|v| fmt_opt(*v)));
            w.write_record(&row)?;
        }
        let mut row = vec!["all".to_string()];
        row.extend(self.overall.iter().map(|v| fmt_opt(*v)));
        w.write_record(&row)?;
        w.flush()?;
        Ok(())
    }
}

pub fn average_deviation(eval: &EvaluationTable) -> AverageDeviation {
    let mut by_date: BTreeMap<i64, (f64, [(f64, usize); 12])> = BTreeMap::new();
    let mut overall = [(0.0, 0usize); 12];
    for r in eval.matched_rows() {
        let Some(d) = r.delta else { continue };
        let e = by_date
            .entry((r.original_date * 1000.0).round() as i64)
            .or_insert((r.original_date, [(0.0, 0); 12]));
        let k = r.indicator.index();
        e.1[k].0 += d;
        e.1[k].1 += 1;
        overall[k].0 += d;
        overall[k].1 += 1;
    }
    let avg = |(s, n): (f64, usize)| (n > 0).then(|| s / n as f64);
    let (dates, per_date) = by_date
        .into_values()
        .map(|(date, acc)| (date, acc.map(avg)))
        .unzip();
    AverageDeviation {
        dates,
        per_date,
        overall: overall.map(avg),
    }
}

/// Share of matched indicator evaluations with |delta| <= 25 and <= 35.
pub fn delta_fractions(eval: &EvaluationTable) -> (f64, f64) {
    let deltas: Vec<f64> = eval.matched_rows().filter_map(|r| r.delta).map(f64::abs).collect();
    if deltas.is_empty() {
        return (0.0, 0.0);
    }
    let n = deltas.len() as f64;
    let within = |t: f64| deltas.iter().filter(|&&d| d <= t).count() as f64 / n;
    (within(25.0), within(35.0))
}

/// Distribution diagnostics per original date.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalNormality {
    pub original_date: f64,
    pub n_ages: usize,
    pub unique_ages: usize,
    /// Distinct measured ages that found at least one reference record.
    pub unique_ages_matched: usize,
    pub dp_statistic: Option<f64>,
    pub dp_p_value: Option<f64>,
    pub n_matches: usize,
    pub unique_matched_dates: usize,
    /// Corrected Anderson-Darling statistic of the pooled matched calendar dates.
    pub ad_matched_dates: Option<f64>,
}

/// Normality of the simulated ages per interval and of the matched dates they pull in.
pub fn normality_by_interval(eval: &EvaluationTable) -> Vec<IntervalNormality> {
    let mut by_date: BTreeMap<i64, Vec<&DatasetOutcome>> = BTreeMap::new();
    for o in &eval.outcomes {
        by_date.entry((o.original_date * 1000.0).round() as i64).or_default().push(o);
    }
    by_date
        .into_values()
        .map(|group| {
            let ages: Vec<f64> = group.iter().flat_map(|o| o.ages.iter().map(|&a| a as f64)).collect();
            let mut uniq: Vec<i64> = group.iter().flat_map(|o| o.ages.iter().copied()).collect();
            uniq.sort_unstable();
            uniq.dedup();
            let mut unmatched: Vec<i64> = group.iter().flat_map(|o| o.unmatched.iter().copied()).collect();
            unmatched.sort_unstable();
            unmatched.dedup();
            let dates: Vec<f64> = group.iter().flat_map(|o| o.matched_dates.iter().copied()).collect();
            let mut udates = dates.clone();
            udates.sort_by(f64::total_cmp);
            udates.dedup();
            let dp = dagostino_pearson(&ages).ok();
            IntervalNormality {
                original_date: group[0].original_date,
                n_ages: ages.len(),
                unique_ages: uniq.len(),
                unique_ages_matched: uniq.len() - unmatched.len(),
                dp_statistic: dp.as_ref().map(|r| r.statistic),
                dp_p_value: dp.and_then(|r| r.p_value),
                n_matches: dates.len(),
                unique_matched_dates: udates.len(),
                ad_matched_dates: anderson_darling(&dates).ok().map(|r| r.statistic),
            }
        })
        .collect()
}

pub fn write_normality<W: Write>(rows: &[IntervalNormality], header: &[String], mut sink: W) -> Result<()> {
    for line in header {
        writeln!(sink, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "original_cal_date",
        "n_ages",
        "unique_ages",
        "unique_ages_matched",
        "dp_statistic",
        "dp_p_value",
        "n_matches",
        "unique_matched_dates",
        "ad_matched_dates",
    ])?;
    for r in rows {
        w.write_record([
            fmt_f64(r.original_date),
            r.n_ages.to_string(),
            r.unique_ages.to_string(),
            r.unique_ages_matched.to_string(),
            fmt_opt(r.dp_statistic),
            fmt_opt(r.dp_p_value),
            r.n_matches.to_string(),
            r.unique_matched_dates.to_string(),
            fmt_opt(r.ad_matched_dates),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// MPD results for one dataset; `None` where no reference value was within tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMpd {
    pub data_id: u64,
    pub original_date: f64,
    pub results: Vec<(Indicator, f64, Option<MpdResult>)>,
    pub overall: Option<(f64, f64)>,
}

/// Runs the MPD search for every reported indicator value of `report` against the
/// same indicator's values in `reference`.
pub fn mpd_report(report: &EvaluationTable, reference: &EvaluationTable, params: MpdParams) -> Vec<DatasetMpd> {
    let pools: BTreeMap<Indicator, MpdPool> = Indicator::ALL
        .into_iter()
        .filter_map(|i| MpdPool::new(reference.values(i)).ok().map(|p| (i, p)))
        .collect();
    let mut grouped: BTreeMap<u64, DatasetMpd> = BTreeMap::new();
    for r in report.matched_rows() {
        let Some(x) = r.value else { continue };
        let result = pools
            .get(&r.indicator)
            .and_then(|p| p.search(x, params).ok())
            .map(|m| m.named(r.indicator.name()).with_original(r.original_date));
        grouped
            .entry(r.data_id)
            .or_insert_with(|| DatasetMpd {
                data_id: r.data_id,
                original_date: r.original_date,
                results: Vec::new(),
                overall: None,
            })
            .results
            .push((r.indicator, x, result));
    }
    grouped
        .into_values()
        .map(|mut d| {
            let found: Vec<MpdResult> = d.results.iter().filter_map(|r| r.2.clone()).collect();
            d.overall = overall_aggregate(&found).ok();
            d
        })
        .collect()
}

pub fn write_mpd_report<W: Write>(rows: &[DatasetMpd], header: &[String], mut sink: W) -> Result<()> {
    for line in header {
        writeln!(sink, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "data_id",
        "original_cal_date",
        "indicator",
        "input_value",
        "tolerance_used",
        "match_count",
        "under_min",
        "mpd",
        "range",
        "delta",
        "category",
    ])?;
    for d in rows {
        for (ind, x, res) in &d.results {
            let mut row = vec![d.data_id.to_string(), fmt_f64(d.original_date), ind.name().to_string(), fmt_f64(*x)];
            match res {
                Some(m) => row.extend([
                    fmt_f64(m.tolerance_used),
                    m.match_count.to_string(),
                    m.under_min.to_string(),
                    fmt_f64(m.mpd),
                    fmt_f64(m.range),
                    fmt_opt(m.delta),
                    m.delta.map(|v| classify_delta(v).to_string()).unwrap_or_default(),
                ]),
                None => row.extend(["".into(), "0".into(), "true".into(), "".into(), "".into(), "".into(), "no_match".into()]),
            }
            w.write_record(&row)?;
        }
        if let Some((mean, median)) = d.overall {
            for (name, v) in [("OverallMean", mean), ("OverallMedian", median)] {
                let delta = v - d.original_date;
                w.write_record([
                    d.data_id.to_string(),
                    fmt_f64(d.original_date),
                    name.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    fmt_f64(v),
                    String::new(),
                    fmt_f64(delta),
                    classify_delta(delta).to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calcurve::CalendarDate;
    use crate::reftable::{RefRecord, RefTableSpec};
    use crate::simulate::TestMember;

    fn row(id: u64, date: f64, ind: Indicator, delta: f64) -> EvalRow {
        EvalRow {
            data_id: id,
            original_date: date,
            indicator: ind,
            value: Some(date + delta),
            delta: Some(delta),
            category: Some(classify_delta(delta)),
        }
    }

    fn family_rows(id: u64, date: f64, deltas: [f64; 12]) -> Vec<EvalRow> {
        Indicator::ALL.iter().map(|&i| row(id, date, i, deltas[i.index()])).collect()
    }

    #[test]
    fn all_zero_deltas_succeed() {
        let eval = EvaluationTable::from_rows(family_rows(1, -100.0, [0.0; 12]));
        let p = performance_curves(&eval, 25.0).unwrap();
        assert_eq!(p[0].fractions, [1.0; 3]);
        assert!(performance_curves(&eval, 30.0).is_err());
    }

    #[test]
    fn half_of_two_datasets() {
        let mut rows = family_rows(1, -100.0, [5.0; 12]);
        rows.extend(family_rows(2, -100.0, [100.0; 12]));
        let eval = EvaluationTable::from_rows(rows);
        let p = performance_curves(&eval, 25.0).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].n_datasets, 2);
        assert_eq!(p[0].fractions[0], 0.5);
    }

    #[test]
    fn average_deviation_cancels() {
        let mut rows = family_rows(1, -100.0, [2.0; 12]);
        rows.extend(family_rows(2, -100.0, [-2.0; 12]));
        let a = average_deviation(&EvaluationTable::from_rows(rows));
        assert_eq!(a.per_date[0][0], Some(0.0));
        assert_eq!(a.overall_of(Indicator::MeanMedian), Some(0.0));
        assert_eq!(AverageDeviation::display(Some(-11.6)), "-12");
    }

    fn rec(id: u64, date: f64, age: i64) -> RefRecord {
        RefRecord {
            id,
            cal_date: CalendarDate(date),
            age,
            sd: 5.0,
            cal_mean: CalendarDate(date - 3.0),
            cal_median: CalendarDate(date - 2.0),
            cal_sigma: 20.0,
            hpd68: vec![],
            hpd95: vec![],
        }
    }

    #[test]
    fn degenerate_single_record_table() {
        let table = RefTable {
            label: "t".into(),
            curve_name: "c".into(),
            specs: vec![RefTableSpec::from_label("5_20_5", 0).unwrap()],
            records: vec![rec(1, -90.0, 2050)],
        };
        let member = |age| TestMember { sim_id: 1, age, sd: 20.0, cal: None };
        let ds = vec![
            TestDataset { data_id: 1, original_date: CalendarDate(-100.0), members: vec![member(2050); 3] },
            TestDataset { data_id: 2, original_date: CalendarDate(-100.0), members: vec![member(1), member(2)] },
        ];
        let eval = evaluate_test_series(&table, &ds);
        assert_eq!(eval.rows.len(), 24);
        let d1: Vec<&EvalRow> = eval.rows.iter().filter(|r| r.data_id == 1).collect();
        for r in &d1 {
            let want = match r.indicator.family() {
                Family::CalDate => 10.0,
                Family::Mean => 7.0,
                Family::Median => 8.0,
            };
            assert_eq!(r.delta, Some(want));
        }
        assert!(eval.rows.iter().filter(|r| r.data_id == 2).all(|r| r.value.is_none()));
        assert_eq!(eval.matched_datasets(), 1);
        for counts in eval.category_counts().values() {
            assert_eq!(counts.iter().sum::<usize>(), 1);
        }

        let mut buf = Vec::new();
        eval.write_long(&[], &mut buf).unwrap();
        let back = read_eval_long(buf.as_slice()).unwrap();
        assert_eq!(back.rows, eval.rows);
    }

    #[test]
    fn mpd_report_uses_same_indicator_pool() {
        let mut reference = Vec::new();
        for k in 0..5 {
            reference.extend(family_rows(10 + k, -100.0, [0.0; 12]));
        }
        let reference = EvaluationTable::from_rows(reference);
        let report = EvaluationTable::from_rows(family_rows(1, -103.0, [0.5; 12]));
        let out = mpd_report(&report, &reference, MpdParams::default());
        assert_eq!(out.len(), 1);
        let (_, x, res) = &out[0].results[0];
        assert_eq!(*x, -102.5);
        let m = res.as_ref().unwrap();
        assert_eq!(m.mpd, -100.0);
        assert_eq!(m.tolerance_used, 3.0);
        assert_eq!(m.delta, Some(3.0));
        assert_eq!(out[0].overall, Some((-100.0, -100.0)));
    }
}
