//! Simulated radiocarbon measurements for known calendar dates.
//!
//! A simulation draws an age around the curve at the given date, rounds it to a
//! whole year BP and calibrates it with the same error used for the draw.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::calcurve::{CalCurve, CalendarDate, Calibrator, HpdSegment, Measurement};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, substream};
use crate::table_io::{fmt_f64, fmt_opt, parse_opt_f64, CsvSource};

/// Calibrated summary attached to a simulated age.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalSummary {
    pub mean: CalendarDate,
    pub median: CalendarDate,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRecord {
    pub sim_id: u64,
    /// Calendar date the age was simulated for.
    pub base_date: CalendarDate,
    pub age: i64,
    pub sd: f64,
    pub cal_mean: CalendarDate,
    pub cal_median: CalendarDate,
    pub cal_sigma: f64,
    pub hpd68: Vec<HpdSegment>,
    pub hpd95: Vec<HpdSegment>,
}

impl SimRecord {
    pub fn measurement(&self) -> Measurement {
        Measurement::new(self.age, self.sd)
    }

    pub fn summary(&self) -> CalSummary {
        CalSummary {
            mean: self.cal_mean,
            median: self.cal_median,
            sigma: self.cal_sigma,
        }
    }
}

/// A curve plus its calibration grid, shared by all draws of a run.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    curve: &'a CalCurve,
    calibrator: Calibrator,
}

impl<'a> Simulator<'a> {
    pub fn new(curve: &'a CalCurve, grid_step: f64) -> Result<Self> {
        Ok(Simulator {
            curve,
            calibrator: Calibrator::new(curve, grid_step)?,
        })
    }

    pub fn curve(&self) -> &CalCurve {
        self.curve
    }

    pub fn calibrator(&self) -> &Calibrator {
        &self.calibrator
    }

    /// Draws one integer age for `date` and calibrates it.
    pub fn simulate<R: Rng + ?Sized>(
        &self,
        date: CalendarDate,
        sd: f64,
        rng: &mut R,
        sim_id: u64,
    ) -> Result<SimRecord> {
        if !(sd >= 0.0) {
            return Err(Error::InvalidArgument(format!("sd must be >= 0, got {sd}")));
        }
        let age = draw_age(self.curve, date, sd, rng)?;
        let cal = self.calibrator.calibrate(Measurement::new(age, sd))?;
        Ok(SimRecord {
            sim_id,
            base_date: date,
            age,
            sd,
            cal_mean: cal.mean,
            cal_median: cal.median,
            cal_sigma: cal.sigma,
            hpd68: cal.hpd68,
            hpd95: cal.hpd95,
        })
    }
}

/// Draws `round(N(mu(date), sqrt(sd^2 + sigma_curve(date)^2)))`, ties away from zero.
pub fn draw_age<R: Rng + ?Sized>(
    curve: &CalCurve,
    date: CalendarDate,
    sd: f64,
    rng: &mut R,
) -> Result<i64> {
    let (mu, sigma_curve) = curve.at(date)?;
    let spread = (sd * sd + sigma_curve * sigma_curve).sqrt();
    let normal = Normal::new(mu, spread)
        .map_err(|e| Error::InvalidArgument(format!("bad draw parameters: {e}")))?;
    Ok(normal.sample(rng).round() as i64)
}

/// One-off simulation on a fresh 1-year grid.
pub fn r_simulate<R: Rng + ?Sized>(
    curve: &CalCurve,
    date: CalendarDate,
    sd: f64,
    rng: &mut R,
) -> Result<SimRecord> {
    Simulator::new(curve, 1.0)?.simulate(date, sd, rng, 1)
}

/// One member of a test dataset. Calibrated fields are absent for imported rows
/// that did not carry them.
#[derive(Debug, Clone, PartialEq)]
pub struct TestMember {
    pub sim_id: u64,
    pub age: i64,
    pub sd: f64,
    pub cal: Option<CalSummary>,
}

/// A cluster of simulated measurements sharing one original calendar date.
#[derive(Debug, Clone, PartialEq)]
pub struct TestDataset {
    pub data_id: u64,
    pub original_date: CalendarDate,
    pub members: Vec<TestMember>,
}

impl TestDataset {
    pub fn measurements(&self) -> Vec<Measurement> {
        self.members
            .iter()
            .map(|m| Measurement::new(m.age, m.sd))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestSeriesParams {
    pub datasets_per_date: usize,
    pub group_size: usize,
    pub sd: f64,
    pub seed: u64,
}

impl Default for TestSeriesParams {
    fn default() -> Self {
        TestSeriesParams {
            datasets_per_date: 100,
            group_size: 3,
            sd: 20.0,
            seed: 0,
        }
    }
}

/// Generates `datasets_per_date` clusters of `group_size` simulations for each date.
///
/// Output is ordered by date then dataset index; `data_id` counts from 1 in that order.
/// Streams come from a base seed derived from `params.seed`, so a reference table
/// built with the same seed draws independent numbers.
pub fn generate_test_datasets(
    sim: &Simulator<'_>,
    dates: &[CalendarDate],
    params: TestSeriesParams,
) -> Result<Vec<TestDataset>> {
    if dates.is_empty() {
        return Err(Error::NoDates);
    }
    if params.datasets_per_date == 0 || params.group_size == 0 {
        return Err(Error::InvalidArgument(
            "datasets per date and group size must be at least 1".into(),
        ));
    }
    let per = params.datasets_per_date;
    let base = derive_seed(params.seed, "test-datasets");
    let jobs: Vec<(usize, usize)> = (0..dates.len())
        .flat_map(|d| (0..per).map(move |k| (d, k)))
        .collect();
    jobs.par_iter()
        .map(|&(d, k)| {
            let data_id = (d * per + k) as u64 + 1;
            let mut rng = substream(base, d as u32, k as u32);
            let members = (0..params.group_size)
                .map(|j| {
                    let sim_id = (data_id - 1) * params.group_size as u64 + j as u64 + 1;
                    let rec = sim.simulate(dates[d], params.sd, &mut rng, sim_id)?;
                    Ok(TestMember {
                        sim_id,
                        age: rec.age,
                        sd: rec.sd,
                        cal: Some(rec.summary()),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(TestDataset {
                data_id,
                original_date: dates[d],
                members,
            })
        })
        .collect()
}

/// `n` independent simulations per date, ordered by date then draw.
///
/// Date `d` draws from stream `(derive_seed(seed, "series"), d, 0)`; `sim_id` counts from 1.
pub fn simulate_series(
    sim: &Simulator<'_>,
    dates: &[CalendarDate],
    n: usize,
    sd: f64,
    seed: u64,
) -> Result<Vec<SimRecord>> {
    if dates.is_empty() {
        return Err(Error::NoDates);
    }
    let base = derive_seed(seed, "series");
    let per_date: Vec<Vec<SimRecord>> = dates
        .par_iter()
        .enumerate()
        .map(|(d, &date)| {
            let mut rng = substream(base, d as u32, 0);
            (0..n)
                .map(|j| sim.simulate(date, sd, &mut rng, (d * n + j) as u64 + 1))
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_date.into_iter().flatten().collect())
}

pub const SIM_COLUMNS: [&str; 7] = [
    "sim_id",
    "cal_date",
    "age_bp",
    "sd",
    "cal_mean",
    "cal_median",
    "cal_sigma",
];

/// Flat export, one row per simulation.
pub fn write_sim_records<W: Write>(records: &[SimRecord], header: &[String], mut sink: W) -> Result<()> {
    for line in header {
        writeln!(sink, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(SIM_COLUMNS)?;
    for r in records {
        w.write_record([
            r.sim_id.to_string(),
            fmt_f64(r.base_date.0),
            r.age.to_string(),
            fmt_f64(r.sd),
            fmt_f64(r.cal_mean.0),
            fmt_f64(r.cal_median.0),
            fmt_f64(r.cal_sigma),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads flat simulation rows. Only the date, age and sd columns are required;
/// common alternative column names are accepted.
pub fn read_simulated_rows<R: Read>(source: R) -> Result<Vec<SimulatedRow>> {
    let src = CsvSource::read(source)?;
    let need = |names: &[&str]| {
        src.find(names)
            .ok_or_else(|| Error::parse(1, format!("missing column '{}'", names[0])))
    };
    let c_date = need(&["cal_date", "original_cal_date", "date"])?;
    let c_age = need(&["age_bp", "age", "c14_age"])?;
    let c_sd = need(&["sd", "error"])?;
    let c_cal = (src.find(&["cal_mean"]), src.find(&["cal_median"]), src.find(&["cal_sigma"]));
    let mut rows = Vec::with_capacity(src.len());
    for (line, row) in src.rows() {
        let date: CalendarDate = src.parse(line, row, c_date)?;
        let age_raw: f64 = src.parse(line, row, c_age)?;
        if age_raw.fract() != 0.0 {
            return Err(Error::parse(line, format!("age {age_raw} is not a whole number")));
        }
        let cal = match c_cal {
            (Some(a), Some(b), Some(c)) => {
                let get = |i: usize| parse_opt_f64(line, row.get(i).unwrap_or(""));
                match (get(a)?, get(b)?, get(c)?) {
                    (Some(mean), Some(median), Some(sigma)) => Some(CalSummary {
                        mean: CalendarDate(mean),
                        median: CalendarDate(median),
                        sigma,
                    }),
                    _ => None,
                }
            }
            _ => None,
        };
        rows.push(SimulatedRow {
            cal_date: date,
            age: age_raw as i64,
            sd: src.parse(line, row, c_sd)?,
            cal,
        });
    }
    Ok(rows)
}

/// Dates `start, start + step, ...` up to and including `end`.
pub fn date_grid(start: f64, end: f64, step: f64) -> Result<Vec<CalendarDate>> {
    if !(step > 0.0) || end < start {
        return Err(Error::InvalidArgument(format!(
            "bad date range {start}:{end}:{step}"
        )));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n)
        .map(|i| CalendarDate(start + i as f64 * step))
        .collect())
}

/// A flat simulation row as exported by a batch of `R_Simulate` runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedRow {
    pub cal_date: CalendarDate,
    pub age: i64,
    pub sd: f64,
    pub cal: Option<CalSummary>,
}

/// Result of clustering flat rows into datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    pub datasets: Vec<TestDataset>,
    /// Rows left over at a date after forming full clusters.
    pub leftovers: Vec<SimulatedRow>,
}

/// Clusters rows sharing a calendar date into consecutive groups of `group_size`.
///
/// Dates are visited in ascending order and rows keep their input order within a date.
pub fn group_into_datasets(rows: &[SimulatedRow], group_size: usize) -> Result<Grouping> {
    if group_size == 0 {
        return Err(Error::InvalidArgument("group size must be at least 1".into()));
    }
    let mut by_date: BTreeMap<i64, Vec<&SimulatedRow>> = BTreeMap::new();
    for r in rows {
        by_date
            .entry(date_key(r.cal_date))
            .or_default()
            .push(r);
    }
    let mut datasets = Vec::new();
    let mut leftovers = Vec::new();
    let mut sim_id = 0;
    for group in by_date.values() {
        let full = group.len() / group_size * group_size;
        for chunk in group[..full].chunks(group_size) {
            let members = chunk
                .iter()
                .map(|r| {
                    sim_id += 1;
                    TestMember {
                        sim_id,
                        age: r.age,
                        sd: r.sd,
                        cal: r.cal,
                    }
                })
                .collect();
            datasets.push(TestDataset {
                data_id: datasets.len() as u64 + 1,
                original_date: chunk[0].cal_date,
                members,
            });
        }
        leftovers.extend(group[full..].iter().map(|r| (*r).clone()));
    }
    Ok(Grouping {
        datasets,
        leftovers,
    })
}

fn date_key(d: CalendarDate) -> i64 {
    (d.0 * 1000.0).round() as i64
}

pub const TESTS_COLUMNS: [&str; 7] = [
    "data_id",
    "original_cal_date",
    "age_bp",
    "sd",
    "cal_mean",
    "cal_median",
    "cal_sigma",
];

/// Writes datasets as one row per member.
pub fn write_tests<W: Write>(datasets: &[TestDataset], header: &[String], mut sink: W) -> Result<()> {
    for line in header {
        writeln!(sink, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(TESTS_COLUMNS)?;
    for ds in datasets {
        for m in &ds.members {
            w.write_record([
                ds.data_id.to_string(),
                fmt_f64(ds.original_date.0),
                m.age.to_string(),
                fmt_f64(m.sd),
                fmt_opt(m.cal.map(|c| c.mean.0)),
                fmt_opt(m.cal.map(|c| c.median.0)),
                fmt_opt(m.cal.map(|c| c.sigma)),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a tests file; rows with equal `data_id` form one dataset.
pub fn read_tests<R: Read>(source: R) -> Result<Vec<TestDataset>> {
    let src = CsvSource::read(source)?;
    let c_id = src.column("data_id")?;
    let c_date = src.column("original_cal_date")?;
    let c_age = src.column("age_bp")?;
    let c_sd = src.column("sd")?;
    let c_mean = src.find(&["cal_mean"]);
    let c_median = src.find(&["cal_median"]);
    let c_sigma = src.find(&["cal_sigma"]);

    let mut datasets: Vec<TestDataset> = Vec::new();
    let mut sim_id = 0;
    for (line, row) in src.rows() {
        let id: u64 = src.parse(line, row, c_id)?;
        let date: f64 = src.parse(line, row, c_date)?;
        let age: i64 = src.parse(line, row, c_age)?;
        let sd: f64 = src.parse(line, row, c_sd)?;
        let get = |c: Option<usize>| -> Result<Option<f64>> {
            match c {
                Some(c) => parse_opt_f64(line, row.get(c).unwrap_or("")),
                None => Ok(None),
            }
        };
        let cal = match (get(c_mean)?, get(c_median)?, get(c_sigma)?) {
            (Some(mean), Some(median), Some(sigma)) => Some(CalSummary {
                mean: CalendarDate(mean),
                median: CalendarDate(median),
                sigma,
            }),
            _ => None,
        };
        sim_id += 1;
        let member = TestMember { sim_id, age, sd, cal };
        match datasets.last_mut() {
            Some(ds) if ds.data_id == id => {
                if ds.original_date.0 != date {
                    return Err(Error::parse(line, format!("dataset {id} mixes original dates")));
                }
                ds.members.push(member);
            }
            _ => {
                if datasets.iter().any(|d| d.data_id == id) {
                    return Err(Error::parse(line, format!("dataset {id} is not contiguous")));
                }
                datasets.push(TestDataset {
                    data_id: id,
                    original_date: CalendarDate(date),
                    members: vec![member],
                });
            }
        }
    }
    Ok(datasets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calcurve::Knot;

    fn flat_tight() -> CalCurve {
        CalCurve::from_knots(
            "flat",
            vec![
                Knot { cal_bp: 1900.0, c14_age: 2000.0, error: 0.01 },
                Knot { cal_bp: 2400.0, c14_age: 2000.0, error: 0.01 },
            ],
        )
        .unwrap()
    }

    fn linear() -> CalCurve {
        CalCurve::from_knots(
            "linear",
            vec![
                Knot { cal_bp: 1500.0, c14_age: 1500.0, error: 0.01 },
                Knot { cal_bp: 2800.0, c14_age: 2800.0, error: 0.01 },
            ],
        )
        .unwrap()
    }

    #[test]
    fn zero_variance_limit() {
        let curve = flat_tight();
        let sim = Simulator::new(&curve, 1.0).unwrap();
        let mut rng = substream(3, 0, 0);
        for i in 0..50 {
            let r = sim.simulate(CalendarDate(-100.0), 0.0, &mut rng, i).unwrap();
            assert_eq!(r.age, 2000);
        }
    }

    #[test]
    fn draws_center_on_curve() {
        // sample mean of 10k draws of N(2150, ~20) within 3 standard errors (0.6)
        let curve = linear();
        let mut rng = substream(11, 0, 0);
        let n = 10_000;
        let sum: i64 = (0..n)
            .map(|_| draw_age(&curve, CalendarDate(-200.0), 20.0, &mut rng).unwrap())
            .sum();
        let mean = sum as f64 / n as f64;
        assert!((mean - 2150.0).abs() < 0.7, "{mean}");
    }

    #[test]
    fn same_stream_same_record() {
        let curve = CalCurve::intcal20();
        let a = r_simulate(&curve, CalendarDate(-200.0), 20.0, &mut substream(42, 0, 0)).unwrap();
        let b = r_simulate(&curve, CalendarDate(-200.0), 20.0, &mut substream(42, 0, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn out_of_domain_date_propagates() {
        let curve = linear();
        let err = r_simulate(&curve, CalendarDate(5000.0), 20.0, &mut substream(1, 0, 0));
        assert!(matches!(err, Err(Error::OutOfCurveRange { .. })));
    }

    #[test]
    fn single_dataset_unit_case() {
        let curve = linear();
        let sim = Simulator::new(&curve, 1.0).unwrap();
        let params = TestSeriesParams { datasets_per_date: 1, group_size: 3, sd: 20.0, seed: 5 };
        let ds = generate_test_datasets(&sim, &[CalendarDate(-100.0)], params).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds[0].members.len(), 3);
        assert_eq!(ds[0].data_id, 1);
        assert!(generate_test_datasets(&sim, &[], params).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let curve = linear();
        let sim = Simulator::new(&curve, 1.0).unwrap();
        let dates = date_grid(-300.0, -250.0, 5.0).unwrap();
        let p = TestSeriesParams { datasets_per_date: 4, group_size: 3, sd: 20.0, seed: 9 };
        let a = generate_test_datasets(&sim, &dates, p).unwrap();
        let b = generate_test_datasets(&sim, &dates, p).unwrap();
        assert_eq!(a, b);
        let c = generate_test_datasets(&sim, &dates, TestSeriesParams { seed: 10, ..p }).unwrap();
        let ages = |v: &[TestDataset]| {
            let mut a: Vec<i64> = v.iter().flat_map(|d| d.members.iter().map(|m| m.age)).collect();
            a.sort();
            a
        };
        assert_ne!(ages(&a), ages(&c));
        assert_eq!(a.len(), 44);
        let ids: Vec<u64> = a.iter().map(|d| d.data_id).collect();
        assert_eq!(ids, (1..=44).collect::<Vec<_>>());
    }

    #[test]
    fn date_grid_counts() {
        assert_eq!(date_grid(-300.0, 0.0, 5.0).unwrap().len(), 61);
        assert_eq!(date_grid(-300.0, 20.0, 5.0).unwrap().len(), 65);
        assert!(date_grid(0.0, -1.0, 5.0).is_err());
    }

    fn rows(date: f64, n: usize) -> Vec<SimulatedRow> {
        (0..n)
            .map(|i| SimulatedRow {
                cal_date: CalendarDate(date),
                age: 2000 + i as i64,
                sd: 20.0,
                cal: None,
            })
            .collect()
    }

    #[test]
    fn grouping_rule() {
        let g = group_into_datasets(&rows(-10.0, 6), 3).unwrap();
        assert_eq!(g.datasets.len(), 2);
        assert!(g.leftovers.is_empty());
        let g = group_into_datasets(&rows(-10.0, 7), 3).unwrap();
        assert_eq!(g.datasets.len(), 2);
        assert_eq!(g.leftovers.len(), 1);
        assert_eq!(g.leftovers[0].age, 2006);
        let mut all = Vec::new();
        for d in date_grid(-300.0, 0.0, 5.0).unwrap() {
            all.extend(rows(d.0, 300));
        }
        assert_eq!(group_into_datasets(&all, 3).unwrap().datasets.len(), 6100);
    }

    #[test]
    fn tests_csv_round_trip() {
        let curve = linear();
        let sim = Simulator::new(&curve, 1.0).unwrap();
        let dates = date_grid(-200.0, -190.0, 5.0).unwrap();
        let p = TestSeriesParams { datasets_per_date: 2, group_size: 3, sd: 20.0, seed: 1 };
        let ds = generate_test_datasets(&sim, &dates, p).unwrap();
        let mut buf = Vec::new();
        write_tests(&ds, &["seed=1".to_string()], &mut buf).unwrap();
        let back = read_tests(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn series_export_feeds_grouping() {
        let curve = linear();
        let sim = Simulator::new(&curve, 1.0).unwrap();
        let dates = [CalendarDate(-200.0), CalendarDate(-195.0)];
        let recs = simulate_series(&sim, &dates, 7, 20.0, 5).unwrap();
        assert_eq!(recs.len(), 14);
        assert_eq!(recs, simulate_series(&sim, &dates, 7, 20.0, 5).unwrap());
        let mut buf = Vec::new();
        write_sim_records(&recs, &["x=1".into()], &mut buf).unwrap();
        let rows = read_simulated_rows(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), 14);
        assert_eq!(rows[3].age, recs[3].age);
        assert!(rows[3].cal.is_some());
        let g = group_into_datasets(&rows, 3).unwrap();
        assert_eq!((g.datasets.len(), g.leftovers.len()), (4, 2));
        assert!(read_simulated_rows("date,age,sd\n-200,2150.5,20\n".as_bytes()).is_err());
        assert_eq!(read_simulated_rows("date,age,sd\n200BC,2150,20\n".as_bytes()).unwrap()[0].cal_date, CalendarDate(-200.0));
    }
}
