use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use super::{Command, CurveCmd, DateRange, LookupCmd, RunConfig, SimulateCmd};
use super::{EvaluateArgs, FinedateArgs, HistArgs, RefGenArgs, ScatterArgs};
use crate::calcurve::{CalCurve, CalendarDate, Calibrator, Measurement};
use crate::error::{Error, Result};
use crate::evaluate::{
    average_deviation, delta_fractions, evaluate_test_series, histogram, mpd_report,
    normality_by_interval, performance_curves, read_eval_long, write_mpd_report, write_normality,
    write_performance, DeltaCategory, MpdParams, PERFORMANCE_THRESHOLDS,
};
use crate::finedate::{compute_indicators, match_measurements, write_report, Indicator};
use crate::lookup::{build_lookup, query_lookup, LookupTable};
use crate::reftable::{
    buffer_warnings, build_combo_table, build_reference_table, read_table, write_table,
    RefTableSpec, WriteOptions,
};
use crate::simulate::{
    date_grid, generate_test_datasets, group_into_datasets, read_simulated_rows, read_tests,
    simulate_series, write_sim_records, write_tests, Grouping, Simulator, TestSeriesParams,
};
use crate::table_io::{fmt_f64, CsvSource};

/// `println!` that reports a closed stdout as an error instead of panicking.
macro_rules! out {
    ($($arg:tt)*) => {
        writeln!(io::stdout().lock(), $($arg)*)?
    };
}

pub(super) fn dispatch(cmd: &Command, cfg: &RunConfig) -> Result<()> {
    match cmd {
        Command::Curve(c) => curve(c, cfg),
        Command::RefGen(a) => ref_gen(a, cfg),
        Command::Simulate(c) => simulate(c, cfg),
        Command::Finedate(a) => finedate(a, cfg),
        Command::Evaluate(a) => evaluate(a, cfg),
        Command::Lookup(c) => lookup(c, cfg),
        Command::Hist(a) => hist(a, cfg),
        Command::Scatter(a) => scatter(a, cfg),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn parent(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn curve(cmd: &CurveCmd, cfg: &RunConfig) -> Result<()> {
    match cmd {
        CurveCmd::Info { file, at } => {
            let curve = match file {
                Some(p) => CalCurve::from_path(p)?,
                None => cfg.load_curve()?,
            };
            let (lo, hi) = curve.domain();
            let knots = curve.knots();
            let mut out = io::stdout().lock();
            writeln!(out, "name={}", curve.name())?;
            writeln!(out, "knots={}", knots.len())?;
            writeln!(out, "domain={}:{}", fmt_f64(lo.0), fmt_f64(hi.0))?;
            writeln!(
                out,
                "cal_bp_range={}:{}",
                fmt_f64(knots[0].cal_bp),
                fmt_f64(knots[knots.len() - 1].cal_bp)
            )?;
            if !at.is_empty() {
                writeln!(out, "date,c14_age,error")?;
                for &d in at {
                    let (m, s) = curve.at(d)?;
                    writeln!(out, "{},{},{}", fmt_f64(d.0), fmt_f64(m), fmt_f64(s))?;
                }
            }
            Ok(())
        }
        CurveCmd::Calibrate { age, sd, out } => {
            let curve = cfg.load_curve()?;
            let r = Calibrator::new(&curve, cfg.grid_step)?.calibrate(Measurement::new(*age, *sd))?;
            let hpd = |segs: &[crate::calcurve::HpdSegment]| {
                segs.iter()
                    .map(|s| format!("{}:{}:{}", fmt_f64(s.start), fmt_f64(s.end), fmt_f64(s.probability)))
                    .collect::<Vec<_>>()
                    .join(";")
            };
            let summary = [
                format!("age={age}"),
                format!("sd={}", fmt_f64(*sd)),
                format!("mean={}", fmt_f64(r.mean.0)),
                format!("median={}", fmt_f64(r.median.0)),
                format!("sigma={}", fmt_f64(r.sigma)),
                format!("hpd68={}", hpd(&r.hpd68)),
                format!("hpd95={}", hpd(&r.hpd95)),
            ];
            for line in &summary {
                out!("{line}");
            }
            if let Some(path) = out {
                let mut w = create(path)?;
                for line in cfg.provenance(Some(curve.name())).iter().chain(&summary) {
                    writeln!(w, "# {line}")?;
                }
                writeln!(w, "cal_date,probability")?;
                for (t, p) in r.grid.iter().zip(&r.pdf) {
                    writeln!(w, "{},{}", fmt_f64(*t), fmt_f64(*p))?;
                }
                w.flush()?;
                cfg.write_manifest(parent(path), Some(curve.name()), &[path.clone()])?;
            }
            Ok(())
        }
    }
}

fn ref_specs(a: &RefGenArgs, seed: u64) -> Result<Vec<RefTableSpec>> {
    let combo = a.label.as_deref().is_some_and(|l| l.eq_ignore_ascii_case("combo"));
    let mut specs = if combo {
        if a.step.is_some() || a.per_slice.is_some() || a.sd.is_some() {
            return Err(Error::InvalidArgument(
                "Combo takes only --span; its components are fixed".into(),
            ));
        }
        RefTableSpec::combo_components(seed)
    } else {
        let mut spec = match (&a.label, a.step, a.per_slice, a.sd) {
            (Some(l), ..) => RefTableSpec::from_label(l, seed)?,
            (None, Some(step), Some(per), Some(sd)) => RefTableSpec::from_label(
                &format!("{}_{}_{}", fmt_f64(step), per, fmt_f64(sd)),
                seed,
            )?,
            _ => {
                return Err(Error::InvalidArgument(
                    "give --label or all of --step, --per-slice and --sd".into(),
                ))
            }
        };
        if let Some(step) = a.step {
            spec.year_interval = step;
        }
        if let Some(per) = a.per_slice {
            spec.per_slice = per;
        }
        if let Some(sd) = a.sd {
            spec.sd = sd;
        }
        vec![spec]
    };
    if let Some(span) = a.span {
        for s in &mut specs {
            s.span = (span.0, span.1);
        }
    }
    for s in &specs {
        s.slice_count()?;
    }
    Ok(specs)
}

fn ref_gen(a: &RefGenArgs, cfg: &RunConfig) -> Result<()> {
    let curve = cfg.load_curve()?;
    let specs = ref_specs(a, cfg.seed)?;
    if let Some(analysis) = a.analysis {
        for s in &specs {
            for w in buffer_warnings(&curve, s, (analysis.0 .0, analysis.1 .0)) {
                eprintln!("warning: {w}");
            }
        }
    }
    let sim = Simulator::new(&curve, cfg.grid_step)?;
    let table = if specs.len() == 1 && !a.label.as_deref().is_some_and(|l| l.eq_ignore_ascii_case("combo")) {
        build_reference_table(&sim, &specs[0])?
    } else {
        build_combo_table(&sim, &specs)?
    };
    let extra = cfg.provenance(None)[..2].to_vec();
    let mut w = create(&a.out)?;
    write_table(&table, &mut w, WriteOptions { with_hpd: a.with_hpd }, &extra)?;
    w.flush()?;
    cfg.write_manifest(parent(&a.out), Some(curve.name()), &[a.out.clone()])?;
    out!("records={}", table.len());
    Ok(())
}

fn dates_of(r: &DateRange) -> Result<Vec<CalendarDate>> {
    date_grid(r.start, r.end, r.step)
}

/// Clusters flat simulation rows (date, age, sd) into a tests file.
///
/// Leftover rows at a date are excluded and listed as `# leftover=` lines.
pub fn convert_rsim_to_tests<R: Read, W: Write>(
    source: R,
    group_size: usize,
    header: &[String],
    mut sink: W,
) -> Result<Grouping> {
    let rows = read_simulated_rows(source)?;
    let grouping = group_into_datasets(&rows, group_size)?;
    let mut lines = header.to_vec();
    lines.push(format!("group_size={group_size}"));
    for r in &grouping.leftovers {
        lines.push(format!("leftover={}:{}:{}", fmt_f64(r.cal_date.0), r.age, fmt_f64(r.sd)));
    }
    write_tests(&grouping.datasets, &lines, &mut sink)?;
    sink.flush()?;
    Ok(grouping)
}

fn simulate(cmd: &SimulateCmd, cfg: &RunConfig) -> Result<()> {
    match cmd {
        SimulateCmd::Tests { dates, per_date, group, sd, out } => {
            let curve = cfg.load_curve()?;
            let sim = Simulator::new(&curve, cfg.grid_step)?;
            let params = TestSeriesParams {
                datasets_per_date: *per_date,
                group_size: *group,
                sd: *sd,
                seed: cfg.seed,
            };
            let ds = generate_test_datasets(&sim, &dates_of(dates)?, params)?;
            let mut header = cfg.provenance(Some(curve.name()));
            header.push(format!(
                "dates={}:{}:{} per_date={per_date} group={group} sd={}",
                fmt_f64(dates.start),
                fmt_f64(dates.end),
                fmt_f64(dates.step),
                fmt_f64(*sd)
            ));
            let mut w = create(out)?;
            write_tests(&ds, &header, &mut w)?;
            w.flush()?;
            cfg.write_manifest(parent(out), Some(curve.name()), &[out.clone()])?;
            out!("datasets={}", ds.len());
        }
        SimulateCmd::Draws { dates, n, sd, out } => {
            let curve = cfg.load_curve()?;
            let sim = Simulator::new(&curve, cfg.grid_step)?;
            let recs = simulate_series(&sim, &dates_of(dates)?, *n, *sd, cfg.seed)?;
            let mut w = create(out)?;
            write_sim_records(&recs, &cfg.provenance(Some(curve.name())), &mut w)?;
            w.flush()?;
            cfg.write_manifest(parent(out), Some(curve.name()), &[out.clone()])?;
            out!("simulations={}", recs.len());
        }
        SimulateCmd::Convert { input, group, out } => {
            let mut w = create(out)?;
            let g = convert_rsim_to_tests(open(input)?, *group, &cfg.provenance(None), &mut w)?;
            cfg.write_manifest(parent(out), None, &[out.clone()])?;
            if !g.leftovers.is_empty() {
                eprintln!("warning: {} leftover rows excluded", g.leftovers.len());
            }
            out!("datasets={}", g.datasets.len());
        }
    }
    Ok(())
}

fn read_measurements(a: &FinedateArgs) -> Result<Vec<Measurement>> {
    if let Some(path) = &a.ages_file {
        let src = CsvSource::read(open(path)?)?;
        let c_age = src
            .find(&["age_bp", "age"])
            .ok_or_else(|| Error::parse(1, "missing column 'age_bp'"))?;
        let c_sd = src.find(&["sd", "error"]);
        return src
            .rows()
            .map(|(line, row)| {
                let sd = match c_sd {
                    Some(c) => src.parse(line, row, c)?,
                    None => a.sd,
                };
                Ok(Measurement::new(src.parse(line, row, c_age)?, sd))
            })
            .collect();
    }
    if a.ages.is_empty() {
        return Err(Error::InvalidArgument("give --ages or --ages-file".into()));
    }
    Ok(a.ages.iter().map(|&age| Measurement::new(age, a.sd)).collect())
}

fn finedate(a: &FinedateArgs, cfg: &RunConfig) -> Result<()> {
    let mut table = read_table(open(&a.reference)?)?;
    if let Some(span) = a.span {
        table = table.restricted(span.0 .0, span.1 .0);
    }
    let meas = read_measurements(a)?;
    let matches = match_measurements(&table, &meas)?;
    let ind = compute_indicators(&matches)?;
    let mut header = cfg.provenance(Some(&table.curve_name));
    header.push(format!("reference={}", table.label));
    let (ov, su) = write_report(&matches, &ind, &a.out, &header)?;
    cfg.write_manifest(parent(&a.out), Some(&table.curve_name), &[ov, su])?;
    if !matches.unmatched.is_empty() {
        let ages: Vec<String> = matches.unmatched.iter().map(i64::to_string).collect();
        eprintln!("warning: no reference records for ages {}", ages.join(","));
    }
    out!("matches={}", matches.total());
    for (i, v) in ind.iter() {
        out!("{}={}", i.name(), fmt_f64(v));
    }
    Ok(())
}

fn evaluate(a: &EvaluateArgs, cfg: &RunConfig) -> Result<()> {
    let table = read_table(open(&a.reference)?)?;
    let tests = read_tests(open(&a.tests)?)?;
    let eval = evaluate_test_series(&table, &tests);
    let mut header = cfg.provenance(Some(&table.curve_name));
    header.push(format!("reference={}", table.label));
    fs::create_dir_all(&a.out)?;
    let mut outputs = Vec::new();
    let mut emit = |name: &str, f: &dyn Fn(&mut BufWriter<File>) -> Result<()>| -> Result<()> {
        let path = a.out.join(name);
        let mut w = create(&path)?;
        f(&mut w)?;
        w.flush()?;
        outputs.push(path);
        Ok(())
    };

    emit("eval_long.csv", &|w| eval.write_long(&header, w))?;
    for t in PERFORMANCE_THRESHOLDS {
        let points = performance_curves(&eval, t)?;
        let mut h = header.clone();
        h.push(format!("threshold={t}"));
        emit(&format!("performance_{t}.csv"), &|w| write_performance(&points, &h, w))?;
    }
    let avg = average_deviation(&eval);
    emit("avg_deviation.csv", &|w| avg.write_csv(&header, w))?;
    let norm = normality_by_interval(&eval);
    emit("normality_by_interval.csv", &|w| write_normality(&norm, &header, w))?;
    let counts = eval.category_counts();
    emit("delta_categories.csv", &|w| {
        let mut w = csv::Writer::from_writer(w);
        let mut cols = vec!["indicator".to_string()];
        cols.extend(DeltaCategory::ALL.iter().map(|c| c.name().to_string()));
        w.write_record(&cols)?;
        for (ind, c) in &counts {
            let mut row = vec![ind.name().to_string()];
            row.extend(c.iter().map(usize::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    })?;

    let pool = match &a.mpd_pool {
        Some(p) => read_eval_long(open(p)?)?,
        None => eval.clone(),
    };
    let params = MpdParams {
        t0: a.t0,
        dt: a.dt,
        t_max: a.t_max,
        m_min: a.m_min,
    };
    let mpd = mpd_report(&eval, &pool, params);
    emit("mpd_report.csv", &|w| write_mpd_report(&mpd, &header, w))?;
    cfg.write_manifest(&a.out, Some(&table.curve_name), &outputs)?;

    let (f25, f35) = delta_fractions(&eval);
    out!("datasets={}", tests.len());
    out!("matched_datasets={}", eval.matched_datasets());
    out!("within_25={}", fmt_f64(f25));
    out!("within_35={}", fmt_f64(f35));
    Ok(())
}

fn lookup(cmd: &LookupCmd, cfg: &RunConfig) -> Result<()> {
    match cmd {
        LookupCmd::Build { eval, width, out } => {
            let table = build_lookup(&read_eval_long(open(eval)?)?, *width)?;
            let mut w = create(out)?;
            table.write_csv(&cfg.provenance(None), &mut w)?;
            w.flush()?;
            cfg.write_manifest(parent(out), None, &[out.clone()])?;
            out!("buckets={}", table.buckets.len());
        }
        LookupCmd::Query { table, indicator, value } => {
            let t = LookupTable::read_csv(open(table)?)?;
            let hit = query_lookup(&t, indicator, *value)?;
            let pct = |f: Option<f64>| f.map(|v| format!("{v:.2}")).unwrap_or_default();
            out!("bucket_left,total_count,frac12,frac25");
            out!(
                "{},{},{},{}",
                fmt_f64(hit.bucket_left),
                hit.total_count,
                pct(hit.frac12),
                pct(hit.frac25)
            );
        }
    }
    Ok(())
}

/// Values of `name` keyed by dataset (evaluation tables) or row number (anything else).
fn series(src: &CsvSource, name: &str) -> Result<Vec<(u64, f64)>> {
    let eval_cols = (src.find(&["data_id"]), src.find(&["indicator"]));
    if let (Some(c_id), Some(c_ind)) = eval_cols {
        let (ind_name, field) = match name.strip_suffix("_delta") {
            Some(base) => (base, "delta"),
            None => (name, "value"),
        };
        if let Ok(ind) = ind_name.parse::<Indicator>() {
            let c_val = src.column(field)?;
            let mut out = Vec::new();
            for (line, row) in src.rows() {
                if row.get(c_ind).and_then(|s| s.parse::<Indicator>().ok()) != Some(ind) {
                    continue;
                }
                if let Some(v) = crate::table_io::parse_opt_f64(line, row.get(c_val).unwrap_or(""))? {
                    out.push((src.parse(line, row, c_id)?, v));
                }
            }
            return Ok(out);
        }
        let c = src.column(name)?;
        let mut out: Vec<(u64, f64)> = Vec::new();
        for (line, row) in src.rows() {
            let id: u64 = src.parse(line, row, c_id)?;
            if out.last().is_some_and(|l| l.0 == id) {
                continue;
            }
            if let Some(v) = crate::table_io::parse_opt_f64(line, row.get(c).unwrap_or(""))? {
                out.push((id, v));
            }
        }
        return Ok(out);
    }
    let c = src.column(name)?;
    let mut out = Vec::new();
    for (k, (line, row)) in src.rows().enumerate() {
        if let Some(v) = crate::table_io::parse_opt_f64(line, row.get(c).unwrap_or(""))? {
            out.push((k as u64 + 1, v));
        }
    }
    Ok(out)
}

fn hist(a: &HistArgs, cfg: &RunConfig) -> Result<()> {
    let src = CsvSource::read(open(&a.input)?)?;
    let values: Vec<f64> = series(&src, &a.col)?.into_iter().map(|(_, v)| v).collect();
    let h = histogram(&values, a.bins)?;
    let mut header = cfg.provenance(None);
    header.push(format!("column={} n={} bins={}", a.col, values.len(), h.counts.len()));
    let mut w = create(&a.out)?;
    h.write_csv(&header, &mut w)?;
    w.flush()?;
    cfg.write_manifest(parent(&a.out), None, &[a.out.clone()])?;
    out!("n={} bins={}", values.len(), h.counts.len());
    Ok(())
}

fn scatter(a: &ScatterArgs, cfg: &RunConfig) -> Result<()> {
    let src = CsvSource::read(open(&a.input)?)?;
    let xs = series(&src, &a.x)?;
    let ys: std::collections::BTreeMap<u64, f64> = series(&src, &a.y)?.into_iter().collect();
    let mut w = create(&a.out)?;
    for line in cfg.provenance(None) {
        writeln!(w, "# {line}")?;
    }
    let mut csvw = csv::Writer::from_writer(&mut w);
    csvw.write_record(["id", a.x.as_str(), a.y.as_str()])?;
    let mut n = 0;
    for (id, x) in xs {
        if let Some(y) = ys.get(&id) {
            csvw.write_record([id.to_string(), fmt_f64(x), fmt_f64(*y)])?;
            n += 1;
        }
    }
    csvw.flush()?;
    drop(csvw);
    w.flush()?;
    cfg.write_manifest(parent(&a.out), None, &[a.out.clone()])?;
    out!("points={n}");
    Ok(())
}
