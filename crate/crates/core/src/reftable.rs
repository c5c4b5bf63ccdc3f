//! Reference tables: repeated simulations on a uniform calendar grid.

use std::fmt;
use std::io::{Read, Write};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::calcurve::{CalCurve, CalendarDate, HpdSegment};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, substream};
use crate::simulate::{SimRecord, Simulator};
use crate::table_io::{fmt_f64, CsvSource};

/// Parameters of one reference table variant.
#[derive(Debug, Clone, PartialEq)]
pub struct RefTableSpec {
    pub label: String,
    /// Grid step in years.
    pub year_interval: f64,
    pub per_slice: usize,
    pub sd: f64,
    /// Oldest and youngest grid date, inclusive.
    pub span: (CalendarDate, CalendarDate),
    pub seed: u64,
}

/// Variant labels on the 5-year grid that make up the combined table.
pub const COMBO_COMPONENTS: [&str; 6] = ["5_20_5", "5_50_5", "5_50_20", "5_80_5", "5_100_0", "5_100_5"];

/// Every named variant, including the 1-year grid and the discarded 5_10_20.
pub const TABLE1_VARIANTS: [&str; 8] = [
    "1_50_5", "5_10_20", "5_20_5", "5_50_5", "5_50_20", "5_80_5", "5_100_0", "5_100_5",
];

impl RefTableSpec {
    /// Spec from a `<step>_<per_slice>_<sd>` label. The 1-year grid covers 200 BC to
    /// 1 BC; every other step covers 300 BC to AD 20.
    pub fn from_label(label: &str, seed: u64) -> Result<Self> {
        let parts: Vec<&str> = label.split('_').collect();
        let bad = || Error::InvalidArgument(format!("bad table label '{label}', expected step_perslice_sd"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let step: f64 = parts[0].parse().map_err(|_| bad())?;
        let per_slice: usize = parts[1].parse().map_err(|_| bad())?;
        let sd: f64 = parts[2].parse().map_err(|_| bad())?;
        let span = if step == 1.0 {
            (CalendarDate(-200.0), CalendarDate(-1.0))
        } else {
            (CalendarDate(-300.0), CalendarDate(20.0))
        };
        let spec = RefTableSpec {
            label: label.to_string(),
            year_interval: step,
            per_slice,
            sd,
            span,
            seed,
        };
        spec.slice_count()?;
        Ok(spec)
    }

    /// The six combo components, each seeded from `base_seed` and its label.
    pub fn combo_components(base_seed: u64) -> Vec<RefTableSpec> {
        COMBO_COMPONENTS
            .iter()
            .map(|l| RefTableSpec::from_label(l, derive_seed(base_seed, l)).expect("valid label"))
            .collect()
    }

    pub fn slice_count(&self) -> Result<usize> {
        let (old, young) = self.span;
        if !(self.year_interval >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "year interval must be >= 1, got {}",
                self.year_interval
            )));
        }
        if !(old.0 < young.0) {
            return Err(Error::InvalidArgument(format!(
                "span must run old to young, got {}:{}",
                old, young
            )));
        }
        let slices = (young.0 - old.0) / self.year_interval;
        if (slices - slices.round()).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "span {}:{} is not a multiple of {}",
                old, young, self.year_interval
            )));
        }
        Ok(slices.round() as usize + 1)
    }

    pub fn grid(&self) -> Result<Vec<CalendarDate>> {
        let n = self.slice_count()?;
        Ok((0..n)
            .map(|i| CalendarDate(self.span.0 .0 + i as f64 * self.year_interval))
            .collect())
    }

    pub fn record_count(&self) -> Result<usize> {
        Ok(self.slice_count()? * self.per_slice)
    }

    fn encode(&self) -> String {
        format!(
            "{};step={};per_slice={};sd={};span={}:{};seed={}",
            self.label,
            fmt_f64(self.year_interval),
            self.per_slice,
            fmt_f64(self.sd),
            fmt_f64(self.span.0 .0),
            fmt_f64(self.span.1 .0),
            self.seed
        )
    }

    fn decode(s: &str) -> Result<Self> {
        let corrupt = || Error::CorruptTable(format!("bad component line '{s}'"));
        let mut parts = s.split(';');
        let label = parts.next().ok_or_else(corrupt)?.to_string();
        let mut spec = RefTableSpec {
            label,
            year_interval: 0.0,
            per_slice: 0,
            sd: 0.0,
            span: (CalendarDate(0.0), CalendarDate(0.0)),
            seed: 0,
        };
        for p in parts {
            let (k, v) = p.split_once('=').ok_or_else(corrupt)?;
            match k {
                "step" => spec.year_interval = v.parse().map_err(|_| corrupt())?,
                "per_slice" => spec.per_slice = v.parse().map_err(|_| corrupt())?,
                "sd" => spec.sd = v.parse().map_err(|_| corrupt())?,
                "seed" => spec.seed = v.parse().map_err(|_| corrupt())?,
                "span" => {
                    let (a, b) = v.split_once(':').ok_or_else(corrupt)?;
                    spec.span = (
                        CalendarDate(a.parse().map_err(|_| corrupt())?),
                        CalendarDate(b.parse().map_err(|_| corrupt())?),
                    );
                }
                _ => return Err(corrupt()),
            }
        }
        Ok(spec)
    }
}

impl fmt::Display for RefTableSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefRecord {
    pub id: u64,
    pub cal_date: CalendarDate,
    pub age: i64,
    pub sd: f64,
    pub cal_mean: CalendarDate,
    pub cal_median: CalendarDate,
    pub cal_sigma: f64,
    pub hpd68: Vec<HpdSegment>,
    pub hpd95: Vec<HpdSegment>,
}

impl RefRecord {
    fn from_sim(id: u64, s: SimRecord) -> Self {
        RefRecord {
            id,
            cal_date: s.base_date,
            age: s.age,
            sd: s.sd,
            cal_mean: s.cal_mean,
            cal_median: s.cal_median,
            cal_sigma: s.cal_sigma,
            hpd68: s.hpd68,
            hpd95: s.hpd95,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefTable {
    pub label: String,
    pub curve_name: String,
    /// One spec for a plain table, several for a combined one.
    pub specs: Vec<RefTableSpec>,
    pub records: Vec<RefRecord>,
}

impl RefTable {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Common span of the component specs.
    pub fn span(&self) -> (CalendarDate, CalendarDate) {
        self.specs[0].span
    }

    /// Drops records whose grid date falls outside `[oldest, youngest]`.
    pub fn restricted(&self, oldest: f64, youngest: f64) -> RefTable {
        let mut t = self.clone();
        t.records.retain(|r| r.cal_date.0 >= oldest && r.cal_date.0 <= youngest);
        t
    }
}

fn check_span(curve: &CalCurve, spec: &RefTableSpec) -> Result<()> {
    for d in [spec.span.0, spec.span.1] {
        if !curve.contains(d) {
            let (lo, hi) = curve.domain();
            return Err(Error::OutOfCurveRange {
                date: d.0,
                min: lo.0,
                max: hi.0,
            });
        }
    }
    Ok(())
}

/// Runs `per_slice` simulations at every grid date of `spec`.
///
/// Slice `i` draws from substream `(seed, i)`, so the table does not depend on
/// thread count.
pub fn build_reference_table(sim: &Simulator<'_>, spec: &RefTableSpec) -> Result<RefTable> {
    if spec.per_slice == 0 {
        return Err(Error::EmptySpec);
    }
    let grid = spec.grid()?;
    check_span(sim.curve(), spec)?;
    let per = spec.per_slice;
    let slices: Vec<Vec<SimRecord>> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &date)| {
            let mut rng = substream(spec.seed, i as u32, 0);
            (0..per)
                .map(|j| sim.simulate(date, spec.sd, &mut rng, (i * per + j) as u64 + 1))
                .collect()
        })
        .collect::<Result<_>>()?;
    let records = slices
        .into_iter()
        .flatten()
        .enumerate()
        .map(|(k, s)| RefRecord::from_sim(k as u64 + 1, s))
        .collect();
    Ok(RefTable {
        label: spec.label.clone(),
        curve_name: sim.curve().name().to_string(),
        specs: vec![spec.clone()],
        records,
    })
}

/// Concatenates component tables sharing one grid, renumbering ids from 1.
pub fn build_combo_table(sim: &Simulator<'_>, specs: &[RefTableSpec]) -> Result<RefTable> {
    let first = specs.first().ok_or(Error::EmptySpec)?;
    for s in &specs[1..] {
        if s.span != first.span || s.year_interval != first.year_interval {
            return Err(Error::IncompatibleSpecs(format!(
                "{} and {} differ in span or step",
                first.label, s.label
            )));
        }
    }
    if specs.len() == 1 {
        return build_reference_table(sim, first);
    }
    let mut records = Vec::new();
    for s in specs {
        records.extend(build_reference_table(sim, s)?.records);
    }
    for (k, r) in records.iter_mut().enumerate() {
        r.id = k as u64 + 1;
    }
    Ok(RefTable {
        label: "Combo".to_string(),
        curve_name: sim.curve().name().to_string(),
        specs: specs.to_vec(),
        records,
    })
}

/// Warnings when the table's grid ends closer to the analysed range than three
/// times the combined spread at that edge.
pub fn buffer_warnings(curve: &CalCurve, spec: &RefTableSpec, analysis: (f64, f64)) -> Vec<String> {
    let (old, young) = spec.span;
    let sigma = curve.max_error_between(old, young);
    let need = 3.0 * (spec.sd + sigma);
    let mut out = Vec::new();
    let young_margin = young.0 - analysis.1;
    if young_margin < need {
        out.push(format!(
            "young buffer of {} years below {} (3 x (sd {} + curve error {}))",
            fmt_f64(young_margin),
            fmt_f64(need),
            fmt_f64(spec.sd),
            fmt_f64(sigma)
        ));
    }
    let old_margin = analysis.0 - old.0;
    if old_margin < need {
        out.push(format!(
            "old buffer of {} years below {} (3 x (sd {} + curve error {}))",
            fmt_f64(old_margin),
            fmt_f64(need),
            fmt_f64(spec.sd),
            fmt_f64(sigma)
        ));
    }
    out
}

pub const TABLE_COLUMNS: [&str; 7] = [
    "id",
    "cal_date",
    "age_bp",
    "sd",
    "cal_mean",
    "cal_median",
    "cal_sigma",
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WriteOptions {
    /// Append `hpd68` / `hpd95` columns as `start:end:prob;...`.
    pub with_hpd: bool,
}

fn encode_hpd(segs: &[HpdSegment]) -> String {
    segs.iter()
        .map(|s| format!("{}:{}:{}", fmt_f64(s.start), fmt_f64(s.end), fmt_f64(s.probability)))
        .collect::<Vec<_>>()
        .join(";")
}

fn decode_hpd(line: usize, s: &str) -> Result<Vec<HpdSegment>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|seg| {
            let v: Vec<f64> = seg
                .split(':')
                .map(|x| x.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(line, format!("bad hpd segment '{seg}'")))?;
            match v.as_slice() {
                &[start, end, probability] => Ok(HpdSegment { start, end, probability }),
                _ => Err(Error::parse(line, format!("bad hpd segment '{seg}'"))),
            }
        })
        .collect()
}

fn body_bytes(table: &RefTable, opts: WriteOptions) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = TABLE_COLUMNS.to_vec();
    if opts.with_hpd {
        header.extend(["hpd68", "hpd95"]);
    }
    w.write_record(&header)?;
    for r in &table.records {
        let mut row = vec![
            r.id.to_string(),
            fmt_f64(r.cal_date.0),
            r.age.to_string(),
            fmt_f64(r.sd),
            fmt_f64(r.cal_mean.0),
            fmt_f64(r.cal_median.0),
            fmt_f64(r.cal_sigma),
        ];
        if opts.with_hpd {
            row.push(encode_hpd(&r.hpd68));
            row.push(encode_hpd(&r.hpd95));
        }
        w.write_record(&row)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn checksum(body: &[u8]) -> String {
    let digest = Sha256::digest(body);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes the table with its provenance preamble and a checksum over the data block.
pub fn write_table<W: Write>(
    table: &RefTable,
    mut sink: W,
    opts: WriteOptions,
    extra_header: &[String],
) -> Result<()> {
    let body = body_bytes(table, opts)?;
    let seeds: Vec<String> = table.specs.iter().map(|s| s.seed.to_string()).collect();
    writeln!(sink, "# c14fine reference table")?;
    writeln!(sink, "# label={}", table.label)?;
    writeln!(sink, "# seed={}", seeds.join(","))?;
    writeln!(sink, "# curve={}", table.curve_name)?;
    for s in &table.specs {
        writeln!(sink, "# component={s}")?;
    }
    for line in extra_header {
        writeln!(sink, "# {line}")?;
    }
    writeln!(sink, "# records={}", table.records.len())?;
    writeln!(sink, "# checksum=sha256:{}", checksum(&body))?;
    sink.write_all(&body)?;
    sink.flush()?;
    Ok(())
}

/// Reads a table written by [`write_table`], validating shape, grid and checksum.
pub fn read_table<R: Read>(mut source: R) -> Result<RefTable> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let t = line.trim();
        if !(t.is_empty() || t.starts_with('#')) {
            break;
        }
        offset += line.len();
    }
    let body = &text.as_bytes()[offset..];
    let src = CsvSource::read(text.as_bytes())
        .map_err(|e| Error::CorruptTable(e.to_string()))?;

    let corrupt = |m: String| Error::CorruptTable(m);
    let label = src.meta("label").ok_or_else(|| corrupt("missing label".into()))?.to_string();
    let curve_name = src.meta("curve").unwrap_or("unknown").to_string();
    let specs: Vec<RefTableSpec> = src
        .meta_all("component")
        .map(RefTableSpec::decode)
        .collect::<Result<_>>()?;
    if specs.is_empty() {
        return Err(corrupt("missing component spec".into()));
    }
    let declared: usize = src
        .meta("records")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| corrupt("missing record count".into()))?;
    if let Some(sum) = src.meta("checksum") {
        let want = sum.trim_start_matches("sha256:");
        if checksum(body) != want {
            return Err(corrupt("checksum mismatch".into()));
        }
    }

    let cols: Vec<usize> = TABLE_COLUMNS
        .iter()
        .map(|c| src.column(c))
        .collect::<Result<_>>()
        .map_err(|e| corrupt(e.to_string()))?;
    let hpd_cols = (src.find(&["hpd68"]), src.find(&["hpd95"]));
    let mut records = Vec::with_capacity(src.len());
    for (line, row) in src.rows() {
        if row.len() < src.headers.len() {
            return Err(corrupt(format!("short row at line {line}")));
        }
        let f = |i: usize| -> Result<f64> { src.parse(line, row, cols[i]) };
        let hpd = |c: Option<usize>| -> Result<Vec<HpdSegment>> {
            match c {
                Some(c) => decode_hpd(line, row.get(c).unwrap_or("")),
                None => Ok(Vec::new()),
            }
        };
        records.push(RefRecord {
            id: src.parse(line, row, cols[0])?,
            cal_date: CalendarDate(f(1)?),
            age: src.parse(line, row, cols[2])?,
            sd: f(3)?,
            cal_mean: CalendarDate(f(4)?),
            cal_median: CalendarDate(f(5)?),
            cal_sigma: f(6)?,
            hpd68: hpd(hpd_cols.0)?,
            hpd95: hpd(hpd_cols.1)?,
        });
    }

    let expected: usize = specs.iter().map(|s| s.record_count()).sum::<Result<usize>>()?;
    if records.len() != declared || records.len() != expected {
        return Err(corrupt(format!(
            "expected {expected} records (declared {declared}), found {}",
            records.len()
        )));
    }
    let spec = &specs[0];
    for (k, r) in records.iter().enumerate() {
        if r.id != k as u64 + 1 {
            return Err(corrupt(format!("id {} out of sequence", r.id)));
        }
        let offset = (r.cal_date.0 - spec.span.0 .0) / spec.year_interval;
        let on_grid = (offset - offset.round()).abs() < 1e-9;
        if !on_grid || r.cal_date < spec.span.0 || r.cal_date > spec.span.1 {
            return Err(corrupt(format!("record {} date {} off grid", r.id, r.cal_date)));
        }
    }
    Ok(RefTable {
        label,
        curve_name,
        specs,
        records,
    })
}
