//! Command-line front end.
//!
//! Every subcommand is a thin wrapper over a library operation. Outputs are CSV
//! files starting with `#` provenance lines that point at the `run_manifest.txt`
//! written next to them.

mod commands;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::calcurve::{CalCurve, CalendarDate};
use crate::error::Error;

pub use commands::convert_rsim_to_tests;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DATA: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "c14fine",
    version,
    about = "Radiocarbon fine-dating with simulated reference tables",
    arg_required_else_help = true
)]
pub struct Cli {
    /// Base seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Flat `key = value` file; keys are long flag names, flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Calibration curve file (default: bundled IntCal20).
    #[arg(long, global = true)]
    pub curve: Option<PathBuf>,
    /// Calibration grid step in years.
    #[arg(long, global = true)]
    pub grid_step: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inspect a calibration curve or calibrate a single age.
    #[command(subcommand)]
    Curve(CurveCmd),
    /// Generate a reference table.
    RefGen(RefGenArgs),
    /// Simulate test data.
    #[command(subcommand)]
    Simulate(SimulateCmd),
    /// Fine-date measured ages against a reference table.
    Finedate(FinedateArgs),
    /// Evaluate a test series against a reference table.
    Evaluate(EvaluateArgs),
    /// Build or query the indicator lookup table.
    #[command(subcommand)]
    Lookup(LookupCmd),
    /// Histogram data for one column or indicator.
    Hist(HistArgs),
    /// Paired values for a scatter plot.
    Scatter(ScatterArgs),
}

#[derive(Debug, Subcommand)]
pub enum CurveCmd {
    /// Knot count, domain and interpolated values.
    Info {
        /// Curve file; falls back to --curve, then the bundled curve.
        file: Option<PathBuf>,
        /// Dates to interpolate at, comma separated (e.g. -200,50BC,AD20).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        at: Vec<CalendarDate>,
    },
    /// Calibrate one age and write its posterior.
    Calibrate {
        #[arg(long)]
        age: i64,
        #[arg(long)]
        sd: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span(pub CalendarDate, pub CalendarDate);

fn parse_span(s: &str) -> Result<Span, String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected <oldest>:<youngest>, got '{s}'"))?;
    let a: CalendarDate = a.parse().map_err(|e: Error| e.to_string())?;
    let b: CalendarDate = b.parse().map_err(|e: Error| e.to_string())?;
    Ok(Span(a, b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DateRange {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

fn parse_range(s: &str) -> Result<DateRange, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let date = |x: &str| x.parse::<CalendarDate>().map(|d| d.0).map_err(|e| e.to_string());
    match parts.as_slice() {
        [a] => {
            let v = date(a)?;
            Ok(DateRange { start: v, end: v, step: 1.0 })
        }
        [a, b] => Ok(DateRange { start: date(a)?, end: date(b)?, step: 1.0 }),
        [a, b, c] => Ok(DateRange {
            start: date(a)?,
            end: date(b)?,
            step: c.parse().map_err(|_| format!("bad step '{c}'"))?,
        }),
        _ => Err(format!("expected <start>:<end>:<step>, got '{s}'")),
    }
}

#[derive(Debug, Args)]
pub struct RefGenArgs {
    /// Variant label `<step>_<per_slice>_<sd>` or `Combo`.
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub per_slice: Option<usize>,
    #[arg(long)]
    pub sd: Option<f64>,
    /// Oldest and youngest grid date, e.g. -300:20.
    #[arg(long, value_parser = parse_span, allow_hyphen_values = true)]
    pub span: Option<Span>,
    /// Range the table will be used for; enables buffer warnings.
    #[arg(long, value_parser = parse_span, allow_hyphen_values = true)]
    pub analysis: Option<Span>,
    /// Append hpd68/hpd95 columns.
    #[arg(long)]
    pub with_hpd: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum SimulateCmd {
    /// Clustered test datasets.
    Tests {
        /// Dates as <start>:<end>:<step>.
        #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
        dates: DateRange,
        #[arg(long, default_value_t = 100)]
        per_date: usize,
        #[arg(long, default_value_t = 3)]
        group: usize,
        #[arg(long, default_value_t = 20.0)]
        sd: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Independent simulations per date, one row each.
    Draws {
        #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
        dates: DateRange,
        #[arg(long, default_value_t = 300)]
        n: usize,
        #[arg(long, default_value_t = 20.0)]
        sd: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster flat simulation rows into a tests file.
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 3)]
        group: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct FinedateArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Measured ages BP, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "ages_file")]
    pub ages: Vec<i64>,
    /// CSV with an `age_bp` (or `age`) column and optional `sd`.
    #[arg(long)]
    pub ages_file: Option<PathBuf>,
    /// Measurement error applied where the input has none.
    #[arg(long, default_value_t = 20.0)]
    pub sd: f64,
    /// Restrict the reference table to this calendar span.
    #[arg(long, value_parser = parse_span, allow_hyphen_values = true)]
    pub span: Option<Span>,
    /// Output prefix; writes `<out>_overview.csv` and `<out>_summary.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub tests: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Evaluation table whose indicator values form the MPD reference pool
    /// (default: this evaluation).
    #[arg(long)]
    pub mpd_pool: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub t0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub dt: f64,
    #[arg(long, default_value_t = 10.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 5)]
    pub m_min: usize,
}

#[derive(Debug, Subcommand)]
pub enum LookupCmd {
    Build {
        #[arg(long)]
        eval: PathBuf,
        #[arg(long, default_value_t = 5.0)]
        width: f64,
        #[arg(long)]
        out: PathBuf,
    },
    Query {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        indicator: String,
        #[arg(long, allow_hyphen_values = true)]
        value: f64,
    },
}

#[derive(Debug, Args)]
pub struct HistArgs {
    /// Any CSV output (eval_long, tests, reference table, ...).
    #[arg(long)]
    pub input: PathBuf,
    /// Column name, or an indicator name for evaluation tables
    /// (suffix `_delta` selects its deltas).
    #[arg(long)]
    pub col: String,
    /// Bin count (default: Rice rule).
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScatterArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub x: String,
    #[arg(long)]
    pub y: String,
    #[arg(long)]
    pub out: PathBuf,
}

/// Resolved global settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: Option<usize>,
    pub curve_path: Option<PathBuf>,
    pub grid_step: f64,
    pub argv: Vec<String>,
}

impl RunConfig {
    pub fn load_curve(&self) -> crate::Result<CalCurve> {
        match &self.curve_path {
            Some(p) => CalCurve::from_path(p),
            None => Ok(CalCurve::intcal20()),
        }
    }

    /// `#` lines placed at the top of every CSV output.
    pub fn provenance(&self, curve: Option<&str>) -> Vec<String> {
        let mut lines = vec![
            format!("c14fine {}", env!("CARGO_PKG_VERSION")),
            "manifest=run_manifest.txt".to_string(),
            format!("seed={}", self.seed),
        ];
        if let Some(c) = curve {
            lines.push(format!("curve={c}"));
        }
        lines
    }

    /// Writes `run_manifest.txt` into `dir`.
    pub fn write_manifest(&self, dir: &Path, curve: Option<&str>, outputs: &[PathBuf]) -> crate::Result<()> {
        let dir = if dir.as_os_str().is_empty() { Path::new(".") } else { dir };
        let mut f = fs::File::create(dir.join("run_manifest.txt"))?;
        writeln!(f, "tool=c14fine {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(f, "args={}", self.argv.join(" "))?;
        writeln!(f, "seed={}", self.seed)?;
        writeln!(f, "curve={}", curve.unwrap_or("none"))?;
        writeln!(f, "grid_step={}", self.grid_step)?;
        writeln!(
            f,
            "workers={}",
            self.workers.map(|w| w.to_string()).unwrap_or_else(|| "auto".into())
        )?;
        for o in outputs {
            let name = o.file_name().map(|n| n.to_string_lossy().to_string()).unwrap_or_default();
            writeln!(f, "output={name}")?;
        }
        Ok(())
    }
}

fn usage_error(msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: usage: {msg}");
    EXIT_USAGE
}

fn exit_code(err: &Error) -> (i32, &'static str) {
    match err {
        _ if err.is_io() => (EXIT_IO, "io"),
        Error::InvalidArgument(_) | Error::UnknownIndicator(_) => (EXIT_USAGE, "usage"),
        _ => (EXIT_DATA, "data"),
    }
}

/// Flat `key = value` lines; `#` starts a comment.
fn read_config(path: &Path) -> Result<Vec<(String, String)>, i32> {
    let text = fs::read_to_string(path).map_err(|e| {
        eprintln!("error: io: config {}: {e}", path.display());
        EXIT_IO
    })?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(usage_error(format!("config line {}: expected key = value", i + 1)));
        };
        out.push((k.trim().replace('_', "-"), v.trim().to_string()));
    }
    Ok(out)
}

/// Appends config entries as flags unless the command line already sets them.
/// Keys unknown to every subcommand are rejected; keys for other subcommands are ignored.
fn merge_config(argv: &[OsString], entries: &[(String, String)]) -> Result<Vec<OsString>, i32> {
    let root = Cli::command();
    let matches = root.clone().try_get_matches_from(argv).map_err(|e| {
        let _ = e.print();
        e.exit_code()
    })?;
    let mut leaf = root.clone();
    let mut m = &matches;
    while let Some((name, sub)) = m.subcommand() {
        leaf = leaf.find_subcommand(name).expect("parsed subcommand").clone();
        m = sub;
    }
    fn all_longs(cmd: &clap::Command, out: &mut Vec<String>) {
        out.extend(cmd.get_arguments().filter_map(|a| a.get_long().map(str::to_string)));
        for s in cmd.get_subcommands() {
            all_longs(s, out);
        }
    }
    let mut known = Vec::new();
    all_longs(&root, &mut known);

    let given: Vec<String> = argv.iter().map(|a| a.to_string_lossy().to_string()).collect();
    let mut out = argv.to_vec();
    for (key, value) in entries {
        if key == "config" || !known.contains(key) {
            return Err(usage_error(format!("unknown config key '{key}'")));
        }
        let flag = format!("--{key}");
        if given.iter().any(|g| g == &flag || g.starts_with(&format!("{flag}="))) {
            continue;
        }
        let arg = leaf
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()));
        let Some(arg) = arg else { continue };
        if arg.get_action().takes_values() {
            out.push(format!("{flag}={value}").into());
        } else if matches!(value.as_str(), "true" | "yes" | "1") {
            out.push(flag.into());
        }
    }
    Ok(out)
}

/// Runs the tool on `argv` (program name first) and returns the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let first = match Cli::command().try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Some(path) = first.get_one::<PathBuf>("config") {
        let entries = match read_config(path) {
            Ok(e) => e,
            Err(code) => return code,
        };
        argv = match merge_config(&argv, &entries) {
            Ok(a) => a,
            Err(code) => return code,
        };
    }
    let cli = match Cli::command()
        .try_get_matches_from(&argv)
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let grid_step = cli.grid_step.unwrap_or(1.0);
    if !(grid_step > 0.0) {
        return usage_error(format!("grid step must be positive, got {grid_step}"));
    }
    let config = RunConfig {
        seed: cli.seed.unwrap_or(0),
        workers: cli.workers,
        curve_path: cli.curve.clone(),
        grid_step,
        argv: argv.iter().skip(1).map(|a| a.to_string_lossy().to_string()).collect(),
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => return usage_error(format!("cannot start workers: {e}")),
    };
    match pool.install(|| commands::dispatch(&cli.command, &config)) {
        Ok(()) => 0,
        // a reader such as `head` closed the pipe; nothing left to report
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            let (code, kind) = exit_code(&e);
            eprintln!("error: {kind}: {e}");
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spans_and_ranges() {
        assert_eq!(parse_span("-300:20").unwrap(), Span(CalendarDate(-300.0), CalendarDate(20.0)));
        assert_eq!(parse_span("300BC:AD20").unwrap(), Span(CalendarDate(-300.0), CalendarDate(20.0)));
        assert!(parse_span("-300").is_err());
        let r = parse_range("-300:0:5").unwrap();
        assert_eq!((r.start, r.end, r.step), (-300.0, 0.0, 5.0));
        assert!(parse_range("a:b:c").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn no_arguments_is_usage_error() {
        assert_eq!(run(["c14fine"]), EXIT_USAGE);
        assert_eq!(run(["c14fine", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["c14fine", "--version"]), 0);
    }
}
