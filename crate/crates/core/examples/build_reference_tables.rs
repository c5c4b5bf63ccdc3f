//! Builds a small reference table, writes it to disk and reads it back.
//!
//!     cargo run --release --example build_reference_tables -- 5_20_5 out.csv

use c14fine::reftable::{buffer_warnings, read_table, write_table, WriteOptions};
use c14fine::simulate::Simulator;
use c14fine::{build_reference_table, CalCurve, CalendarDate, RefTableSpec};

fn main() -> c14fine::Result<()> {
    let mut args = std::env::args().skip(1);
    let label = args.next().unwrap_or_else(|| "5_20_5".into());
    let out = args.next();

    let curve = CalCurve::intcal20();
    let mut spec = RefTableSpec::from_label(&label, 42)?;
    if out.is_none() {
        // keep the default run short
        spec.span = (CalendarDate(-150.0), CalendarDate(0.0));
    }
    println!(
        "{label}: step {} years, {} per slice, sd {}, {} slices -> {} records",
        spec.year_interval,
        spec.per_slice,
        spec.sd,
        spec.slice_count()?,
        spec.record_count()?
    );
    for w in buffer_warnings(&curve, &spec, (-100.0, -50.0)) {
        println!("warning: {w}");
    }

    let sim = Simulator::new(&curve, 1.0)?;
    let table = build_reference_table(&sim, &spec)?;
    let ages: std::collections::BTreeSet<i64> = table.records.iter().map(|r| r.age).collect();
    println!("{} records, {} distinct ages", table.len(), ages.len());

    let mut buf = Vec::new();
    write_table(&table, &mut buf, WriteOptions { with_hpd: true }, &[])?;
    let back = read_table(buf.as_slice())?;
    assert_eq!(back, table);
    println!("round trip ok ({} bytes)", buf.len());
    if let Some(path) = out {
        std::fs::write(&path, &buf)?;
        println!("wrote {path}");
    }
    Ok(())
}
