//! Turns an evaluation into a lookup table and asks it how trustworthy a
//! particular indicator value is.

use c14fine::evaluate::evaluate_test_series;
use c14fine::lookup::{build_lookup, query_lookup, DEFAULT_BUCKET_WIDTH};
use c14fine::simulate::{date_grid, generate_test_datasets, Simulator, TestSeriesParams};
use c14fine::{build_reference_table, CalCurve, RefTableSpec};

fn main() -> c14fine::Result<()> {
    let curve = CalCurve::intcal20();
    let sim = Simulator::new(&curve, 1.0)?;
    let table = build_reference_table(&sim, &RefTableSpec::from_label("5_20_5", 42)?)?;
    let dates = date_grid(-250.0, -50.0, 10.0)?;
    let datasets = generate_test_datasets(&sim, &dates, TestSeriesParams { datasets_per_date: 20, seed: 42, ..Default::default() })?;
    let eval = evaluate_test_series(&table, &datasets);

    let lookup = build_lookup(&eval, DEFAULT_BUCKET_WIDTH)?;
    let (lo, hi) = lookup.range();
    println!("{} buckets covering [{lo}, {hi})", lookup.buckets.len());

    for value in [-180.0, -121.3, -75.0] {
        match query_lookup(&lookup, "CalDateMedian", value) {
            Ok(hit) => println!(
                "CalDateMedian {value}: bucket {} n={} within 12y {} within 25y {}",
                hit.bucket_left,
                hit.total_count,
                hit.frac12.map_or("-".into(), |f| format!("{f:.2}%")),
                hit.frac25.map_or("-".into(), |f| format!("{f:.2}%"))
            ),
            Err(e) => println!("CalDateMedian {value}: {e}"),
        }
    }
    Ok(())
}
