//! The worked example: three ages measured on one object, matched against a
//! 5_20_5 reference table, and reduced to the twelve indicators.

use c14fine::finedate::{compute_indicators, match_measurements};
use c14fine::simulate::Simulator;
use c14fine::{build_reference_table, CalCurve, Measurement, RefTableSpec};

fn main() -> c14fine::Result<()> {
    let curve = CalCurve::intcal20();
    let sim = Simulator::new(&curve, 1.0)?;
    let table = build_reference_table(&sim, &RefTableSpec::from_label("5_20_5", 42)?)?;

    let meas: Vec<Measurement> = [2073, 2087, 2097].iter().map(|&a| Measurement::new(a, 20.0)).collect();
    let matches = match_measurements(&table, &meas)?;
    for (m, recs) in meas.iter().zip(&matches.per_measurement) {
        println!("{} BP: {} matches", m.age, recs.len());
    }
    println!("total {} matched records", matches.total());

    let ind = compute_indicators(&matches)?;
    for (i, v) in ind.iter() {
        println!("{:<20} {:>8.1}   delta {:>6.1}", i.name(), v, v - -75.0);
    }
    Ok(())
}
