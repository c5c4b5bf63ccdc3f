//! Four tree rings of known age (15, 16, 25 and 26 BC) fine-dated together
//! against a 5_100_5 table. Their mean date, 20.5 BC, is the target.

use c14fine::finedate::{compute_indicators, match_measurements, Indicator};
use c14fine::simulate::Simulator;
use c14fine::{build_reference_table, CalCurve, Measurement, RefTableSpec};

const RINGS: [(f64, i64, f64); 4] = [(-15.0, 1999, 10.0), (-16.0, 2003, 16.0), (-25.0, 2022, 16.0), (-26.0, 2035, 15.0)];

fn main() -> c14fine::Result<()> {
    let curve = CalCurve::intcal20();
    let sim = Simulator::new(&curve, 1.0)?;
    let table = build_reference_table(&sim, &RefTableSpec::from_label("5_100_5", 42)?)?;
    let target = RINGS.iter().map(|r| r.0).sum::<f64>() / RINGS.len() as f64;

    let meas: Vec<Measurement> = RINGS.iter().map(|&(_, a, s)| Measurement::new(a, s)).collect();
    let matches = match_measurements(&table, &meas)?;
    for ((date, age, sd), recs) in RINGS.iter().zip(&matches.per_measurement) {
        println!("ring {date} ({age} ± {sd} BP): {} matches", recs.len());
    }
    let ind = compute_indicators(&matches)?;
    println!("target {target}");
    for i in Indicator::ALL {
        let v = ind.get(i);
        println!("{:<20} {:>8.1}   delta {:>6.1}", i.name(), v, v - target);
    }
    Ok(())
}
