//! Calibrates one radiocarbon age against the bundled IntCal20 curve and prints
//! the point estimates and HPD ranges.
//!
//!     cargo run --example calibrate_curve -- 2087 20

use c14fine::calcurve::CalibrationResult;
use c14fine::{calibrate, CalCurve, Measurement};

fn show(segments: &[c14fine::calcurve::HpdSegment]) -> String {
    segments
        .iter()
        .map(|s| format!("{:.0}..{:.0} ({:.1}%)", s.start, s.end, 100.0 * s.probability))
        .collect::<Vec<_>>()
        .join(", ")
}

fn main() -> c14fine::Result<()> {
    let mut args = std::env::args().skip(1);
    let age: i64 = args.next().map_or(2087, |a| a.parse().expect("age in years BP"));
    let sd: f64 = args.next().map_or(20.0, |a| a.parse().expect("sd in years"));

    let curve = CalCurve::intcal20();
    let (lo, hi) = curve.domain();
    println!("{}: {} knots, {} to {}", curve.name(), curve.knots().len(), lo, hi);

    let r = calibrate(&curve, Measurement::new(age, sd), 1.0)?;
    println!("{age} ± {sd} BP");
    println!("  mean   {:.1}", r.mean.0);
    println!("  median {:.1}", r.median.0);
    println!("  sigma  {:.1}", r.sigma);
    println!("  68.3%  {}", show(&r.hpd68));
    println!("  95.4%  {}", show(&r.hpd95));
    println!(
        "  mass   {:.4} / {:.4}",
        CalibrationResult::hpd_mass(&r.hpd68),
        CalibrationResult::hpd_mass(&r.hpd95)
    );
    Ok(())
}
