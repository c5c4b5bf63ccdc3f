//! Repeated simulation of one calendar date: draw an age from the curve,
//! calibrate it, and look at how the calibrated means scatter.

use c14fine::rng::substream;
use c14fine::simulate::Simulator;
use c14fine::{CalCurve, CalendarDate};

fn main() -> c14fine::Result<()> {
    let curve = CalCurve::intcal20();
    let sim = Simulator::new(&curve, 1.0)?;
    let date = CalendarDate(-75.0);
    let (mu, sigma) = curve.at(date)?;
    println!("curve at {date}: {mu:.1} ± {sigma:.1} BP");

    let mut rng = substream(42, 0, 0);
    let mut means = Vec::new();
    for id in 1..=200 {
        let rec = sim.simulate(date, 20.0, &mut rng, id)?;
        if id <= 5 {
            println!(
                "  #{id}: {} BP -> mean {:.1}, median {:.1}, sigma {:.1}",
                rec.age, rec.cal_mean.0, rec.cal_median.0, rec.cal_sigma
            );
        }
        means.push(rec.cal_mean.0);
    }
    let avg = means.iter().sum::<f64>() / means.len() as f64;
    let sd = (means.iter().map(|m| (m - avg).powi(2)).sum::<f64>() / (means.len() - 1) as f64).sqrt();
    println!("200 draws: calibrated means average {avg:.1} (sd {sd:.1}) for a true date of {date}");
    Ok(())
}
