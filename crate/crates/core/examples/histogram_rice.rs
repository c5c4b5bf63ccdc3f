//! Rice-rule histogram of simulated calibrated medians.

use c14fine::evaluate::{histogram, rice_bins};
use c14fine::rng::substream;
use c14fine::simulate::Simulator;
use c14fine::{CalCurve, CalendarDate};

fn main() -> c14fine::Result<()> {
    let curve = CalCurve::intcal20();
    let sim = Simulator::new(&curve, 1.0)?;
    let mut rng = substream(1, 0, 0);
    let medians = (1..=300)
        .map(|id| Ok(sim.simulate(CalendarDate(-75.0), 20.0, &mut rng, id)?.cal_median.0))
        .collect::<c14fine::Result<Vec<f64>>>()?;

    println!("n={} -> {} bins", medians.len(), rice_bins(medians.len()));
    let h = histogram(&medians, None)?;
    let widest = *h.counts.iter().max().unwrap_or(&1);
    for (i, &c) in h.counts.iter().enumerate() {
        println!("{:>7.1} {:>4} {}", h.edges[i], c, "#".repeat(c * 40 / widest.max(1)));
    }
    Ok(())
}
