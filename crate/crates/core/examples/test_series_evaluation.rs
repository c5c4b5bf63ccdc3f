//! A small simulated test series: clusters of three ages at each date, fine-dated
//! against a reference table, then scored by how far each indicator lands from
//! the true date.

use c14fine::evaluate::{
    average_deviation, delta_fractions, AverageDeviation, evaluate_test_series, performance_curves, DeltaCategory,
};
use c14fine::finedate::Indicator;
use c14fine::simulate::{date_grid, generate_test_datasets, Simulator, TestSeriesParams};
use c14fine::{build_reference_table, CalCurve, CalendarDate, RefTableSpec};

fn main() -> c14fine::Result<()> {
    let curve = CalCurve::intcal20();
    let sim = Simulator::new(&curve, 1.0)?;
    let table = build_reference_table(&sim, &RefTableSpec::from_label("5_20_5", 42)?)?;

    let dates = date_grid(-200.0, -40.0, 40.0)?;
    let params = TestSeriesParams { datasets_per_date: 25, seed: 42, ..Default::default() };
    let datasets = generate_test_datasets(&sim, &dates, params)?;
    let eval = evaluate_test_series(&table, &datasets);
    println!("{} datasets, {} matched", datasets.len(), eval.matched_datasets());

    let (f25, f35) = delta_fractions(&eval);
    println!("indicator values within 25 years: {:.1}%, within 35 years: {:.1}%", 100.0 * f25, 100.0 * f35);
    println!("{:<20} {}", "", DeltaCategory::ALL.map(|c| format!("{:>14}", c.name())).join(""));
    for (ind, counts) in eval.category_counts() {
        println!("{:<20} {}", ind.name(), counts.map(|n| format!("{n:>14}")).join(""));
    }

    println!("success rate within 25 years (CalDate, Mean, Median families):");
    for p in performance_curves(&eval, 25.0)? {
        println!(
            "  {:>6}  n={:<3} {:.2} {:.2} {:.2}",
            CalendarDate(p.original_date).to_string(),
            p.n_datasets,
            p.fractions[0],
            p.fractions[1],
            p.fractions[2]
        );
    }
    let avg = average_deviation(&eval);
    println!("mean signed delta over all dates:");
    for ind in Indicator::ALL {
        println!("  {:<20} {:>5}", ind.name(), AverageDeviation::display(avg.overall_of(ind)));
    }
    Ok(())
}
