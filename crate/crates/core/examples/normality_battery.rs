//! D'Agostino-Pearson and Anderson-Darling on a normal sample and on a
//! clearly skewed one.

use c14fine::evaluate::{anderson_darling, dagostino_pearson};
use c14fine::rng::substream;
use rand_distr::{Distribution, Exp, Normal};

fn main() -> c14fine::Result<()> {
    let mut rng = substream(7, 0, 0);
    let normal: Vec<f64> = Normal::new(-75.0, 20.0).unwrap().sample_iter(&mut rng).take(200).collect();
    let skewed: Vec<f64> = Exp::new(0.05).unwrap().sample_iter(&mut rng).take(200).collect();

    for (name, sample) in [("normal", &normal), ("exponential", &skewed)] {
        let dp = dagostino_pearson(sample)?;
        let ad = anderson_darling(sample)?;
        println!(
            "{name:<12} K2={:.3} p={:.4}   A*2={:.3} p={}",
            dp.statistic,
            dp.p_value.unwrap_or(f64::NAN),
            ad.statistic,
            ad.p_value.map_or("n/a".into(), |p| format!("{p:.4}"))
        );
    }
    Ok(())
}
