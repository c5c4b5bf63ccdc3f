//! D'Agostino-Pearson omnibus and Anderson-Darling normality tests.
//!
//! Both follow the SciPy formulations (`normaltest`, `anderson(dist="norm")`).

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NormalityResult {
    pub test_name: &'static str,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub n: usize,
}

fn central_moments(sample: &[f64]) -> (f64, f64, f64, f64) {
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in sample {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (mean, m2 / n, m3 / n, m4 / n)
}

fn skew_z(b1: f64, n: f64) -> f64 {
    let y = b1 * ((n + 1.0) * (n + 3.0) / (6.0 * (n - 2.0))).sqrt();
    let beta2 = 3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0)
        / ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0));
    let w2 = -1.0 + (2.0 * (beta2 - 1.0)).sqrt();
    let delta = 1.0 / (0.5 * w2.ln()).sqrt();
    let alpha = (2.0 / (w2 - 1.0)).sqrt();
    let y = if y == 0.0 { 1.0 } else { y };
    let r = y / alpha;
    delta * (r + (r * r + 1.0).sqrt()).ln()
}

fn kurtosis_z(b2: f64, n: f64) -> f64 {
    let e = 3.0 * (n - 1.0) / (n + 1.0);
    let var_b2 = 24.0 * n * (n - 2.0) * (n - 3.0) / ((n + 1.0) * (n + 1.0) * (n + 3.0) * (n + 5.0));
    let x = (b2 - e) / var_b2.sqrt();
    let sqrt_beta1 = 6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0))
        * (6.0 * (n + 3.0) * (n + 5.0) / (n * (n - 2.0) * (n - 3.0))).sqrt();
    let a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + (1.0 + 4.0 / (sqrt_beta1 * sqrt_beta1)).sqrt());
    let term1 = 1.0 - 2.0 / (9.0 * a);
    let denom = 1.0 + x * (2.0 / (a - 4.0)).sqrt();
    let term2 = denom.signum() * ((1.0 - 2.0 / a) / denom.abs()).cbrt();
    (term1 - term2) / (2.0 / (9.0 * a)).sqrt()
}

/// K^2 = z_skew^2 + z_kurt^2 with a chi-square(2) p-value. Needs n >= 20.
pub fn dagostino_pearson(sample: &[f64]) -> Result<NormalityResult> {
    let n = sample.len();
    if n < 20 {
        return Err(Error::SampleTooSmall {
            test: "omnibus test",
            n,
            needed: 20,
        });
    }
    let (_, m2, m3, m4) = central_moments(sample);
    if m2 == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let nf = n as f64;
    let zs = skew_z(m3 / m2.powf(1.5), nf);
    let zk = kurtosis_z(m4 / (m2 * m2), nf);
    let k2 = zs * zs + zk * zk;
    Ok(NormalityResult {
        test_name: "dagostino_pearson",
        statistic: k2,
        // chi-square survival with 2 degrees of freedom
        p_value: Some((-k2 / 2.0).exp()),
        n,
    })
}

fn ln_norm_cdf(z: f64) -> f64 {
    (0.5 * erfc(-z / std::f64::consts::SQRT_2)).ln()
}

/// Uncorrected A^2 with mean and (n - 1) standard deviation estimated from the sample.
pub fn anderson_darling_a2(sample: &[f64]) -> Result<f64> {
    let n = sample.len();
    if n < 8 {
        return Err(Error::SampleTooSmall {
            test: "anderson-darling",
            n,
            needed: 8,
        });
    }
    let mut y = sample.to_vec();
    y.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mean = y.iter().sum::<f64>() / nf;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
    if !(var > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let s = var.sqrt();
    let w: Vec<f64> = y.iter().map(|v| (v - mean) / s).collect();
    let sum: f64 = (0..n)
        .map(|i| {
            let k = (2 * i + 1) as f64 / nf;
            k * (ln_norm_cdf(w[i]) + ln_norm_cdf(-w[n - 1 - i]))
        })
        .sum();
    Ok(-nf - sum)
}

/// Small-sample corrected `A*^2 = A^2 (1 + 0.75/n + 2.25/n^2)`; statistic only.
pub fn anderson_darling(sample: &[f64]) -> Result<NormalityResult> {
    let a2 = anderson_darling_a2(sample)?;
    let n = sample.len() as f64;
    Ok(NormalityResult {
        test_name: "anderson_darling",
        statistic: a2 * (1.0 + 0.75 / n + 2.25 / (n * n)),
        p_value: None,
        n: sample.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preconditions() {
        assert!(matches!(
            dagostino_pearson(&[1.0; 10]),
            Err(Error::SampleTooSmall { n: 10, .. })
        ));
        assert!(matches!(anderson_darling(&[3.0; 20]), Err(Error::ZeroVariance)));
        assert!(anderson_darling(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn spike_pair_rejects() {
        let x: Vec<f64> = (0..200).map(|i| if i < 100 { -10.0 } else { 10.0 }).collect();
        let r = dagostino_pearson(&x).unwrap();
        // scipy.stats.normaltest: K2 = 1079.2147166610705, p = 4.48e-235
        assert!((r.statistic - 1079.214_716_661_070_5).abs() < 1e-6);
        assert!(r.p_value.unwrap() < 1e-3);
    }
}
