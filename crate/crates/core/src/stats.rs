//! Small summary statistics used by the experiment runners.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least-squares line through `(x, y)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2, "need two points for a line");
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    LineFit {
        slope,
        intercept: my - slope * mx,
        r2: if syy > 0.0 {
            sxy * sxy / (sxx * syy)
        } else {
            1.0
        },
    }
}

/// Line fit in `(ln x, ln y)`.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> LineFit {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_line(&lx, &ly)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (`n - 1` denominator); zero for fewer than two values.
pub fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn std_error(v: &[f64]) -> f64 {
    sample_std(v) / (v.len() as f64).sqrt()
}

/// Binomial standard error `sqrt(p (1 - p) / n)` at the observed proportion.
pub fn proportion_se(count: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = count as f64 / total as f64;
    (p * (1.0 - p) / total as f64).sqrt()
}

/// One-sided Clopper-Pearson lower confidence bound for a binomial proportion.
pub fn clopper_pearson_lower(count: usize, total: usize, confidence: f64) -> f64 {
    if count == 0 {
        return 0.0;
    }
    let beta = Beta::new(count as f64, (total - count + 1) as f64).expect("positive shapes");
    beta.inverse_cdf(1.0 - confidence)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let f = fit_line(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]);
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_law_slope() {
        let x = [10.0, 100.0, 1000.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.75)).collect();
        assert!((loglog_fit(&x, &y).slope + 0.75).abs() < 1e-12);
    }

    #[test]
    fn std_of_constant_is_zero() {
        assert_eq!(sample_std(&[2.0, 2.0, 2.0]), 0.0);
        assert!((sample_std(&[1.0, 3.0]) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn clopper_pearson_single_success() {
        // P(X >= 1) = 1 - (1 - p)^n equals 1 - confidence at the bound
        let lo = clopper_pearson_lower(1, 100, 0.99);
        assert!((1.0 - (1.0 - lo).powi(100) - 0.01).abs() < 1e-9);
        assert_eq!(clopper_pearson_lower(0, 100, 0.99), 0.0);
    }
}
