use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Least-squares fits of a positive series `y(x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    /// Slope of `ln y` against `ln x`.
    pub exponent: f64,
    pub exponent_r2: f64,
    /// `y ≈ log_slope · log_b(x) + log_intercept`.
    pub log_slope: f64,
    pub log_intercept: f64,
    pub log_r2: f64,
    pub log_base: f64,
    pub points: usize,
}

/// Fit a power law and a logarithmic law (in base `log_base`) to `series`.
pub fn fit_scaling(series: &[(f64, f64)], log_base: f64) -> Result<ScalingFit> {
    if series.len() < 4 {
        return Err(Error::Fit(format!("need at least 4 points, got {}", series.len())));
    }
    if !(log_base > 1.0) {
        return Err(Error::Fit(format!("log base must exceed 1, got {log_base}")));
    }
    if series.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::Fit("x values must be strictly increasing".into()));
    }
    if series.iter().any(|&(x, y)| !(x > 0.0) || !(y > 0.0) || !x.is_finite() || !y.is_finite())
    {
        return Err(Error::Fit("x and y values must be positive and finite".into()));
    }
    let lx: Vec<f64> = series.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = series.iter().map(|p| p.1.ln()).collect();
    let y: Vec<f64> = series.iter().map(|p| p.1).collect();
    let logb: Vec<f64> = lx.iter().map(|v| v / log_base.ln()).collect();
    let (exponent, _, exponent_r2) = linear(&lx, &ly)?;
    let (log_slope, log_intercept, log_r2) = linear(&logb, &y)?;
    Ok(ScalingFit {
        exponent,
        exponent_r2,
        log_slope,
        log_intercept,
        log_r2,
        log_base,
        points: series.len(),
    })
}

/// Ordinary least squares `y = a·x + b`, returning `(a, b, R²)`.
fn linear(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx <= f64::EPSILON * mx.abs().max(1.0) {
        return Err(Error::Fit("degenerate series: x is constant".into()));
    }
    let a = sxy / sxx;
    let b = my - a * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(u, v)| (v - a * u - b).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok((a, b, r2))
}
