use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Least-squares line through `(ln x, ln y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub name: String,
    pub abscissa: Vec<f64>,
    pub ordinate: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Standard error of the slope; zero with two points.
    pub slope_stderr: f64,
}

impl RateFit {
    pub fn new(name: impl Into<String>, abscissa: Vec<f64>, ordinate: Vec<f64>) -> Result<Self> {
        let n = abscissa.len();
        if n < 2 || ordinate.len() != n {
            return Err(Error::InvalidInput(format!("a rate fit needs two or more paired points, got {n}")));
        }
        if abscissa.iter().chain(&ordinate).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput("log-log fits need positive finite data".into()));
        }
        let lx: Vec<f64> = abscissa.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = ordinate.iter().map(|v| v.ln()).collect();
        let mx = lx.iter().sum::<f64>() / n as f64;
        let my = ly.iter().sum::<f64>() / n as f64;
        let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
        if sxx == 0.0 {
            return Err(Error::InvalidInput("abscissa values are all equal".into()));
        }
        let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
        let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let sse: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
        let slope_stderr = if n > 2 { (sse / (n - 2) as f64 / sxx).sqrt() } else { 0.0 };
        Ok(Self { name: name.into(), abscissa, ordinate, slope, intercept, r_squared, slope_stderr })
    }

    /// `exp(intercept)·x^slope`.
    pub fn predict(&self, x: f64) -> f64 {
        (self.intercept + self.slope * x.ln()).exp()
    }
}
