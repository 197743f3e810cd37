//! Least-squares rate fits and fitted-constant envelopes.

use anyhow::{bail, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    /// Abscissae and ordinates as fitted (logged when `log_log`).
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub log_log: bool,
}

impl RateFit {
    pub fn predict(&self, x: f64) -> f64 {
        if self.log_log {
            (self.intercept + self.slope * x.ln()).exp()
        } else {
            self.intercept + self.slope * x
        }
    }
}

/// Ordinary least squares of `y` on `x`, or of `ln y` on `ln x`.
pub fn fit_rate(points: &[(f64, f64)], log_log: bool) -> Result<RateFit> {
    if points.len() < 3 {
        bail!("a rate fit needs at least 3 points, got {}", points.len());
    }
    let mut x = Vec::with_capacity(points.len());
    let mut y = Vec::with_capacity(points.len());
    for &(a, b) in points {
        if !(a.is_finite() && b.is_finite()) {
            bail!("non-finite point ({a}, {b})");
        }
        if log_log {
            if !(a > 0.0 && b > 0.0) {
                bail!("log-log fit needs positive data, got ({a}, {b})");
            }
            x.push(a.ln());
            y.push(b.ln());
        } else {
            x.push(a);
            y.push(b);
        }
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 1e-28 * (1.0 + mx * mx) * n {
        bail!("degenerate abscissae");
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if ss_tot <= 1e-30 * (1.0 + my * my) * n {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        x,
        y,
        slope,
        intercept,
        r2,
        log_log,
    })
}

/// A line fitted to the leading part of a curve and lifted to lie above
/// it there, then tested on the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub slope: f64,
    pub intercept: f64,
    pub fitted: usize,
    /// Largest `(y - line)/line` over the points not used in the fit, or 0.
    pub worst_violation: f64,
}

/// Least-squares line through the first `ceil(fraction * n)` points, with
/// its intercept raised so that no fitted point lies above it.
pub fn upper_envelope(x: &[f64], y: &[f64], fraction: f64) -> Result<Envelope> {
    let k = ((fraction * x.len() as f64).ceil() as usize).clamp(3, x.len());
    let pts: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).take(k).collect();
    let f = fit_rate(&pts, false)?;
    let lift = pts
        .iter()
        .map(|(a, b)| b - f.intercept - f.slope * a)
        .fold(0.0f64, f64::max);
    let intercept = f.intercept + lift;
    let worst_violation = x[k..]
        .iter()
        .zip(&y[k..])
        .map(|(a, b)| {
            let line = intercept + f.slope * a;
            (b - line) / line.abs()
        })
        .fold(0.0f64, f64::max);
    Ok(Envelope {
        slope: f.slope,
        intercept,
        fitted: k,
        worst_violation,
    })
}
