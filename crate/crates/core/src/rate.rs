//! Empirical convergence orders from `(resolution, error)` pairs.

use serde::Serialize;

/// Least-squares line through `(log2 resolution, log2 error)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    /// Intercept of the log2 line, i.e. `log2 C` in `error ~ C r^slope`.
    pub intercept: f64,
    pub r_squared: f64,
    /// Number of points used after dropping non-positive errors.
    pub used: usize,
    /// Indices of points dropped because the error was not positive.
    pub excluded: Vec<usize>,
}

impl RateFit {
    pub fn constant(&self) -> f64 {
        self.intercept.exp2()
    }
}

/// Ordinary least squares on log-transformed data. Points with a
/// non-positive (or non-finite) error or resolution are excluded; returns
/// `None` when fewer than two remain.
pub fn fit_rate(points: &[(f64, f64)]) -> Option<RateFit> {
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    let mut excluded = Vec::new();
    for (i, &(r, e)) in points.iter().enumerate() {
        if r > 0.0 && e > 0.0 && r.is_finite() && e.is_finite() {
            xs.push(r.log2());
            ys.push(e.log2());
        } else {
            excluded.push(i);
        }
    }
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Some(RateFit {
        slope,
        intercept,
        r_squared,
        used: n,
        excluded,
    })
}
