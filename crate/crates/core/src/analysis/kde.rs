use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;

pub const DEFAULT_GRID_POINTS: usize = 512;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Density evaluated on an evenly spaced grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
    pub n_samples: usize,
}

impl KdeCurve {
    /// Trapezoidal integral of the density over the grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }
}

pub fn standard_normal_pdf(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

/// `f(x) = (1/(n·h)) Σ φ((x − s_i)/h)`.
pub fn gaussian_density(samples: &[f64], h: f64, x: f64) -> f64 {
    let sum: f64 = samples
        .iter()
        .map(|s| standard_normal_pdf((x - s) / h))
        .sum();
    sum / (samples.len() as f64 * h)
}

pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); needs two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() as f64 - 1.0)).sqrt()
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn check_finite(samples: &[f64]) -> Result<(), AnalysisError> {
    if samples.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(AnalysisError::NonFinite)
    }
}

/// Silverman's rule, `0.9 · min(σ, IQR/1.34) · n^(−1/5)`; when the
/// interquartile range is zero the spread term falls back to σ.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64, AnalysisError> {
    check_finite(samples)?;
    if samples.len() < 2 {
        return Err(AnalysisError::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let sigma = sample_std(samples);
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(AnalysisError::DegenerateSamples);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 {
        sigma.min(iqr / 1.34)
    } else {
        sigma
    };
    Ok(0.9 * spread * (samples.len() as f64).powf(-0.2))
}

/// Gaussian KDE on `linspace(min − 4h, max + 4h, grid_points)`.
///
/// Without an explicit bandwidth at least two distinct samples are needed;
/// with one, a single sample is allowed.
pub fn kde(
    samples: &[f64],
    grid_points: usize,
    bandwidth: Option<f64>,
) -> Result<KdeCurve, AnalysisError> {
    check_finite(samples)?;
    if grid_points < 2 {
        return Err(AnalysisError::InvalidArgument(
            "grid needs at least 2 points".into(),
        ));
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => {
            if samples.is_empty() {
                return Err(AnalysisError::TooFewSamples { needed: 1, got: 0 });
            }
            h
        }
        Some(h) => {
            return Err(AnalysisError::InvalidArgument(format!(
                "bandwidth must be positive, got {h}"
            )))
        }
        None => silverman_bandwidth(samples)?,
    };
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 4.0 * h;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 4.0 * h;
    let step = (hi - lo) / (grid_points - 1) as f64;
    let grid: Vec<f64> = (0..grid_points)
        .map(|i| {
            if i + 1 == grid_points {
                hi
            } else {
                lo + step * i as f64
            }
        })
        .collect();
    let density = grid
        .iter()
        .map(|&x| gaussian_density(samples, h, x))
        .collect();
    Ok(KdeCurve {
        grid,
        density,
        bandwidth: h,
        n_samples: samples.len(),
    })
}
