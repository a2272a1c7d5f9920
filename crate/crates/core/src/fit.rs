//! Exponential decay-rate estimation: least squares on log-means plus
//! bootstrap confidence intervals over disorder realizations.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Which distance the decay is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    /// Particle graph distance `|x - y|`.
    Hop,
    /// Max-type pseudo-metric.
    Upsilon,
    /// Max-type pseudo-metric plus the shell-collapsed Fock metric.
    UpsilonPlusShell,
    /// Walk metric plus the square-root Fock metric.
    WalkPlusFock,
}

/// Samples at one distance: the per-realization statistic values.
#[derive(Debug, Clone)]
pub struct DecayPoint {
    pub distance: f64,
    pub values: Vec<f64>,
}

/// Fitted exponential decay `mean(distance) ~ A e^{-rate * distance}`.
#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    /// Bootstrap standard error of the rate.
    pub std_err: f64,
    /// 95% bootstrap percentile interval for the rate.
    pub ci95: (f64, f64),
    pub n_distances: usize,
    pub n_realizations: usize,
    pub distance_kind: DistanceKind,
}

pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Plain least squares `y = a + b x`; returns `(slope, intercept)`.
pub fn least_squares(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom == 0.0 {
        return (f64::NAN, sy / n);
    }
    let slope = (n * sxy - sx * sy) / denom;
    (slope, (sy - slope * sx) / n)
}

fn rate_from_means(points: &[DecayPoint], means: &[f64]) -> Result<(f64, f64)> {
    for (p, &m) in points.iter().zip(means) {
        if !m.is_finite() || m <= 0.0 {
            return Err(Error::NonpositiveMean {
                distance: p.distance,
                mean: m,
            });
        }
    }
    let logpts: Vec<(f64, f64)> = points
        .iter()
        .zip(means)
        .map(|(p, &m)| (p.distance, m.ln()))
        .collect();
    let (slope, intercept) = least_squares(&logpts);
    Ok((-slope, intercept))
}

/// Fit `log mean(values)` against distance. All points must carry the same
/// number of realizations; the bootstrap resamples realization indices
/// jointly across distances.
pub fn decay_fit(
    points: &[DecayPoint],
    kind: DistanceKind,
    bootstrap_seed: u64,
) -> Result<DecayFit> {
    let mut distances: Vec<f64> = points.iter().map(|p| p.distance).collect();
    distances.sort_by(f64::total_cmp);
    distances.dedup();
    if distances.len() < 4 {
        return Err(Error::InsufficientDistances {
            needed: 4,
            got: distances.len(),
        });
    }
    let n_real = points.first().map(|p| p.values.len()).unwrap_or(0);
    if n_real == 0 || points.iter().any(|p| p.values.len() != n_real) {
        return Err(Error::InvalidParameter(
            "all decay points need the same positive realization count".into(),
        ));
    }

    let means: Vec<f64> = points
        .iter()
        .map(|p| p.values.iter().sum::<f64>() / n_real as f64)
        .collect();
    let (rate, intercept) = rate_from_means(points, &means)?;

    let mut rng = SplitMix64::new(bootstrap_seed);
    let mut rates = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let sample: Vec<usize> = (0..n_real).map(|_| rng.next_below(n_real)).collect();
        let boot_means: Vec<f64> = points
            .iter()
            .map(|p| sample.iter().map(|&i| p.values[i]).sum::<f64>() / n_real as f64)
            .collect();
        // resamples that zero out a mean are skipped rather than clamped
        if boot_means.iter().all(|&m| m > 0.0) {
            if let Ok((r, _)) = rate_from_means(points, &boot_means) {
                rates.push(r);
            }
        }
    }
    if rates.len() < BOOTSTRAP_RESAMPLES / 2 {
        return Err(Error::InvalidParameter(
            "bootstrap failed on most resamples; means too close to zero".into(),
        ));
    }
    rates.sort_by(f64::total_cmp);
    let mean_rate = rates.iter().sum::<f64>() / rates.len() as f64;
    let var = rates
        .iter()
        .map(|r| (r - mean_rate) * (r - mean_rate))
        .sum::<f64>()
        / (rates.len() - 1) as f64;
    let lo = rates[(0.025 * rates.len() as f64) as usize];
    let hi = rates[((0.975 * rates.len() as f64) as usize).min(rates.len() - 1)];

    Ok(DecayFit {
        rate,
        intercept,
        std_err: var.sqrt(),
        ci95: (lo, hi),
        n_distances: distances.len(),
        n_realizations: n_real,
        distance_kind: kind,
    })
}

/// Residual sum of squares of `log mean` against the fitted line; used to
/// compare distance variables as decay predictors.
pub fn fit_residual(points: &[DecayPoint], fit: &DecayFit) -> f64 {
    points
        .iter()
        .map(|p| {
            let mean = p.values.iter().sum::<f64>() / p.values.len() as f64;
            let predicted = fit.intercept - fit.rate * p.distance;
            let r = mean.ln() - predicted;
            r * r
        })
        .sum()
}
