//! Theta method: a least-squares trend line combined with simple exponential
//! smoothing of a theta line.

use serde::{Deserialize, Serialize};

use super::ets::centered_moving_average;
use super::ls_line;
use crate::error::{Error, Result};
use crate::optim::pattern_search;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaVariant {
    /// Extends the trend line and adds `theta / 2` times the smoothed level of
    /// the detrended series. Linear series are extended exactly.
    #[default]
    TrendPreserving,
    /// Average of the trend-line extrapolation and the flat SES forecast of
    /// `theta·y + (1 - theta)·line`. Carries half the fitted slope.
    Classic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaFit {
    pub theta: f64,
    pub variant: ThetaVariant,
    pub alpha: f64,
    pub intercept: f64,
    pub slope: f64,
    pub n: usize,
    /// Final SES level of the smoothed series.
    pub level: f64,
    pub period: Option<usize>,
    /// Multiplicative seasonal indices, when seasonal adjustment was applied.
    pub seasonal: Option<Vec<f64>>,
}

impl ThetaFit {
    pub fn forecast(&self, horizon: usize) -> Vec<f64> {
        (1..=horizon)
            .map(|h| {
                let t = (self.n - 1 + h) as f64;
                let line = self.intercept + self.slope * t;
                let v = match self.variant {
                    ThetaVariant::TrendPreserving => line + self.theta / 2.0 * self.level,
                    ThetaVariant::Classic => 0.5 * line + 0.5 * self.level,
                };
                match &self.seasonal {
                    Some(idx) => v * idx[(self.n - 1 + h) % idx.len()],
                    None => v,
                }
            })
            .collect()
    }
}

/// Final SES level and one-step squared error sum.
fn ses(x: &[f64], alpha: f64) -> (f64, f64) {
    let mut level = x[0];
    let mut sse = 0.0;
    for v in &x[1..] {
        let e = v - level;
        sse += e * e;
        level += alpha * e;
    }
    (level, sse)
}

/// Multiplicative indices from a classical decomposition, or `None` when any
/// index is non-positive or non-finite.
fn seasonal_indices(y: &[f64], period: usize) -> Option<Vec<f64>> {
    if period < 2 || y.len() < 2 * period {
        return None;
    }
    let ma = centered_moving_average(y, period);
    let mut sums = vec![(0.0, 0usize); period];
    for (i, m) in ma.iter().enumerate() {
        if let Some(m) = m {
            if *m <= 0.0 {
                return None;
            }
            sums[i % period].0 += y[i] / m;
            sums[i % period].1 += 1;
        }
    }
    let mut idx: Vec<f64> = sums.iter().map(|(s, n)| s / *n as f64).collect();
    let mean = idx.iter().sum::<f64>() / period as f64;
    idx.iter_mut().for_each(|v| *v /= mean);
    idx.iter().all(|v| v.is_finite() && *v > 0.0).then_some(idx)
}

fn prepare(y: &[f64], period: Option<usize>) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    if y.len() < 5 {
        return Err(Error::InsufficientData(format!("theta needs 5 observations, got {}", y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite observation".into()));
    }
    let seasonal = period.and_then(|p| seasonal_indices(y, p));
    let adjusted = match &seasonal {
        Some(idx) => y.iter().enumerate().map(|(i, v)| v / idx[i % idx.len()]).collect(),
        None => y.to_vec(),
    };
    Ok((adjusted, seasonal))
}

fn smoothed_series(x: &[f64], theta: f64, variant: ThetaVariant, a: f64, b: f64) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(i, v)| {
            let line = a + b * i as f64;
            match variant {
                ThetaVariant::TrendPreserving => v - line,
                ThetaVariant::Classic => theta * v + (1.0 - theta) * line,
            }
        })
        .collect()
}

/// Theta forecast with the smoothing constant fixed.
pub fn theta_with_alpha(
    y: &[f64],
    theta: f64,
    period: Option<usize>,
    variant: ThetaVariant,
    alpha: f64,
) -> Result<ThetaFit> {
    let (x, seasonal) = prepare(y, period)?;
    let (a, b) = ls_line(&x);
    let z = smoothed_series(&x, theta, variant, a, b);
    let (level, _) = ses(&z, alpha);
    Ok(ThetaFit {
        theta,
        variant,
        alpha,
        intercept: a,
        slope: b,
        n: y.len(),
        level,
        period,
        seasonal,
    })
}

/// Fits the theta model, choosing the SES constant by least one-step squared error.
pub fn theta_fit(y: &[f64], theta: f64, period: Option<usize>, variant: ThetaVariant) -> Result<ThetaFit> {
    let (x, _) = prepare(y, period)?;
    let (a, b) = ls_line(&x);
    let z = smoothed_series(&x, theta, variant, a, b);
    let mut objective = |v: &[f64]| ses(&z, v[0]).1;
    let start = [0.05, 0.2, 0.5, 0.8, 0.9999]
        .into_iter()
        .map(|al| (al, objective(&[al])))
        .fold((0.5, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
        .0;
    let (alpha, _) = pattern_search(&mut objective, &[start], &[1e-4], &[0.9999], &|_| {}, 200, 1e-6);
    theta_with_alpha(y, theta, period, variant, alpha[0])
}

/// Default theta forecast (trend-preserving variant, no seasonal adjustment).
pub fn theta_forecast(y: &[f64], horizon: usize, theta: f64) -> Result<Vec<f64>> {
    Ok(theta_fit(y, theta, None, ThetaVariant::default())?.forecast(horizon))
}
