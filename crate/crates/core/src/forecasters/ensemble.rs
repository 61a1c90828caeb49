//! Accuracy-weighted ensemble and residual-bootstrap class probabilities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{clamp_unit, ClassForecast, EnsembleSpec, PointForecast};
use crate::climatology::{classify, TercileClass};
use crate::error::{Error, Result};
use crate::evaluation::smape;

/// Weights proportional to 1/sMAPE. Members scoring worse than twice the best
/// get zero weight; non-finite scores are ignored. A perfect (zero) score
/// shares all weight among the perfect members.
pub fn weights_from_smape(names: &[String], scores: &[f64]) -> Result<EnsembleSpec> {
    if names.len() != scores.len() {
        return Err(Error::LengthMismatch {
            left: names.len(),
            right: scores.len(),
        });
    }
    let best = scores
        .iter()
        .copied()
        .filter(|s| s.is_finite() && *s >= 0.0)
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(Error::Fit("no ensemble member has a finite validation score".into()));
    }
    let raw: Vec<f64> = scores
        .iter()
        .map(|&s| {
            if !s.is_finite() || s < 0.0 || s > 2.0 * best {
                0.0
            } else if best == 0.0 {
                if s == 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                1.0 / s
            }
        })
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(EnsembleSpec {
        members: names.to_vec(),
        weights: raw.iter().map(|w| w / total).collect(),
    })
}

/// Scores every member's validation forecasts against the actuals with sMAPE
/// and weights them; members whose score is undefined get zero weight.
pub fn ensemble_weights(members: &[(String, Vec<f64>)], actuals: &[Option<f64>]) -> Result<EnsembleSpec> {
    let names: Vec<String> = members.iter().map(|(n, _)| n.clone()).collect();
    let scores: Vec<f64> = members
        .iter()
        .map(|(_, f)| smape(f, actuals).unwrap_or(f64::NAN))
        .collect();
    weights_from_smape(&names, &scores)
}

/// Weighted sum of member forecasts; members must share station, origin and horizon.
pub fn combine(spec: &EnsembleSpec, forecasts: &[PointForecast]) -> Result<PointForecast> {
    if spec.members.len() != forecasts.len() {
        return Err(Error::LengthMismatch {
            left: spec.members.len(),
            right: forecasts.len(),
        });
    }
    let first = forecasts
        .first()
        .ok_or_else(|| Error::InsufficientData("ensemble has no members".into()))?;
    let h = first.horizon();
    if let Some(bad) = forecasts.iter().find(|f| f.horizon() != h || f.origin != first.origin) {
        return Err(Error::Alignment(format!("member {} does not match the ensemble layout", bad.model_name)));
    }
    let values = (0..h)
        .map(|i| {
            spec.weights
                .iter()
                .zip(forecasts)
                .filter(|(w, _)| **w > 0.0)
                .map(|(w, f)| w * f.values[i])
                .sum()
        })
        .collect();
    Ok(PointForecast::new(&first.station_id, first.origin, values, "ensemble"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub draws: usize,
    pub min_residuals: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            draws: 1000,
            min_residuals: 20,
            seed: 0,
        }
    }
}

/// Class probabilities of `value + residual` against `(tau1, tau2)`, with
/// residuals resampled with replacement. Undersized samples give a one-hot
/// vector on the point value.
pub fn step_probabilities(
    value: f64,
    residuals: &[f64],
    terciles: (f64, f64),
    draws: usize,
    min_residuals: usize,
    rng: &mut impl Rng,
) -> [f64; 3] {
    let mut p = [0.0; 3];
    if residuals.len() < min_residuals.max(1) || draws == 0 {
        p[classify(clamp_unit(value), terciles.0, terciles.1).index()] = 1.0;
        return p;
    }
    let mut counts = [0usize; 3];
    for _ in 0..draws {
        let r = residuals[rng.random_range(0..residuals.len())];
        counts[classify(clamp_unit(value + r), terciles.0, terciles.1).index()] += 1;
    }
    for c in TercileClass::ALL {
        p[c.index()] = counts[c.index()] as f64 / draws as f64;
    }
    p
}

/// Per-step class probabilities; `terciles[h]` belongs to the target day of step `h`.
pub fn class_probabilities(
    forecast: &PointForecast,
    residuals: &[f64],
    terciles: &[Option<(f64, f64)>],
    config: &BootstrapConfig,
) -> Result<ClassForecast> {
    if terciles.len() != forecast.horizon() {
        return Err(Error::LengthMismatch {
            left: terciles.len(),
            right: forecast.horizon(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let probabilities = forecast
        .values
        .iter()
        .zip(terciles)
        .map(|(v, t)| t.map(|t| step_probabilities(*v, residuals, t, config.draws, config.min_residuals, &mut rng)))
        .collect();
    Ok(ClassForecast {
        station_id: forecast.station_id.clone(),
        origin: forecast.origin,
        probabilities,
    })
}
