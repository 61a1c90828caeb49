//! Forecasting models for the daily warm-day fraction and the weighted ensemble.
//!
//! Every model produces `horizon`-step daily point forecasts clamped to [0, 1].
//! Model parameters are estimated once per retraining origin; predictions
//! issued later reuse those parameters with the history available on the
//! issue day.

mod arima;
mod ensemble;
mod ets;
mod models;
mod naive;
mod tabular;
mod theta;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::calendar::{cal_of, CalDate, DayIndex};
use crate::climatology::TercileClass;
use crate::error::{Error, Result};
use crate::features::StationFeatures;

pub use arima::{arima_fit, ArimaFit, ArimaOrder, SeasonalOrder};
pub use ensemble::{
    class_probabilities, combine, ensemble_weights, step_probabilities, weights_from_smape, BootstrapConfig,
};
pub use ets::{auto_ets, ets_fit, ets_fit_with, EtsConfig, EtsFit, EtsParams, Season, Trend};
pub use models::{FitOptions, FittedModel, ModelSpec, TrainingSeries, TrainingSet};
pub use naive::{naive, seasonal_naive};
pub use tabular::{ridge_fit, tabular_featurize, DesignMatrix, RidgeFit, TabularConfig};
pub use theta::{theta_fit, theta_forecast, theta_with_alpha, ThetaFit, ThetaVariant};

pub const DEFAULT_HORIZON: usize = 90;

/// Inputs for one forecast issued at the last day of `history`.
#[derive(Debug, Clone, Copy)]
pub struct ForecastRequest<'a> {
    pub station_id: &'a str,
    /// Day of `history[0]`.
    pub start: DayIndex,
    pub history: &'a [Option<f64>],
    pub exogenous: Option<&'a StationFeatures>,
    pub horizon: usize,
}

impl<'a> ForecastRequest<'a> {
    pub fn new(station_id: &'a str, start: DayIndex, history: &'a [Option<f64>], horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Domain("forecast horizon must be at least 1".into()));
        }
        if history.is_empty() {
            return Err(Error::InsufficientData(format!("{station_id}: empty history")));
        }
        Ok(ForecastRequest {
            station_id,
            start,
            history,
            exogenous: None,
            horizon,
        })
    }

    pub fn with_exogenous(mut self, features: &'a StationFeatures) -> Self {
        self.exogenous = Some(features);
        self
    }

    /// Issue day: the last day covered by the history.
    pub fn origin(&self) -> DayIndex {
        self.start.offset(self.history.len() as i64 - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointForecast {
    pub station_id: String,
    pub origin: DayIndex,
    /// Step `h` (1-based) forecasts day `origin + h`; stored at index `h - 1`.
    pub values: Vec<f64>,
    pub model_name: String,
}

impl PointForecast {
    pub fn new(station_id: &str, origin: DayIndex, values: Vec<f64>, model_name: &str) -> Self {
        PointForecast {
            station_id: station_id.into(),
            origin,
            values: values.into_iter().map(clamp_unit).collect(),
            model_name: model_name.into(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }
}

/// Per-step class probabilities; `None` where the target day has no terciles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassForecast {
    pub station_id: String,
    pub origin: DayIndex,
    pub probabilities: Vec<Option<[f64; 3]>>,
}

impl ClassForecast {
    pub fn predicted_class(&self, step: usize) -> Option<TercileClass> {
        self.probabilities.get(step)?.map(|p| argmax_class(&p))
    }
}

/// Most probable class; ties go to the lowest class index.
pub fn argmax_class(p: &[f64; 3]) -> TercileClass {
    let mut best = 0;
    for i in 1..3 {
        if p[i] > p[best] {
            best = i;
        }
    }
    TercileClass::from_index(best).expect("index < 3")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub members: Vec<String>,
    pub weights: Vec<f64>,
}

/// Clamps to [0, 1]; NaN maps to 0.
pub fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Cooperative wall-clock check.
pub(crate) fn check_deadline(deadline: Option<Instant>) -> Result<()> {
    match deadline {
        Some(d) if Instant::now() > d => Err(Error::BudgetExceeded),
        _ => Ok(()),
    }
}

/// Gap-filled tail of a history.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedHistory {
    /// Index into the original slice of `values[0]`.
    pub offset: usize,
    pub values: Vec<f64>,
}

/// Takes at most the last `window` values, carries the last observation
/// forward over gaps and drops leading missing values.
///
/// A run of more than `max_gap` missing values is an error when `strict`;
/// otherwise only the data after the last such run is used.
pub fn prepare_history(values: &[Option<f64>], window: usize, max_gap: usize, strict: bool) -> Result<PreparedHistory> {
    let from = values.len().saturating_sub(window.max(1));
    let tail = &values[from..];
    let first = tail
        .iter()
        .position(Option::is_some)
        .ok_or_else(|| Error::InsufficientData("history has no observed values".into()))?;
    let mut begin = first;
    let mut run = 0usize;
    for (i, v) in tail.iter().enumerate().skip(first) {
        if v.is_some() {
            if run > max_gap {
                if strict {
                    return Err(Error::Fit(format!("gap of {run} days exceeds the {max_gap}-day limit")));
                }
                begin = i;
            }
            run = 0;
        } else {
            run += 1;
        }
    }
    if run > max_gap {
        return Err(Error::Fit(format!("history ends with a {run}-day gap")));
    }
    let mut last = tail[begin].expect("begin is observed");
    let out = tail[begin..]
        .iter()
        .map(|v| {
            if let Some(x) = v {
                last = *x;
            }
            last
        })
        .collect();
    Ok(PreparedHistory {
        offset: from + begin,
        values: out,
    })
}

/// Mean value per calendar date (Feb 29 pooled with Feb 28), for optional
/// deseasonalization ahead of model fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalMeans {
    pub means: Vec<f64>,
}

impl SeasonalMeans {
    pub fn fit(start: DayIndex, values: &[f64]) -> Result<Self> {
        let mut sums = vec![(0.0, 0usize); 366];
        for (i, v) in values.iter().enumerate() {
            let k = cal_of(start.offset(i as i64))?.canonical().ordinal();
            sums[k].0 += v;
            sums[k].1 += 1;
        }
        let overall = values.iter().sum::<f64>() / values.len().max(1) as f64;
        let mut means: Vec<f64> = sums
            .iter()
            .map(|(s, n)| if *n > 0 { s / *n as f64 } else { overall })
            .collect();
        means[CalDate::FEB_29.ordinal()] = means[CalDate::FEB_29.canonical().ordinal()];
        Ok(SeasonalMeans { means })
    }

    pub fn at(&self, t: DayIndex) -> Result<f64> {
        Ok(self.means[cal_of(t)?.canonical().ordinal()])
    }
}

/// Least-squares line `a + b·i` over `i = 0..y.len()`.
pub(crate) fn ls_line(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    if y.len() < 2 {
        return (y.first().copied().unwrap_or(0.0), 0.0);
    }
    let xm = (n - 1.0) / 2.0;
    let ym = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - xm;
        sxy += dx * (v - ym);
        sxx += dx * dx;
    }
    let b = sxy / sxx;
    (ym - b * xm, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn locf_and_gaps() {
        let v = [None, Some(1.0), None, None, Some(2.0), None];
        let p = prepare_history(&v, 100, 30, true).unwrap();
        assert_eq!(p.offset, 1);
        assert_eq!(p.values, vec![1.0, 1.0, 1.0, 2.0, 2.0]);
        let mut long = vec![Some(1.0); 5];
        long.extend(vec![None; 31]);
        long.extend(vec![Some(3.0); 4]);
        assert!(prepare_history(&long, 100, 30, true).is_err());
        let p = prepare_history(&long, 100, 30, false).unwrap();
        assert_eq!((p.offset, p.values.len()), (36, 4));
        let p = prepare_history(&long, 3, 30, true).unwrap();
        assert_eq!(p.values, vec![3.0; 3]);
    }

    #[test]
    fn argmax_ties_low() {
        assert_eq!(argmax_class(&[0.4, 0.4, 0.2]), TercileClass::Below);
        assert_eq!(argmax_class(&[0.2, 0.4, 0.4]), TercileClass::Normal);
    }

    #[test]
    fn line_fit_exact() {
        let y: Vec<f64> = (0..7).map(|i| 0.1 + 0.02 * i as f64).collect();
        let (a, b) = ls_line(&y);
        assert!((a - 0.1).abs() < 1e-15 && (b - 0.02).abs() < 1e-15);
    }
}
