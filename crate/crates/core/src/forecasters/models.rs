//! Configurable model zoo: fitting at a retraining origin and prediction from
//! any later issue day with frozen parameters.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::arima::{arima_fit, ArimaFit, ArimaOrder, SeasonalOrder};
use super::ets::{ets_fit, ets_fit_with, select_ets, EtsConfig, EtsParams, Season, Trend};
use super::naive::{naive, seasonal_naive};
use super::tabular::{build_row, resolve_columns, ridge_fit, tabular_featurize, RidgeFit, TabularConfig, TabularInput};
use super::theta::{theta_fit, theta_with_alpha, ThetaVariant};
use super::{check_deadline, prepare_history, ForecastRequest, PointForecast, SeasonalMeans};
use crate::calendar::DayIndex;
use crate::error::{Error, Result};
use crate::features::StationFeatures;

fn annual() -> usize {
    365
}

fn two() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Naive,
    SeasonalNaive {
        #[serde(default = "annual")]
        period: usize,
    },
    AutoEts {
        #[serde(default = "annual")]
        period: usize,
        /// Also consider seasonal configurations.
        #[serde(default)]
        seasonal: bool,
    },
    Ets {
        trend: Trend,
        season: Season,
        #[serde(default = "annual")]
        period: usize,
    },
    Theta {
        #[serde(default = "two")]
        theta: f64,
        #[serde(default)]
        period: Option<usize>,
        #[serde(default)]
        variant: ThetaVariant,
    },
    Arima {
        order: ArimaOrder,
        #[serde(default)]
        seasonal: Option<SeasonalOrder>,
    },
    Tabular(TabularConfig),
}

impl ModelSpec {
    pub fn name(&self) -> String {
        match self {
            ModelSpec::Naive => "naive".into(),
            ModelSpec::SeasonalNaive { .. } => "seasonal_naive".into(),
            ModelSpec::AutoEts { .. } => "auto_ets".into(),
            ModelSpec::Ets { trend, season, .. } => format!("ets_{trend:?}_{season:?}").to_lowercase(),
            ModelSpec::Theta { .. } => "theta".into(),
            ModelSpec::Arima { order, seasonal } => match seasonal {
                None => format!("arima_{}{}{}", order.p, order.d, order.q),
                Some(s) => format!("sarima_{}{}{}_{}{}{}_{}", order.p, order.d, order.q, s.p, s.d, s.q, s.period),
            },
            ModelSpec::Tabular(_) => "tabular".into(),
        }
    }

    /// True for models fitted separately per station.
    pub fn is_local(&self) -> bool {
        !matches!(self, ModelSpec::Tabular(_))
    }

    /// Fits the model on every series using only days strictly before `cutoff`.
    pub fn fit(&self, set: &TrainingSet<'_>, cutoff: DayIndex, options: &FitOptions) -> Result<FittedModel> {
        check_deadline(options.deadline)?;
        let kind = match self {
            ModelSpec::Tabular(cfg) => fit_tabular(cfg, set, cutoff, options)?,
            _ => {
                let results: Vec<(String, Result<LocalFit>)> = set
                    .series
                    .par_iter()
                    .map(|s| (s.station_id.to_string(), self.fit_local(s, cutoff, options)))
                    .collect();
                let mut stations = BTreeMap::new();
                let mut failures = BTreeMap::new();
                for (id, r) in results {
                    match r {
                        Ok(fit) => {
                            stations.insert(id, fit);
                        }
                        Err(Error::BudgetExceeded) => return Err(Error::BudgetExceeded),
                        Err(e) => {
                            log::warn!("model={} station={id} cutoff={cutoff} fit failed: {e}", self.name());
                            failures.insert(id, e.to_string());
                        }
                    }
                }
                if stations.is_empty() && !failures.is_empty() {
                    return Err(Error::Fit(format!("{} failed for every station", self.name())));
                }
                Fitted::Local { stations, failures }
            }
        };
        Ok(FittedModel {
            name: self.name(),
            spec: self.clone(),
            cutoff,
            options: options.clone(),
            kind,
        })
    }

    fn fit_local(&self, s: &TrainingSeries<'_>, cutoff: DayIndex, options: &FitOptions) -> Result<LocalFit> {
        check_deadline(options.deadline)?;
        let avail = cutoff.since(s.start).clamp(0, s.target.len() as i64) as usize;
        let history = &s.target[..avail];
        let params = match self {
            ModelSpec::Naive => {
                naive(history, 1)?;
                LocalParams::Naive
            }
            ModelSpec::SeasonalNaive { period } => {
                seasonal_naive(history, 1, *period)?;
                LocalParams::SeasonalNaive { period: *period }
            }
            _ => {
                let prepared = prepare_history(history, options.fit_window, options.max_gap, true)?;
                let day0 = s.start.offset(prepared.offset as i64);
                let means = if options.deseasonalize {
                    Some(SeasonalMeans::fit(day0, &prepared.values)?)
                } else {
                    None
                };
                let y = deseasonalize(&prepared.values, day0, means.as_ref())?;
                let params = match self {
                    ModelSpec::AutoEts { period, seasonal } => {
                        let fit = select_ets(&y, *period, *seasonal, options.deadline)?;
                        LocalParams::Ets {
                            config: fit.config,
                            params: fit.params,
                        }
                    }
                    ModelSpec::Ets { trend, season, period } => {
                        let fit = ets_fit(&y, EtsConfig::new(*trend, *season, *period))?;
                        LocalParams::Ets {
                            config: fit.config,
                            params: fit.params,
                        }
                    }
                    ModelSpec::Theta { theta, period, variant } => {
                        let fit = theta_fit(&y, *theta, *period, *variant)?;
                        LocalParams::Theta {
                            theta: *theta,
                            period: *period,
                            variant: *variant,
                            alpha: fit.alpha,
                        }
                    }
                    ModelSpec::Arima { order, seasonal } => LocalParams::Arima(arima_fit(&y, *order, *seasonal)?),
                    _ => unreachable!("handled above"),
                };
                return Ok(LocalFit {
                    params,
                    seasonal_means: means,
                    observations: y.len(),
                });
            }
        };
        Ok(LocalFit {
            params,
            seasonal_means: None,
            observations: history.len(),
        })
    }
}

fn deseasonalize(y: &[f64], day0: DayIndex, means: Option<&SeasonalMeans>) -> Result<Vec<f64>> {
    match means {
        None => Ok(y.to_vec()),
        Some(m) => y
            .iter()
            .enumerate()
            .map(|(i, v)| Ok(v - m.at(day0.offset(i as i64))?))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Most recent days used for fitting and for rebuilding states at prediction.
    pub fit_window: usize,
    /// Longest run of missing values bridged by carrying the last value forward.
    pub max_gap: usize,
    /// Subtract per-calendar-day means of the fitting window before modelling.
    pub deseasonalize: bool,
    #[serde(skip)]
    pub deadline: Option<Instant>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            fit_window: 3650,
            max_gap: 30,
            deseasonalize: false,
            deadline: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainingSeries<'a> {
    pub station_id: &'a str,
    pub start: DayIndex,
    pub target: &'a [Option<f64>],
    pub features: Option<&'a StationFeatures>,
}

#[derive(Debug, Clone)]
pub struct TrainingSet<'a> {
    /// Column names of the feature panel, for covariate lookup.
    pub columns: &'a [String],
    pub series: Vec<TrainingSeries<'a>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LocalParams {
    Naive,
    SeasonalNaive {
        period: usize,
    },
    Ets {
        config: EtsConfig,
        params: EtsParams,
    },
    Theta {
        theta: f64,
        period: Option<usize>,
        variant: ThetaVariant,
        alpha: f64,
    },
    Arima(ArimaFit),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct LocalFit {
    params: LocalParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    seasonal_means: Option<SeasonalMeans>,
    observations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Fitted {
    Local {
        stations: BTreeMap<String, LocalFit>,
        failures: BTreeMap<String, String>,
    },
    Tabular {
        fit: RidgeFit,
        covariate_columns: Vec<usize>,
        static_columns: Vec<usize>,
    },
}

/// A model fitted at one origin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedModel {
    pub name: String,
    pub spec: ModelSpec,
    pub cutoff: DayIndex,
    pub options: FitOptions,
    kind: Fitted,
}

impl FittedModel {
    /// JSON summary of the fitted parameters.
    pub fn summary(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("fitted models serialize")
    }

    /// True when a fit exists for this station.
    pub fn covers(&self, station_id: &str) -> bool {
        match &self.kind {
            Fitted::Local { stations, .. } => stations.contains_key(station_id),
            Fitted::Tabular { .. } => true,
        }
    }

    /// Forecasts `request.horizon` days after the request's issue day.
    pub fn predict(&self, req: &ForecastRequest<'_>) -> Result<PointForecast> {
        let origin = req.origin();
        let h = req.horizon;
        let values = match &self.kind {
            Fitted::Local { stations, .. } => {
                let fit = stations
                    .get(req.station_id)
                    .ok_or_else(|| Error::Fit(format!("{} has no fit for station {}", self.name, req.station_id)))?;
                self.predict_local(fit, req)?
            }
            Fitted::Tabular {
                fit,
                covariate_columns,
                static_columns,
            } => {
                let ModelSpec::Tabular(cfg) = &self.spec else {
                    unreachable!("tabular fit carries a tabular spec")
                };
                let model = TabularModel {
                    cfg,
                    fit,
                    covariate_columns,
                    static_columns,
                };
                model.predict(req, self.options.max_gap)?
            }
        };
        debug_assert_eq!(values.len(), h);
        Ok(PointForecast::new(req.station_id, origin, values, &self.name))
    }

    fn predict_local(&self, fit: &LocalFit, req: &ForecastRequest<'_>) -> Result<Vec<f64>> {
        let h = req.horizon;
        match &fit.params {
            LocalParams::Naive => return naive(req.history, h),
            LocalParams::SeasonalNaive { period } => return seasonal_naive(req.history, h, *period),
            _ => {}
        }
        let prepared = prepare_history(req.history, self.options.fit_window, self.options.max_gap, false)?;
        let day0 = req.start.offset(prepared.offset as i64);
        let y = deseasonalize(&prepared.values, day0, fit.seasonal_means.as_ref())?;
        let mut out = match &fit.params {
            LocalParams::Ets { config, params } => ets_fit_with(&y, *config, *params)?.forecast(h),
            LocalParams::Theta {
                theta,
                period,
                variant,
                alpha,
            } => theta_with_alpha(&y, *theta, *period, *variant, *alpha)?.forecast(h),
            LocalParams::Arima(a) => a.forecast(&y, h)?,
            LocalParams::Naive | LocalParams::SeasonalNaive { .. } => unreachable!("returned above"),
        };
        if let Some(m) = &fit.seasonal_means {
            let origin = req.origin();
            for (i, v) in out.iter_mut().enumerate() {
                *v += m.at(origin.offset(i as i64 + 1))?;
            }
        }
        Ok(out)
    }
}

fn fit_tabular(cfg: &TabularConfig, set: &TrainingSet<'_>, cutoff: DayIndex, options: &FitOptions) -> Result<Fitted> {
    let truncated: Vec<TabularInput<'_>> = set
        .series
        .iter()
        .map(|s| {
            let avail = cutoff.since(s.start).clamp(0, s.target.len() as i64) as usize;
            TabularInput {
                start: s.start,
                target: &s.target[..avail],
                features: s.features,
            }
        })
        .collect();
    let from = cutoff.offset(-(options.fit_window as i64));
    let design = tabular_featurize(&truncated, set.columns, cfg, from, cutoff.offset(-1))?;
    check_deadline(options.deadline)?;
    let (covariate_columns, static_columns) = resolve_columns(cfg, set.columns)?;
    Ok(Fitted::Tabular {
        fit: ridge_fit(&design.rows, &design.targets, cfg.lambda)?,
        covariate_columns,
        static_columns,
    })
}

/// Latest observed value of column `k` at or before `t`, looking back at most `max_gap` days.
fn recent(f: &StationFeatures, k: usize, t: DayIndex, max_gap: usize) -> Option<f64> {
    (0..=max_gap as i64).find_map(|back| f.get(k, t.offset(-back)))
}

struct TabularModel<'a> {
    cfg: &'a TabularConfig,
    fit: &'a RidgeFit,
    covariate_columns: &'a [usize],
    static_columns: &'a [usize],
}

impl TabularModel<'_> {
    /// Recursive multi-step prediction: lags past the issue day use earlier steps.
    fn predict(&self, req: &ForecastRequest<'_>, max_gap: usize) -> Result<Vec<f64>> {
        let t = req.origin();
        let prepared = prepare_history(req.history, usize::MAX, max_gap, false)?;
        let first_day = req.start.offset(prepared.offset as i64);
        if req.exogenous.is_none() && !(self.covariate_columns.is_empty() && self.static_columns.is_empty()) {
            return Err(Error::Alignment("tabular prediction needs feature rows".into()));
        }
        let statics: Vec<Option<f64>> = self
            .static_columns
            .iter()
            .map(|&k| req.exogenous.and_then(|f| recent(f, k, t, max_gap)))
            .collect();
        let mut predicted: Vec<f64> = Vec::with_capacity(req.horizon);
        for h in 1..=req.horizon {
            let d = t.offset(h as i64);
            let lag = |l: usize| -> Option<f64> {
                let src = d.offset(-(l as i64));
                if src > t {
                    Some(predicted[(src.since(t) - 1) as usize])
                } else {
                    let i = src.since(first_day);
                    (i >= 0).then(|| prepared.values.get(i as usize).copied()).flatten()
                }
            };
            // covariates past the issue day are carried forward from day t
            let cov_day = d.offset(-1).min(t);
            let cov = |k: usize| req.exogenous.and_then(|f| recent(f, self.covariate_columns[k], cov_day, max_gap));
            let row = build_row(self.cfg, d, lag, cov, &statics)
                .ok_or_else(|| Error::InsufficientData(format!("missing tabular inputs for {d}")))?;
            predicted.push(self.fit.predict(&row));
        }
        Ok(predicted)
    }
}
