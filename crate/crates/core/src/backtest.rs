//! Rolling-origin backtest: monthly retraining over a test year, daily
//! fixed-lead predictions, tercile labelling and metric aggregation.
//!
//! At each origin `o` every model is fitted twice. A validation fit uses days
//! before `o - validation_days - horizon` and issues lead-`horizon` forecasts
//! whose targets are the `validation_days` days before `o`; their errors set the
//! ensemble weights and the bootstrap residuals. The production fit uses all
//! days before `o` and issues one forecast on every day of the evaluation window.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use chrono::{Datelike, Months, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::DayIndex;
use crate::climatology::{classify, classify_series, ClimatologyTable, TercileClass, Tx90w90Series};
use crate::error::{Error, Result};
use crate::evaluation::{auc, confusion, f1_macro, f1_micro, roc_curve, smape, RocCurve};
use crate::features::{FeaturePanel, StationFeatures};
use crate::forecasters::{
    argmax_class, combine, step_probabilities, weights_from_smape, EnsembleSpec, FitOptions, FittedModel,
    ForecastRequest, ModelSpec, PointForecast, TrainingSeries, TrainingSet,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapPolicy {
    /// Keep only the most recent origin's prediction for each issue day.
    #[default]
    Latest,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    pub train_end: NaiveDate,
    pub test_year: i32,
    pub horizon: usize,
    /// Months between retraining origins.
    pub cadence_months: u32,
    pub origins: usize,
    /// Issue days per origin.
    pub eval_days: usize,
    pub validation_days: usize,
    /// Targets after this date have no actual. Defaults to the end of the test year.
    pub eval_end: Option<NaiveDate>,
    pub models: Vec<ModelSpec>,
    pub ensemble: bool,
    pub seed: u64,
    pub overlap: OverlapPolicy,
    pub bootstrap_draws: usize,
    pub min_residuals: usize,
    pub fit: FitOptions,
    /// Wall-clock budget per origin in seconds.
    pub budget_secs: Option<f64>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            train_end: NaiveDate::from_ymd_opt(2016, 12, 31).expect("valid date"),
            test_year: 2017,
            horizon: 90,
            cadence_months: 1,
            origins: 10,
            eval_days: 90,
            validation_days: 90,
            eval_end: None,
            models: vec![
                ModelSpec::Naive,
                ModelSpec::SeasonalNaive { period: 365 },
                ModelSpec::Theta {
                    theta: 2.0,
                    period: None,
                    variant: Default::default(),
                },
            ],
            ensemble: true,
            seed: 0,
            overlap: OverlapPolicy::Latest,
            bootstrap_draws: 1000,
            min_residuals: 20,
            fit: FitOptions::default(),
            budget_secs: None,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.eval_days == 0 || self.validation_days == 0 {
            return Err(Error::Domain("horizon, eval_days and validation_days must be positive".into()));
        }
        if self.cadence_months == 0 || self.origins == 0 {
            return Err(Error::Domain("need at least one origin and a positive cadence".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Domain("backtest needs at least one model".into()));
        }
        let mut names: Vec<String> = self.models.iter().map(ModelSpec::name).collect();
        names.sort();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Domain(format!("model {} listed twice", w[0])));
        }
        let first = self.origin_dates()?[0];
        if first <= self.train_end {
            return Err(Error::Domain(format!(
                "first origin {first} is not after train_end {}",
                self.train_end
            )));
        }
        Ok(())
    }

    /// First day of each retraining month.
    pub fn origin_dates(&self) -> Result<Vec<NaiveDate>> {
        let start = NaiveDate::from_ymd_opt(self.test_year, 1, 1)
            .ok_or_else(|| Error::Domain(format!("bad test year {}", self.test_year)))?;
        (0..self.origins)
            .map(|k| {
                start
                    .checked_add_months(Months::new(k as u32 * self.cadence_months))
                    .ok_or_else(|| Error::Domain("origin overflows the calendar".into()))
            })
            .collect()
    }

    pub fn eval_end_date(&self) -> NaiveDate {
        self.eval_end
            .unwrap_or_else(|| NaiveDate::from_ymd_opt(self.test_year, 12, 31).expect("valid date"))
    }
}

/// Target series and climatology of one station.
#[derive(Debug, Clone)]
pub struct StationData {
    pub tx: Tx90w90Series,
    pub climatology: ClimatologyTable,
}

impl StationData {
    pub fn station_id(&self) -> &str {
        &self.tx.station_id
    }
}

/// Classifies every available actual against the climatology; missing propagates.
pub fn label_actuals(tx: &Tx90w90Series, climatology: &ClimatologyTable) -> Vec<Option<TercileClass>> {
    classify_series(tx, climatology)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub station_id: String,
    /// Retraining origin.
    pub origin: DayIndex,
    pub issue: DayIndex,
    pub target: DayIndex,
    pub yhat: f64,
    pub probabilities: Option<[f64; 3]>,
    pub pred_class: Option<TercileClass>,
    pub actual: Option<f64>,
    pub actual_class: Option<TercileClass>,
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
}

impl PredictionRecord {
    /// Days since the retraining origin.
    pub fn lead(&self) -> i64 {
        self.issue.since(self.origin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutcome {
    pub name: String,
    /// Validation sMAPE per station; `None` where the model failed.
    pub validation_smape: BTreeMap<String, Option<f64>>,
    pub error: Option<String>,
    pub summary: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginSummary {
    pub origin: DayIndex,
    pub failed: bool,
    pub models: Vec<ModelOutcome>,
    pub weights: BTreeMap<String, EnsembleSpec>,
    /// Stations with no usable model at this origin.
    pub station_failures: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginTiming {
    pub origin: DayIndex,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub records: Vec<PredictionRecord>,
    pub origins: Vec<OriginSummary>,
    /// Wall-clock time is kept apart so the rest of the report is reproducible.
    #[serde(skip)]
    pub timing: Vec<OriginTiming>,
}

impl BacktestReport {
    pub fn failed_origins(&self) -> usize {
        self.origins.iter().filter(|o| o.failed).count()
    }

    pub fn is_partial(&self) -> bool {
        self.origins.iter().any(|o| o.failed || !o.station_failures.is_empty())
    }
}

fn mix(mut h: u64, v: u64) -> u64 {
    // splitmix64 finalizer over the running state
    h ^= v.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Deterministic RNG seed for one (station, issue day) draw.
fn draw_seed(seed: u64, station_id: &str, issue: DayIndex) -> u64 {
    let mut h = mix(seed, 0x5eed);
    for b in station_id.bytes() {
        h = mix(h, b as u64);
    }
    mix(h, issue.0 as u64)
}

type StationOutcome = (EnsembleSpec, Vec<PredictionRecord>);

struct Context<'a> {
    stations: &'a [StationData],
    features: Option<&'a FeaturePanel>,
    config: &'a BacktestConfig,
}

impl Context<'_> {
    fn features_of(&self, station_id: &str) -> Option<&StationFeatures> {
        self.features.and_then(|f| f.station(station_id))
    }

    fn training_set(&self) -> TrainingSet<'_> {
        static EMPTY: Vec<String> = Vec::new();
        TrainingSet {
            columns: self.features.map_or(&EMPTY[..], |f| &f.columns[..]),
            series: self
                .stations
                .iter()
                .map(|s| TrainingSeries {
                    station_id: s.station_id(),
                    start: s.tx.start,
                    target: &s.tx.values,
                    features: self.features_of(s.station_id()),
                })
                .collect(),
        }
    }

    /// Lead-`horizon` forecast issued on `issue` by one fitted model.
    fn forecast(&self, model: &FittedModel, station: &StationData, issue: DayIndex) -> Result<PointForecast> {
        let history = station.tx.history_through(issue);
        if history.len() as i64 != issue.since(station.tx.start) + 1 {
            return Err(Error::InsufficientData(format!("{} has no data through {issue}", station.station_id())));
        }
        let mut req = ForecastRequest::new(station.station_id(), station.tx.start, history, self.config.horizon)?;
        if let Some(f) = self.features_of(station.station_id()) {
            req = req.with_exogenous(f);
        }
        model.predict(&req)
    }

    fn run_origin(&self, origin: DayIndex) -> (Vec<PredictionRecord>, OriginSummary) {
        let cfg = self.config;
        let started = Instant::now();
        let deadline = cfg.budget_secs.map(|s| started + Duration::from_secs_f64(s));
        let options = FitOptions {
            deadline,
            ..cfg.fit.clone()
        };
        let set = self.training_set();
        let h = cfg.horizon as i64;
        let val_cutoff = origin.offset(-(cfg.validation_days as i64) - h);
        let names: Vec<String> = cfg.models.iter().map(ModelSpec::name).collect();

        let mut outcomes: Vec<ModelOutcome> = Vec::new();
        let mut production: Vec<Option<FittedModel>> = Vec::new();
        // validation forecasts per model, per station
        let mut validation: Vec<BTreeMap<String, Vec<f64>>> = Vec::new();
        let mut actuals: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
        for s in self.stations {
            let a = (0..cfg.validation_days as i64)
                .map(|k| s.tx.get(val_cutoff.offset(k + h)))
                .collect();
            actuals.insert(s.station_id().to_string(), a);
        }

        for spec in &cfg.models {
            let name = spec.name();
            let fitted = spec.fit(&set, val_cutoff, &options).and_then(|val_model| {
                let per_station: BTreeMap<String, Vec<f64>> = self
                    .stations
                    .par_iter()
                    .filter(|s| val_model.covers(s.station_id()))
                    .filter_map(|s| {
                        let v: Result<Vec<f64>> = (0..cfg.validation_days as i64)
                            .map(|k| {
                                let f = self.forecast(&val_model, s, val_cutoff.offset(k))?;
                                Ok(f.values[cfg.horizon - 1])
                            })
                            .collect();
                        match v {
                            Ok(v) => Some((s.station_id().to_string(), v)),
                            Err(e) => {
                                log::warn!("model={name} station={} origin={origin} validation failed: {e}", s.station_id());
                                None
                            }
                        }
                    })
                    .collect();
                let prod = spec.fit(&set, origin, &options)?;
                Ok((per_station, prod))
            });
            match fitted {
                Ok((per_station, prod)) => {
                    let scores = self
                        .stations
                        .iter()
                        .map(|s| {
                            let id = s.station_id().to_string();
                            let score = per_station.get(&id).and_then(|f| smape(f, &actuals[&id]).ok());
                            (id, score)
                        })
                        .collect();
                    outcomes.push(ModelOutcome {
                        name,
                        validation_smape: scores,
                        error: None,
                        summary: Some(prod.summary()),
                    });
                    validation.push(per_station);
                    production.push(Some(prod));
                }
                Err(e) => {
                    log::warn!("model={name} origin={origin} dropped: {e}");
                    outcomes.push(ModelOutcome {
                        name,
                        validation_smape: self.stations.iter().map(|s| (s.station_id().to_string(), None)).collect(),
                        error: Some(e.to_string()),
                        summary: None,
                    });
                    validation.push(BTreeMap::new());
                    production.push(None);
                }
            }
        }

        let per_station: Vec<(String, Result<StationOutcome>)> = self
            .stations
            .par_iter()
            .map(|s| {
                let id = s.station_id().to_string();
                let r = self.station_predictions(s, origin, &names, &outcomes, &validation, &production, &actuals[&id]);
                (id, r)
            })
            .collect();

        let mut records = Vec::new();
        let mut weights = BTreeMap::new();
        let mut station_failures = BTreeMap::new();
        for (id, r) in per_station {
            match r {
                Ok((w, recs)) => {
                    weights.insert(id, w);
                    records.extend(recs);
                }
                Err(e) => {
                    log::warn!("station={id} origin={origin} no forecasts: {e}");
                    station_failures.insert(id, e.to_string());
                }
            }
        }
        let failed = records.is_empty();
        if failed {
            log::error!("origin={origin} failed for every station");
        }
        log::info!(
            "stage=backtest origin={origin} records={} elapsed={:.2}s",
            records.len(),
            started.elapsed().as_secs_f64()
        );
        (
            records,
            OriginSummary {
                origin,
                failed,
                models: outcomes,
                weights,
                station_failures,
            },
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn station_predictions(
        &self,
        s: &StationData,
        origin: DayIndex,
        names: &[String],
        outcomes: &[ModelOutcome],
        validation: &[BTreeMap<String, Vec<f64>>],
        production: &[Option<FittedModel>],
        actuals: &[Option<f64>],
    ) -> Result<StationOutcome> {
        let cfg = self.config;
        let id = s.station_id();
        let usable: Vec<usize> = (0..names.len())
            .filter(|&m| production[m].as_ref().is_some_and(|p| p.covers(id)))
            .collect();
        let scores: Vec<f64> = usable
            .iter()
            .map(|&m| outcomes[m].validation_smape.get(id).copied().flatten().unwrap_or(f64::NAN))
            .collect();
        let member_names: Vec<String> = usable.iter().map(|&m| names[m].clone()).collect();
        let mut spec = weights_from_smape(&member_names, &scores)?;
        if !cfg.ensemble {
            // best single model; ties go to the earlier one
            let best = (0..scores.len())
                .filter(|&i| scores[i].is_finite())
                .min_by(|a, b| scores[*a].total_cmp(&scores[*b]))
                .expect("weights exist, so some score is finite");
            spec.weights = (0..scores.len()).map(|i| if i == best { 1.0 } else { 0.0 }).collect();
        }
        let active: Vec<usize> = (0..usable.len()).filter(|&i| spec.weights[i] > 0.0).collect();

        // validation residuals of the combined forecast
        let mut residuals = Vec::new();
        for (k, a) in actuals.iter().enumerate() {
            let combined: Option<f64> = active
                .iter()
                .map(|&i| validation[usable[i]].get(id).map(|v| spec.weights[i] * v[k]))
                .sum();
            if let (Some(a), Some(c)) = (a, combined) {
                residuals.push(a - c);
            }
        }

        let eval_end = DayIndex::from_date(cfg.eval_end_date())?;
        let mut records = Vec::with_capacity(cfg.eval_days);
        for k in 0..cfg.eval_days as i64 {
            let issue = origin.offset(k);
            let members = active
                .iter()
                .map(|&i| self.forecast(production[usable[i]].as_ref().expect("usable"), s, issue))
                .collect::<Result<Vec<_>>>()?;
            let sub = EnsembleSpec {
                members: active.iter().map(|&i| spec.members[i].clone()).collect(),
                weights: active.iter().map(|&i| spec.weights[i]).collect(),
            };
            let yhat = combine(&sub, &members)?.values[cfg.horizon - 1];
            let target = issue.offset(cfg.horizon as i64);
            let tau = s.climatology.terciles_on(target);
            let probabilities = tau.map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(draw_seed(cfg.seed, id, issue));
                step_probabilities(yhat, &residuals, t, cfg.bootstrap_draws, cfg.min_residuals, &mut rng)
            });
            let actual = if target <= eval_end { s.tx.get(target) } else { None };
            records.push(PredictionRecord {
                station_id: id.to_string(),
                origin,
                issue,
                target,
                yhat,
                probabilities,
                pred_class: probabilities.map(|p| argmax_class(&p)),
                actual,
                actual_class: actual.zip(tau).map(|(a, (t1, t2))| classify(a, t1, t2)),
                tau1: tau.map(|t| t.0),
                tau2: tau.map(|t| t.1),
            });
        }
        Ok((spec, records))
    }
}

/// Runs every origin in parallel and assembles the report in origin order.
pub fn run_backtest(stations: &[StationData], features: Option<&FeaturePanel>, config: &BacktestConfig) -> Result<BacktestReport> {
    config.validate()?;
    if stations.is_empty() {
        return Err(Error::InsufficientData("backtest needs at least one station".into()));
    }
    let ctx = Context {
        stations,
        features,
        config,
    };
    let origins = config
        .origin_dates()?
        .into_iter()
        .map(DayIndex::from_date)
        .collect::<Result<Vec<_>>>()?;
    let results: Vec<(Vec<PredictionRecord>, OriginSummary, f64)> = origins
        .par_iter()
        .map(|&o| {
            let t0 = Instant::now();
            let (r, s) = ctx.run_origin(o);
            (r, s, t0.elapsed().as_secs_f64())
        })
        .collect();
    let mut report = BacktestReport {
        records: Vec::new(),
        origins: Vec::new(),
        timing: Vec::new(),
    };
    for (r, s, secs) in results {
        report.timing.push(OriginTiming {
            origin: s.origin,
            seconds: secs,
        });
        report.records.extend(r);
        report.origins.push(s);
    }
    report
        .records
        .sort_by(|a, b| (&a.station_id, a.origin, a.issue).cmp(&(&b.station_id, b.origin, b.issue)));
    Ok(report)
}

/// Records retained under the overlap policy, in (station, issue) order.
pub fn select_records(records: &[PredictionRecord], policy: OverlapPolicy) -> Vec<&PredictionRecord> {
    match policy {
        OverlapPolicy::All => records.iter().collect(),
        OverlapPolicy::Latest => {
            let mut latest: BTreeMap<(&str, DayIndex), &PredictionRecord> = BTreeMap::new();
            for r in records {
                let e = latest.entry((r.station_id.as_str(), r.issue)).or_insert(r);
                if r.origin > e.origin {
                    *e = r;
                }
            }
            latest.into_values().collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    /// Calendar month of the issue day.
    Month,
    Quarter,
    Origin,
    Station,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub period: String,
    pub station_id: String,
    pub samples: usize,
    pub f1_macro: f64,
    pub f1_micro: f64,
    /// One-vs-rest AUC per class; `None` when the class never or always occurs.
    pub auc: [Option<f64>; 3],
    pub smape: Option<f64>,
}

const ALL: &str = "all";

fn group_key(r: &PredictionRecord, g: Grouping) -> Result<(String, String)> {
    let issue = r.issue.to_date()?;
    Ok(match g {
        Grouping::Month => (format!("{}-{:02}", issue.year(), issue.month()), ALL.into()),
        Grouping::Quarter => (format!("{}-Q{}", issue.year(), (issue.month() - 1) / 3 + 1), ALL.into()),
        Grouping::Origin => (r.origin.to_string(), ALL.into()),
        Grouping::Station => (ALL.into(), r.station_id.clone()),
        Grouping::Global => (ALL.into(), ALL.into()),
    })
}

fn class_roc(records: &[&PredictionRecord], c: TercileClass) -> Result<RocCurve> {
    let (scores, labels): (Vec<f64>, Vec<bool>) = records
        .iter()
        .filter_map(|r| Some((r.probabilities?[c.index()], r.actual_class? == c)))
        .unzip();
    roc_curve(&scores, &labels)
}

fn metrics(period: String, station_id: String, records: &[&PredictionRecord]) -> Result<Option<MetricRow>> {
    let scored: Vec<&PredictionRecord> = records
        .iter()
        .copied()
        .filter(|r| r.actual_class.is_some() && r.pred_class.is_some())
        .collect();
    if scored.is_empty() {
        return Ok(None);
    }
    let pred: Vec<Option<TercileClass>> = scored.iter().map(|r| r.pred_class).collect();
    let act: Vec<Option<TercileClass>> = scored.iter().map(|r| r.actual_class).collect();
    let counts = confusion(&pred, &act)?;
    let auc = TercileClass::ALL.map(|c| class_roc(&scored, c).ok().map(|curve| auc(&curve)));
    let yhat: Vec<f64> = scored.iter().map(|r| r.yhat).collect();
    let actual: Vec<Option<f64>> = scored.iter().map(|r| r.actual).collect();
    Ok(Some(MetricRow {
        period,
        station_id,
        samples: scored.len(),
        f1_macro: f1_macro(&counts),
        f1_micro: f1_micro(&counts),
        auc,
        smape: smape(&yhat, &actual).ok(),
    }))
}

/// Metric rows per group. Groups without any scorable record are omitted.
pub fn aggregate(records: &[&PredictionRecord], grouping: Grouping) -> Result<Vec<MetricRow>> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no prediction records to aggregate".into()));
    }
    let mut groups: BTreeMap<(String, String), Vec<&PredictionRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(group_key(r, grouping)?).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((period, station), recs) in groups {
        match metrics(period.clone(), station.clone(), &recs)? {
            Some(row) => out.push(row),
            None => log::warn!("group period={period} station={station} has no scorable records; omitted"),
        }
    }
    Ok(out)
}

/// Pooled one-vs-rest ROC curves per class; `None` where undefined.
pub fn global_roc(records: &[&PredictionRecord]) -> [Option<RocCurve>; 3] {
    TercileClass::ALL.map(|c| class_roc(records, c).ok())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadError {
    /// Days since the retraining origin.
    pub lead: i64,
    pub samples: usize,
    pub mae: f64,
    pub smape: f64,
    pub accuracy: Option<f64>,
}

/// Error statistics by days since retraining, over records with actuals.
pub fn lead_errors(records: &[&PredictionRecord]) -> Vec<LeadError> {
    let mut by_lead: BTreeMap<i64, Vec<&PredictionRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.actual.is_some()) {
        by_lead.entry(r.lead()).or_default().push(r);
    }
    by_lead
        .into_iter()
        .map(|(lead, rs)| {
            let yhat: Vec<f64> = rs.iter().map(|r| r.yhat).collect();
            let act: Vec<Option<f64>> = rs.iter().map(|r| r.actual).collect();
            let mae = rs.iter().map(|r| (r.yhat - r.actual.expect("filtered")).abs()).sum::<f64>() / rs.len() as f64;
            let classed: Vec<bool> = rs
                .iter()
                .filter_map(|r| Some(r.pred_class? == r.actual_class?))
                .collect();
            LeadError {
                lead,
                samples: rs.len(),
                mae,
                smape: smape(&yhat, &act).expect("nonempty"),
                accuracy: (!classed.is_empty())
                    .then(|| classed.iter().filter(|c| **c).count() as f64 / classed.len() as f64),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Report files

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| x.to_string())
}

fn opt_class(c: Option<TercileClass>) -> &'static str {
    c.map_or("NA", TercileClass::as_str)
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

pub const PREDICTIONS_HEADER: &str =
    "station_id,origin,target_date,yhat,p_below,p_normal,p_above,pred_class,actual,actual_class";
pub const METRICS_HEADER: &str = "period,station_id,f1_macro,f1_micro,auc_below,auc_normal,auc_above,smape";
pub const PLOT_HEADER: &str = "date,actual,prediction,tau1,tau2";

pub fn write_predictions_csv(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let mut s = String::from(PREDICTIONS_HEADER);
    s.push('\n');
    for r in records {
        let p = r.probabilities.map(|p| p.map(Some)).unwrap_or([None; 3]);
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.station_id,
            r.origin,
            r.target,
            r.yhat,
            opt(p[0]),
            opt(p[1]),
            opt(p[2]),
            opt_class(r.pred_class),
            opt(r.actual),
            opt_class(r.actual_class)
        ));
    }
    write_file(path, &s)
}

/// One `<station_id>.csv` per station: actual, prediction and tercile bounds per target day.
pub fn write_plot_csv(dir: &Path, records: &[&PredictionRecord]) -> Result<()> {
    let mut by_station: BTreeMap<&str, BTreeMap<DayIndex, &PredictionRecord>> = BTreeMap::new();
    for r in records {
        let e = by_station.entry(&r.station_id).or_default().entry(r.target).or_insert(r);
        if r.origin > e.origin {
            *e = r;
        }
    }
    for (station, rows) in by_station {
        let mut s = String::from(PLOT_HEADER);
        s.push('\n');
        for (t, r) in rows {
            s.push_str(&format!("{t},{},{},{},{}\n", opt(r.actual), r.yhat, opt(r.tau1), opt(r.tau2)));
        }
        write_file(&dir.join(format!("{station}.csv")), &s)?;
    }
    Ok(())
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.period,
            r.station_id,
            r.f1_macro,
            r.f1_micro,
            opt(r.auc[0]),
            opt(r.auc[1]),
            opt(r.auc[2]),
            opt(r.smape)
        ));
    }
    write_file(path, &s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value).map_err(|e| Error::Integrity(e.to_string()))?;
    body.push('\n');
    write_file(path, &body)
}

/// `roc_below.csv`, `roc_normal.csv` and `roc_above.csv`; undefined curves are skipped.
pub fn write_roc_csv(dir: &Path, curves: &[Option<RocCurve>; 3]) -> Result<()> {
    for (c, curve) in TercileClass::ALL.iter().zip(curves) {
        let Some(curve) = curve else {
            log::warn!("ROC for class {c} is undefined; file skipped");
            continue;
        };
        let mut s = String::from("threshold,fpr,tpr\n");
        for p in &curve.points {
            s.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.tpr));
        }
        write_file(&dir.join(format!("roc_{}.csv", c.as_str())), &s)?;
    }
    Ok(())
}

pub fn write_lead_error_csv(path: &Path, rows: &[LeadError]) -> Result<()> {
    let mut s = String::from("lead,samples,mae,smape,accuracy\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.lead, r.samples, r.mae, r.smape, opt(r.accuracy)));
    }
    write_file(path, &s)
}

/// Reads a predictions file written by [`write_predictions_csv`]. Issue days
/// are recovered as `target - horizon`.
pub fn read_predictions_csv(path: &Path, horizon: usize) -> Result<Vec<PredictionRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::parse(path, 0, e.to_string()))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    if header.join(",") != PREDICTIONS_HEADER {
        return Err(Error::parse(path, 1, format!("expected header {PREDICTIONS_HEADER}")));
    }
    let num = |f: &str, line: usize| -> Result<Option<f64>> {
        if f == "NA" {
            Ok(None)
        } else {
            f.parse().map(Some).map_err(|_| Error::parse(path, line, format!("bad number {f:?}")))
        }
    };
    let class = |f: &str, line: usize| -> Result<Option<TercileClass>> {
        if f == "NA" {
            Ok(None)
        } else {
            f.parse().map(Some).map_err(|_| Error::parse(path, line, format!("bad class {f:?}")))
        }
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, 0, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let target = DayIndex::parse_iso(&rec[2]).map_err(|e| Error::parse(path, line, e.to_string()))?;
        let p = [num(&rec[4], line)?, num(&rec[5], line)?, num(&rec[6], line)?];
        out.push(PredictionRecord {
            station_id: rec[0].to_string(),
            origin: DayIndex::parse_iso(&rec[1]).map_err(|e| Error::parse(path, line, e.to_string()))?,
            issue: target.offset(-(horizon as i64)),
            target,
            yhat: num(&rec[3], line)?.ok_or_else(|| Error::parse(path, line, "missing yhat"))?,
            probabilities: match p {
                [Some(a), Some(b), Some(c)] => Some([a, b, c]),
                _ => None,
            },
            pred_class: class(&rec[7], line)?,
            actual: num(&rec[8], line)?,
            actual_class: class(&rec[9], line)?,
            tau1: None,
            tau2: None,
        });
    }
    Ok(out)
}
