//! Additive-error exponential smoothing state-space models.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{check_deadline, ls_line};
use crate::error::{Error, Result};
use crate::optim::pattern_search;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trend {
    N,
    A,
    Ad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Season {
    N,
    A,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EtsConfig {
    pub trend: Trend,
    pub season: Season,
    pub period: usize,
}

impl fmt::Display for EtsConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ETS(A,{:?},{:?})", self.trend, self.season)
    }
}

impl EtsConfig {
    pub fn new(trend: Trend, season: Season, period: usize) -> Self {
        EtsConfig { trend, season, period }
    }

    fn seasonal(&self) -> bool {
        self.season == Season::A
    }

    fn smoothing_count(&self) -> usize {
        1 + match self.trend {
            Trend::N => 0,
            Trend::A => 1,
            Trend::Ad => 2,
        } + self.seasonal() as usize
    }

    /// Smoothing parameters plus free initial states.
    pub fn parameter_count(&self) -> usize {
        let states = 1 + (self.trend != Trend::N) as usize + if self.seasonal() { self.period - 1 } else { 0 };
        self.smoothing_count() + states
    }

    pub fn min_length(&self) -> usize {
        if self.seasonal() {
            2 * self.period
        } else {
            10
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtsParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub phi: f64,
}

impl EtsParams {
    pub const ALPHA_RANGE: (f64, f64) = (1e-4, 0.9999);
    pub const PHI_RANGE: (f64, f64) = (0.8, 0.999);

    fn from_vec(config: &EtsConfig, v: &[f64]) -> Self {
        let mut it = v.iter().copied();
        let alpha = it.next().unwrap_or(0.5);
        let beta = if config.trend != Trend::N { it.next().unwrap_or(0.0) } else { 0.0 };
        let gamma = if config.seasonal() { it.next().unwrap_or(0.0) } else { 0.0 };
        let phi = if config.trend == Trend::Ad { it.next().unwrap_or(1.0) } else { 1.0 };
        EtsParams { alpha, beta, gamma, phi }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtsState {
    pub level: f64,
    pub trend: f64,
    /// `seasonal[i % period]` is the seasonal term for time index `i`.
    pub seasonal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtsFit {
    pub config: EtsConfig,
    pub params: EtsParams,
    pub sse: f64,
    pub aicc: f64,
    pub n: usize,
    /// State after the last observation.
    pub state: EtsState,
}

impl EtsFit {
    /// Forecasts steps `1..=horizon` after the last observation.
    pub fn forecast(&self, horizon: usize) -> Vec<f64> {
        let s = &self.state;
        let phi = self.params.phi;
        let mut damp = 0.0;
        let mut pow = 1.0;
        (1..=horizon)
            .map(|h| {
                pow *= phi;
                damp += pow;
                let trend = match self.config.trend {
                    Trend::N => 0.0,
                    Trend::A => h as f64 * s.trend,
                    Trend::Ad => damp * s.trend,
                };
                let season = if self.config.seasonal() {
                    s.seasonal[(self.n - 1 + h) % self.config.period]
                } else {
                    0.0
                };
                s.level + trend + season
            })
            .collect()
    }

    /// Same model and smoothing parameters run over new data.
    pub fn refit_states(&self, y: &[f64]) -> Result<EtsFit> {
        ets_fit_with(y, self.config, self.params)
    }
}

/// Initial states: seasonal terms from a classical additive decomposition of
/// the first two periods; level and trend from a least-squares line.
fn initial_state(y: &[f64], config: &EtsConfig) -> EtsState {
    let m = config.period;
    let (seasonal, window): (Vec<f64>, Vec<f64>) = if config.seasonal() {
        let k = 2 * m;
        let ma = centered_moving_average(&y[..k], m);
        let mut sums = vec![(0.0, 0usize); m];
        for (i, v) in ma.iter().enumerate() {
            if let Some(v) = v {
                sums[i % m].0 += y[i] - v;
                sums[i % m].1 += 1;
            }
        }
        let mut s: Vec<f64> = sums.iter().map(|(a, n)| if *n > 0 { a / *n as f64 } else { 0.0 }).collect();
        let mean = s.iter().sum::<f64>() / m as f64;
        s.iter_mut().for_each(|v| *v -= mean);
        let z = (0..k).map(|i| y[i] - s[i % m]).collect();
        (s, z)
    } else {
        (Vec::new(), y[..y.len().min(10)].to_vec())
    };
    let (a, b) = ls_line(&window);
    let (level, trend) = match config.trend {
        Trend::N => (window.iter().sum::<f64>() / window.len() as f64, 0.0),
        // level at time -1 so the first one-step forecast is a + 0·b
        Trend::A | Trend::Ad => (a - b, b),
    };
    EtsState { level, trend, seasonal }
}

pub(crate) fn centered_moving_average(y: &[f64], m: usize) -> Vec<Option<f64>> {
    let n = y.len();
    let mut out = vec![None; n];
    if m < 2 || n < m + 1 {
        return out;
    }
    if m % 2 == 1 {
        let h = m / 2;
        for i in h..n - h {
            out[i] = Some(y[i - h..=i + h].iter().sum::<f64>() / m as f64);
        }
    } else {
        // 2×m moving average
        let h = m / 2;
        for i in h..n - h {
            let inner: f64 = y[i + 1 - h..i + h].iter().sum();
            out[i] = Some((inner + 0.5 * (y[i - h] + y[i + h])) / m as f64);
        }
    }
    out
}

fn run_filter(y: &[f64], config: &EtsConfig, p: &EtsParams, mut s: EtsState) -> (f64, EtsState) {
    let m = config.period.max(1);
    let mut sse = 0.0;
    for (i, &obs) in y.iter().enumerate() {
        let damped = match config.trend {
            Trend::N => 0.0,
            Trend::A => s.trend,
            Trend::Ad => p.phi * s.trend,
        };
        let season = if config.seasonal() { s.seasonal[i % m] } else { 0.0 };
        let e = obs - (s.level + damped + season);
        sse += e * e;
        s.level += damped + p.alpha * e;
        if config.trend != Trend::N {
            s.trend = damped + p.beta * e;
        }
        if config.seasonal() {
            s.seasonal[i % m] += p.gamma * e;
        }
    }
    (if sse.is_finite() { sse } else { f64::INFINITY }, s)
}

fn aicc(sse: f64, n: usize, k: usize) -> f64 {
    let nf = n as f64;
    // exact fits would give ln(0)
    let sse = sse.max(1e-20 * nf);
    nf * (sse / nf).ln() + 2.0 * k as f64 * nf / (nf - k as f64 - 1.0)
}

fn check_input(y: &[f64], config: &EtsConfig) -> Result<()> {
    if config.seasonal() && config.period < 2 {
        return Err(Error::Domain("seasonal ETS needs period >= 2".into()));
    }
    if y.len() < config.min_length() {
        return Err(Error::InsufficientData(format!(
            "{config} needs {} observations, got {}",
            config.min_length(),
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite observation".into()));
    }
    Ok(())
}

/// Runs the model with fixed smoothing parameters.
pub fn ets_fit_with(y: &[f64], config: EtsConfig, params: EtsParams) -> Result<EtsFit> {
    check_input(y, &config)?;
    let init = initial_state(y, &config);
    let (sse, state) = run_filter(y, &config, &params, init);
    if !sse.is_finite() {
        return Err(Error::Fit(format!("{config}: non-finite error sum")));
    }
    let k = config.parameter_count();
    Ok(EtsFit {
        config,
        params,
        sse,
        aicc: if y.len() > k + 1 { aicc(sse, y.len(), k) } else { f64::INFINITY },
        n: y.len(),
        state,
    })
}

/// Estimates smoothing parameters by minimizing the one-step squared error:
/// a coarse grid followed by a bounded pattern search.
pub fn ets_fit(y: &[f64], config: EtsConfig) -> Result<EtsFit> {
    check_input(y, &config)?;
    let init = initial_state(y, &config);
    let (alo, ahi) = EtsParams::ALPHA_RANGE;
    let (plo, phi_hi) = EtsParams::PHI_RANGE;
    let mut lower = vec![alo];
    let mut upper = vec![ahi];
    let mut grids: Vec<Vec<f64>> = vec![vec![0.1, 0.3, 0.5, 0.7, 0.9, 0.9999]];
    if config.trend != Trend::N {
        lower.push(alo);
        upper.push(ahi);
        grids.push(vec![1e-4, 0.01, 0.1]);
    }
    if config.seasonal() {
        lower.push(alo);
        upper.push(ahi);
        grids.push(vec![0.01, 0.1, 0.3]);
    }
    if config.trend == Trend::Ad {
        lower.push(plo);
        upper.push(phi_hi);
        grids.push(vec![0.9, 0.98]);
    }
    let has_beta = config.trend != Trend::N;
    // beta never exceeds alpha
    let constrain = move |v: &mut [f64]| {
        if has_beta && v[1] > v[0] {
            v[1] = v[0];
        }
    };
    let mut objective = |v: &[f64]| run_filter(y, &config, &EtsParams::from_vec(&config, v), init.clone()).0;

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut point = vec![0.0; grids.len()];
    let total: usize = grids.iter().map(Vec::len).product();
    for mut code in 0..total {
        for (d, g) in grids.iter().enumerate() {
            point[d] = g[code % g.len()];
            code /= g.len();
        }
        let mut cand = point.clone();
        constrain(&mut cand);
        let f = objective(&cand);
        if f.is_finite() && best.as_ref().is_none_or(|(_, b)| f < *b) {
            best = Some((cand, f));
        }
    }
    let (start, _) = best.ok_or_else(|| Error::Fit(format!("{config}: non-finite error at every start")))?;
    let (x, _) = pattern_search(&mut objective, &start, &lower, &upper, &constrain, 400, 1e-4);
    ets_fit_with(y, config, EtsParams::from_vec(&config, &x))
}

/// All admissible models ordered by parameter count.
fn candidate_configs(n: usize, period: usize) -> Vec<EtsConfig> {
    let mut out = Vec::new();
    for season in [Season::N, Season::A] {
        for trend in [Trend::N, Trend::A, Trend::Ad] {
            let c = EtsConfig::new(trend, season, period);
            if season == Season::A && period < 2 {
                continue;
            }
            if n >= c.min_length() && n > c.parameter_count() + 1 {
                out.push(c);
            }
        }
    }
    out.sort_by_key(|c| c.parameter_count());
    out
}

/// Fits every admissible configuration and keeps the lowest AICc; ties go to
/// the model with fewer parameters. Seasonal models are considered when
/// `period >= 2` and the history covers two periods.
pub fn auto_ets(y: &[f64], period: usize) -> Result<EtsFit> {
    select_ets(y, period, true, None)
}

pub(crate) fn select_ets(y: &[f64], period: usize, allow_seasonal: bool, deadline: Option<Instant>) -> Result<EtsFit> {
    let configs: Vec<EtsConfig> = candidate_configs(y.len(), period)
        .into_iter()
        .filter(|c| allow_seasonal || !c.seasonal())
        .collect();
    select_among(y, &configs, deadline)
}

fn select_among(y: &[f64], configs: &[EtsConfig], deadline: Option<Instant>) -> Result<EtsFit> {
    if configs.is_empty() {
        return Err(Error::InsufficientData(format!("no admissible ETS model for {} observations", y.len())));
    }
    let mut best: Option<EtsFit> = None;
    let mut last_err = None;
    for &c in configs {
        check_deadline(deadline)?;
        match ets_fit(y, c) {
            Ok(fit) => {
                let better = best
                    .as_ref()
                    .is_none_or(|b| fit.aicc < b.aicc - 1e-9 * b.aicc.abs().max(1.0));
                if better {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Fit("every ETS model failed".into())))
}
