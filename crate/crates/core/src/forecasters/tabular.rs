//! Tabular featurization of the target series plus ridge regression.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::calendar::DayIndex;
use crate::error::{Error, Result};
use crate::features::{cyclical_encode, StationFeatures, STATIC_COLUMNS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularConfig {
    pub lags: Vec<usize>,
    /// Feature-panel columns entering at lag one.
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default = "yes")]
    pub statics: bool,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

fn yes() -> bool {
    true
}

fn default_lambda() -> f64 {
    1e-3
}

impl Default for TabularConfig {
    fn default() -> Self {
        TabularConfig {
            lags: vec![1, 90, 365],
            covariates: Vec::new(),
            statics: true,
            lambda: default_lambda(),
        }
    }
}

impl TabularConfig {
    pub fn column_names(&self) -> Vec<String> {
        let mut out: Vec<String> = self.lags.iter().map(|l| format!("lag{l}")).collect();
        out.extend(["year_sin", "year_cos", "day_of_week"].map(String::from));
        out.extend(self.covariates.iter().map(|c| format!("{c}_lag1")));
        if self.statics {
            out.extend(STATIC_COLUMNS.map(String::from));
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.lags.is_empty() || self.lags.contains(&0) {
            return Err(Error::Domain("tabular lags must be a nonempty set of positive integers".into()));
        }
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return Err(Error::Domain("ridge lambda must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Target series and optional feature rows for one station.
#[derive(Debug, Clone, Copy)]
pub struct TabularInput<'a> {
    pub start: DayIndex,
    pub target: &'a [Option<f64>],
    pub features: Option<&'a StationFeatures>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    /// (input index, day) of every row.
    pub keys: Vec<(usize, DayIndex)>,
}

/// Resolves covariate and static column positions in the feature panel.
pub(crate) fn resolve_columns(config: &TabularConfig, panel_columns: &[String]) -> Result<(Vec<usize>, Vec<usize>)> {
    let find = |name: &str| {
        panel_columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Alignment(format!("feature column {name} not found")))
    };
    let cov = config.covariates.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let stat = if config.statics {
        STATIC_COLUMNS.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok((cov, stat))
}

/// Feature row for predicting day `d`. `lag_value(l)` yields the target at `d - l`
/// and `covariate(k)` the lagged covariate `k`.
pub(crate) fn build_row(
    config: &TabularConfig,
    d: DayIndex,
    lag_value: impl Fn(usize) -> Option<f64>,
    covariate: impl Fn(usize) -> Option<f64>,
    statics: &[Option<f64>],
) -> Option<Vec<f64>> {
    let mut row = Vec::with_capacity(config.lags.len() + 3 + config.covariates.len() + statics.len());
    for &l in &config.lags {
        row.push(lag_value(l)?);
    }
    let (s, c) = cyclical_encode(d).ok()?;
    row.extend([s, c, d.0.rem_euclid(7) as f64]);
    for k in 0..config.covariates.len() {
        row.push(covariate(k)?);
    }
    for v in statics {
        row.push((*v)?);
    }
    Some(row)
}

/// One row per (station, day) in `[from, until]` whose lags, covariates and
/// target are all observed.
pub fn tabular_featurize(
    inputs: &[TabularInput<'_>],
    panel_columns: &[String],
    config: &TabularConfig,
    from: DayIndex,
    until: DayIndex,
) -> Result<DesignMatrix> {
    config.validate()?;
    let (cov_idx, stat_idx) = resolve_columns(config, panel_columns)?;
    let mut out = DesignMatrix {
        columns: config.column_names(),
        rows: Vec::new(),
        targets: Vec::new(),
        keys: Vec::new(),
    };
    for (s, input) in inputs.iter().enumerate() {
        if (!cov_idx.is_empty() || !stat_idx.is_empty()) && input.features.is_none() {
            return Err(Error::Alignment("tabular model needs feature rows".into()));
        }
        let at = |t: DayIndex| -> Option<f64> {
            let i = t.since(input.start);
            (i >= 0 && (i as usize) < input.target.len()).then(|| input.target[i as usize]).flatten()
        };
        let first = input.start.max(from);
        let last = input.start.offset(input.target.len() as i64 - 1).min(until);
        let mut d = first;
        while d <= last {
            let statics: Vec<Option<f64>> = stat_idx
                .iter()
                .map(|&k| input.features.and_then(|f| f.get(k, d.offset(-1))))
                .collect();
            let row = build_row(
                config,
                d,
                |l| at(d.offset(-(l as i64))),
                |k| input.features.and_then(|f| f.get(cov_idx[k], d.offset(-1))),
                &statics,
            );
            if let (Some(row), Some(y)) = (row, at(d)) {
                out.rows.push(row);
                out.targets.push(y);
                out.keys.push((s, d));
            }
            d = d.offset(1);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
}

impl RidgeFit {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }
}

/// Ridge regression on centered features with an unpenalized intercept,
/// solved through a Cholesky factorization of the normal equations.
pub fn ridge_fit(rows: &[Vec<f64>], targets: &[f64], lambda: f64) -> Result<RidgeFit> {
    if rows.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: rows.len(),
            right: targets.len(),
        });
    }
    let p = rows.first().map_or(0, Vec::len);
    if rows.len() < p + 1 || rows.is_empty() {
        return Err(Error::InsufficientData(format!("ridge needs {} rows, got {}", p + 1, rows.len())));
    }
    let n = rows.len();
    let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    let xm: Vec<f64> = (0..p).map(|j| x.column(j).mean()).collect();
    let ym = targets.iter().sum::<f64>() / n as f64;
    let xc = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - xm[j]);
    let yc = DVector::from_iterator(n, targets.iter().map(|v| v - ym));
    let mut a = xc.transpose() * &xc;
    for j in 0..p {
        a[(j, j)] += lambda;
    }
    let b = xc.transpose() * yc;
    let beta = if p == 0 {
        DVector::zeros(0)
    } else {
        let chol = a.clone().cholesky().ok_or(Error::Singular)?;
        // a factorization that succeeds only through rounding is still singular
        let l = chol.l();
        let dmax = (0..p).map(|j| l[(j, j)]).fold(0.0, f64::max);
        let dmin = (0..p).map(|j| l[(j, j)]).fold(f64::INFINITY, f64::min);
        if lambda == 0.0 && dmin <= 1e-10 * dmax {
            return Err(Error::Singular);
        }
        chol.solve(&b)
    };
    let intercept = ym - beta.iter().zip(&xm).map(|(b, m)| b * m).sum::<f64>();
    Ok(RidgeFit {
        intercept,
        coefficients: beta.iter().copied().collect(),
        lambda,
    })
}
