//! Feature engineering: cyclical date encodings, standardized precipitation
//! indices, gridded anomalies, ocean-basin masks and EOF decomposition.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma, Normal};

use crate::calendar::{cal_of, days_matching, year_length, CalDate, DayIndex};
use crate::error::{Error, Result};
use crate::ingest::{DailySeries, GridField, StationPanel, TimeStep, Variable};

/// Day-of-year angle as `(sin, cos)`; Jan 1 maps to angle 0.
pub fn cyclical_encode(t: DayIndex) -> Result<(f64, f64)> {
    let d = t.to_date()?;
    let theta = 2.0 * std::f64::consts::PI * (d.ordinal() - 1) as f64 / year_length(d.year()) as f64;
    Ok(theta.sin_cos())
}

// ---------------------------------------------------------------------------
// SPI

pub const SPI_CLAMP: f64 = 3.5;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpiConfig {
    pub timescales: Vec<usize>,
    pub first_cal_year: i32,
    pub last_cal_year: i32,
    /// Calibration samples are pooled over ±this many calendar days.
    pub pool_window: u32,
    pub min_samples: usize,
    /// Largest fraction of missing days tolerated inside an aggregation window.
    pub max_missing_fraction: f64,
}

impl Default for SpiConfig {
    fn default() -> Self {
        SpiConfig {
            timescales: vec![30, 90, 180, 270, 360],
            first_cal_year: 1981,
            last_cal_year: 2010,
            pool_window: 15,
            min_samples: 30,
            max_missing_fraction: 0.1,
        }
    }
}

/// Trailing sums over `timescale` days. Windows with too many gaps are
/// missing; others are rescaled to the full window length.
pub fn accumulate(precip: &[Option<f64>], timescale: usize, max_missing_fraction: f64) -> Vec<Option<f64>> {
    let mut out = vec![None; precip.len()];
    if timescale == 0 {
        return out;
    }
    let max_missing = (timescale as f64 * max_missing_fraction).floor() as usize;
    for i in (timescale - 1)..precip.len() {
        let window = &precip[i + 1 - timescale..=i];
        let present: Vec<f64> = window.iter().flatten().copied().collect();
        if timescale - present.len() <= max_missing && !present.is_empty() {
            let sum: f64 = present.iter().sum();
            out[i] = Some(if present.len() == timescale {
                sum
            } else {
                sum * timescale as f64 / present.len() as f64
            });
        }
    }
    out
}

/// Zero-inflated gamma fitted to accumulated precipitation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PrecipFit {
    /// Every calibration sample was zero.
    AllZero,
    /// Positive samples are all equal; CDF is a step at `value`.
    Constant { zero_prob: f64, value: f64 },
    Gamma { zero_prob: f64, shape: f64, scale: f64 },
}

impl PrecipFit {
    /// Fits with Thom's maximum-likelihood approximation on the positive samples.
    pub fn fit(samples: &[f64]) -> Self {
        let positive: Vec<f64> = samples.iter().copied().filter(|x| *x > 0.0).collect();
        if positive.is_empty() {
            return PrecipFit::AllZero;
        }
        let zero_prob = 1.0 - positive.len() as f64 / samples.len() as f64;
        let (lo, hi) = positive
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(*x), hi.max(*x)));
        let mean = positive.iter().sum::<f64>() / positive.len() as f64;
        if hi <= lo * (1.0 + 1e-12) {
            return PrecipFit::Constant { zero_prob, value: mean };
        }
        let mean_log = positive.iter().map(|x| x.ln()).sum::<f64>() / positive.len() as f64;
        let a = mean.ln() - mean_log;
        let shape = (1.0 + (1.0 + 4.0 * a / 3.0).sqrt()) / (4.0 * a);
        PrecipFit::Gamma {
            zero_prob,
            shape,
            scale: mean / shape,
        }
    }

    /// Mixed CDF `q + (1 - q) G(x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            PrecipFit::AllZero => 0.5,
            PrecipFit::Constant { zero_prob, value } => {
                if x <= 0.0 {
                    zero_prob
                } else {
                    let step = if (x - value).abs() <= 1e-9 * value {
                        0.5
                    } else if x > value {
                        1.0
                    } else {
                        0.0
                    };
                    zero_prob + (1.0 - zero_prob) * step
                }
            }
            PrecipFit::Gamma { zero_prob, shape, scale } => {
                if x <= 0.0 {
                    return zero_prob;
                }
                let g = Gamma::new(shape, 1.0 / scale).map(|d| d.cdf(x)).unwrap_or(f64::NAN);
                zero_prob + (1.0 - zero_prob) * g
            }
        }
    }
}

/// Standardized precipitation index at one timescale, aligned with `precip`.
///
/// Accumulations are calibrated per calendar date on the calibration years,
/// pooling ±`pool_window` days, and mapped through the standard normal quantile.
pub fn spi(precip: &[Option<f64>], start: DayIndex, timescale: usize, config: &SpiConfig) -> Result<Vec<Option<f64>>> {
    if timescale == 0 {
        return Err(Error::Domain("SPI timescale must be at least one day".into()));
    }
    let acc = accumulate(precip, timescale, config.max_missing_fraction);
    let at = |t: DayIndex| -> Option<f64> {
        let i = t.since(start);
        (i >= 0 && (i as usize) < acc.len()).then(|| acc[i as usize]).flatten()
    };

    // one fit per calendar date; Feb 29 reuses Feb 28
    let mut fits: Vec<Option<PrecipFit>> = vec![None; 366];
    for cal in CalDate::all() {
        if cal == CalDate::FEB_29 {
            continue;
        }
        let days = days_matching(cal, config.pool_window, config.first_cal_year..=config.last_cal_year)?;
        let sample: Vec<f64> = days.iter().filter_map(|t| at(*t)).collect();
        if sample.len() < config.min_samples {
            return Err(Error::InsufficientData(format!(
                "spi{timescale} {cal}: {} calibration samples, need {}",
                sample.len(),
                config.min_samples
            )));
        }
        fits[cal.ordinal()] = Some(PrecipFit::fit(&sample));
    }
    fits[CalDate::FEB_29.ordinal()] = fits[CalDate::FEB_29.canonical().ordinal()];

    let normal = Normal::standard();
    Ok(acc
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let a = (*a)?;
            let cal = cal_of(start.offset(i as i64)).ok()?;
            let fit = fits[cal.ordinal()]?;
            if matches!(fit, PrecipFit::AllZero) {
                return Some(0.0);
            }
            let p = fit.cdf(a);
            if p.is_nan() {
                return None;
            }
            Some(normal.inverse_cdf(p).clamp(-SPI_CLAMP, SPI_CLAMP))
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Gridded anomalies

fn anomaly_by<K: Ord + Copy>(field: &GridField, years: (i32, i32), key: impl Fn(NaiveDate) -> K) -> GridField {
    let n = field.ncell();
    let mut sums: BTreeMap<K, (Vec<f64>, Vec<usize>)> = BTreeMap::new();
    for (ti, date) in field.times.iter().enumerate() {
        if date.year() < years.0 || date.year() > years.1 {
            continue;
        }
        let entry = sums.entry(key(*date)).or_insert_with(|| (vec![0.0; n], vec![0; n]));
        for (c, v) in field.slice(ti).iter().enumerate() {
            if !v.is_nan() {
                entry.0[c] += v;
                entry.1[c] += 1;
            }
        }
    }
    let mut out = field.clone();
    for (ti, date) in field.times.iter().enumerate() {
        let clim = sums.get(&key(*date));
        for c in 0..n {
            let v = &mut out.values[ti * n + c];
            *v = match clim {
                Some((s, k)) if k[c] > 0 => *v - s[c] / k[c] as f64,
                _ => f64::NAN,
            };
        }
    }
    out
}

/// Monthly anomalies relative to the same calendar month over the reference years.
pub fn monthly_anomaly(field: &GridField, first_ref_year: i32, last_ref_year: i32) -> Result<GridField> {
    if field.step != TimeStep::Monthly {
        return Err(Error::Domain("monthly_anomaly needs a monthly field".into()));
    }
    Ok(anomaly_by(field, (first_ref_year, last_ref_year), |d| d.month()))
}

/// Daily anomalies relative to the same calendar date (Feb 29 grouped with Feb 28).
pub fn daily_anomaly(field: &GridField, first_ref_year: i32, last_ref_year: i32) -> Result<GridField> {
    if field.step != TimeStep::Daily {
        return Err(Error::Domain("daily_anomaly needs a daily field".into()));
    }
    Ok(anomaly_by(field, (first_ref_year, last_ref_year), |d| {
        CalDate::of_date(d).canonical().ordinal()
    }))
}

/// A lon/lat box in degrees east / north, bounds inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinSpec {
    pub name: String,
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
}

impl BasinSpec {
    pub fn new(name: &str, lon: (f64, f64), lat: (f64, f64)) -> Result<Self> {
        if !(0.0..=360.0).contains(&lon.0) || !(0.0..=360.0).contains(&lon.1) || lon.0 > lon.1 {
            return Err(Error::Domain(format!("basin {name}: bad longitude range {lon:?}")));
        }
        if lat.0 < -90.0 || lat.1 > 90.0 || lat.0 > lat.1 {
            return Err(Error::Domain(format!("basin {name}: bad latitude range {lat:?}")));
        }
        Ok(BasinSpec {
            name: name.into(),
            lon_min: lon.0,
            lon_max: lon.1,
            lat_min: lat.0,
            lat_max: lat.1,
        })
    }

    pub fn pacific() -> Self {
        Self::new("pacific", (125.0, 290.0), (-70.0, 60.0)).expect("valid basin")
    }

    pub fn atlantic() -> Self {
        Self::new("atlantic", (290.0, 340.0), (-70.0, 70.0)).expect("valid basin")
    }

    pub fn indian() -> Self {
        Self::new("indian", (20.0, 125.0), (-60.0, 20.0)).expect("valid basin")
    }

    pub fn hgt500_region() -> Self {
        Self::new("hgt500", (240.0, 360.0), (-70.0, -10.0)).expect("valid basin")
    }

    pub fn globe() -> Self {
        Self::new("globe", (0.0, 360.0), (-90.0, 90.0)).expect("valid basin")
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "pacific" => Some(Self::pacific()),
            "atlantic" => Some(Self::atlantic()),
            "indian" => Some(Self::indian()),
            "hgt500" => Some(Self::hgt500_region()),
            "globe" => Some(Self::globe()),
            _ => None,
        }
    }

    pub fn contains_lon(&self, lon: f64) -> bool {
        let inside = |l: f64| l >= self.lon_min && l <= self.lon_max;
        inside(lon) || inside(lon + 360.0)
    }

    pub fn contains_lat(&self, lat: f64) -> bool {
        lat >= self.lat_min && lat <= self.lat_max
    }
}

/// Restricts a field to the cells inside a basin.
pub fn basin_subset(field: &GridField, basin: &BasinSpec) -> Result<GridField> {
    let lat_idx: Vec<usize> = (0..field.nlat()).filter(|&i| basin.contains_lat(field.lats[i])).collect();
    let lon_idx: Vec<usize> = (0..field.nlon()).filter(|&j| basin.contains_lon(field.lons[j])).collect();
    if lat_idx.is_empty() || lon_idx.is_empty() {
        return Err(Error::Domain(format!("basin {} does not intersect the grid", basin.name)));
    }
    let mut values = Vec::with_capacity(field.ntime() * lat_idx.len() * lon_idx.len());
    for t in 0..field.ntime() {
        for &i in &lat_idx {
            for &j in &lon_idx {
                values.push(field.get(t, i, j));
            }
        }
    }
    Ok(GridField {
        variable: field.variable,
        step: field.step,
        times: field.times.clone(),
        lats: lat_idx.iter().map(|&i| field.lats[i]).collect(),
        lons: lon_idx.iter().map(|&j| field.lons[j]).collect(),
        values,
    })
}

// ---------------------------------------------------------------------------
// EOF

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EofOptions {
    /// Number of modes retained.
    pub modes: usize,
    /// Weight cells by sqrt(cos(latitude)).
    pub area_weighting: bool,
    /// Scale every cell to unit variance before decomposition.
    pub standardize: bool,
    /// Last time stamp of the analysis period; later stamps are projected.
    pub analysis_end: Option<NaiveDate>,
}

impl Default for EofOptions {
    fn default() -> Self {
        EofOptions {
            modes: 20,
            area_weighting: false,
            standardize: false,
            analysis_end: None,
        }
    }
}

/// Spatial patterns, principal components and explained variance of a field.
#[derive(Debug, Clone)]
pub struct EofBasis {
    /// (lat, lon) of every retained cell, in column order.
    pub cells: Vec<(f64, f64)>,
    pub times: Vec<NaiveDate>,
    /// Number of leading time stamps used to fit the basis.
    pub analysis_len: usize,
    /// Mode × cell, orthonormal rows.
    pub patterns: DMatrix<f64>,
    /// Time × mode. NaN where a projected slice has missing cells.
    pub pcs: DMatrix<f64>,
    /// Fraction of the total variance of all modes carried by each retained mode.
    pub variance_fraction: Vec<f64>,
    /// Per-cell mean removed before decomposition.
    pub means: Vec<f64>,
    /// Per-cell multiplier applied after centering.
    pub scales: Vec<f64>,
}

impl EofBasis {
    pub fn modes(&self) -> usize {
        self.variance_fraction.len()
    }

    /// Rank-`modes` reconstruction of the centered, scaled analysis matrix.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let pcs = self.pcs.rows(0, self.analysis_len);
        pcs * &self.patterns
    }

    /// The first `m` principal components as a daily/monthly feature source.
    pub fn pc_feature(&self, prefix: &str, step: TimeStep, m: usize) -> PcFeature {
        let m = m.min(self.modes());
        PcFeature {
            prefix: prefix.into(),
            step,
            times: self.times.clone(),
            values: (0..m).map(|k| self.pcs.column(k).iter().copied().collect()).collect(),
        }
    }

    /// Writes `<name>_patterns.csv`, `<name>_pcs.csv` and `<name>_variance.csv`.
    pub fn write_csv(&self, dir: &Path, name: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut pat = String::from("mode,lat,lon,value\n");
        for k in 0..self.modes() {
            for (c, (lat, lon)) in self.cells.iter().enumerate() {
                pat.push_str(&format!("{},{lat},{lon},{}\n", k + 1, self.patterns[(k, c)]));
            }
        }
        let mut pcs = String::from("date");
        for k in 0..self.modes() {
            pcs.push_str(&format!(",pc{}", k + 1));
        }
        pcs.push('\n');
        for (t, d) in self.times.iter().enumerate() {
            pcs.push_str(&d.format("%Y-%m-%d").to_string());
            for k in 0..self.modes() {
                let v = self.pcs[(t, k)];
                if v.is_nan() {
                    pcs.push_str(",NA");
                } else {
                    pcs.push_str(&format!(",{v}"));
                }
            }
            pcs.push('\n');
        }
        let mut var = String::from("mode,fraction,cumulative\n");
        let mut cum = 0.0;
        for (k, f) in self.variance_fraction.iter().enumerate() {
            cum += f;
            var.push_str(&format!("{},{f},{cum}\n", k + 1));
        }
        for (suffix, body) in [("patterns", pat), ("pcs", pcs), ("variance", var)] {
            let p = dir.join(format!("{name}_{suffix}.csv"));
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

/// Empirical orthogonal functions of an anomaly field via the thin SVD of the
/// centered (time × cell) matrix. Cells with any missing value during the
/// analysis period are excluded.
pub fn eof_decompose(anomalies: &GridField, options: &EofOptions) -> Result<EofBasis> {
    let analysis_len = match options.analysis_end {
        Some(end) => anomalies.times.iter().take_while(|d| **d <= end).count(),
        None => anomalies.ntime(),
    };
    if analysis_len < 2 {
        return Err(Error::InsufficientData(format!(
            "EOF analysis needs at least 2 time steps, got {analysis_len}"
        )));
    }
    let n = anomalies.ncell();
    let keep: Vec<usize> = (0..n)
        .filter(|&c| (0..analysis_len).all(|t| !anomalies.values[t * n + c].is_nan()))
        .collect();
    if keep.is_empty() {
        return Err(Error::Degenerate("every cell has missing values in the analysis period".into()));
    }
    let nlon = anomalies.nlon();
    let cells: Vec<(f64, f64)> = keep
        .iter()
        .map(|&c| (anomalies.lats[c / nlon], anomalies.lons[c % nlon]))
        .collect();

    let raw = |t: usize, k: usize| anomalies.values[t * n + keep[k]];
    let ns = keep.len();
    let means: Vec<f64> = (0..ns)
        .map(|k| (0..analysis_len).map(|t| raw(t, k)).sum::<f64>() / analysis_len as f64)
        .collect();
    let scales: Vec<f64> = (0..ns)
        .map(|k| {
            let mut s = 1.0;
            if options.area_weighting {
                s *= cells[k].0.to_radians().cos().max(0.0).sqrt();
            }
            if options.standardize {
                let var = (0..analysis_len).map(|t| (raw(t, k) - means[k]).powi(2)).sum::<f64>()
                    / (analysis_len - 1) as f64;
                if var > 0.0 {
                    s /= var.sqrt();
                }
            }
            s
        })
        .collect();
    let x = DMatrix::from_fn(analysis_len, ns, |t, k| (raw(t, k) - means[k]) * scales[k]);
    let total: f64 = x.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return Err(Error::Degenerate("anomaly field is identically zero".into()));
    }

    let svd = x.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|a, b| svd.singular_values[*b].total_cmp(&svd.singular_values[*a]));
    let sum_sq: f64 = svd.singular_values.iter().map(|s| s * s).sum();
    let k = options.modes.min(order.len());

    let mut patterns = DMatrix::zeros(k, ns);
    let mut variance_fraction = Vec::with_capacity(k);
    for (row, &src) in order.iter().take(k).enumerate() {
        let mut p: Vec<f64> = v_t.row(src).iter().copied().collect();
        // sign convention: largest-magnitude loading positive
        let pivot = p.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if pivot < 0.0 {
            p.iter_mut().for_each(|v| *v = -*v);
        }
        for (c, v) in p.into_iter().enumerate() {
            patterns[(row, c)] = v;
        }
        let s = svd.singular_values[src];
        variance_fraction.push(s * s / sum_sq);
    }

    // project every slice (analysis and later) onto the patterns
    let mut pcs = DMatrix::from_element(anomalies.ntime(), k, f64::NAN);
    for t in 0..anomalies.ntime() {
        let row: Vec<f64> = (0..ns).map(|c| (raw(t, c) - means[c]) * scales[c]).collect();
        if row.iter().any(|v| v.is_nan()) {
            continue;
        }
        for m in 0..k {
            pcs[(t, m)] = (0..ns).map(|c| row[c] * patterns[(m, c)]).sum();
        }
    }

    Ok(EofBasis {
        cells,
        times: anomalies.times.clone(),
        analysis_len,
        patterns,
        pcs,
        variance_fraction,
        means,
        scales,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EofSelection {
    pub count: usize,
    /// False when all retained modes together fall short of the target.
    pub reached: bool,
}

/// Smallest number of leading modes whose cumulative variance reaches `target`.
pub fn select_eofs(variance_fraction: &[f64], target: f64) -> Result<EofSelection> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::Domain(format!("EOF variance target {target} outside (0, 1]")));
    }
    let mut cum = 0.0;
    for (i, f) in variance_fraction.iter().enumerate() {
        cum += f;
        // tolerate rounding in fractions that should sum exactly to the target
        if cum >= target - 1e-12 {
            return Ok(EofSelection {
                count: i + 1,
                reached: true,
            });
        }
    }
    log::warn!(
        "{} EOF modes explain {cum:.3} of variance, below target {target}",
        variance_fraction.len()
    );
    Ok(EofSelection {
        count: variance_fraction.len(),
        reached: false,
    })
}

// ---------------------------------------------------------------------------
// Feature panel

/// Principal-component time series used as exogenous features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcFeature {
    pub prefix: String,
    pub step: TimeStep,
    pub times: Vec<NaiveDate>,
    /// Mode × time.
    pub values: Vec<Vec<f64>>,
}

impl PcFeature {
    pub fn column_names(&self) -> Vec<String> {
        (1..=self.values.len()).map(|k| format!("{}_pc{k}", self.prefix)).collect()
    }

    /// Index of the latest stamp whose value is known on `day`. Monthly values
    /// become known on the first day of the following month.
    fn available(&self, day: NaiveDate) -> Option<usize> {
        let known = |ti: usize| match self.step {
            TimeStep::Daily => self.times[ti],
            TimeStep::Monthly => self.times[ti]
                .checked_add_months(chrono::Months::new(1))
                .expect("month in range"),
        };
        // times are increasing; find last ti with known(ti) <= day
        let mut lo = 0usize;
        let mut hi = self.times.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            if known(mid) <= day {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        let ti = lo.checked_sub(1)?;
        // no stale values: a monthly value lives for one month, a daily value for one day
        let stale = match self.step {
            TimeStep::Daily => day != self.times[ti],
            TimeStep::Monthly => {
                let k = known(ti);
                (k.year(), k.month()) != (day.year(), day.month())
            }
        };
        (!stale).then_some(ti)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub spi: SpiConfig,
    pub statics: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            spi: SpiConfig::default(),
            statics: true,
        }
    }
}

pub const DAILY_COLUMNS: [&str; 5] = ["tmax", "tmin", "tmean", "tmean90", "precip"];
pub const CYCLICAL_COLUMNS: [&str; 2] = ["year_sin", "year_cos"];
pub const STATIC_COLUMNS: [&str; 3] = ["lat", "lon", "alt"];

/// One station's features, column-major and dense from `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationFeatures {
    pub station_id: String,
    pub start: DayIndex,
    /// Column × day.
    pub data: Vec<Vec<Option<f64>>>,
}

impl StationFeatures {
    pub fn len(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, column: usize, t: DayIndex) -> Option<f64> {
        let i = t.since(self.start);
        if i < 0 {
            return None;
        }
        self.data.get(column)?.get(i as usize).copied().flatten()
    }
}

/// Per-station, per-day feature rows sharing one column layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePanel {
    pub columns: Vec<String>,
    pub stations: Vec<StationFeatures>,
}

impl FeaturePanel {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn station(&self, station_id: &str) -> Option<&StationFeatures> {
        self.stations.iter().find(|s| s.station_id == station_id)
    }

    /// Writes `<station_id>.csv` files with header `station_id,date,<columns>`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for s in &self.stations {
            let p = dir.join(format!("{}.csv", s.station_id));
            let mut out = std::io::BufWriter::new(fs::File::create(&p).map_err(|e| Error::io(&p, e))?);
            let mut write = || -> std::io::Result<()> {
                writeln!(out, "station_id,date,{}", self.columns.join(","))?;
                for i in 0..s.len() {
                    write!(out, "{},{}", s.station_id, s.start.offset(i as i64))?;
                    for col in &s.data {
                        match col[i] {
                            Some(v) => write!(out, ",{v}")?,
                            None => write!(out, ",NA")?,
                        }
                    }
                    writeln!(out)?;
                }
                out.flush()
            };
            write().map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }

    /// Reads every `*.csv` under `dir` written by [`Self::write_dir`].
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let mut files: Vec<_> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        let mut columns: Option<Vec<String>> = None;
        let mut stations = Vec::new();
        for p in files {
            let mut rdr = csv::ReaderBuilder::new()
                .from_path(&p)
                .map_err(|e| Error::parse(&p, 0, e.to_string()))?;
            let header: Vec<String> = rdr
                .headers()
                .map_err(|e| Error::parse(&p, 1, e.to_string()))?
                .iter()
                .map(String::from)
                .collect();
            if header.len() < 2 || header[0] != "station_id" || header[1] != "date" {
                return Err(Error::parse(&p, 1, "expected header station_id,date,..."));
            }
            let cols = header[2..].to_vec();
            match &columns {
                Some(c) if *c != cols => {
                    return Err(Error::Alignment(format!("{} has a different column layout", p.display())))
                }
                None => columns = Some(cols.clone()),
                _ => {}
            }
            let mut station = StationFeatures {
                station_id: String::new(),
                start: DayIndex(0),
                data: vec![Vec::new(); cols.len()],
            };
            let mut expect: Option<DayIndex> = None;
            for rec in rdr.records() {
                let rec = rec.map_err(|e| Error::parse(&p, 0, e.to_string()))?;
                let line = rec.position().map_or(0, |x| x.line() as usize);
                let t = DayIndex::parse_iso(&rec[1]).map_err(|e| Error::parse(&p, line, e.to_string()))?;
                match expect {
                    None => {
                        station.station_id = rec[0].to_string();
                        station.start = t;
                    }
                    Some(e) if e != t => return Err(Error::parse(&p, line, "feature rows must be consecutive days")),
                    _ => {}
                }
                expect = Some(t.offset(1));
                for (k, col) in station.data.iter_mut().enumerate() {
                    let f = &rec[k + 2];
                    col.push(if f == "NA" || f.is_empty() {
                        None
                    } else {
                        Some(f.parse().map_err(|_| Error::parse(&p, line, format!("bad number {f:?}")))?)
                    });
                }
            }
            stations.push(station);
        }
        Ok(FeaturePanel {
            columns: columns.unwrap_or_default(),
            stations,
        })
    }
}

/// Trailing mean over `window` values requiring at least `min_present` present.
pub fn trailing_mean(values: &[Option<f64>], window: usize, min_present: usize) -> Vec<Option<f64>> {
    let mut out = vec![None; values.len()];
    let mut count = 0usize;
    for i in 0..values.len() {
        count += values[i].is_some() as usize;
        if i >= window {
            count -= values[i - window].is_some() as usize;
        }
        if i + 1 >= window && count >= min_present.max(1) {
            // summed directly so rounding does not accumulate across the series
            let s: f64 = values[i + 1 - window..=i].iter().flatten().sum();
            out[i] = Some(s / count as f64);
        }
    }
    out
}

/// Builds the feature panel for every station in `panel`.
pub fn assemble_features(panel: &StationPanel, pcs: &[PcFeature], config: &FeatureConfig) -> Result<FeaturePanel> {
    let mut columns: Vec<String> = DAILY_COLUMNS.iter().map(|s| s.to_string()).collect();
    columns.extend(CYCLICAL_COLUMNS.iter().map(|s| s.to_string()));
    columns.extend(config.spi.timescales.iter().map(|ts| format!("spi{ts}")));
    for pc in pcs {
        columns.extend(pc.column_names());
    }
    if config.statics {
        columns.extend(STATIC_COLUMNS.iter().map(|s| s.to_string()));
    }

    let stations = panel
        .stations
        .iter()
        .zip(&panel.series)
        .map(|(meta, series)| station_features(series, meta, pcs, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeaturePanel { columns, stations })
}

fn station_features(
    series: &DailySeries,
    meta: &crate::ingest::StationMeta,
    pcs: &[PcFeature],
    config: &FeatureConfig,
) -> Result<StationFeatures> {
    let n = series.len();
    let days: Vec<DayIndex> = (0..n).map(|i| series.start.offset(i as i64)).collect();
    let mut data: Vec<Vec<Option<f64>>> = Vec::new();
    let tmean: Vec<Option<f64>> = series
        .tmax
        .iter()
        .zip(&series.tmin)
        .map(|(a, b)| Some((a.as_ref()? + b.as_ref()?) / 2.0))
        .collect();
    data.push(series.tmax.clone());
    data.push(series.tmin.clone());
    data.push(tmean.clone());
    data.push(trailing_mean(&tmean, 90, 81));
    data.push(series.values(Variable::Precip).to_vec());

    let enc: Vec<Option<(f64, f64)>> = days.iter().map(|t| cyclical_encode(*t).ok()).collect();
    data.push(enc.iter().map(|e| e.map(|x| x.0)).collect());
    data.push(enc.iter().map(|e| e.map(|x| x.1)).collect());

    for &ts in &config.spi.timescales {
        match spi(&series.precip, series.start, ts, &config.spi) {
            Ok(v) => data.push(v),
            Err(e) => {
                log::warn!("stage=features station={} spi{ts} unavailable: {e}", series.station_id);
                data.push(vec![None; n]);
            }
        }
    }

    let dates: Vec<Option<NaiveDate>> = days.iter().map(|t| t.to_date().ok()).collect();
    for pc in pcs {
        if n > 0 {
            let (Some(first), Some(last)) = (pc.times.first(), pc.times.last()) else {
                return Err(Error::Alignment(format!("{} has no time stamps", pc.prefix)));
            };
            let span = (series.start.to_date()?, series.end().to_date()?);
            if *last < span.0.checked_sub_months(chrono::Months::new(1)).unwrap_or(span.0) || *first > span.1 {
                return Err(Error::Alignment(format!(
                    "{} covers {first}..{last}, station {} covers {}..{}",
                    pc.prefix, series.station_id, span.0, span.1
                )));
            }
        }
        let avail: Vec<Option<usize>> = dates.iter().map(|d| d.and_then(|d| pc.available(d))).collect();
        for mode in &pc.values {
            data.push(
                avail
                    .iter()
                    .map(|a| a.map(|ti| mode[ti]).filter(|v| !v.is_nan()))
                    .collect(),
            );
        }
    }

    if config.statics {
        for v in [meta.latitude, meta.longitude, meta.altitude] {
            data.push(vec![Some(v); n]);
        }
    }
    Ok(StationFeatures {
        station_id: series.station_id.clone(),
        start: series.start,
        data,
    })
}
