//! Warm-day thresholds, warm-day flags, the trailing 90-day warm-day fraction
//! and its tercile classification.
//!
//! For every calendar date the warm threshold is the 90th percentile of the
//! reference-period maximum temperatures on a ±2-day window around that date
//! (nominally 30 years × 5 days = 150 samples). The tercile thresholds are
//! built the same way from reference-period 90-day warm fractions.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calendar::{cal_of, days_matching, CalDate, DayIndex};
use crate::error::{Error, Result};
use crate::ingest::DailySeries;
use crate::stats::percentile_sorted;

/// Trailing window length of the warm-day fraction.
pub const WINDOW_DAYS: usize = 90;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClimatologyConfig {
    pub first_ref_year: i32,
    pub last_ref_year: i32,
    /// Half-width of the calendar window pooled around each date.
    pub window: u32,
    pub warm_percentile: f64,
    /// Minimum present samples for a threshold.
    pub min_samples: usize,
    /// Maximum missing flags tolerated in a 90-day window.
    pub max_missing: usize,
}

impl Default for ClimatologyConfig {
    fn default() -> Self {
        ClimatologyConfig {
            first_ref_year: 1981,
            last_ref_year: 2010,
            window: 2,
            warm_percentile: 0.9,
            min_samples: 100,
            max_missing: 9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TercileClass {
    Below,
    Normal,
    Above,
}

impl TercileClass {
    pub const ALL: [TercileClass; 3] = [TercileClass::Below, TercileClass::Normal, TercileClass::Above];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TercileClass::Below => "below",
            TercileClass::Normal => "normal",
            TercileClass::Above => "above",
        }
    }
}

impl fmt::Display for TercileClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TercileClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "below" => Ok(TercileClass::Below),
            "normal" => Ok(TercileClass::Normal),
            "above" => Ok(TercileClass::Above),
            other => Err(Error::Domain(format!("unknown tercile class {other:?}"))),
        }
    }
}

/// Below if `v <= tau1`, Normal if `tau1 < v <= tau2`, Above otherwise.
pub fn classify(v: f64, tau1: f64, tau2: f64) -> TercileClass {
    if v <= tau1 {
        TercileClass::Below
    } else if v <= tau2 {
        TercileClass::Normal
    } else {
        TercileClass::Above
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClimRow {
    pub cal: CalDate,
    pub warm_threshold: Option<f64>,
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
}

/// Per-calendar-date thresholds for one station, indexed by [`CalDate::ordinal`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClimatologyTable {
    pub station_id: String,
    pub rows: Vec<ClimRow>,
}

impl ClimatologyTable {
    fn blank(station_id: &str) -> Self {
        ClimatologyTable {
            station_id: station_id.to_string(),
            rows: CalDate::all()
                .map(|cal| ClimRow {
                    cal,
                    warm_threshold: None,
                    tau1: None,
                    tau2: None,
                })
                .collect(),
        }
    }

    /// Builds thresholds, flags and terciles from the reference period.
    /// Calendar dates lacking enough samples are left empty; see [`Self::gaps`].
    pub fn build(series: &DailySeries, config: &ClimatologyConfig) -> Result<Self> {
        let mut table = Self::blank(&series.station_id);
        for row in &mut table.rows {
            match warm_threshold(series, row.cal, config) {
                Ok(v) => row.warm_threshold = Some(v),
                Err(Error::InsufficientData(_)) => {}
                Err(e) => return Err(e),
            }
        }
        let tx = tx90w90(&warm_flags(series, &table), config.max_missing);
        for row in &mut table.rows {
            match tercile_thresholds(&tx, row.cal, config) {
                Ok((t1, t2)) => {
                    row.tau1 = Some(t1);
                    row.tau2 = Some(t2);
                }
                Err(Error::InsufficientData(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(table)
    }

    pub fn row(&self, cal: CalDate) -> &ClimRow {
        &self.rows[cal.ordinal()]
    }

    pub fn warm_threshold(&self, cal: CalDate) -> Option<f64> {
        self.row(cal).warm_threshold
    }

    pub fn terciles(&self, cal: CalDate) -> Option<(f64, f64)> {
        let r = self.row(cal);
        Some((r.tau1?, r.tau2?))
    }

    /// Tercile thresholds applying to the warm fraction on day `t`.
    pub fn terciles_on(&self, t: DayIndex) -> Option<(f64, f64)> {
        self.terciles(cal_of(t).ok()?)
    }

    /// Calendar dates with an undefined threshold or tercile.
    pub fn gaps(&self) -> Vec<CalDate> {
        self.rows
            .iter()
            .filter(|r| r.warm_threshold.is_none() || r.tau1.is_none() || r.tau2.is_none())
            .map(|r| r.cal)
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
        let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| x.to_string());
        let mut write = || -> std::io::Result<()> {
            writeln!(out, "station_id,month,day,warm_thr,tau1,tau2")?;
            for r in &self.rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    self.station_id,
                    r.cal.month(),
                    r.cal.day(),
                    fmt(r.warm_threshold),
                    fmt(r.tau1),
                    fmt(r.tau2)
                )?;
            }
            out.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::parse(path, 0, e.to_string()))?;
        let mut table: Option<ClimatologyTable> = None;
        let mut seen = 0usize;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::parse(path, 0, e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            if rec.len() != 6 {
                return Err(Error::parse(path, line, "expected 6 fields"));
            }
            let t = table.get_or_insert_with(|| Self::blank(&rec[0]));
            let num = |s: &str| -> Result<Option<f64>> {
                if s == "NA" || s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| Error::parse(path, line, format!("bad number {s:?}")))
                }
            };
            let month: u32 = rec[1].parse().map_err(|_| Error::parse(path, line, "bad month"))?;
            let day: u32 = rec[2].parse().map_err(|_| Error::parse(path, line, "bad day"))?;
            let cal = CalDate::new(month, day).map_err(|e| Error::parse(path, line, e.to_string()))?;
            t.rows[cal.ordinal()] = ClimRow {
                cal,
                warm_threshold: num(&rec[3])?,
                tau1: num(&rec[4])?,
                tau2: num(&rec[5])?,
            };
            seen += 1;
        }
        match table {
            Some(t) if seen == 366 => Ok(t),
            _ => Err(Error::parse(path, 0, format!("expected 366 calendar rows, found {seen}"))),
        }
    }
}

fn reference_sample(values: &[f64], cal: CalDate, min: usize) -> Result<Vec<f64>> {
    if values.len() < min {
        return Err(Error::InsufficientData(format!(
            "{cal}: {} reference samples, need {min}",
            values.len()
        )));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// 90th percentile of reference-period maximum temperatures around `cal`.
pub fn warm_threshold(series: &DailySeries, cal: CalDate, config: &ClimatologyConfig) -> Result<f64> {
    let days = days_matching(cal, config.window, config.first_ref_year..=config.last_ref_year)?;
    let present: Vec<f64> = days
        .iter()
        .filter_map(|t| series.get(crate::ingest::Variable::Tmax, *t))
        .collect();
    let sorted = reference_sample(&present, cal, config.min_samples)?;
    Ok(percentile_sorted(&sorted, config.warm_percentile))
}

/// Daily warm-day indicator; `None` where tmax or the threshold is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmFlags {
    pub station_id: String,
    pub start: DayIndex,
    pub flags: Vec<Option<bool>>,
}

/// A day is warm iff its tmax is strictly above the threshold of its calendar date.
pub fn warm_flags(series: &DailySeries, table: &ClimatologyTable) -> WarmFlags {
    let flags = series
        .tmax
        .iter()
        .enumerate()
        .map(|(i, tmax)| {
            let t = series.start.offset(i as i64);
            let thr = table.warm_threshold(cal_of(t).ok()?)?;
            tmax.map(|v| v > thr)
        })
        .collect();
    WarmFlags {
        station_id: series.station_id.clone(),
        start: series.start,
        flags,
    }
}

/// Trailing 90-day warm-day fraction, aligned with its flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tx90w90Series {
    pub station_id: String,
    pub start: DayIndex,
    pub values: Vec<Option<f64>>,
}

impl Tx90w90Series {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn end(&self) -> DayIndex {
        self.start.offset(self.len() as i64 - 1)
    }

    pub fn position(&self, t: DayIndex) -> Option<usize> {
        let i = t.since(self.start);
        (i >= 0 && (i as usize) < self.len()).then_some(i as usize)
    }

    pub fn get(&self, t: DayIndex) -> Option<f64> {
        self.position(t).and_then(|i| self.values[i])
    }

    /// Values from the start through day `t` inclusive.
    pub fn history_through(&self, t: DayIndex) -> &[Option<f64>] {
        let n = (t.since(self.start) + 1).clamp(0, self.len() as i64) as usize;
        &self.values[..n]
    }
}

/// Mean of the flags over each trailing 90-day window. A window with more than
/// `max_missing` missing flags is missing; otherwise the mean runs over present flags.
pub fn tx90w90(flags: &WarmFlags, max_missing: usize) -> Tx90w90Series {
    let f = &flags.flags;
    let mut values = vec![None; f.len()];
    let (mut ones, mut present) = (0usize, 0usize);
    for i in 0..f.len() {
        if let Some(w) = f[i] {
            present += 1;
            ones += w as usize;
        }
        if i >= WINDOW_DAYS {
            if let Some(w) = f[i - WINDOW_DAYS] {
                present -= 1;
                ones -= w as usize;
            }
        }
        if i + 1 >= WINDOW_DAYS && WINDOW_DAYS - present <= max_missing && present > 0 {
            values[i] = Some(ones as f64 / present as f64);
        }
    }
    Tx90w90Series {
        station_id: flags.station_id.clone(),
        start: flags.start,
        values,
    }
}

/// First and second terciles of reference-period warm fractions around `cal`.
pub fn tercile_thresholds(tx: &Tx90w90Series, cal: CalDate, config: &ClimatologyConfig) -> Result<(f64, f64)> {
    let days = days_matching(cal, config.window, config.first_ref_year..=config.last_ref_year)?;
    let present: Vec<f64> = days.iter().filter_map(|t| tx.get(*t)).collect();
    let sorted = reference_sample(&present, cal, config.min_samples)?;
    Ok((percentile_sorted(&sorted, 1.0 / 3.0), percentile_sorted(&sorted, 2.0 / 3.0)))
}

/// Classifies every day of a warm-fraction series against its calendar terciles.
pub fn classify_series(tx: &Tx90w90Series, table: &ClimatologyTable) -> Vec<Option<TercileClass>> {
    tx.values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let (t1, t2) = table.terciles_on(tx.start.offset(i as i64))?;
            Some(classify((*v)?, t1, t2))
        })
        .collect()
}
