//! Station and gridded-field ingestion plus missing-data quality control.
//!
//! Station panels live in a directory holding a `stations.csv` sidecar
//! (`station_id,lat,lon,alt_m,country`) and one `<station_id>.csv` per station
//! with header `date,tmax,tmin,precip`. Empty fields and `NA` mark missing values.
//! Series are dense over their date span: absent rows become missing entries.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::ops::RangeInclusive;
use std::path::Path;

use chrono::{Datelike, Duration, Months, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::{first_day, last_day, DayIndex};
use crate::error::{Error, Result};

pub const SIDECAR: &str = "stations.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationMeta {
    pub station_id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub altitude: f64,
    pub country: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variable {
    Tmax,
    Tmin,
    Precip,
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variable::Tmax => "tmax",
            Variable::Tmin => "tmin",
            Variable::Precip => "precip",
        })
    }
}

/// One station's daily observations, dense from `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySeries {
    pub station_id: String,
    pub start: DayIndex,
    pub tmax: Vec<Option<f64>>,
    pub tmin: Vec<Option<f64>>,
    pub precip: Vec<Option<f64>>,
}

impl DailySeries {
    /// An all-missing series covering `start .. start + len`.
    pub fn empty(station_id: impl Into<String>, start: DayIndex, len: usize) -> Self {
        DailySeries {
            station_id: station_id.into(),
            start,
            tmax: vec![None; len],
            tmin: vec![None; len],
            precip: vec![None; len],
        }
    }

    pub fn len(&self) -> usize {
        self.tmax.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tmax.is_empty()
    }

    /// Last day covered (inclusive). Equals `start - 1` for an empty series.
    pub fn end(&self) -> DayIndex {
        self.start.offset(self.len() as i64 - 1)
    }

    pub fn position(&self, t: DayIndex) -> Option<usize> {
        let i = t.since(self.start);
        (i >= 0 && (i as usize) < self.len()).then_some(i as usize)
    }

    pub fn values(&self, var: Variable) -> &[Option<f64>] {
        match var {
            Variable::Tmax => &self.tmax,
            Variable::Tmin => &self.tmin,
            Variable::Precip => &self.precip,
        }
    }

    pub fn get(&self, var: Variable, t: DayIndex) -> Option<f64> {
        self.position(t).and_then(|i| self.values(var)[i])
    }

    /// Days where both temperatures are present and tmax < tmin.
    pub fn temperature_inconsistencies(&self) -> Vec<DayIndex> {
        self.tmax
            .iter()
            .zip(&self.tmin)
            .enumerate()
            .filter_map(|(i, (hi, lo))| match (hi, lo) {
                (Some(hi), Some(lo)) if hi < lo => Some(self.start.offset(i as i64)),
                _ => None,
            })
            .collect()
    }
}

/// Station metadata and series, aligned by position and sorted by id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StationPanel {
    pub stations: Vec<StationMeta>,
    pub series: Vec<DailySeries>,
}

impl StationPanel {
    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn meta(&self, station_id: &str) -> Option<&StationMeta> {
        self.stations.iter().find(|m| m.station_id == station_id)
    }
}

fn parse_optional(field: &str) -> std::result::Result<Option<f64>, String> {
    let f = field.trim();
    if f.is_empty() || f == "NA" {
        return Ok(None);
    }
    let v: f64 = f.parse().map_err(|_| format!("not a number: {f:?}"))?;
    if !v.is_finite() {
        return Err(format!("non-finite value {f:?}"));
    }
    Ok(Some(v))
}

fn format_optional(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "NA".to_string())
}

fn read_sidecar(path: &Path) -> Result<Vec<StationMeta>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, 0, e.to_string()))?;
    let expected = ["station_id", "lat", "lon", "alt_m", "country"];
    let headers = rdr.headers().map_err(|e| Error::parse(path, 1, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::parse(path, 1, format!("expected header {}", expected.join(","))));
    }
    let mut metas = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, 0, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let num = |i: usize, name: &str| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| Error::parse(path, line, format!("bad {name}: {:?}", &rec[i])))
        };
        let latitude = num(1, "lat")?;
        let longitude = num(2, "lon")?;
        if !(-90.0..=90.0).contains(&latitude) || !(-180.0..=360.0).contains(&longitude) {
            return Err(Error::parse(path, line, "coordinates out of bounds"));
        }
        metas.push(StationMeta {
            station_id: rec[0].to_string(),
            latitude,
            longitude,
            altitude: num(3, "alt_m")?,
            country: rec[4].to_string(),
        });
    }
    let mut seen = std::collections::HashSet::new();
    for m in &metas {
        if !seen.insert(m.station_id.as_str()) {
            return Err(Error::Integrity(format!("duplicate station id {} in {}", m.station_id, path.display())));
        }
    }
    Ok(metas)
}

/// Reads one `<station_id>.csv` file into a dense series.
pub fn load_station_file(path: &Path, station_id: &str) -> Result<DailySeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, 0, e.to_string()))?;
    let headers = rdr.headers().map_err(|e| Error::parse(path, 1, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["date", "tmax", "tmin", "precip"] {
        return Err(Error::parse(path, 1, "expected header date,tmax,tmin,precip"));
    }
    let mut rows: BTreeMap<DayIndex, [Option<f64>; 3]> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let t = DayIndex::parse_iso(&rec[0]).map_err(|e| Error::parse(path, line, e.to_string()))?;
        let mut vals = [None; 3];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = parse_optional(&rec[k + 1]).map_err(|m| Error::parse(path, line, m))?;
        }
        if matches!(vals[2], Some(p) if p < 0.0) {
            return Err(Error::parse(path, line, "negative precipitation"));
        }
        if rows.insert(t, vals).is_some() {
            return Err(Error::Integrity(format!(
                "{}:{line}: duplicate date {}",
                path.display(),
                &rec[0]
            )));
        }
    }
    let (Some((&first, _)), Some((&last, _))) = (rows.first_key_value(), rows.last_key_value()) else {
        return Ok(DailySeries::empty(station_id, DayIndex(0), 0));
    };
    let mut series = DailySeries::empty(station_id, first, (last.since(first) + 1) as usize);
    for (t, [hi, lo, p]) in rows {
        let i = t.since(first) as usize;
        series.tmax[i] = hi;
        series.tmin[i] = lo;
        series.precip[i] = p;
    }
    let bad = series.temperature_inconsistencies();
    if !bad.is_empty() {
        log::warn!(
            "station={station_id} {} day(s) with tmax < tmin, first {}",
            bad.len(),
            bad[0]
        );
    }
    Ok(series)
}

/// Loads every station listed in the sidecar. An empty directory is an empty panel.
pub fn load_station_panel(dir: &Path) -> Result<StationPanel> {
    let sidecar = dir.join(SIDECAR);
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().to_string();
        if name != SIDECAR && name.ends_with(".csv") {
            files.push(name.trim_end_matches(".csv").to_string());
        }
    }
    if !sidecar.exists() {
        if files.is_empty() {
            return Ok(StationPanel::default());
        }
        return Err(Error::Integrity(format!("{} missing next to station files", sidecar.display())));
    }
    let mut metas = read_sidecar(&sidecar)?;
    metas.sort_by(|a, b| a.station_id.cmp(&b.station_id));
    for f in &files {
        if !metas.iter().any(|m| &m.station_id == f) {
            return Err(Error::Integrity(format!("station file {f}.csv has no entry in {SIDECAR}")));
        }
    }
    let series = metas
        .par_iter()
        .map(|m| load_station_file(&dir.join(format!("{}.csv", m.station_id)), &m.station_id))
        .collect::<Result<Vec<_>>>()?;
    Ok(StationPanel {
        stations: metas,
        series,
    })
}

/// Writes a panel in the layout read by [`load_station_panel`].
pub fn write_station_panel(dir: &Path, panel: &StationPanel) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut side = String::from("station_id,lat,lon,alt_m,country\n");
    for m in &panel.stations {
        side.push_str(&format!(
            "{},{},{},{},{}\n",
            m.station_id, m.latitude, m.longitude, m.altitude, m.country
        ));
    }
    let p = dir.join(SIDECAR);
    fs::write(&p, side).map_err(|e| Error::io(&p, e))?;
    for s in &panel.series {
        let p = dir.join(format!("{}.csv", s.station_id));
        let mut out = std::io::BufWriter::new(fs::File::create(&p).map_err(|e| Error::io(&p, e))?);
        let mut write = || -> std::io::Result<()> {
            writeln!(out, "date,tmax,tmin,precip")?;
            for i in 0..s.len() {
                writeln!(
                    out,
                    "{},{},{},{}",
                    s.start.offset(i as i64),
                    format_optional(s.tmax[i]),
                    format_optional(s.tmin[i]),
                    format_optional(s.precip[i])
                )?;
            }
            out.flush()
        };
        write().map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

/// Fraction of days in `years` whose `var` value is missing. Days of the
/// period outside the series span count as missing.
pub fn missing_stats(series: &DailySeries, var: Variable, years: RangeInclusive<i32>) -> Result<f64> {
    missing_fraction(series, &[var], years)
}

/// Like [`missing_stats`], but a day counts as missing if any of `vars` is missing.
pub fn missing_fraction(series: &DailySeries, vars: &[Variable], years: RangeInclusive<i32>) -> Result<f64> {
    let lo = first_day(*years.start())?;
    let hi = last_day(*years.end())?;
    if hi < lo || series.is_empty() || series.end() < lo || series.start > hi {
        return Err(Error::Domain(format!(
            "station {} has no data in {}..={}",
            series.station_id,
            years.start(),
            years.end()
        )));
    }
    let total = (hi.since(lo) + 1) as usize;
    let present = (lo.0..=hi.0)
        .filter(|&t| vars.iter().all(|v| series.get(*v, DayIndex(t)).is_some()))
        .count();
    Ok((total - present) as f64 / total as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QcConfig {
    /// Stations whose missing fraction exceeds this are discarded.
    pub threshold: f64,
    pub first_year: i32,
    pub last_year: i32,
    pub variables: Vec<Variable>,
}

impl Default for QcConfig {
    fn default() -> Self {
        QcConfig {
            threshold: 0.2,
            first_year: 1977,
            last_year: 2016,
            variables: vec![Variable::Tmax, Variable::Tmin],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationQc {
    pub station_id: String,
    pub missing: BTreeMap<Variable, f64>,
    /// Fraction of days with any configured variable missing.
    pub temperature_missing: f64,
    pub inconsistent_days: usize,
    pub discarded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcReport {
    pub threshold: f64,
    pub first_year: i32,
    pub last_year: i32,
    pub stations: Vec<StationQc>,
    pub kept: Vec<String>,
    pub discarded: Vec<String>,
    /// Pooled missing fraction of the configured variables per calendar year.
    pub per_year_missing: BTreeMap<i32, f64>,
}

/// Drops stations whose training-period missing fraction exceeds the threshold.
pub fn qc_discard(panel: &StationPanel, config: &QcConfig) -> (StationPanel, QcReport) {
    let years = config.first_year..=config.last_year;
    let mut kept = StationPanel::default();
    let mut stations = Vec::new();
    for (meta, series) in panel.stations.iter().zip(&panel.series) {
        let mut missing = BTreeMap::new();
        for v in [Variable::Tmax, Variable::Tmin, Variable::Precip] {
            missing.insert(v, missing_stats(series, v, years.clone()).unwrap_or(1.0));
        }
        let temperature_missing = missing_fraction(series, &config.variables, years.clone()).unwrap_or(1.0);
        let discarded = temperature_missing > config.threshold;
        if discarded {
            log::info!(
                "stage=qc station={} discarded missing={:.3}",
                meta.station_id,
                temperature_missing
            );
        } else {
            kept.stations.push(meta.clone());
            kept.series.push(series.clone());
        }
        stations.push(StationQc {
            station_id: meta.station_id.clone(),
            missing,
            temperature_missing,
            inconsistent_days: series.temperature_inconsistencies().len(),
            discarded,
        });
    }
    let report = QcReport {
        threshold: config.threshold,
        first_year: config.first_year,
        last_year: config.last_year,
        kept: stations.iter().filter(|s| !s.discarded).map(|s| s.station_id.clone()).collect(),
        discarded: stations.iter().filter(|s| s.discarded).map(|s| s.station_id.clone()).collect(),
        per_year_missing: per_year_missing(panel, &config.variables),
        stations,
    };
    (kept, report)
}

fn per_year_missing(panel: &StationPanel, vars: &[Variable]) -> BTreeMap<i32, f64> {
    let mut out = BTreeMap::new();
    let years = panel
        .series
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| Some((s.start.to_date().ok()?.year(), s.end().to_date().ok()?.year())));
    let (Some(lo), Some(hi)) = (
        years.clone().map(|y| y.0).min(),
        years.map(|y| y.1).max(),
    ) else {
        return out;
    };
    for year in lo..=hi {
        let (mut miss, mut total) = (0.0, 0.0);
        for s in &panel.series {
            let days = crate::calendar::year_length(year) as f64;
            miss += missing_fraction(s, vars, year..=year).unwrap_or(1.0) * days;
            total += days;
        }
        if total > 0.0 {
            out.insert(year, miss / total);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridVariable {
    #[serde(rename = "SST")]
    Sst,
    #[serde(rename = "HGT500")]
    Hgt500,
}

impl fmt::Display for GridVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridVariable::Sst => "SST",
            GridVariable::Hgt500 => "HGT500",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeStep {
    Monthly,
    Daily,
}

/// A (time × lat × lon) field. Missing cells are NaN.
///
/// Latitudes are strictly increasing, longitudes strictly increasing in [0, 360).
/// Monthly stamps are the first day of each month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub variable: GridVariable,
    pub step: TimeStep,
    pub times: Vec<NaiveDate>,
    pub lats: Vec<f64>,
    pub lons: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn ntime(&self) -> usize {
        self.times.len()
    }

    pub fn nlat(&self) -> usize {
        self.lats.len()
    }

    pub fn nlon(&self) -> usize {
        self.lons.len()
    }

    pub fn ncell(&self) -> usize {
        self.nlat() * self.nlon()
    }

    pub fn get(&self, time: usize, lat: usize, lon: usize) -> f64 {
        self.values[(time * self.nlat() + lat) * self.nlon() + lon]
    }

    /// Values of one time slice, row-major over (lat, lon).
    pub fn slice(&self, time: usize) -> &[f64] {
        let n = self.ncell();
        &self.values[time * n..(time + 1) * n]
    }

    /// Consecutive time stamps from `start`.
    pub fn time_axis(start: NaiveDate, step: TimeStep, n: usize) -> Result<Vec<NaiveDate>> {
        (0..n)
            .map(|k| match step {
                TimeStep::Monthly => start.checked_add_months(Months::new(k as u32)),
                TimeStep::Daily => start.checked_add_signed(Duration::days(k as i64)),
            })
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::Domain("time axis overflows the calendar".into()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.ntime() * self.ncell() {
            return Err(Error::Integrity(format!(
                "grid payload {} != {}x{}x{}",
                self.values.len(),
                self.ntime(),
                self.nlat(),
                self.nlon()
            )));
        }
        let strictly = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if !strictly(&self.lats) || !strictly(&self.lons) {
            return Err(Error::Integrity("grid coordinates must be strictly increasing".into()));
        }
        Ok(())
    }
}

fn header_value<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, path: &Path, key: &str) -> Result<(usize, &'a str)> {
    for (no, line) in lines.by_ref() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        if k != key {
            return Err(Error::parse(path, no, format!("expected header key {key:?}, found {k:?}")));
        }
        return Ok((no, rest.trim()));
    }
    Err(Error::parse(path, 0, format!("missing header key {key:?}")))
}

fn parse_floats(s: &str, path: &Path, line: usize) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| Error::parse(path, line, format!("not a number: {tok:?}")))
        })
        .collect()
}

/// Reads the text grid format: `key value` header lines (`variable`,
/// `time_start`, `time_step`, `nlat`, `nlon`, `lats`, `lons`) followed by
/// row-major values, one `nlat × nlon` block per time step. `NA` is missing.
pub fn load_grid(path: &Path) -> Result<GridField> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (no, var) = header_value(&mut lines, path, "variable")?;
    let variable = match var {
        "SST" => GridVariable::Sst,
        "HGT500" => GridVariable::Hgt500,
        other => return Err(Error::parse(path, no, format!("unknown variable {other:?}"))),
    };
    let (no, start) = header_value(&mut lines, path, "time_start")?;
    let start = NaiveDate::parse_from_str(start, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(&format!("{start}-01"), "%Y-%m-%d"))
        .map_err(|_| Error::parse(path, no, format!("bad time_start {start:?}")))?;
    let (no, step) = header_value(&mut lines, path, "time_step")?;
    let step = match step {
        "monthly" => TimeStep::Monthly,
        "daily" => TimeStep::Daily,
        other => return Err(Error::parse(path, no, format!("unknown time_step {other:?}"))),
    };
    let mut dim = |key: &str| -> Result<usize> {
        let (no, v) = header_value(&mut lines, path, key)?;
        v.parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::parse(path, no, format!("bad {key} {v:?}")))
    };
    let nlat = dim("nlat")?;
    let nlon = dim("nlon")?;
    let (no, lats) = header_value(&mut lines, path, "lats")?;
    let mut lats = parse_floats(lats, path, no)?;
    if lats.len() != nlat {
        return Err(Error::parse(path, no, format!("{} lats for nlat {nlat}", lats.len())));
    }
    let (no, lons) = header_value(&mut lines, path, "lons")?;
    let raw_lons = parse_floats(lons, path, no)?;
    if raw_lons.len() != nlon {
        return Err(Error::parse(path, no, format!("{} lons for nlon {nlon}", raw_lons.len())));
    }

    let mut payload = Vec::new();
    let mut last_line = no;
    for (no, line) in lines {
        last_line = no;
        for tok in line.split_whitespace() {
            let v = if tok == "NA" {
                f64::NAN
            } else {
                tok.parse::<f64>()
                    .map_err(|_| Error::parse(path, no, format!("not a number: {tok:?}")))?
            };
            payload.push(v);
        }
    }
    let ncell = nlat * nlon;
    if payload.is_empty() || payload.len() % ncell != 0 {
        return Err(Error::parse(
            path,
            last_line,
            format!("payload of {} values is not a whole number of {nlat}x{nlon} slices", payload.len()),
        ));
    }
    let ntime = payload.len() / ncell;

    // normalize longitudes to [0, 360) and reorder columns ascending
    let mut lon_order: Vec<(f64, usize)> = raw_lons.iter().map(|l| (l.rem_euclid(360.0), 0)).collect();
    for (i, o) in lon_order.iter_mut().enumerate() {
        o.1 = i;
    }
    lon_order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let lat_desc = lats.len() > 1 && lats[0] > lats[lats.len() - 1];
    if lat_desc {
        lats.reverse();
    }
    let mut values = vec![0.0; payload.len()];
    for t in 0..ntime {
        for i in 0..nlat {
            let src_i = if lat_desc { nlat - 1 - i } else { i };
            for (j, (_, src_j)) in lon_order.iter().enumerate() {
                values[(t * nlat + i) * nlon + j] = payload[(t * nlat + src_i) * nlon + src_j];
            }
        }
    }
    let field = GridField {
        variable,
        step,
        times: GridField::time_axis(start, step, ntime)?,
        lats,
        lons: lon_order.iter().map(|o| o.0).collect(),
        values,
    };
    field
        .validate()
        .map_err(|e| Error::parse(path, 0, e.to_string()))?;
    Ok(field)
}

/// Writes a field in the format read by [`load_grid`].
pub fn write_grid(path: &Path, field: &GridField) -> Result<()> {
    field.validate()?;
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "variable {}", field.variable)?;
        writeln!(
            out,
            "time_start {}",
            field.times.first().map_or("1981-01-01".to_string(), |d| d.format("%Y-%m-%d").to_string())
        )?;
        writeln!(
            out,
            "time_step {}",
            match field.step {
                TimeStep::Monthly => "monthly",
                TimeStep::Daily => "daily",
            }
        )?;
        writeln!(out, "nlat {}", field.nlat())?;
        writeln!(out, "nlon {}", field.nlon())?;
        writeln!(out, "lats {}", join(&field.lats))?;
        writeln!(out, "lons {}", join(&field.lons))?;
        for t in 0..field.ntime() {
            for row in field.slice(t).chunks(field.nlon()) {
                let line = row
                    .iter()
                    .map(|v| if v.is_nan() { "NA".to_string() } else { v.to_string() })
                    .collect::<Vec<_>>()
                    .join(" ");
                writeln!(out, "{line}")?;
            }
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series_with(station: &str, start: DayIndex, tmax: Vec<Option<f64>>) -> DailySeries {
        let n = tmax.len();
        DailySeries {
            station_id: station.into(),
            start,
            tmin: tmax.iter().map(|v| v.map(|x| x - 10.0)).collect(),
            tmax,
            precip: vec![Some(0.0); n],
        }
    }

    #[test]
    fn missing_fraction_counts() {
        let start = first_day(1990).unwrap();
        let full = series_with("A", start, vec![Some(20.0); 365]);
        assert_eq!(missing_stats(&full, Variable::Tmax, 1990..=1990).unwrap(), 0.0);

        let mut part = full.clone();
        for v in part.tmax.iter_mut().take(73) {
            *v = None;
        }
        let direct = part.tmax.iter().filter(|v| v.is_none()).count() as f64 / 365.0;
        assert_eq!(missing_stats(&part, Variable::Tmax, 1990..=1990).unwrap(), direct);
        assert!((direct - 0.2).abs() < 1e-15);

        let none = series_with("A", start, vec![None; 365]);
        assert_eq!(missing_stats(&none, Variable::Tmax, 1990..=1990).unwrap(), 1.0);
        assert!(matches!(
            missing_stats(&full, Variable::Tmax, 1995..=1996),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn absent_rows_equal_sentinels() {
        let start = first_day(1990).unwrap();
        // series starting in mid-year versus one padded with explicit missing values
        let mut padded = series_with("A", start, vec![Some(20.0); 365]);
        for v in padded.tmax.iter_mut().take(100) {
            *v = None;
        }
        let short = series_with("A", start.offset(100), vec![Some(20.0); 265]);
        assert_eq!(
            missing_stats(&padded, Variable::Tmax, 1990..=1990).unwrap(),
            missing_stats(&short, Variable::Tmax, 1990..=1990).unwrap()
        );
    }

    fn panel(missing: &[usize]) -> StationPanel {
        let start = first_day(2000).unwrap();
        let mut p = StationPanel::default();
        for (k, m) in missing.iter().enumerate() {
            let id = format!("S{k:02}");
            let mut s = series_with(&id, start, vec![Some(15.0); 366]);
            for v in s.tmax.iter_mut().take(*m) {
                *v = None;
            }
            p.stations.push(StationMeta {
                station_id: id,
                latitude: -30.0,
                longitude: -60.0,
                altitude: 10.0,
                country: "AR".into(),
            });
            p.series.push(s);
        }
        p
    }

    fn qc(threshold: f64) -> QcConfig {
        QcConfig {
            threshold,
            first_year: 2000,
            last_year: 2000,
            ..QcConfig::default()
        }
    }

    #[test]
    fn qc_thresholds() {
        let p = panel(&[0, 10, 100, 366]);
        let (kept, rep) = qc_discard(&p, &qc(1.0));
        assert_eq!(kept.len(), 4);
        assert!(rep.discarded.is_empty());

        let (kept, rep) = qc_discard(&p, &qc(0.2));
        assert_eq!(rep.discarded, vec!["S02", "S03"]);
        assert_eq!(kept.len(), 2);

        let (_, rep) = qc_discard(&p, &qc(0.0));
        assert_eq!(rep.kept, vec!["S00"]);
        assert_eq!(rep.stations[3].temperature_missing, 1.0);
        let y = rep.per_year_missing[&2000];
        assert!((y - 476.0 / (4.0 * 366.0)).abs() < 1e-12);
    }

    #[test]
    fn all_missing_station_always_discarded() {
        let p = panel(&[366]);
        for th in [0.0, 0.3, 0.99] {
            assert_eq!(qc_discard(&p, &qc(th)).1.discarded.len(), 1);
        }
    }

    proptest::proptest! {
        #[test]
        fn qc_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0, m in proptest::collection::vec(0usize..366, 1..8)) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let p = panel(&m);
            let d_lo = qc_discard(&p, &qc(lo)).1.discarded;
            let d_hi = qc_discard(&p, &qc(hi)).1.discarded;
            proptest::prop_assert!(d_hi.iter().all(|s| d_lo.contains(s)));
        }
    }
}
