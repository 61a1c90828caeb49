//! Seeded synthetic station panels and gridded fields for tests, fixtures and demos.

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::calendar::{first_day, last_day, DayIndex};
use crate::error::Result;
use crate::ingest::{DailySeries, GridField, GridVariable, StationMeta, StationPanel, TimeStep};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationParams {
    pub mean_tmax: f64,
    pub seasonal_amplitude: f64,
    /// Lag-one autocorrelation of the fast daily anomaly.
    pub daily_persistence: f64,
    pub daily_sd: f64,
    /// Lag-one autocorrelation of the slow anomaly.
    pub slow_persistence: f64,
    pub slow_sd: f64,
    pub wet_probability: f64,
    pub rain_shape: f64,
    pub rain_scale: f64,
    /// Fraction of values deleted at random.
    pub missing_fraction: f64,
}

impl Default for StationParams {
    fn default() -> Self {
        StationParams {
            mean_tmax: 22.0,
            seasonal_amplitude: 7.0,
            daily_persistence: 0.8,
            daily_sd: 2.5,
            slow_persistence: 0.98,
            slow_sd: 0.8,
            wet_probability: 0.3,
            rain_shape: 0.8,
            rain_scale: 8.0,
            missing_fraction: 0.0,
        }
    }
}

fn ar1_step(prev: f64, phi: f64, sd: f64, z: f64) -> f64 {
    phi * prev + sd * (1.0 - phi * phi).sqrt() * z
}

/// Daily series from `first_year` through `last_year`, deterministic in `seed`.
pub fn station_series(
    station_id: &str,
    first_year: i32,
    last_year: i32,
    params: &StationParams,
    seed: u64,
) -> Result<DailySeries> {
    let start = first_day(first_year)?;
    let n = (last_day(last_year)?.since(start) + 1) as usize;
    let mut s = DailySeries::empty(station_id, start, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let gamma = Gamma::new(params.rain_shape, params.rain_scale).expect("valid gamma");
    let (mut fast, mut slow) = (0.0, 0.0);
    for i in 0..n {
        let t = start.offset(i as i64);
        let doy = t.to_date()?.ordinal0() as f64;
        let angle = 2.0 * std::f64::consts::PI * doy / 365.25;
        fast = ar1_step(fast, params.daily_persistence, params.daily_sd, normal.sample(&mut rng));
        slow = ar1_step(slow, params.slow_persistence, params.slow_sd, normal.sample(&mut rng));
        let tmax = params.mean_tmax + params.seasonal_amplitude * angle.cos() + fast + slow;
        let spread = 8.0 + normal.sample(&mut rng).abs();
        let wet_p = (params.wet_probability * (1.0 + 0.3 * angle.sin())).clamp(0.0, 1.0);
        let rain = if rng.random::<f64>() < wet_p { gamma.sample(&mut rng) } else { 0.0 };
        let keep = |rng: &mut ChaCha8Rng| rng.random::<f64>() >= params.missing_fraction;
        s.tmax[i] = keep(&mut rng).then_some(tmax);
        s.tmin[i] = keep(&mut rng).then_some(tmax - spread);
        s.precip[i] = keep(&mut rng).then_some(rain);
    }
    Ok(s)
}

/// A panel of `stations` stations named `S01`, `S02`, ...
pub fn station_panel(stations: usize, first_year: i32, last_year: i32, seed: u64) -> Result<StationPanel> {
    let mut panel = StationPanel::default();
    for k in 0..stations {
        let id = format!("S{:02}", k + 1);
        let params = StationParams {
            mean_tmax: 18.0 + 2.0 * k as f64,
            ..StationParams::default()
        };
        panel.series.push(station_series(&id, first_year, last_year, &params, seed.wrapping_add(k as u64 * 7919))?);
        panel.stations.push(StationMeta {
            station_id: id,
            latitude: -20.0 - 3.0 * k as f64,
            longitude: -60.0 + 2.5 * k as f64,
            altitude: 100.0 * k as f64,
            country: "XX".into(),
        });
    }
    Ok(panel)
}

/// A known spatial mode: `loading(lat, lon)` scaled by an AR(1) amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridMode {
    pub center: (f64, f64),
    pub width: f64,
    pub amplitude: f64,
    pub persistence: f64,
}

impl GridMode {
    fn loading(&self, lat: f64, lon: f64) -> f64 {
        let dlon = {
            let d = (lon - self.center.1).rem_euclid(360.0);
            d.min(360.0 - d)
        };
        let d2 = (lat - self.center.0).powi(2) + dlon * dlon;
        (-d2 / (2.0 * self.width * self.width)).exp()
    }
}

/// Default modes spread over the three ocean basins.
pub fn default_modes() -> Vec<GridMode> {
    vec![
        GridMode {
            center: (0.0, 210.0),
            width: 25.0,
            amplitude: 1.5,
            persistence: 0.9,
        },
        GridMode {
            center: (10.0, 320.0),
            width: 15.0,
            amplitude: 0.8,
            persistence: 0.8,
        },
        GridMode {
            center: (-20.0, 80.0),
            width: 20.0,
            amplitude: 0.6,
            persistence: 0.7,
        },
        GridMode {
            center: (-40.0, 290.0),
            width: 20.0,
            amplitude: 40.0,
            persistence: 0.8,
        },
    ]
}

/// Gridded field with a seasonal cycle, the given modes and white noise.
/// Cells where `land(lat, lon)` holds are missing.
#[allow(clippy::too_many_arguments)]
pub fn grid_field(
    variable: GridVariable,
    step: TimeStep,
    start: NaiveDate,
    ntime: usize,
    lats: Vec<f64>,
    lons: Vec<f64>,
    modes: &[GridMode],
    noise_sd: f64,
    land: impl Fn(f64, f64) -> bool,
    seed: u64,
) -> Result<GridField> {
    let times = GridField::time_axis(start, step, ntime)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let mut amps = vec![0.0; modes.len()];
    let base = match variable {
        GridVariable::Sst => 20.0,
        GridVariable::Hgt500 => 5700.0,
    };
    let mut values = Vec::with_capacity(ntime * lats.len() * lons.len());
    for date in &times {
        for (a, m) in amps.iter_mut().zip(modes) {
            *a = ar1_step(*a, m.persistence, m.amplitude, normal.sample(&mut rng));
        }
        let angle = 2.0 * std::f64::consts::PI * date.ordinal0() as f64 / 365.25;
        for &lat in &lats {
            for &lon in &lons {
                let noise = noise_sd * normal.sample(&mut rng);
                if land(lat, lon) {
                    values.push(f64::NAN);
                    continue;
                }
                let clim = base - 0.2 * lat.abs() + 3.0 * angle.cos() * lat.signum();
                let signal: f64 = amps.iter().zip(modes).map(|(a, m)| a * m.loading(lat, lon)).sum();
                values.push(clim + signal + noise);
            }
        }
    }
    Ok(GridField {
        variable,
        step,
        times,
        lats,
        lons,
        values,
    })
}

/// Monthly sea-surface temperature on a 10° grid, with a rectangular land block.
pub fn sst_field(first_year: i32, last_year: i32, seed: u64) -> Result<GridField> {
    let start = NaiveDate::from_ymd_opt(first_year, 1, 1).expect("valid year");
    let months = ((last_year - first_year + 1) * 12) as usize;
    let lats: Vec<f64> = (-6..=6).map(|k| k as f64 * 10.0).collect();
    let lons: Vec<f64> = (0..36).map(|k| k as f64 * 10.0).collect();
    grid_field(
        GridVariable::Sst,
        TimeStep::Monthly,
        start,
        months,
        lats,
        lons,
        &default_modes()[..3],
        0.2,
        |lat, lon| (295.0..=315.0).contains(&lon) && (-50.0..=10.0).contains(&lat),
        seed,
    )
}

/// Daily 500 hPa geopotential height over the southern mid-latitudes.
pub fn hgt500_field(first_year: i32, last_year: i32, seed: u64) -> Result<GridField> {
    let start = NaiveDate::from_ymd_opt(first_year, 1, 1).expect("valid year");
    let days = (last_day(last_year)?.since(first_day(first_year)?) + 1) as usize;
    let lats: Vec<f64> = (0..=6).map(|k| -70.0 + k as f64 * 10.0).collect();
    let lons: Vec<f64> = (0..=8).map(|k| 240.0 + k as f64 * 15.0).map(|l: f64| l.rem_euclid(360.0)).collect();
    let mut lons = lons;
    lons.sort_by(f64::total_cmp);
    grid_field(
        GridVariable::Hgt500,
        TimeStep::Daily,
        start,
        days,
        lats,
        lons,
        &default_modes()[3..],
        5.0,
        |_, _| false,
        seed,
    )
}

/// Day index helper for tests: first day of `year`.
pub fn year_start(year: i32) -> DayIndex {
    first_day(year).expect("year in supported range")
}
