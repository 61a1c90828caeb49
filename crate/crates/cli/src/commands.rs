use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use tercile::backtest::{
    aggregate, global_roc, lead_errors, run_backtest, select_records, write_json, write_lead_error_csv,
    write_metrics_csv, write_plot_csv, write_predictions_csv, write_roc_csv, Grouping, MetricRow, OriginTiming,
    PredictionRecord, StationData,
};
use tercile::climatology::{tx90w90, warm_flags, ClimatologyTable};
use tercile::features::{
    assemble_features, basin_subset, daily_anomaly, eof_decompose, monthly_anomaly, select_eofs, BasinSpec,
    FeaturePanel, PcFeature,
};
use tercile::ingest::{load_grid, load_station_panel, qc_discard, GridField, StationPanel, TimeStep};

use crate::config::RunConfig;

pub const MANIFEST: &str = "manifest.sha256";
const TIMING: &str = "timing.json";

/// The run finished but some stations or origins produced nothing.
#[derive(Debug)]
pub struct PartialFailure(pub String);

impl fmt::Display for PartialFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "partial failure: {}", self.0)
    }
}

impl std::error::Error for PartialFailure {}

fn out(cfg: &RunConfig, rel: &str) -> PathBuf {
    cfg.paths.output.join(rel)
}

fn panel_path(cfg: &RunConfig) -> PathBuf {
    out(cfg, "panel.bin")
}

fn load_panel(cfg: &RunConfig) -> Result<StationPanel> {
    let path = panel_path(cfg);
    let bytes = fs::read(&path).with_context(|| format!("{} missing; run `tercile ingest` first", path.display()))?;
    bincode::deserialize(&bytes).with_context(|| format!("decoding {}", path.display()))
}

pub fn ingest(cfg: &RunConfig) -> Result<()> {
    let panel = load_station_panel(&cfg.paths.stations)?;
    log::info!("stage=ingest loaded {} stations", panel.len());
    let (kept, report) = qc_discard(&panel, &cfg.qc);
    fs::create_dir_all(&cfg.paths.output).with_context(|| format!("creating {}", cfg.paths.output.display()))?;
    fs::write(panel_path(cfg), bincode::serialize(&kept)?)?;
    write_json(&out(cfg, "qc_report.json"), &report)?;
    log::info!("stage=ingest kept {} discarded {}", report.kept.len(), report.discarded.len());
    Ok(())
}

pub fn climatology(cfg: &RunConfig) -> Result<()> {
    let panel = load_panel(cfg)?;
    let tables: Vec<(String, tercile::Result<ClimatologyTable>)> = panel
        .series
        .par_iter()
        .map(|s| (s.station_id.clone(), ClimatologyTable::build(s, &cfg.climatology)))
        .collect();
    let dir = out(cfg, "climatology");
    if dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    fs::create_dir_all(&dir)?;
    let mut failures = BTreeMap::new();
    for (id, t) in tables {
        match t {
            Ok(t) => t.write_csv(&dir.join(format!("{id}.csv")))?,
            Err(e) => {
                log::warn!("stage=climatology station={id} skipped: {e}");
                failures.insert(id, e.to_string());
            }
        }
    }
    write_json(&dir.join("failures.json"), &failures)?;
    if failures.len() == panel.len() && !panel.is_empty() {
        bail!(tercile::Error::InsufficientData("no station has a usable climatology".into()));
    }
    Ok(())
}

fn grid(cfg: &RunConfig, name: &str) -> Result<GridField> {
    let dir = cfg.paths.grids.as_ref().ok_or_else(|| anyhow!("paths.grids is not set"))?;
    Ok(load_grid(&dir.join(name))?)
}

fn eof_feature(
    cfg: &RunConfig,
    anomalies: &GridField,
    basin: &BasinSpec,
    prefix: &str,
    step: TimeStep,
    eof_dir: &Path,
) -> Result<PcFeature> {
    let f = &cfg.features;
    let sub = basin_subset(anomalies, basin)?;
    let basis = eof_decompose(&sub, &f.eof_options(cfg.backtest.train_end))?;
    let selection = select_eofs(&basis.variance_fraction, f.eof_target)?;
    if !selection.reached {
        log::warn!("stage=features basin={prefix} variance target not reached with {} modes", selection.count);
    }
    log::info!("stage=features basin={prefix} modes={}", selection.count);
    basis.write_csv(eof_dir, prefix)?;
    Ok(basis.pc_feature(prefix, step, selection.count))
}

pub fn features(cfg: &RunConfig) -> Result<()> {
    let panel = load_panel(cfg)?;
    let f = &cfg.features;
    let eof_dir = out(cfg, "eof");
    if eof_dir.exists() {
        fs::remove_dir_all(&eof_dir)?;
    }
    let mut pcs = Vec::new();
    if !f.basins.is_empty() {
        let sst = monthly_anomaly(&grid(cfg, "sst.grid")?, f.anomaly_first_year, f.anomaly_last_year)?;
        for name in &f.basins {
            let basin = BasinSpec::by_name(name).ok_or_else(|| anyhow!("unknown basin {name:?}"))?;
            pcs.push(eof_feature(cfg, &sst, &basin, name, TimeStep::Monthly, &eof_dir)?);
        }
    }
    if f.hgt500 {
        let hgt = daily_anomaly(&grid(cfg, "hgt500.grid")?, f.anomaly_first_year, f.anomaly_last_year)?;
        pcs.push(eof_feature(cfg, &hgt, &BasinSpec::hgt500_region(), "hgt500", TimeStep::Daily, &eof_dir)?);
    }
    let panel = assemble_features(&panel, &pcs, &f.feature_config())?;
    let dir = out(cfg, "features");
    if dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    panel.write_dir(&dir)?;
    log::info!("stage=features columns={}", panel.columns.len());
    Ok(())
}

fn station_data(cfg: &RunConfig) -> Result<Vec<StationData>> {
    let panel = load_panel(cfg)?;
    let dir = out(cfg, "climatology");
    if !dir.is_dir() {
        bail!("{} missing; run `tercile climatology` first", dir.display());
    }
    let mut stations = Vec::new();
    for s in &panel.series {
        let path = dir.join(format!("{}.csv", s.station_id));
        if !path.exists() {
            log::warn!("stage=backtest station={} has no climatology table; skipped", s.station_id);
            continue;
        }
        let table = ClimatologyTable::read_csv(&path)?;
        let tx = tx90w90(&warm_flags(s, &table), cfg.climatology.max_missing);
        stations.push(StationData { tx, climatology: table });
    }
    if stations.is_empty() {
        bail!(tercile::Error::InsufficientData(format!(
            "no station has a climatology table in {}",
            dir.display()
        )));
    }
    Ok(stations)
}

fn records_path(cfg: &RunConfig) -> PathBuf {
    out(cfg, "backtest/records.bin")
}

pub fn backtest(cfg: &RunConfig, strict: bool) -> Result<()> {
    let stations = station_data(cfg)?;
    let features = if cfg.needs_features() {
        let dir = out(cfg, "features");
        Some(FeaturePanel::read_dir(&dir).with_context(|| format!("{} unreadable; run `tercile features` first", dir.display()))?)
    } else {
        None
    };
    let report = run_backtest(&stations, features.as_ref(), &cfg.backtest)?;
    let dir = out(cfg, "backtest");
    fs::create_dir_all(&dir)?;
    write_predictions_csv(&out(cfg, "predictions.csv"), &report.records)?;
    fs::write(records_path(cfg), bincode::serialize(&report.records)?)?;
    write_json(&dir.join("origins.json"), &report.origins)?;
    write_timing(cfg, &report.timing)?;
    if report.records.is_empty() {
        bail!(tercile::Error::InsufficientData("every origin failed".into()));
    }
    if report.is_partial() {
        let msg = format!(
            "{} of {} origins failed; some stations lack forecasts",
            report.failed_origins(),
            report.origins.len()
        );
        if strict {
            return Err(PartialFailure(msg).into());
        }
        log::warn!("stage=backtest {msg}");
    }
    Ok(())
}

fn write_timing(cfg: &RunConfig, timing: &[OriginTiming]) -> Result<()> {
    write_json(&out(cfg, TIMING), &timing)?;
    Ok(())
}

pub fn report(cfg: &RunConfig) -> Result<()> {
    let path = records_path(cfg);
    let bytes = fs::read(&path).with_context(|| format!("{} missing; run `tercile backtest` first", path.display()))?;
    let records: Vec<PredictionRecord> = bincode::deserialize(&bytes)?;
    let selected = select_records(&records, cfg.backtest.overlap);
    let mut rows: Vec<MetricRow> = Vec::new();
    let mut tables = BTreeMap::new();
    for (name, g) in [
        ("global", Grouping::Global),
        ("month", Grouping::Month),
        ("quarter", Grouping::Quarter),
        ("origin", Grouping::Origin),
        ("station", Grouping::Station),
    ] {
        let r = aggregate(&selected, g)?;
        rows.extend(r.iter().cloned());
        tables.insert(name, r);
    }
    write_metrics_csv(&out(cfg, "metrics.csv"), &rows)?;
    write_json(&out(cfg, "metrics.json"), &tables)?;
    write_roc_csv(&cfg.paths.output, &global_roc(&selected))?;
    write_lead_error_csv(&out(cfg, "lead_error.csv"), &lead_errors(&records.iter().collect::<Vec<_>>()))?;
    let plot = out(cfg, "plot");
    if plot.exists() {
        fs::remove_dir_all(&plot)?;
    }
    write_plot_csv(&plot, &selected)?;
    Ok(())
}

fn walk(dir: &Path, root: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            walk(&p, root, out)?;
        } else {
            out.push(p.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

/// Rewrites `manifest.sha256` with a digest of every output except timings.
pub fn write_manifest(output: &Path) -> Result<String> {
    let mut files = Vec::new();
    walk(output, output, &mut files)?;
    files.retain(|p| p != Path::new(MANIFEST) && p != Path::new(TIMING));
    files.sort();
    let mut body = String::new();
    for rel in files {
        let mut f = fs::File::open(output.join(&rel))?;
        let mut bytes = Vec::new();
        f.read_to_end(&mut bytes)?;
        let hex: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        body.push_str(&format!("{hex}  {}\n", rel.to_string_lossy().replace('\\', "/")));
    }
    fs::write(output.join(MANIFEST), &body)?;
    Ok(body)
}
