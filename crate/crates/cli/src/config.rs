use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tercile::backtest::BacktestConfig;
use tercile::climatology::ClimatologyConfig;
use tercile::features::{BasinSpec, EofOptions, FeatureConfig, SpiConfig};
use tercile::forecasters::ModelSpec;
use tercile::ingest::QcConfig;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Station CSV directory with its `stations.csv` sidecar.
    pub stations: PathBuf,
    /// Directory holding `sst.grid` and `hgt500.grid`.
    pub grids: Option<PathBuf>,
    pub output: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    pub spi: SpiConfig,
    pub statics: bool,
    /// SST basins decomposed into EOFs; empty disables SST features.
    pub basins: Vec<String>,
    pub hgt500: bool,
    /// Cumulative explained-variance target for choosing the number of modes.
    pub eof_target: f64,
    pub eof_max: usize,
    pub area_weighting: bool,
    pub standardize: bool,
    pub anomaly_first_year: i32,
    pub anomaly_last_year: i32,
}

impl Default for FeatureSection {
    fn default() -> Self {
        FeatureSection {
            spi: SpiConfig::default(),
            statics: true,
            basins: vec!["pacific".into(), "atlantic".into(), "indian".into()],
            hgt500: true,
            eof_target: 0.5,
            eof_max: 20,
            area_weighting: true,
            standardize: false,
            anomaly_first_year: 1981,
            anomaly_last_year: 2010,
        }
    }
}

impl FeatureSection {
    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            spi: self.spi.clone(),
            statics: self.statics,
        }
    }

    pub fn eof_options(&self, analysis_end: chrono::NaiveDate) -> EofOptions {
        EofOptions {
            modes: self.eof_max,
            area_weighting: self.area_weighting,
            standardize: self.standardize,
            analysis_end: Some(analysis_end),
        }
    }

    pub fn uses_grids(&self) -> bool {
        !self.basins.is_empty() || self.hgt500
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub qc: QcConfig,
    pub climatology: ClimatologyConfig,
    pub features: FeatureSection,
    pub backtest: BacktestConfig,
}

impl RunConfig {
    /// Parses a TOML file. Relative paths are taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {}", path.display(), e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
        cfg.paths.stations = resolve(&cfg.paths.stations);
        cfg.paths.output = resolve(&cfg.paths.output);
        cfg.paths.grids = cfg.paths.grids.as_deref().map(resolve);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths.stations.as_os_str().is_empty() {
            bail!("field paths.stations is required");
        }
        if self.paths.output.as_os_str().is_empty() {
            bail!("field paths.output is required");
        }
        if !self.paths.stations.is_dir() {
            bail!("field paths.stations: {} is not a directory", self.paths.stations.display());
        }
        let f = &self.features;
        if !(f.eof_target > 0.0 && f.eof_target <= 1.0) {
            bail!("field features.eof_target must lie in (0, 1], got {}", f.eof_target);
        }
        if f.eof_max == 0 {
            bail!("field features.eof_max must be positive");
        }
        for b in &f.basins {
            if BasinSpec::by_name(b).is_none() {
                bail!("field features.basins: unknown basin {b:?}");
            }
        }
        if f.uses_grids() {
            match &self.paths.grids {
                Some(g) if g.is_dir() => {}
                Some(g) => bail!("field paths.grids: {} is not a directory", g.display()),
                None => bail!("field paths.grids is required when basins or hgt500 are enabled"),
            }
        }
        if !(0.0..=1.0).contains(&self.qc.threshold) {
            bail!("field qc.threshold must lie in [0, 1], got {}", self.qc.threshold);
        }
        self.backtest.validate().context("section backtest")?;
        Ok(())
    }

    pub fn needs_features(&self) -> bool {
        self.backtest.models.iter().any(|m| matches!(m, ModelSpec::Tabular(_)))
    }
}
