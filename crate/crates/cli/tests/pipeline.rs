use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tercile::backtest::{run_backtest, write_predictions_csv, BacktestConfig, StationData};
use tercile::climatology::{tx90w90, warm_flags, ClimatologyConfig, ClimatologyTable};
use tercile::forecasters::ModelSpec;
use tercile::ingest::{write_grid, write_station_panel};
use tercile::synthetic::{hgt500_field, sst_field, station_panel};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tercile"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn fixture(dir: &Path, grids: bool) -> PathBuf {
    let panel = station_panel(2, 1979, 2017, 11).unwrap();
    write_station_panel(&dir.join("stations"), &panel).unwrap();
    let mut extra = String::from("basins = []\nhgt500 = false\n");
    if grids {
        fs::create_dir_all(dir.join("grids")).unwrap();
        write_grid(&dir.join("grids/sst.grid"), &sst_field(1979, 2017, 3).unwrap()).unwrap();
        write_grid(&dir.join("grids/hgt500.grid"), &hgt500_field(2000, 2017, 4).unwrap()).unwrap();
        extra = "basins = [\"pacific\"]\nhgt500 = true\nanomaly_first_year = 2001\nanomaly_last_year = 2010\n".into();
    }
    let cfg = format!(
        r#"seed = 7

[paths]
stations = "stations"
{grids}output = "out"

[qc]
threshold = 0.2
first_year = 1979
last_year = 2016

[features]
{extra}
[backtest]
train_end = "2016-12-31"
test_year = 2017
origins = 3
models = [{{ kind = "naive" }}, {{ kind = "seasonal_naive" }}]
"#,
        grids = if grids { "grids = \"grids\"\n" } else { "" },
    );
    let path = dir.join("run.toml");
    fs::write(&path, cfg).unwrap();
    path
}

fn stage(cfg: &Path, cmd: &str) {
    let o = run(&[cmd, "--config", cfg.to_str().unwrap(), "--jobs", "2"]);
    assert!(o.status.success(), "{cmd} failed: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn help_exits_zero() {
    for sub in [None, Some("ingest"), Some("climatology"), Some("features"), Some("backtest"), Some("report")] {
        let mut args = vec![];
        if let Some(s) = sub {
            args.push(s);
        }
        args.push("--help");
        let o = run(&args);
        assert_eq!(o.status.code(), Some(0), "{sub:?}");
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["nonsense"]).status.code(), Some(1));
    assert_eq!(run(&["ingest"]).status.code(), Some(1));
}

#[test]
fn invalid_config_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture(tmp.path(), false);
    let text = fs::read_to_string(&cfg).unwrap().replace("threshold = 0.2", "threshhold = 0.2");
    fs::write(&cfg, text).unwrap();
    let o = run(&["ingest", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("threshhold") && err.contains("line"), "{err}");

    let cfg = fixture(tmp.path(), false);
    let text = fs::read_to_string(&cfg).unwrap().replace("[features]\n", "[features]\neof_target = 1.5\n");
    fs::write(&cfg, text).unwrap();
    let o = run(&["ingest", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("eof_target"));
}

#[test]
fn missing_climatology_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture(tmp.path(), false);
    stage(&cfg, "ingest");
    let o = run(&["backtest", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("tercile climatology"));
}

#[test]
fn qc_threshold_zero_discards_gappy_stations() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture(tmp.path(), false);
    // punch one gap into the first station
    let first = tmp.path().join("stations/S01.csv");
    let text = fs::read_to_string(&first).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.remove(1000);
    fs::write(&first, lines.join("\n") + "\n").unwrap();
    let text = fs::read_to_string(&cfg).unwrap().replace("threshold = 0.2", "threshold = 0.0");
    fs::write(&cfg, text).unwrap();
    stage(&cfg, "ingest");
    let qc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/qc_report.json")).unwrap()).unwrap();
    assert_eq!(qc["discarded"], serde_json::json!(["S01"]));
    assert_eq!(qc["kept"], serde_json::json!(["S02"]));
}

#[test]
fn pipeline_is_idempotent_and_matches_library() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture(tmp.path(), false);
    for s in ["ingest", "climatology", "features", "backtest", "report"] {
        stage(&cfg, s);
    }
    let out = tmp.path().join("out");
    for f in [
        "panel.bin",
        "qc_report.json",
        "climatology/S01.csv",
        "features/S01.csv",
        "predictions.csv",
        "metrics.csv",
        "metrics.json",
        "lead_error.csv",
        "plot/S01.csv",
        "timing.json",
        "manifest.sha256",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert_eq!(
        fs::read_to_string(out.join("climatology/S01.csv")).unwrap().lines().count(),
        367,
        "header plus one row per calendar date"
    );
    let preds = fs::read_to_string(out.join("predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 1 + 2 * 3 * 90);
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("period,station_id,f1_macro,f1_micro,auc_below,auc_normal,auc_above,smape\n"));

    // rerun everything: outputs are byte-identical
    let first = fs::read_to_string(out.join("manifest.sha256")).unwrap();
    for s in ["ingest", "climatology", "features", "backtest", "report"] {
        stage(&cfg, s);
    }
    assert_eq!(fs::read_to_string(out.join("manifest.sha256")).unwrap(), first);

    // the CLI adds no computation on top of the library
    let panel = tercile::ingest::load_station_panel(&tmp.path().join("stations")).unwrap();
    let stations: Vec<StationData> = panel
        .series
        .iter()
        .map(|s| {
            let table = ClimatologyTable::build(s, &ClimatologyConfig::default()).unwrap();
            StationData {
                tx: tx90w90(&warm_flags(s, &table), 9),
                climatology: table,
            }
        })
        .collect();
    let config = BacktestConfig {
        origins: 3,
        seed: 7,
        models: vec![ModelSpec::Naive, ModelSpec::SeasonalNaive { period: 365 }],
        ..BacktestConfig::default()
    };
    let report = run_backtest(&stations, None, &config).unwrap();
    let direct = tmp.path().join("direct.csv");
    write_predictions_csv(&direct, &report.records).unwrap();
    assert_eq!(fs::read(direct).unwrap(), fs::read(out.join("predictions.csv")).unwrap());
}

#[test]
fn features_with_grids_add_pc_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture(tmp.path(), true);
    stage(&cfg, "ingest");
    stage(&cfg, "features");
    let out = tmp.path().join("out");
    let header = fs::read_to_string(out.join("features/S01.csv")).unwrap();
    let header = header.lines().next().unwrap();
    assert!(header.contains("pacific_pc1"), "{header}");
    assert!(header.contains("hgt500_pc1"), "{header}");
    for f in ["eof/pacific_patterns.csv", "eof/pacific_pcs.csv", "eof/pacific_variance.csv", "eof/hgt500_variance.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}
