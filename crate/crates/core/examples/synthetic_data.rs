//! Writes a synthetic station panel and SST/HGT500 grids for trying the CLI.
//!
//! Usage: cargo run -p tercile-core --example synthetic_data -- <dir> [stations] [seed]

use std::path::PathBuf;

use tercile::ingest::{write_grid, write_station_panel};
use tercile::synthetic::{hgt500_field, sst_field, station_panel};

fn main() -> tercile::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "data".into()));
    let stations: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);

    let panel = station_panel(stations, 1977, 2017, seed)?;
    write_station_panel(&dir.join("stations"), &panel)?;
    std::fs::create_dir_all(dir.join("grids")).map_err(|e| tercile::Error::Io {
        path: dir.join("grids"),
        source: e,
    })?;
    write_grid(&dir.join("grids/sst.grid"), &sst_field(1977, 2017, seed + 1)?)?;
    write_grid(&dir.join("grids/hgt500.grid"), &hgt500_field(1977, 2017, seed + 2)?)?;
    println!("wrote {stations} stations and two grids under {}", dir.display());
    Ok(())
}
