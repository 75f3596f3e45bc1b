//! Writes synthetic EPA-style daily exports for 2022–2024: `cargo run --example synthetic_exports -- <dir>`.

use aqi_forecast::synthetic::synthetic_epa_csv;
use aqi_forecast::Pollutant;

fn main() -> std::io::Result<()> {
    let dir = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "raw".into()));
    std::fs::create_dir_all(&dir)?;
    for p in Pollutant::ALL {
        for year in 2022..=2024 {
            let path = dir.join(format!("{}_{year}.csv", p.code().to_lowercase()));
            std::fs::write(&path, synthetic_epa_csv(p, year, 4, 7))?;
            println!("{}", path.display());
        }
    }
    Ok(())
}
