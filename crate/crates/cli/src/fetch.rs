//! Downloads from the public energy-charts API. Responses are stored verbatim
//! and parsed later by `ingest`, so a download can be audited by checksum.

use std::time::Duration;

use anyhow::{Context, Result};

const API: &str = "https://api.energy-charts.info";

fn get(client: &reqwest::blocking::Client, url: &str) -> Result<Vec<u8>> {
    log::info!("GET {url}");
    let resp = client
        .get(url)
        .send()
        .and_then(|r| r.error_for_status())
        .with_context(|| format!("requesting {url}"))?;
    Ok(resp.bytes().with_context(|| format!("reading {url}"))?.to_vec())
}

/// Generation (MW per production type) and day-ahead prices for one calendar year (UTC).
pub fn year(year: i32, country: &str, bzn: &str) -> Result<(Vec<u8>, Vec<u8>)> {
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(300))
        .build()?;
    let start = format!("{year}-01-01T00:00Z");
    let end = format!("{year}-12-31T23:59Z");
    let generation = get(&client, &format!("{API}/public_power?country={country}&start={start}&end={end}"))?;
    let prices = get(&client, &format!("{API}/price?bzn={bzn}&start={start}&end={end}"))?;
    Ok((generation, prices))
}
