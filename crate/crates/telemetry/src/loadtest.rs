//! HTTP load generator for the gateway read path.

use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoadTestError {
    #[error("target unavailable: {0}")]
    TargetUnavailable(String),
    #[error("invalid load test parameters: {0}")]
    InvalidParameters(String),
    #[error("writing report: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LoadReport {
    pub requests: u64,
    /// Requested spread of the schedule, seconds.
    pub duration_secs: f64,
    pub failed: u64,
    pub error_rate_pct: f64,
    pub avg_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub p95_ms: f64,
    pub throughput_rps: f64,
    /// Wall time from first send to last response.
    pub elapsed_secs: f64,
}

impl LoadReport {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), LoadTestError> {
        std::fs::write(path, serde_json::to_vec_pretty(self).expect("report serializes"))?;
        Ok(())
    }

    pub fn from_latencies(requests: u64, duration_secs: f64, failed: u64, mut lat_ms: Vec<f64>, elapsed_secs: f64) -> Self {
        lat_ms.sort_by(f64::total_cmp);
        let n = lat_ms.len();
        let avg = if n == 0 { 0.0 } else { lat_ms.iter().sum::<f64>() / n as f64 };
        // Nearest-rank percentile.
        let p95 = if n == 0 { 0.0 } else { lat_ms[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1] };
        LoadReport {
            requests,
            duration_secs,
            failed,
            error_rate_pct: if requests == 0 { 0.0 } else { failed as f64 * 100.0 / requests as f64 },
            avg_ms: avg,
            min_ms: lat_ms.first().copied().unwrap_or(0.0),
            max_ms: lat_ms.last().copied().unwrap_or(0.0),
            p95_ms: p95,
            throughput_rps: if elapsed_secs > 0.0 { (requests - failed) as f64 / elapsed_secs } else { 0.0 },
            elapsed_secs,
        }
    }
}

/// Sends `requests` GETs for `sku`, evenly spaced over `duration`.
/// A request fails on transport error or any non-200 status.
pub async fn run_load_test(base_url: &str, sku: &str, requests: u64, duration: Duration) -> Result<LoadReport, LoadTestError> {
    if requests == 0 {
        return Err(LoadTestError::InvalidParameters("requests must be positive".into()));
    }
    let url = format!("{}/shipments/{}", base_url.trim_end_matches('/'), sku);
    let client = reqwest::Client::builder()
        .timeout(Duration::from_secs(10))
        .pool_max_idle_per_host(256)
        .build()
        .map_err(|e| LoadTestError::TargetUnavailable(e.to_string()))?;
    client
        .get(format!("{}/health", base_url.trim_end_matches('/')))
        .send()
        .await
        .map_err(|e| LoadTestError::TargetUnavailable(e.to_string()))?;

    let start = Instant::now();
    let step = duration.as_secs_f64() / requests as f64;
    let mut tasks = Vec::with_capacity(requests as usize);
    for i in 0..requests {
        let at = start + Duration::from_secs_f64(step * i as f64);
        let (client, url) = (client.clone(), url.clone());
        tasks.push(tokio::spawn(async move {
            tokio::time::sleep_until(at.into()).await;
            let t0 = Instant::now();
            let ok = match client.get(&url).send().await {
                Ok(resp) => resp.status() == reqwest::StatusCode::OK && resp.bytes().await.is_ok(),
                Err(_) => false,
            };
            (ok, t0.elapsed().as_secs_f64() * 1000.0)
        }));
    }
    let mut lat = Vec::with_capacity(requests as usize);
    let mut failed = 0;
    for t in tasks {
        match t.await {
            Ok((true, ms)) => lat.push(ms),
            _ => failed += 1,
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    Ok(LoadReport::from_latencies(requests, duration.as_secs_f64(), failed, lat, elapsed))
}

/// Blocking wrapper with its own runtime.
pub fn run_load_test_blocking(base_url: &str, sku: &str, requests: u64, duration: Duration) -> Result<LoadReport, LoadTestError> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    rt.block_on(run_load_test(base_url, sku, requests, duration))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statistics() {
        let lat: Vec<f64> = (1..=100).map(f64::from).collect();
        let r = LoadReport::from_latencies(100, 2.0, 0, lat, 2.0);
        assert_eq!(r.avg_ms, 50.5);
        assert_eq!(r.min_ms, 1.0);
        assert_eq!(r.max_ms, 100.0);
        assert_eq!(r.p95_ms, 95.0);
        assert_eq!(r.throughput_rps, 50.0);
        assert_eq!(r.error_rate_pct, 0.0);
        let r = LoadReport::from_latencies(4, 1.0, 1, vec![10.0, 20.0, 30.0], 1.0);
        assert_eq!(r.error_rate_pct, 25.0);
        assert_eq!(r.throughput_rps, 3.0);
    }

    #[test]
    fn single_request_throughput_is_inverse_latency() {
        let r = LoadReport::from_latencies(1, 0.0, 0, vec![40.0], 0.04);
        assert!((r.throughput_rps - 25.0).abs() < 1e-9);
    }
}
