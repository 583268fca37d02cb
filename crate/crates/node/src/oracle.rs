//! Off-chain oracle node: watches pending requests through the node API,
//! reads the gateway and submits fulfillments.

use std::collections::HashMap;
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;
use tokio::sync::watch;

use pharmachain_core::crypto::Hash32;
use pharmachain_core::oracle::OracleField;

use crate::service::now_ms;

#[derive(Debug, Clone)]
pub struct RunnerConfig {
    pub node_url: String,
    pub gateway_url: String,
    pub account: String,
    pub poll_interval: Duration,
    pub request_timeout_ms: u64,
}

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("node unavailable: {0}")]
    NodeUnavailable(String),
    #[error("node rejected {op}: {body}")]
    Rejected { op: String, body: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PollSummary {
    pub pending: usize,
    pub fulfilled: usize,
    /// Fulfillments carrying the not-found flag.
    pub error_flagged: usize,
    /// Left pending because the gateway was unreachable.
    pub deferred: usize,
    pub expired: usize,
}

#[derive(Deserialize)]
struct PendingRequest {
    request_id: Hash32,
    sku: String,
    field: OracleField,
    created_at_ms: u64,
}

enum Fetch {
    Value(f64),
    NotFound,
    Unreachable,
}

pub struct OracleRunner {
    cfg: RunnerConfig,
    client: reqwest::Client,
    /// Requests with a submitted but not yet mined settlement.
    in_flight: HashMap<Hash32, u64>,
}

impl OracleRunner {
    pub fn new(cfg: RunnerConfig) -> Self {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(5))
            .build()
            .expect("http client");
        Self {
            cfg,
            client,
            in_flight: HashMap::new(),
        }
    }

    async fn fetch(&self, sku: &str, field: OracleField) -> Fetch {
        let url = format!("{}/shipments/{}", self.cfg.gateway_url.trim_end_matches('/'), sku);
        let resp = match self.client.get(url).send().await {
            Ok(r) => r,
            Err(_) => return Fetch::Unreachable,
        };
        match resp.status().as_u16() {
            200 => match resp.json::<Value>().await {
                Ok(v) => v.get(field.telemetry_key()).and_then(Value::as_f64).map_or(Fetch::NotFound, Fetch::Value),
                Err(_) => Fetch::Unreachable,
            },
            400 | 404 => Fetch::NotFound,
            _ => Fetch::Unreachable,
        }
    }

    async fn send(&self, op: &str, args: Value) -> Result<(), RunnerError> {
        let url = format!("{}/tx/{op}", self.cfg.node_url.trim_end_matches('/'));
        let body = json!({ "account": self.cfg.account, "args": args, "wait": false });
        let resp = self
            .client
            .post(url)
            .json(&body)
            .send()
            .await
            .map_err(|e| RunnerError::NodeUnavailable(e.to_string()))?;
        if resp.status().is_success() {
            Ok(())
        } else {
            Err(RunnerError::Rejected {
                op: op.into(),
                body: resp.text().await.unwrap_or_default(),
            })
        }
    }

    /// One pass over the pending requests.
    pub async fn poll_once(&mut self) -> Result<PollSummary, RunnerError> {
        let url = format!("{}/oracle/requests?status=pending", self.cfg.node_url.trim_end_matches('/'));
        let pending: Vec<PendingRequest> = self
            .client
            .get(url)
            .send()
            .await
            .map_err(|e| RunnerError::NodeUnavailable(e.to_string()))?
            .json()
            .await
            .map_err(|e| RunnerError::NodeUnavailable(e.to_string()))?;
        let now = now_ms();
        // Forget settlements that never got mined after a few polls.
        let stale = 5 * self.cfg.poll_interval.as_millis() as u64;
        self.in_flight.retain(|id, at| now.saturating_sub(*at) < stale && pending.iter().any(|p| &p.request_id == id));

        let mut s = PollSummary {
            pending: pending.len(),
            ..PollSummary::default()
        };
        for req in pending {
            if self.in_flight.contains_key(&req.request_id) {
                continue;
            }
            let id = json!(req.request_id);
            if now >= req.created_at_ms.saturating_add(self.cfg.request_timeout_ms) {
                self.send("expireOracleRequest", json!({ "requestId": id })).await?;
                self.in_flight.insert(req.request_id, now);
                s.expired += 1;
                continue;
            }
            let value = match self.fetch(&req.sku, req.field).await {
                Fetch::Unreachable => {
                    s.deferred += 1;
                    continue;
                }
                Fetch::NotFound => {
                    s.error_flagged += 1;
                    Value::Null
                }
                Fetch::Value(raw) => match req.field.scale_value(raw) {
                    Ok(v) => {
                        s.fulfilled += 1;
                        json!(v)
                    }
                    Err(e) => {
                        tracing::warn!("cannot deliver {raw} for {}: {e}", req.sku);
                        s.error_flagged += 1;
                        Value::Null
                    }
                },
            };
            self.send("fulfillOracleRequest", json!({ "requestId": id, "value": value })).await?;
            self.in_flight.insert(req.request_id, now);
        }
        Ok(s)
    }

    pub async fn run(mut self, mut shutdown: watch::Receiver<bool>) {
        loop {
            match self.poll_once().await {
                Ok(s) if s.pending > 0 => tracing::debug!(?s, "oracle poll"),
                Ok(_) => {}
                Err(e) => tracing::warn!("oracle poll failed: {e}"),
            }
            tokio::select! {
                _ = tokio::time::sleep(self.cfg.poll_interval) => {}
                _ = shutdown.changed() => {}
            }
            if *shutdown.borrow() {
                break;
            }
        }
    }
}
