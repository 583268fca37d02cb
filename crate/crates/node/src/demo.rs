//! End-to-end walk-through on a throwaway local network: a sensing node
//! streams telemetry, the thirteen lifecycle steps run over HTTP and the
//! oracle answers a temperature request from the gateway.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use pharmachain_core::contract::LifecycleStep;
use pharmachain_core::oracle::OracleField;
use pharmachain_core::scenario::Parties;
use pharmachain_telemetry::{BrokerClient, MemorySink, Scenario, SensingNode};

use crate::config::NodeConfig;
use crate::keystore::Keystore;
use crate::network::{self, NetworkError, ROLE_ACCOUNTS};
use crate::runtime::RunningNode;

const SENSOR: &str = "sensor-1";

#[derive(Debug, Error)]
pub enum DemoError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),
    #[error("{0}")]
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct DemoOptions {
    pub upc: u64,
    pub sku: String,
    pub temperature: f64,
    /// Kept after the run when set; otherwise a temporary directory is used
    /// and removed.
    pub data_dir: Option<PathBuf>,
}

impl Default for DemoOptions {
    fn default() -> Self {
        Self {
            upc: 1,
            sku: "SKU-DEMO".into(),
            temperature: 23.5,
            data_dir: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DemoStep {
    pub operation: String,
    pub account: String,
    pub status: u16,
    pub block_height: u64,
    pub events: Vec<String>,
    pub state_after: String,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DemoReport {
    pub upc: u64,
    pub sku: String,
    pub steps: Vec<DemoStep>,
    /// Event names for the item in chain order.
    pub events: Vec<String>,
    pub final_state: u8,
    pub final_state_name: String,
    pub authentic: bool,
    pub chain_valid: bool,
    pub chain_height: u64,
    /// Scaled on-chain temperature delivered by the oracle.
    pub oracle_temperature: i64,
    pub oracle_requests_settled: usize,
    pub elapsed_ms: u64,
}

fn account_for(step: LifecycleStep) -> &'static str {
    let role = step.required_role();
    ROLE_ACCOUNTS.iter().find(|(_, r)| *r == role).map(|(n, _)| *n).expect("every role has an account")
}

struct Api {
    base: String,
    http: reqwest::Client,
}

impl Api {
    async fn get(&self, path: &str) -> Result<(u16, Value), DemoError> {
        let r = self.http.get(format!("{}{path}", self.base)).send().await?;
        let status = r.status().as_u16();
        Ok((status, r.json().await.unwrap_or(Value::Null)))
    }

    async fn tx(&self, op: &str, account: &str, args: Value) -> Result<(u16, Value), DemoError> {
        let r = self
            .http
            .post(format!("{}/tx/{op}", self.base))
            .json(&json!({ "account": account, "args": args }))
            .send()
            .await?;
        let status = r.status().as_u16();
        Ok((status, r.json().await.unwrap_or(Value::Null)))
    }
}

async fn wait_until<F, Fut>(what: &str, timeout: Duration, mut check: F) -> Result<Value, DemoError>
where
    F: FnMut() -> Fut,
    Fut: std::future::Future<Output = Result<Option<Value>, DemoError>>,
{
    let deadline = Instant::now() + timeout;
    loop {
        if let Some(v) = check().await? {
            return Ok(v);
        }
        if Instant::now() > deadline {
            return Err(DemoError::Failed(format!("timed out waiting for {what}")));
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
}

fn demo_config(dir: PathBuf) -> NodeConfig {
    let mut cfg = NodeConfig::in_dir(dir);
    let any = "127.0.0.1:0".parse().unwrap();
    cfg.api.listen = any;
    cfg.gateway.listen = any;
    cfg.gateway.broker = any;
    cfg.gateway.nodes.insert(SENSOR.into(), SENSOR.into());
    cfg.chain.block_interval_ms = 0;
    cfg.oracle.poll_interval_ms = 100;
    cfg
}

pub async fn run(opts: &DemoOptions) -> Result<DemoReport, DemoError> {
    let (dir, temporary) = match &opts.data_dir {
        Some(d) => (d.clone(), false),
        None => {
            let nanos = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).unwrap_or_default().as_nanos();
            (std::env::temp_dir().join(format!("pharmachain-demo-{}-{nanos}", std::process::id())), true)
        }
    };
    let result = run_in(opts, dir.clone()).await;
    if temporary {
        let _ = std::fs::remove_dir_all(&dir);
    }
    result
}

async fn run_in(opts: &DemoOptions, dir: PathBuf) -> Result<DemoReport, DemoError> {
    let started = Instant::now();
    let cfg = demo_config(dir);
    let ledger = network::init(&cfg)?;
    let keystore = Keystore::open(cfg.keystore_path()).map_err(NetworkError::from)?;
    let sensor_key = keystore.get(SENSOR).map_err(NetworkError::from)?.clone();
    let running = RunningNode::start(&cfg, ledger, keystore, Box::new(MemorySink::default()))?;
    let api = Api {
        base: running.api_url(),
        http: reqwest::Client::new(),
    };
    let gateway_url = running.gateway_url().expect("gateway enabled");
    let broker = running.broker_addr().expect("gateway enabled");

    // One reading is enough for the gateway to know the shipment.
    let scenario = Scenario::steady(&opts.sku, opts.temperature, 45.0);
    tokio::task::spawn_blocking(move || {
        let mut node = SensingNode::new(SENSOR, sensor_key, scenario);
        let mut client = BrokerClient::new(broker);
        node.run(&mut client, 60)
    })
    .await
    .map_err(|e| DemoError::Failed(e.to_string()))?;
    let http = reqwest::Client::new();
    let shipment_url = format!("{gateway_url}/shipments/{}", opts.sku);
    wait_until("telemetry at the gateway", Duration::from_secs(5), || {
        let (http, url) = (&http, &shipment_url);
        async move {
            let r = http.get(url).send().await?;
            Ok(r.status().is_success().then_some(Value::Null))
        }
    })
    .await?;

    let mut steps = Vec::with_capacity(13);
    for step in LifecycleStep::ALL {
        let op = Parties::step_operation(step, opts.upc, &opts.sku, "Paracetamol 500mg");
        let account = account_for(step);
        let (status, body) = api.tx(&op.name(), account, op.args_json()).await?;
        if status != 200 {
            return Err(DemoError::Failed(format!("{} returned {status}: {body}", op.name())));
        }
        let (_, item) = api.get(&format!("/items/{}", opts.upc)).await?;
        steps.push(DemoStep {
            operation: op.name(),
            account: account.into(),
            status,
            block_height: body["blockHeight"].as_u64().unwrap_or_default(),
            events: body["events"]
                .as_array()
                .map(|es| es.iter().filter_map(|e| e["name"].as_str().map(str::to_string)).collect())
                .unwrap_or_default(),
            state_after: item["state"].as_str().unwrap_or_default().into(),
        });
    }

    let field = OracleField::Temperature;
    let (status, body) = api.tx(field.request_function(), "owner", json!({ "sku": opts.sku })).await?;
    if status != 200 {
        return Err(DemoError::Failed(format!("{} returned {status}: {body}", field.request_function())));
    }
    let request_id = body["receipt"]["oracle_requests"][0]
        .as_str()
        .ok_or_else(|| DemoError::Failed("request transaction opened no oracle request".into()))?
        .to_string();
    let temp = wait_until("oracle fulfillment", Duration::from_secs(5), || {
        let (api, id) = (&api, &request_id);
        async move {
            let (_, r) = api.get(&format!("/oracle/requests/{id}")).await?;
            Ok(match r["status"]["status"].as_str() {
                Some("fulfilled") => Some(r["status"]["value"].clone()),
                Some("pending") | None => None,
                Some(other) => return Err(DemoError::Failed(format!("temperature request ended {other}"))),
            })
        }
    })
    .await?;
    wait_until("oracle queue to drain", Duration::from_secs(5), || {
        let api = &api;
        async move {
            let (_, v) = api.get("/oracle/requests?status=pending").await?;
            Ok(v.as_array().is_some_and(|a| a.is_empty()).then_some(Value::Null))
        }
    })
    .await?;

    let (_, item) = api.get(&format!("/items/{}", opts.upc)).await?;
    let (_, prov) = api.get(&format!("/items/{}/provenance", opts.upc)).await?;
    let (_, chain) = api.get("/chain/verify").await?;
    let (_, events) = api.get(&format!("/events?upc={}", opts.upc)).await?;
    let (_, fulfilled) = api.get("/oracle/requests?status=fulfilled").await?;
    let report = DemoReport {
        upc: opts.upc,
        sku: opts.sku.clone(),
        steps,
        events: events
            .as_array()
            .map(|es| es.iter().filter_map(|e| e["name"].as_str().map(str::to_string)).collect())
            .unwrap_or_default(),
        final_state: item["stateValue"].as_u64().unwrap_or_default() as u8,
        final_state_name: item["state"].as_str().unwrap_or_default().into(),
        authentic: prov["authentic"].as_bool().unwrap_or(false),
        chain_valid: chain["valid"].as_bool().unwrap_or(false),
        chain_height: chain["blocks"].as_u64().unwrap_or(1).saturating_sub(1),
        oracle_temperature: temp.as_i64().unwrap_or_default(),
        oracle_requests_settled: fulfilled.as_array().map_or(0, Vec::len),
        elapsed_ms: started.elapsed().as_millis() as u64,
    };
    running.stop();
    Ok(report)
}

/// Runs the demo on its own runtime.
pub fn run_blocking(opts: &DemoOptions) -> Result<DemoReport, DemoError> {
    tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| DemoError::Failed(e.to_string()))?
        .block_on(run(opts))
}
