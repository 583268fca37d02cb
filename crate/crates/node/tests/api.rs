use std::path::Path;
use std::time::Duration;

use serde_json::{json, Value};

use pharmachain_core::oracle::OracleField;
use pharmachain_node::network;
use pharmachain_node::oracle::{OracleRunner, RunnerConfig};
use pharmachain_node::{Keystore, NodeConfig, RunningNode};
use pharmachain_telemetry::{BrokerClient, MemorySink, Scenario, SensingNode};

fn config(dir: &Path, oracle: bool) -> NodeConfig {
    let mut cfg = NodeConfig::in_dir(dir);
    let any = "127.0.0.1:0".parse().unwrap();
    cfg.api.listen = any;
    cfg.gateway.listen = any;
    cfg.gateway.broker = any;
    cfg.gateway.nodes.insert("sensor-1".into(), "sensor-1".into());
    cfg.chain.block_interval_ms = 0;
    cfg.oracle.enabled = oracle;
    cfg.oracle.poll_interval_ms = 50;
    cfg.fees.auto_request = false;
    cfg
}

fn start(cfg: &NodeConfig) -> RunningNode {
    let (ledger, ks) = network::open_or_init(cfg).unwrap();
    RunningNode::start(cfg, ledger, ks, Box::new(MemorySink::default())).unwrap()
}

struct Client {
    base: String,
    http: reqwest::Client,
    rt: tokio::runtime::Runtime,
}

impl Client {
    fn new(node: &RunningNode) -> Self {
        Self {
            base: node.api_url(),
            http: reqwest::Client::new(),
            rt: tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap(),
        }
    }

    fn send(&self, req: reqwest::RequestBuilder) -> (u16, Value) {
        self.rt.block_on(async {
            let r = req.send().await.unwrap();
            (r.status().as_u16(), r.json().await.unwrap_or(Value::Null))
        })
    }

    fn get(&self, path: &str) -> (u16, Value) {
        self.send(self.http.get(format!("{}{path}", self.base)))
    }

    fn tx(&self, op: &str, account: &str, args: Value) -> (u16, Value) {
        self.post(&format!("/tx/{op}"), json!({ "account": account, "args": args }))
    }

    fn post(&self, path: &str, body: Value) -> (u16, Value) {
        self.send(self.http.post(format!("{}{path}", self.base)).json(&body))
    }
}

fn produce(c: &Client, upc: u64, sku: &str) -> (u16, Value) {
    c.tx("produceItemByManufacturer", "manufacturer", json!({ "upc": upc, "sku": sku, "drugName": "Aspirin" }))
}

#[test]
fn lifecycle_step_returns_receipt_and_event() {
    let dir = tempfile::tempdir().unwrap();
    let node = start(&config(dir.path(), false));
    let c = Client::new(&node);
    let (status, body) = produce(&c, 1, "SKU-A");
    assert_eq!(status, 200, "{body}");
    assert_eq!(body["operation"], "produceItemByManufacturer");
    assert_eq!(body["events"][0]["name"], "ProducedByManufacturer");
    assert_eq!(body["events"][0]["upc"], 1);
    assert!(body["receipt"]["failure"].is_null());

    let (status, item) = c.get("/items/1");
    assert_eq!(status, 200);
    assert_eq!(item["stateValue"], 0);
    assert_eq!(item["sku"], "SKU-A");
    let (_, events) = c.get("/events?upc=1");
    assert_eq!(events.as_array().unwrap().len(), 1);
}

#[test]
fn error_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let node = start(&config(dir.path(), false));
    let c = Client::new(&node);
    assert_eq!(produce(&c, 1, "SKU-A").0, 200);

    // Wrong role: mined as a failed transaction, reported with the guard.
    let (status, body) = c.tx("sellItemByManufacturer", "distributor", json!({ "upc": 1 }));
    assert_eq!(status, 409, "{body}");
    assert_eq!(body["error"]["kind"], "onlyManufacturer");
    assert!(body["blockHeight"].as_u64().is_some());

    // Right role, wrong state.
    let (status, body) = c.tx("purchaseItemByDistributor", "distributor", json!({ "upc": 1 }));
    assert_eq!(status, 409);
    assert_eq!(body["error"]["kind"], "updateInventoryByManufacturer");

    let (status, body) = c.tx("sellItemByManufacturer", "manufacturer", json!({ "upc": 99 }));
    assert_eq!(status, 404, "{body}");
    assert_eq!(c.get("/items/99").0, 404);
    assert_eq!(c.get("/items/abc").0, 400);

    let (status, body) = c.tx("produceItemByManufacturer", "manufacturer", json!({ "upc": 2 }));
    assert_eq!(status, 400, "{body}");
    assert_eq!(body["error"]["code"], "BadArguments");
    assert_eq!(c.post("/tx/sellItemByManufacturer", json!({ "nope": 1 })).0, 400);

    let (status, body) = c.tx("sellItemByManufacturer", "mallory", json!({ "upc": 1 }));
    assert_eq!(status, 401, "{body}");
    assert_eq!(c.tx("mintMoney", "owner", json!({})).0, 404);
    assert_eq!(c.get("/no/such/path").0, 404);
}

#[test]
fn roles_accounts_and_chain_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let node = start(&config(dir.path(), false));
    let c = Client::new(&node);
    let (status, created) = c.post("/accounts", json!({ "name": "second-maker" }));
    assert_eq!(status, 201);
    assert_eq!(c.post("/accounts", json!({ "name": "second-maker" })).0, 409);
    let addr = created["address"].as_str().unwrap().to_string();

    // Roles are granted by existing holders of the same role.
    let (status, body) = c.tx("addManufacturer", "distributor", json!({ "account": addr }));
    assert_eq!(status, 409);
    assert_eq!(body["error"]["kind"], "onlyManufacturer");
    assert_eq!(c.tx("addManufacturer", "manufacturer", json!({ "account": addr })).0, 200);
    assert_eq!(c.tx("addManufacturer", "manufacturer", json!({ "account": addr })).0, 409);
    let (_, roles) = c.get(&format!("/roles/{addr}"));
    assert_eq!(roles["roles"], json!(["Manufacturer"]));
    assert_eq!(produce(&c, 5, "SKU-B").0, 200);
    let (status, _) = c.tx("produceItemByManufacturer", "second-maker", json!({ "upc": 6, "sku": "S", "drugName": "D" }));
    assert_eq!(status, 200);

    assert_eq!(c.tx("renounceManufacturer", "second-maker", json!({})).0, 200);
    let (_, roles) = c.get(&format!("/roles/{addr}"));
    assert_eq!(roles["roles"], json!([]));

    let (_, report) = c.get("/chain/verify");
    assert_eq!(report["valid"], true);
    let (_, head) = c.get("/chain/head");
    let h = head["height"].as_u64().unwrap();
    assert_eq!(c.get(&format!("/blocks/{h}")).1["height"], h);
    assert_eq!(c.get(&format!("/blocks/{}", h + 1)).0, 404);
    let (_, prov) = c.get("/items/5/provenance");
    assert_eq!(prov["authentic"], true);
}

#[test]
fn state_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), false);
    let tip = {
        let node = start(&cfg);
        let c = Client::new(&node);
        assert_eq!(produce(&c, 3, "SKU-R").0, 200);
        let tip = c.get("/chain/head").1;
        node.stop();
        tip
    };
    let node = start(&cfg);
    let c = Client::new(&node);
    assert_eq!(c.get("/chain/head").1["blockHash"], tip["blockHash"]);
    assert_eq!(c.get("/items/3").1["sku"], "SKU-R");
    assert_eq!(c.tx("sellItemByManufacturer", "manufacturer", json!({ "upc": 3 })).0, 200);
}

fn runner(node: &RunningNode, timeout_ms: u64) -> OracleRunner {
    OracleRunner::new(RunnerConfig {
        node_url: node.api_url(),
        gateway_url: node.gateway_url().unwrap(),
        account: "oracle-node".into(),
        poll_interval: Duration::from_millis(50),
        request_timeout_ms: timeout_ms,
    })
}

fn publish(cfg: &NodeConfig, node: &RunningNode, sku: &str, temp: f64) {
    let ks = Keystore::open(cfg.keystore_path()).unwrap();
    let mut sensor = SensingNode::new("sensor-1", ks.get("sensor-1").unwrap().clone(), Scenario::steady(sku, temp, 50.0));
    sensor.run(&mut BrokerClient::new(node.broker_addr().unwrap()), 0);
    let gw = node.gateway().unwrap();
    for _ in 0..100 {
        if gw.read().unwrap().latest(sku).is_some() {
            return;
        }
        std::thread::sleep(Duration::from_millis(20));
    }
    panic!("reading never reached the gateway");
}

fn wait_settled(c: &Client, id: &str) -> Value {
    for _ in 0..100 {
        let (_, r) = c.get(&format!("/oracle/requests/{id}"));
        if r["status"]["status"] != "pending" {
            return r;
        }
        std::thread::sleep(Duration::from_millis(20));
    }
    panic!("request {id} never settled");
}

#[test]
fn oracle_runner_fulfills_and_flags_missing_skus() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), false);
    let node = start(&cfg);
    let c = Client::new(&node);
    publish(&cfg, &node, "SKU-T", 21.37);

    let (_, ok) = c.tx(OracleField::Temperature.request_function(), "owner", json!({ "sku": "SKU-T" }));
    let (_, missing) = c.tx(OracleField::Humidity.request_function(), "owner", json!({ "sku": "SKU-NONE" }));
    let ok_id = ok["receipt"]["oracle_requests"][0].as_str().unwrap().to_string();
    let missing_id = missing["receipt"]["oracle_requests"][0].as_str().unwrap().to_string();

    let mut r = runner(&node, 60_000);
    let s = c.rt.block_on(r.poll_once()).unwrap();
    assert_eq!((s.pending, s.fulfilled, s.error_flagged), (2, 1, 1));

    let done = wait_settled(&c, &ok_id);
    assert_eq!(done["status"]["status"], "fulfilled");
    assert_eq!(done["status"]["value"], 2137);
    assert_eq!(wait_settled(&c, &missing_id)["status"]["status"], "failed");
    let (_, values) = c.get("/oracle/values/SKU-T");
    assert_eq!(values["values"]["temperature"]["value"], 2137);

    // Nothing left to do.
    let s = c.rt.block_on(r.poll_once()).unwrap();
    assert_eq!(s.pending, 0);
}

#[test]
fn oracle_runner_expires_stale_requests() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), false);
    cfg.oracle.request_timeout_ms = 1;
    let node = start(&cfg);
    let c = Client::new(&node);
    let contract = node.node().ledger().state().contract_address();
    let before = c.get(&format!("/link/{contract}")).1["balance"].clone();
    let (_, body) = c.tx("requestLatitude", "owner", json!({ "sku": "SKU-X" }));
    let id = body["receipt"]["oracle_requests"][0].as_str().unwrap().to_string();
    std::thread::sleep(Duration::from_millis(5));

    let s = c.rt.block_on(runner(&node, 1).poll_once()).unwrap();
    assert_eq!(s.expired, 1);
    let r = wait_settled(&c, &id);
    assert_eq!(r["status"]["status"], "refunded");
    assert_eq!(c.get(&format!("/link/{contract}")).1["balance"], before);
}

#[test]
fn live_runner_answers_through_the_gateway() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), true);
    let node = start(&cfg);
    let c = Client::new(&node);
    publish(&cfg, &node, "SKU-L", 23.5);
    let (_, body) = c.tx("requestTemperatureData", "consumer", json!({ "sku": "SKU-L" }));
    let id = body["receipt"]["oracle_requests"][0].as_str().unwrap().to_string();
    assert_eq!(wait_settled(&c, &id)["status"]["value"], 2350);
}
