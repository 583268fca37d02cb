use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use pharmachain_core::access::Role;
use pharmachain_core::contract::Operation;
use pharmachain_core::crypto::Address;
use pharmachain_core::par::Parallelism;
use pharmachain_node::demo::{self, DemoOptions};
use pharmachain_node::network;
use pharmachain_node::verify::{verify_item_in_store, verify_store};
use pharmachain_node::{Keystore, NodeConfig, RunningNode};
use pharmachain_telemetry::loadtest::run_load_test_blocking;
use pharmachain_telemetry::{BrokerClient, OutboxSink, Scenario, SensingNode};

#[derive(Parser)]
#[command(name = "pharmachain", version, about = "Pharmaceutical supply-chain ledger node and client")]
struct Cli {
    /// Node API base URL.
    #[arg(long, global = true, env = "PHARMACHAIN_NODE_URL", default_value = "http://127.0.0.1:8545")]
    node_url: String,
    /// Keystore account that signs transactions.
    #[arg(long, global = true, env = "PHARMACHAIN_ACCOUNT")]
    account: Option<String>,
    #[arg(long, global = true, env = "PHARMACHAIN_CONFIG", default_value = "pharmachain.toml")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a default config, generate keys and create the chain.
    Init,
    /// Run the node until interrupted.
    Serve,
    #[command(subcommand)]
    Keys(KeysCmd),
    #[command(subcommand)]
    Roles(RolesCmd),
    #[command(subcommand)]
    Item(ItemCmd),
    #[command(subcommand)]
    Chain(ChainCmd),
    #[command(subcommand)]
    Demo(DemoCmd),
    /// Load-test a gateway's shipment endpoint.
    Loadtest(LoadtestArgs),
    #[command(subcommand)]
    Sensor(SensorCmd),
    /// List contract operations accepted as subcommands.
    Operations,
    /// Any contract operation, e.g. `produceItemByManufacturer upc=1 sku=A drugName=B`.
    #[command(external_subcommand)]
    Op(Vec<String>),
}

#[derive(Subcommand)]
enum KeysCmd {
    New { name: String },
    List,
}

#[derive(Subcommand)]
enum RolesCmd {
    /// Grant a role; `who` is an account name or address.
    Add { role: Role, who: String },
    Renounce { role: Role },
    Show { who: String },
}

#[derive(Subcommand)]
enum ItemCmd {
    Fetch { upc: u64 },
    /// Check an item's custody chain, online or against a store directory.
    Verify {
        upc: u64,
        #[arg(long)]
        store: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ChainCmd {
    Verify {
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        sequential: bool,
    },
    Head,
}

#[derive(Subcommand)]
enum DemoCmd {
    /// Full lifecycle on a throwaway in-process network.
    Run {
        #[arg(long, default_value_t = 1)]
        upc: u64,
        #[arg(long, default_value = "SKU-DEMO")]
        sku: String,
        #[arg(long, default_value_t = 23.5)]
        temperature: f64,
        /// Keep the network's files here.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct LoadtestArgs {
    #[arg(long, default_value = "http://127.0.0.1:8600")]
    url: String,
    #[arg(long)]
    sku: String,
    #[arg(long, default_value_t = 1000)]
    requests: u64,
    #[arg(long, default_value_t = 2.0)]
    duration_secs: f64,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SensorCmd {
    /// Publish signed readings to a broker.
    Run(SensorArgs),
}

#[derive(Args)]
struct SensorArgs {
    #[arg(long, default_value = "127.0.0.1:1883")]
    broker: std::net::SocketAddr,
    #[arg(long, default_value = "sensor-1")]
    node_id: String,
    /// Keystore account holding the node key; defaults to the node id.
    #[arg(long)]
    key: Option<String>,
    /// Scenario JSON file; otherwise a constant profile.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value = "SKU-1")]
    sku: String,
    #[arg(long, default_value_t = 22.0)]
    temp: f64,
    #[arg(long, default_value_t = 45.0)]
    hum: f64,
    #[arg(long, default_value_t = 60)]
    interval_secs: u64,
    /// Simulated seconds to cover; with --live, wall-clock seconds.
    #[arg(long, default_value_t = 600)]
    duration_secs: u64,
    /// Publish on the wall clock instead of as fast as possible.
    #[arg(long)]
    live: bool,
}

struct Failure {
    code: String,
    message: String,
    detail: Option<Value>,
}

impl Failure {
    fn new(code: &str, message: impl ToString) -> Self {
        Self {
            code: code.into(),
            message: message.to_string(),
            detail: None,
        }
    }
}

type CmdResult = Result<Value, Failure>;

fn print(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).unwrap_or_default());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(&cli) {
        Ok(Value::Null) => ExitCode::SUCCESS,
        Ok(v) => {
            print(&v);
            ExitCode::SUCCESS
        }
        Err(f) => {
            let mut err = json!({ "error": { "code": f.code, "message": f.message } });
            if let Some(d) = f.detail {
                err["detail"] = d;
            }
            eprintln!("{}", serde_json::to_string_pretty(&err).unwrap_or_default());
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Init => init(&cli.config),
        Command::Serve => serve(&cli.config),
        Command::Keys(k) => keys(&cli.config, k),
        Command::Roles(r) => roles(cli, r),
        Command::Item(ItemCmd::Fetch { upc }) => http_get(&cli.node_url, &format!("/items/{upc}")),
        Command::Item(ItemCmd::Verify { upc, store: None }) => http_get(&cli.node_url, &format!("/items/{upc}/provenance")).and_then(authentic),
        Command::Item(ItemCmd::Verify { upc, store: Some(dir) }) => {
            let r = verify_item_in_store(dir, *upc, Parallelism::default()).map_err(|e| Failure::new(e.code(), e))?;
            authentic(serde_json::to_value(r).unwrap_or_default())
        }
        Command::Chain(ChainCmd::Verify { store, sequential }) => {
            let report = match store {
                Some(dir) => {
                    let mode = if *sequential { Parallelism::Sequential } else { Parallelism::Parallel };
                    serde_json::to_value(verify_store(dir, mode).map_err(|e| Failure::new(e.code(), e))?).unwrap_or_default()
                }
                None => http_get(&cli.node_url, "/chain/verify")?,
            };
            if report["valid"] == json!(true) {
                Ok(report)
            } else {
                Err(Failure {
                    detail: Some(report),
                    ..Failure::new("ChainCorrupt", "chain verification failed")
                })
            }
        }
        Command::Chain(ChainCmd::Head) => http_get(&cli.node_url, "/chain/head"),
        Command::Demo(DemoCmd::Run {
            upc,
            sku,
            temperature,
            data_dir,
        }) => {
            let opts = DemoOptions {
                upc: *upc,
                sku: sku.clone(),
                temperature: *temperature,
                data_dir: data_dir.clone(),
            };
            let r = demo::run_blocking(&opts).map_err(|e| Failure::new("DemoFailed", e))?;
            Ok(serde_json::to_value(r).unwrap_or_default())
        }
        Command::Loadtest(a) => {
            let r = run_load_test_blocking(&a.url, &a.sku, a.requests, Duration::from_secs_f64(a.duration_secs))
                .map_err(|e| Failure::new("LoadTestFailed", e))?;
            if let Some(p) = &a.out {
                r.write(p).map_err(|e| Failure::new("Io", e))?;
            }
            Ok(serde_json::to_value(r).unwrap_or_default())
        }
        Command::Sensor(SensorCmd::Run(a)) => sensor(&cli.config, a),
        Command::Operations => Ok(json!(Operation::all_names())),
        Command::Op(words) => operation(cli, words),
    }
}

fn authentic(report: Value) -> CmdResult {
    if report["authentic"] == json!(true) {
        Ok(report)
    } else {
        Err(Failure {
            detail: Some(report),
            ..Failure::new("NotAuthentic", "item failed verification")
        })
    }
}

fn load_config(path: &Path) -> Result<NodeConfig, Failure> {
    NodeConfig::load(path).map_err(|e| Failure::new("Config", format!("{}: {e}", path.display())))
}

fn init(path: &Path) -> CmdResult {
    let cfg = if path.exists() {
        load_config(path)?
    } else {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let mut cfg = NodeConfig::in_dir(dir);
        cfg.gateway.nodes.insert("sensor-1".into(), "sensor-1".into());
        cfg.save(path).map_err(|e| Failure::new("Config", e))?;
        cfg
    };
    let ledger = network::init(&cfg).map_err(|e| Failure::new("Init", e))?;
    let ks = Keystore::open(cfg.keystore_path()).map_err(|e| Failure::new("Keystore", e))?;
    Ok(json!({
        "config": path,
        "chainDir": cfg.chain_dir(),
        "height": ledger.height(),
        "contract": ledger.state().contract_address(),
        "accounts": ks.list(),
    }))
}

fn serve(path: &Path) -> CmdResult {
    let cfg = load_config(path)?;
    let (ledger, ks) = network::open_or_init(&cfg).map_err(|e| Failure::new("Open", e))?;
    let sink = OutboxSink::open(cfg.resolve(&cfg.gateway.outbox)).map_err(|e| Failure::new("Io", e))?;
    let node = RunningNode::start(&cfg, ledger, ks, Box::new(sink)).map_err(|e| Failure::new("Start", e))?;
    tracing::info!(api = %node.api_url(), gateway = ?node.gateway_url(), broker = ?node.broker_addr(), "node running");
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::new("Runtime", e))?;
    rt.block_on(async {
        let _ = tokio::signal::ctrl_c().await;
    });
    tracing::info!("shutting down");
    node.stop();
    Ok(Value::Null)
}

fn keys(path: &Path, cmd: &KeysCmd) -> CmdResult {
    let cfg = load_config(path)?;
    let mut ks = Keystore::open(cfg.keystore_path()).map_err(|e| Failure::new("Keystore", e))?;
    match cmd {
        KeysCmd::New { name } => Ok(json!(ks.create(name).map_err(|e| Failure::new("Keystore", e))?)),
        KeysCmd::List => Ok(json!(ks.list())),
    }
}

fn roles(cli: &Cli, cmd: &RolesCmd) -> CmdResult {
    match cmd {
        RolesCmd::Add { role, who } => {
            let address = resolve_address(&cli.node_url, who)?;
            let account = cli.account.as_deref().unwrap_or("owner");
            submit(&cli.node_url, account, &format!("add{}", role.name()), json!({ "account": address }))
        }
        RolesCmd::Renounce { role } => {
            let account = cli.account.as_deref().ok_or_else(|| Failure::new("MissingAccount", "--account is required"))?;
            submit(&cli.node_url, account, &format!("renounce{}", role.name()), json!({}))
        }
        RolesCmd::Show { who } => {
            let address = resolve_address(&cli.node_url, who)?;
            http_get(&cli.node_url, &format!("/roles/{address}"))
        }
    }
}

fn resolve_address(node_url: &str, who: &str) -> Result<Address, Failure> {
    if let Ok(a) = who.parse() {
        return Ok(a);
    }
    let accounts = http_get(node_url, "/accounts")?;
    accounts
        .as_array()
        .into_iter()
        .flatten()
        .find(|a| a["name"] == who)
        .and_then(|a| a["address"].as_str()?.parse().ok())
        .ok_or_else(|| Failure::new("UnknownAccount", format!("no account or address {who:?}")))
}

/// `key=value` words to a JSON object. Values that parse as JSON scalars
/// keep their type; everything else is a string.
fn parse_args(words: &[String]) -> Result<Value, Failure> {
    let mut obj = Map::new();
    for w in words {
        let (k, v) = w
            .split_once('=')
            .ok_or_else(|| Failure::new("BadArguments", format!("expected key=value, got {w:?}")))?;
        let v = match serde_json::from_str::<Value>(v) {
            Ok(j @ (Value::Number(_) | Value::Bool(_) | Value::Null)) => j,
            _ => Value::String(v.to_string()),
        };
        obj.insert(k.to_string(), v);
    }
    Ok(Value::Object(obj))
}

fn operation(cli: &Cli, words: &[String]) -> CmdResult {
    let (name, rest) = words.split_first().ok_or_else(|| Failure::new("UnknownOperation", "no operation given"))?;
    if !Operation::all_names().contains(name) {
        return Err(Failure::new("UnknownOperation", format!("unknown command or operation {name:?}")));
    }
    let args = parse_args(rest)?;
    // Catch argument mistakes before anything is signed.
    Operation::from_json(name, &args).map_err(|e| Failure::new("BadArguments", e))?;
    let account = cli.account.as_deref().ok_or_else(|| Failure::new("MissingAccount", "--account is required"))?;
    submit(&cli.node_url, account, name, args)
}

fn client() -> Result<(tokio::runtime::Runtime, reqwest::Client), Failure> {
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::new("Runtime", e))?;
    let http = reqwest::Client::builder()
        .timeout(Duration::from_secs(60))
        .build()
        .map_err(|e| Failure::new("Http", e))?;
    Ok((rt, http))
}

fn response(status: reqwest::StatusCode, body: Value) -> CmdResult {
    if status.is_success() {
        return Ok(body);
    }
    let e = &body["error"];
    Err(Failure {
        code: e["code"].as_str().unwrap_or("HttpError").to_string(),
        message: e["message"].as_str().map(str::to_string).unwrap_or_else(|| format!("HTTP {status}")),
        detail: Some(json!({ "status": status.as_u16(), "body": body })),
    })
}

fn http_get(base: &str, path: &str) -> CmdResult {
    let (rt, http) = client()?;
    rt.block_on(async {
        let r = http
            .get(format!("{}{path}", base.trim_end_matches('/')))
            .send()
            .await
            .map_err(|e| Failure::new("NodeUnavailable", e))?;
        let status = r.status();
        response(status, r.json().await.unwrap_or(Value::Null))
    })
}

fn submit(base: &str, account: &str, op: &str, args: Value) -> CmdResult {
    let (rt, http) = client()?;
    rt.block_on(async {
        let r = http
            .post(format!("{}/tx/{op}", base.trim_end_matches('/')))
            .json(&json!({ "account": account, "args": args }))
            .send()
            .await
            .map_err(|e| Failure::new("NodeUnavailable", e))?;
        let status = r.status();
        response(status, r.json().await.unwrap_or(Value::Null))
    })
}

fn sensor(path: &Path, a: &SensorArgs) -> CmdResult {
    let cfg = load_config(path)?;
    let ks = Keystore::open(cfg.keystore_path()).map_err(|e| Failure::new("Keystore", e))?;
    let key = ks
        .get(a.key.as_deref().unwrap_or(&a.node_id))
        .map_err(|e| Failure::new("Keystore", e))?
        .clone();
    let scenario = match &a.scenario {
        Some(p) => Scenario::load(p).map_err(|e| Failure::new("Scenario", e))?,
        None => Scenario::steady(&a.sku, a.temp, a.hum),
    };
    let mut node = SensingNode::new(&a.node_id, key, scenario)
        .with_interval(a.interval_secs)
        .with_topic(&cfg.gateway.topic);
    let mut client = BrokerClient::new(a.broker);
    let status = if a.live {
        let stop = Arc::new(AtomicBool::new(false));
        let s = stop.clone();
        let secs = a.duration_secs;
        std::thread::spawn(move || {
            std::thread::sleep(Duration::from_secs(secs));
            s.store(true, Ordering::SeqCst);
        });
        node.run_live(&mut client, Duration::from_secs(a.interval_secs), &stop)
    } else {
        node.run(&mut client, a.duration_secs)
    };
    let published = status.iter().filter(|s| s.published).count();
    Ok(json!({
        "nodeId": a.node_id,
        "messages": status.len(),
        "published": published,
        "queued": node.queued(),
        "dropped": node.dropped(),
    }))
}
