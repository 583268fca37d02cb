//! Running node: API server, block producer, telemetry broker and gateway,
//! and the oracle runner, all in one process.

use std::net::SocketAddr;
use std::thread::JoinHandle;
use std::time::Duration;

use tokio::sync::watch;

use pharmachain_core::ledger::Ledger;
use pharmachain_telemetry::gateway::{self, Gateway, NotificationSink, RuleSet, SharedGateway};
use pharmachain_telemetry::{Broker, BrokerClient, GatewayServer};

use crate::config::NodeConfig;
use crate::keystore::Keystore;
use crate::network::{validator_keys, NetworkError};
use crate::oracle::{OracleRunner, RunnerConfig};
use crate::service::{run_producer, BlockMode, NodeState, SharedNode};

pub struct RunningNode {
    node: SharedNode,
    api_addr: SocketAddr,
    telemetry: Option<Telemetry>,
    shutdown: watch::Sender<bool>,
    thread: Option<JoinHandle<()>>,
}

struct Telemetry {
    // Dropped after the server so no request sees a half-stopped gateway.
    server: GatewayServer,
    broker: Broker,
    gateway: SharedGateway,
}

fn start_telemetry(cfg: &NodeConfig, ks: &Keystore, sink: Box<dyn NotificationSink>) -> Result<Telemetry, NetworkError> {
    let rules = match &cfg.gateway.rules {
        Some(p) => RuleSet::load(cfg.resolve(p)).map_err(|e| NetworkError::Other(e.to_string()))?,
        None => RuleSet::default(),
    };
    let mut gw = Gateway::open(cfg.gateway_dir(), rules, sink).map_err(|e| NetworkError::Other(e.to_string()))?;
    for (node_id, account) in &cfg.gateway.nodes {
        gw.register_node(node_id, ks.get(account)?.public_key());
    }
    let gw = gateway::shared(gw);
    let broker = Broker::bind(cfg.gateway.broker).map_err(|e| NetworkError::Other(format!("broker: {e}")))?;
    let sub = BrokerClient::subscribe(broker.local_addr(), &cfg.gateway.topic).map_err(|e| NetworkError::Other(e.to_string()))?;
    gateway::spawn_consumer(gw.clone(), sub);
    let server = GatewayServer::start(cfg.gateway.listen, gw.clone()).map_err(|e| NetworkError::Other(format!("gateway: {e}")))?;
    Ok(Telemetry { server, broker, gateway: gw })
}

impl RunningNode {
    /// Starts every enabled service. Blocks are mined per `cfg`, or as soon
    /// as anything is pending when `block_interval_ms` is 0.
    pub fn start(cfg: &NodeConfig, ledger: Ledger, keystore: Keystore, sink: Box<dyn NotificationSink>) -> Result<Self, NetworkError> {
        let telemetry = if cfg.gateway.enabled {
            Some(start_telemetry(cfg, &keystore, sink)?)
        } else {
            None
        };
        let mode = match cfg.block_interval() {
            Some(d) => BlockMode::Interval(d),
            None => BlockMode::Instant,
        };
        let validators = validator_keys(cfg, &keystore)?;
        let node = NodeState::new(ledger, keystore, validators, mode).map_err(|e| NetworkError::Other(e.to_string()))?;

        let listener = std::net::TcpListener::bind(cfg.api.listen).map_err(|e| NetworkError::Other(format!("api: {e}")))?;
        listener.set_nonblocking(true).map_err(|e| NetworkError::Other(e.to_string()))?;
        let api_addr = listener.local_addr().map_err(|e| NetworkError::Other(e.to_string()))?;

        let gateway_url = cfg
            .oracle
            .gateway_url
            .clone()
            .or_else(|| telemetry.as_ref().map(|t| t.server.url()));
        let runner = match (cfg.oracle.enabled, gateway_url) {
            (true, Some(gateway_url)) => Some(OracleRunner::new(RunnerConfig {
                node_url: format!("http://{api_addr}"),
                gateway_url,
                account: cfg.oracle.account.clone(),
                poll_interval: Duration::from_millis(cfg.oracle.poll_interval_ms),
                request_timeout_ms: cfg.oracle.request_timeout_ms,
            })),
            (true, None) => {
                tracing::warn!("oracle runner disabled: no gateway to read from");
                None
            }
            _ => None,
        };

        let (shutdown, rx) = watch::channel(false);
        let n = node.clone();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .expect("tokio runtime");
            rt.block_on(async move {
                let producer = tokio::spawn(run_producer(n.clone(), rx.clone()));
                if let Some(r) = runner {
                    tokio::spawn(r.run(rx.clone()));
                }
                let listener = tokio::net::TcpListener::from_std(listener).expect("api listener");
                let mut stop = rx.clone();
                let serve = axum::serve(listener, crate::api::router(n)).with_graceful_shutdown(async move {
                    let _ = stop.wait_for(|s| *s).await;
                });
                if let Err(e) = serve.await {
                    tracing::error!("api server failed: {e}");
                }
                let _ = producer.await;
            });
        });
        tracing::info!("api listening on {api_addr}");
        Ok(Self {
            node,
            api_addr,
            telemetry,
            shutdown,
            thread: Some(thread),
        })
    }

    pub fn node(&self) -> &SharedNode {
        &self.node
    }

    pub fn api_addr(&self) -> SocketAddr {
        self.api_addr
    }

    pub fn api_url(&self) -> String {
        format!("http://{}", self.api_addr)
    }

    pub fn gateway_url(&self) -> Option<String> {
        self.telemetry.as_ref().map(|t| t.server.url())
    }

    pub fn broker_addr(&self) -> Option<SocketAddr> {
        self.telemetry.as_ref().map(|t| t.broker.local_addr())
    }

    pub fn gateway(&self) -> Option<&SharedGateway> {
        self.telemetry.as_ref().map(|t| &t.gateway)
    }

    /// Stops all services and writes a final snapshot.
    pub fn stop(mut self) {
        self.shutdown_now();
    }

    fn shutdown_now(&mut self) {
        let _ = self.shutdown.send(true);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
        self.telemetry.take();
    }
}

impl Drop for RunningNode {
    fn drop(&mut self) {
        self.shutdown_now();
    }
}
