//! Node configuration file (TOML).

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use pharmachain_core::contract::LifecycleStep;
use pharmachain_core::oracle::{format_link, parse_link, FeeSchedule, OracleField};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodeConfig {
    /// Relative paths resolve against the config file's directory.
    pub data_dir: PathBuf,
    pub keystore: PathBuf,
    pub api: ApiConfig,
    pub chain: ChainConfig,
    pub oracle: OracleRunnerSection,
    pub fees: FeeSection,
    pub gateway: GatewaySection,
    #[serde(skip)]
    base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApiConfig {
    pub listen: SocketAddr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub owner: String,
    /// Keystore account names, in rotation order.
    pub validators: Vec<String>,
    /// Zero mines as soon as a transaction arrives.
    pub block_interval_ms: u64,
    pub max_block_txs: usize,
    pub snapshot_every: u64,
    /// LINK minted to the contract at genesis, decimal tokens.
    pub contract_link: String,
    pub owner_link: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleRunnerSection {
    pub enabled: bool,
    pub account: String,
    pub poll_interval_ms: u64,
    pub request_timeout_ms: u64,
    /// Defaults to the embedded gateway.
    pub gateway_url: Option<String>,
}

/// Oracle fees in decimal LINK.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeeSection {
    /// Per direct `request*` call.
    pub request: String,
    /// Whether lifecycle actions request telemetry automatically.
    pub auto_request: bool,
    /// Total per lifecycle action, keyed by function name.
    pub actions: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySection {
    pub enabled: bool,
    pub listen: SocketAddr,
    pub broker: SocketAddr,
    pub topic: String,
    /// JSON rules file; the built-in rule set when absent.
    pub rules: Option<PathBuf>,
    pub outbox: PathBuf,
    /// Sensing node id to keystore account holding its key.
    pub nodes: BTreeMap<String, String>,
}

impl Default for NodeConfig {
    fn default() -> Self {
        Self {
            data_dir: "data".into(),
            keystore: "keystore.json".into(),
            api: ApiConfig::default(),
            chain: ChainConfig::default(),
            oracle: OracleRunnerSection::default(),
            fees: FeeSection::default(),
            gateway: GatewaySection::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl Default for ApiConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8545".parse().unwrap(),
        }
    }
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            owner: "owner".into(),
            validators: vec!["validator-0".into(), "validator-1".into(), "validator-2".into()],
            block_interval_ms: 4_000,
            max_block_txs: 500,
            snapshot_every: 100,
            contract_link: "1000".into(),
            owner_link: "100".into(),
        }
    }
}

impl Default for OracleRunnerSection {
    fn default() -> Self {
        Self {
            enabled: true,
            account: "oracle-node".into(),
            poll_interval_ms: 1_000,
            request_timeout_ms: 60_000,
            gateway_url: None,
        }
    }
}

impl Default for FeeSection {
    fn default() -> Self {
        let d = FeeSchedule::default();
        Self {
            request: format_link(d.request_fee[0]),
            auto_request: d.auto_request,
            actions: d
                .actions
                .iter()
                .map(|a| (a.step.function_name().to_string(), format_link(a.total)))
                .collect(),
        }
    }
}

impl Default for GatewaySection {
    fn default() -> Self {
        Self {
            enabled: true,
            listen: "127.0.0.1:8600".parse().unwrap(),
            broker: "127.0.0.1:1883".parse().unwrap(),
            topic: pharmachain_telemetry::DEFAULT_TOPIC.into(),
            rules: None,
            outbox: "outbox.jsonl".into(),
            nodes: BTreeMap::new(),
        }
    }
}

fn link(field: &str, text: &str) -> Result<u128, ConfigError> {
    parse_link(text).ok_or_else(|| ConfigError::Invalid(format!("{field}: {text:?} is not a LINK amount")))
}

impl NodeConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg: NodeConfig = toml::from_str(&text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| ".".into());
        cfg.validate()?;
        Ok(cfg)
    }

    /// Default configuration rooted at `dir`.
    pub fn in_dir(dir: impl Into<PathBuf>) -> Self {
        Self {
            base_dir: dir.into(),
            ..Self::default()
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ConfigError> {
        let text = toml::to_string_pretty(self).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.chain.validators.is_empty() {
            return Err(ConfigError::Invalid("at least one validator is required".into()));
        }
        self.fee_schedule()?;
        self.genesis_link()?;
        if self.oracle.poll_interval_ms == 0 {
            return Err(ConfigError::Invalid("oracle.poll_interval_ms must be positive".into()));
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn data_path(&self) -> PathBuf {
        self.resolve(&self.data_dir)
    }

    pub fn chain_dir(&self) -> PathBuf {
        self.data_path().join("chain")
    }

    pub fn gateway_dir(&self) -> PathBuf {
        self.data_path().join("gateway")
    }

    pub fn keystore_path(&self) -> PathBuf {
        self.resolve(&self.keystore)
    }

    pub fn block_interval(&self) -> Option<Duration> {
        (self.chain.block_interval_ms > 0).then(|| Duration::from_millis(self.chain.block_interval_ms))
    }

    /// (contract, owner) LINK minted at genesis, in base units.
    pub fn genesis_link(&self) -> Result<(u128, u128), ConfigError> {
        Ok((
            link("chain.contract_link", &self.chain.contract_link)?,
            link("chain.owner_link", &self.chain.owner_link)?,
        ))
    }

    pub fn fee_schedule(&self) -> Result<FeeSchedule, ConfigError> {
        let mut fees = FeeSchedule::default();
        let req = link("fees.request", &self.fees.request)?;
        fees.request_fee = [req; 4];
        fees.auto_request = self.fees.auto_request;
        for (name, amount) in &self.fees.actions {
            let step = LifecycleStep::from_function_name(name)
                .ok_or_else(|| ConfigError::Invalid(format!("fees.actions: unknown action {name:?}")))?;
            let total = link(&format!("fees.actions.{name}"), amount)?;
            let entry = fees.actions.iter_mut().find(|a| a.step == step).expect("every step has an entry");
            entry.total = total;
            entry.fields = OracleField::ALL.to_vec();
        }
        Ok(fees)
    }
}

/// LINK needed to run `n` full item lifecycles under `fees`.
pub fn lifecycle_cost(fees: &FeeSchedule, n: u128) -> u128 {
    LifecycleStep::ALL.iter().map(|s| fees.action_total(*s)).sum::<u128>() * n
}

/// Whole tokens, for messages.
pub fn tokens(amount: u128) -> String {
    format!("{} LINK", format_link(amount))
}
