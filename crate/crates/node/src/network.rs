//! Creating and opening a network from a config and keystore.

use pharmachain_core::access::Role;
use pharmachain_core::contract::{contract_address, Deployment, Operation};
use pharmachain_core::crypto::KeyPair;
use pharmachain_core::ledger::{BlockStore, IntervalSchedule, Ledger, LedgerConfig, LedgerError};
use pharmachain_core::oracle::OracleConfig;

use crate::config::{ConfigError, NodeConfig};
use crate::keystore::{Keystore, KeystoreError};
use crate::service::now_ms;

/// Accounts created by `init`: the contract owner and one per role.
pub const ROLE_ACCOUNTS: [(&str, Role); 4] = [
    ("manufacturer", Role::Manufacturer),
    ("distributor", Role::Distributor),
    ("retailer", Role::Retailer),
    ("consumer", Role::Consumer),
];

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Keystore(#[from] KeystoreError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("{0}")]
    Other(String),
}

pub fn ledger_config(cfg: &NodeConfig) -> LedgerConfig {
    LedgerConfig {
        schedule: match cfg.chain.block_interval_ms {
            0 => IntervalSchedule::OnDemand,
            ms => IntervalSchedule::Fixed { interval_ms: ms },
        },
        max_block_txs: cfg.chain.max_block_txs,
        snapshot_every: cfg.chain.snapshot_every,
        ..LedgerConfig::default()
    }
}

pub fn validator_keys(cfg: &NodeConfig, ks: &Keystore) -> Result<Vec<KeyPair>, NetworkError> {
    cfg.chain.validators.iter().map(|n| Ok(ks.get(n)?.clone())).collect()
}

pub fn deployment(cfg: &NodeConfig, ks: &Keystore) -> Result<Deployment, NetworkError> {
    let owner = ks.get(&cfg.chain.owner)?.address();
    let mut oracle = OracleConfig::single(ks.get(&cfg.oracle.account)?.address());
    oracle.request_timeout_ms = cfg.oracle.request_timeout_ms;
    oracle.fees = cfg.fee_schedule()?;
    let (contract_link, owner_link) = cfg.genesis_link()?;
    Ok(Deployment {
        owner,
        validators: validator_keys(cfg, ks)?.iter().map(KeyPair::address).collect(),
        oracle,
        link_balances: vec![(contract_address(&owner), contract_link), (owner, owner_link)],
    })
}

/// Generates any missing standard accounts.
pub fn ensure_accounts(cfg: &NodeConfig, ks: &mut Keystore) -> Result<(), NetworkError> {
    let mut names: Vec<String> = vec![cfg.chain.owner.clone(), cfg.oracle.account.clone()];
    names.extend(ROLE_ACCOUNTS.iter().map(|(n, _)| n.to_string()));
    names.extend(cfg.chain.validators.iter().cloned());
    names.extend(cfg.gateway.nodes.values().cloned());
    for n in names {
        if ks.get(&n).is_err() {
            ks.insert(&n, KeyPair::generate(&mut rand::rngs::OsRng))?;
        }
    }
    ks.save()?;
    Ok(())
}

/// Genesis plus a block granting each standard account its role.
pub fn genesis(cfg: &NodeConfig, ks: &Keystore) -> Result<Ledger, NetworkError> {
    let d = deployment(cfg, ks)?;
    let owner = ks.get(&cfg.chain.owner)?;
    let validators = validator_keys(cfg, ks)?;
    let t0 = now_ms();
    let mut ledger = Ledger::genesis(Ledger::deploy_transaction(owner, &d), &validators[0], t0, ledger_config(cfg))?;
    for (name, role) in ROLE_ACCOUNTS {
        if let Ok(k) = ks.get(name) {
            ledger.submit_operation(owner, &Operation::AddRole { role, account: k.address() })?;
        }
    }
    let v = &validators[1 % validators.len()];
    ledger.produce_block_at(v, t0)?;
    Ok(ledger)
}

/// Creates keystore, config and a new chain in the configured locations.
/// Fails if a chain already exists there.
pub fn init(cfg: &NodeConfig) -> Result<Ledger, NetworkError> {
    let store = BlockStore::open(cfg.chain_dir()).map_err(LedgerError::from)?;
    if !store.read_records().map_err(LedgerError::from)?.is_empty() {
        return Err(NetworkError::Other(format!("a chain already exists in {}", cfg.chain_dir().display())));
    }
    let mut ks = Keystore::open(cfg.keystore_path())?;
    ensure_accounts(cfg, &mut ks)?;
    let mut ledger = genesis(cfg, &ks)?;
    ledger.attach_store(store)?;
    Ok(ledger)
}

/// Opens the chain, creating it on first use.
pub fn open_or_init(cfg: &NodeConfig) -> Result<(Ledger, Keystore), NetworkError> {
    let store = BlockStore::open(cfg.chain_dir()).map_err(LedgerError::from)?;
    let empty = store.read_records().map_err(LedgerError::from)?.is_empty();
    let ledger = if empty { init(cfg)? } else { Ledger::open(store, ledger_config(cfg))? };
    Ok((ledger, Keystore::open(cfg.keystore_path())?))
}
