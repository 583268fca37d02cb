//! Shared node state: ledger, keystore and block production.

use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use thiserror::Error;
use tokio::sync::{watch, Notify};

use pharmachain_core::contract::Operation;
use pharmachain_core::crypto::{Address, Hash32, KeyPair};
use pharmachain_core::ledger::{Ledger, LedgerError, Receipt};

use crate::keystore::{Keystore, KeystoreError};

#[derive(Debug, Error)]
pub enum NodeError {
    #[error(transparent)]
    Keystore(#[from] KeystoreError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("no key for validator {0}")]
    MissingValidatorKey(Address),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockMode {
    /// Mine as soon as the mempool is non-empty.
    Instant,
    /// Mine pending transactions every interval.
    Interval(Duration),
}

/// An included transaction with its block context and events.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TxOutcome {
    pub tx_id: Hash32,
    pub operation: String,
    pub sender: Address,
    pub block_height: u64,
    pub block_timestamp_ms: u64,
    pub receipt: Receipt,
    pub events: Vec<EventView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EventView {
    pub name: String,
    pub upc: u64,
    pub block_height: u64,
    pub timestamp_ms: u64,
    pub tx_id: Hash32,
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default().as_millis() as u64
}

pub struct NodeState {
    ledger: Mutex<Ledger>,
    keystore: Mutex<Keystore>,
    validators: Vec<KeyPair>,
    mode: BlockMode,
    height: watch::Sender<u64>,
    wake: Notify,
}

pub type SharedNode = Arc<NodeState>;

impl NodeState {
    /// `validators` must hold a key for every validator in the deployment.
    pub fn new(ledger: Ledger, keystore: Keystore, validators: Vec<KeyPair>, mode: BlockMode) -> Result<SharedNode, NodeError> {
        for v in ledger.state().validators() {
            if !validators.iter().any(|k| &k.address() == v) {
                return Err(NodeError::MissingValidatorKey(*v));
            }
        }
        let (height, _) = watch::channel(ledger.height());
        Ok(Arc::new(Self {
            ledger: Mutex::new(ledger),
            keystore: Mutex::new(keystore),
            validators,
            mode,
            height,
            wake: Notify::new(),
        }))
    }

    pub fn ledger(&self) -> MutexGuard<'_, Ledger> {
        self.ledger.lock().unwrap()
    }

    pub fn keystore(&self) -> MutexGuard<'_, Keystore> {
        self.keystore.lock().unwrap()
    }

    pub fn mode(&self) -> BlockMode {
        self.mode
    }

    pub fn subscribe_height(&self) -> watch::Receiver<u64> {
        self.height.subscribe()
    }

    /// Signs `op` as `account` and queues it.
    pub fn submit(&self, account: &str, op: &Operation) -> Result<Hash32, NodeError> {
        let key = self.keystore().resolve(account)?.clone();
        let id = self.ledger().submit_operation(&key, op)?;
        self.wake.notify_one();
        Ok(id)
    }

    /// Mines one block if anything is pending. Returns its height.
    pub fn produce_pending(&self) -> Result<Option<u64>, NodeError> {
        let mut ledger = self.ledger();
        if ledger.pending_transactions() == 0 {
            return Ok(None);
        }
        let next = ledger.next_validator();
        let key = self
            .validators
            .iter()
            .find(|k| k.address() == next)
            .ok_or(NodeError::MissingValidatorKey(next))?;
        let ts = now_ms().max(ledger.tip().timestamp_ms);
        let b = ledger.produce_block_at(key, ts)?;
        let h = b.height;
        tracing::debug!(height = h, txs = b.transactions.len(), "mined block");
        drop(ledger);
        self.height.send_replace(h);
        Ok(Some(h))
    }

    pub fn outcome(&self, id: &Hash32) -> Option<TxOutcome> {
        let ledger = self.ledger();
        let (block, receipt) = ledger.receipt(id)?;
        let tx = ledger.transaction(id)?;
        Some(TxOutcome {
            tx_id: *id,
            operation: tx.operation.clone(),
            sender: tx.sender,
            block_height: block.height,
            block_timestamp_ms: block.timestamp_ms,
            receipt: receipt.clone(),
            events: block
                .events
                .iter()
                .filter(|e| &e.tx_id == id)
                .map(|e| EventView {
                    name: e.name.clone(),
                    upc: e.upc,
                    block_height: e.block_height,
                    timestamp_ms: block.timestamp_ms,
                    tx_id: e.tx_id,
                })
                .collect(),
        })
    }

    /// Waits until `id` is mined or `timeout` passes.
    pub async fn wait_mined(&self, id: &Hash32, timeout: Duration) -> Option<TxOutcome> {
        let mut rx = self.subscribe_height();
        let deadline = tokio::time::Instant::now() + timeout;
        loop {
            if let Some(o) = self.outcome(id) {
                return Some(o);
            }
            match tokio::time::timeout_at(deadline, rx.changed()).await {
                Ok(Ok(())) => continue,
                _ => return self.outcome(id),
            }
        }
    }

    pub fn events(&self, upc: Option<u64>) -> Vec<EventView> {
        let ledger = self.ledger();
        ledger
            .blocks()
            .iter()
            .flat_map(|b| {
                b.events.iter().filter(move |e| upc.is_none_or(|u| e.upc == u)).map(move |e| EventView {
                    name: e.name.clone(),
                    upc: e.upc,
                    block_height: e.block_height,
                    timestamp_ms: b.timestamp_ms,
                    tx_id: e.tx_id,
                })
            })
            .collect()
    }
}

/// Block production loop; returns when `shutdown` becomes true.
pub async fn run_producer(node: SharedNode, mut shutdown: watch::Receiver<bool>) {
    loop {
        let tick = async {
            match node.mode {
                BlockMode::Instant => node.wake.notified().await,
                BlockMode::Interval(d) => tokio::time::sleep(d).await,
            }
        };
        tokio::select! {
            _ = tick => {}
            _ = shutdown.changed() => {}
        }
        if *shutdown.borrow() {
            break;
        }
        loop {
            match node.produce_pending() {
                Ok(Some(_)) if node.mode == BlockMode::Instant => continue,
                Ok(_) => break,
                Err(e) => {
                    tracing::error!("block production failed: {e}");
                    break;
                }
            }
        }
    }
    if let Err(e) = node.ledger().write_snapshot() {
        tracing::warn!("final snapshot failed: {e}");
    }
}
