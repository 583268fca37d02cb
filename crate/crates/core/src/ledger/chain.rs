use std::collections::HashMap;

use thiserror::Error;

use crate::codec::{CodecError, Decode};
use crate::contract::{
    ContractState, Deployment, EventRecord, ExecContext, ExecError, Operation, OperationError,
};
use crate::crypto::{Address, Hash32, KeyPair, PublicKey, Signature};
use crate::par::Parallelism;

use super::schedule::{scheduled_validator, IntervalSchedule, SimClock};
use super::store::{BlockStore, Snapshot, StoreError};
use super::verify::{genesis_deployment, verify_blocks, ChainReport};
use super::{Block, Mempool, Receipt, Transaction, TxError, TxFailure};

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("invalid signature")]
    InvalidSignature,
    #[error("bad nonce: expected {expected}, got {got}")]
    BadNonce { expected: u64, got: u64 },
    #[error("unknown operation {0:?}")]
    UnknownOperation(String),
    #[error("{0}")]
    BadArguments(String),
    #[error("transaction {0} already queued")]
    DuplicateTransaction(Hash32),
    #[error("{got} is not the scheduled validator, expected {expected}")]
    NotScheduledValidator { expected: Address, got: Address },
    #[error("block timestamp {got} is before parent {parent}")]
    TimestampRegression { parent: u64, got: u64 },
    #[error("bad genesis: {0}")]
    BadGenesis(String),
    #[error("chain corrupt at height {height}: {reason}")]
    ChainCorrupt { height: u64, reason: String },
    #[error("replay diverged at height {height}: {reason}")]
    Diverged { height: u64, reason: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

impl From<TxError> for LedgerError {
    fn from(e: TxError) -> Self {
        match e {
            TxError::InvalidSignature => LedgerError::InvalidSignature,
            TxError::Operation(op) => op.into(),
        }
    }
}

impl From<OperationError> for LedgerError {
    fn from(e: OperationError) -> Self {
        match e {
            OperationError::Unknown(n) => LedgerError::UnknownOperation(n),
            e @ OperationError::BadArguments { .. } => LedgerError::BadArguments(e.to_string()),
        }
    }
}

impl LedgerError {
    pub fn code(&self) -> &'static str {
        match self {
            LedgerError::InvalidSignature => "InvalidSignature",
            LedgerError::BadNonce { .. } => "BadNonce",
            LedgerError::UnknownOperation(_) => "UnknownOperation",
            LedgerError::BadArguments(_) => "BadArguments",
            LedgerError::DuplicateTransaction(_) => "DuplicateTransaction",
            LedgerError::NotScheduledValidator { .. } => "NotScheduledValidator",
            LedgerError::TimestampRegression { .. } => "TimestampRegression",
            LedgerError::BadGenesis(_) => "BadGenesis",
            LedgerError::ChainCorrupt { .. } => "ChainCorrupt",
            LedgerError::Diverged { .. } => "Diverged",
            LedgerError::Store(_) => "Store",
            LedgerError::Codec(_) => "Codec",
        }
    }
}

#[derive(Debug, Clone)]
pub struct LedgerConfig {
    pub schedule: IntervalSchedule,
    pub max_block_txs: usize,
    pub parallelism: Parallelism,
    /// Write a state snapshot every this many blocks when a store is attached.
    pub snapshot_every: u64,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        Self {
            schedule: IntervalSchedule::default(),
            max_block_txs: 500,
            parallelism: Parallelism::default(),
            snapshot_every: 100,
        }
    }
}

fn failure(e: &ExecError) -> TxFailure {
    TxFailure {
        code: e.code().to_string(),
        guard: e.guard().map(|g| g.name().to_string()),
        message: e.to_string(),
    }
}

/// Executes `txs` in order. Failed transactions get a failure receipt and
/// leave the state unchanged apart from the consumed nonce.
fn apply_transactions(
    state: &mut ContractState,
    txs: &[Transaction],
    height: u64,
    timestamp_ms: u64,
) -> (Vec<Receipt>, Vec<EventRecord>) {
    let mut receipts = Vec::with_capacity(txs.len());
    let mut events = Vec::new();
    for tx in txs {
        let tx_id = tx.id();
        let expected = state.nonce(&tx.sender) + 1;
        if tx.nonce != expected {
            receipts.push(Receipt {
                tx_id,
                failure: Some(TxFailure {
                    code: "BadNonce".into(),
                    guard: None,
                    message: format!("expected nonce {expected}, got {}", tx.nonce),
                }),
                oracle_requests: Vec::new(),
            });
            continue;
        }
        state.record_nonce(tx.sender, tx.nonce);
        let result = match tx.decode_operation() {
            Ok(op) => {
                let ctx = ExecContext {
                    caller: tx.sender,
                    tx_id,
                    height,
                    timestamp_ms,
                };
                state.execute(&ctx, &op).map_err(|e| failure(&e))
            }
            Err(e) => Err(TxFailure {
                code: "BadArguments".into(),
                guard: None,
                message: e.to_string(),
            }),
        };
        match result {
            Ok(fx) => {
                events.extend(fx.events);
                receipts.push(Receipt {
                    tx_id,
                    failure: None,
                    oracle_requests: fx.oracle_requests,
                });
            }
            Err(f) => receipts.push(Receipt {
                tx_id,
                failure: Some(f),
                oracle_requests: Vec::new(),
            }),
        }
    }
    (receipts, events)
}

/// A validator's view of the chain: blocks, executed state and mempool.
#[derive(Debug)]
pub struct Ledger {
    config: LedgerConfig,
    blocks: Vec<Block>,
    state: ContractState,
    mempool: Mempool,
    tx_index: HashMap<Hash32, (u64, usize)>,
    store: Option<BlockStore>,
}

impl Ledger {
    /// Contract-creation transaction for `deployment`, signed by its owner.
    pub fn deploy_transaction(owner: &KeyPair, deployment: &Deployment) -> Transaction {
        assert_eq!(owner.address(), deployment.owner, "deploy must be signed by the owner");
        Transaction::sign(owner, 1, &Operation::Deploy(deployment.clone()))
    }

    /// Creates block 0 holding the deploy transaction.
    pub fn genesis(
        deploy_tx: Transaction,
        validator: &KeyPair,
        timestamp_ms: u64,
        config: LedgerConfig,
    ) -> Result<Self, LedgerError> {
        deploy_tx.verify_signature()?;
        let deployment = match deploy_tx.decode_operation()? {
            Operation::Deploy(d) if d.owner == deploy_tx.sender => d,
            Operation::Deploy(_) => return Err(LedgerError::BadGenesis("deploy not signed by owner".into())),
            op => return Err(LedgerError::BadGenesis(format!("{} is not a deployment", op.name()))),
        };
        let expected = scheduled_validator(&deployment.validators, 0)
            .ok_or_else(|| LedgerError::BadGenesis("no validators".into()))?;
        if validator.address() != expected {
            return Err(LedgerError::NotScheduledValidator {
                expected,
                got: validator.address(),
            });
        }
        let mut state = ContractState::deploy(&deployment);
        state.record_nonce(deploy_tx.sender, deploy_tx.nonce);
        let block = Block {
            height: 0,
            parent_hash: Hash32::ZERO,
            timestamp_ms,
            validator: expected,
            validator_key: validator.public_key(),
            state_root: state.state_hash(),
            receipts: vec![Receipt {
                tx_id: deploy_tx.id(),
                failure: None,
                oracle_requests: Vec::new(),
            }],
            transactions: vec![deploy_tx],
            events: Vec::new(),
            block_hash: Hash32::ZERO,
            signature: Signature::ZERO,
        }
        .seal(validator);
        let mut ledger = Ledger {
            config,
            blocks: Vec::new(),
            state,
            mempool: Mempool::new(),
            tx_index: HashMap::new(),
            store: None,
        };
        ledger.push_block(block);
        Ok(ledger)
    }

    /// Rebuilds a ledger by verifying and re-executing `blocks`.
    pub fn from_blocks(blocks: Vec<Block>, config: LedgerConfig) -> Result<Self, LedgerError> {
        Self::replay(blocks, None, config)
    }

    fn replay(
        blocks: Vec<Block>,
        snapshot: Option<Snapshot>,
        config: LedgerConfig,
    ) -> Result<Self, LedgerError> {
        let report = verify_blocks(&blocks, config.parallelism);
        if let Some(height) = report.first_bad_height {
            return Err(LedgerError::ChainCorrupt {
                height,
                reason: report.reason.unwrap_or_default(),
            });
        }
        let genesis = blocks
            .first()
            .ok_or_else(|| LedgerError::BadGenesis("empty chain".into()))?;
        let deployment = genesis_deployment(genesis).map_err(LedgerError::BadGenesis)?;

        // A snapshot is only trusted when it matches a verified block.
        let resume = snapshot.and_then(|s| {
            let b = blocks.get(s.height as usize)?;
            if b.block_hash != s.block_hash {
                return None;
            }
            let st = ContractState::from_snapshot_entries(&s.entries).ok()?;
            (st.state_hash() == b.state_root).then_some((s.height, st))
        });
        let (start, mut state) = match resume {
            Some((h, st)) => (h + 1, st),
            None => {
                let mut st = ContractState::deploy(&deployment);
                let tx = &genesis.transactions[0];
                st.record_nonce(tx.sender, tx.nonce);
                if st.state_hash() != genesis.state_root {
                    return Err(LedgerError::Diverged {
                        height: 0,
                        reason: "state root mismatch".into(),
                    });
                }
                (1, st)
            }
        };

        for b in &blocks[start as usize..] {
            let (receipts, events) =
                apply_transactions(&mut state, &b.transactions, b.height, b.timestamp_ms);
            let diverged = |reason: &str| LedgerError::Diverged {
                height: b.height,
                reason: reason.into(),
            };
            if receipts != b.receipts {
                return Err(diverged("receipts differ"));
            }
            if events != b.events {
                return Err(diverged("events differ"));
            }
            if state.state_hash() != b.state_root {
                return Err(diverged("state root mismatch"));
            }
        }

        let mut ledger = Ledger {
            config,
            blocks: Vec::with_capacity(blocks.len()),
            state,
            mempool: Mempool::new(),
            tx_index: HashMap::new(),
            store: None,
        };
        for b in blocks {
            ledger.push_block(b);
        }
        Ok(ledger)
    }

    /// Loads and replays the chain in `store`, using its snapshot when valid.
    pub fn open(store: BlockStore, config: LedgerConfig) -> Result<Self, LedgerError> {
        let records = store.read_records()?;
        let mut blocks = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let b = Block::from_canonical_bytes(r).map_err(|e| LedgerError::ChainCorrupt {
                height: i as u64,
                reason: format!("undecodable block: {e}"),
            })?;
            blocks.push(b);
        }
        let snapshot = store.read_snapshot().ok().flatten();
        let mut ledger = Self::replay(blocks, snapshot, config)?;
        ledger.store = Some(store);
        Ok(ledger)
    }

    /// Persists the whole chain to `store` and keeps appending to it.
    pub fn attach_store(&mut self, store: BlockStore) -> Result<(), LedgerError> {
        store.write_all(&self.blocks)?;
        self.store = Some(store);
        self.write_snapshot()?;
        Ok(())
    }

    pub fn write_snapshot(&self) -> Result<(), LedgerError> {
        if let Some(store) = &self.store {
            let tip = self.tip();
            store.write_snapshot(&Snapshot {
                height: tip.height,
                block_hash: tip.block_hash,
                entries: self.state.snapshot_entries(),
            })?;
        }
        Ok(())
    }

    fn push_block(&mut self, block: Block) {
        for (i, tx) in block.transactions.iter().enumerate() {
            self.tx_index.insert(tx.id(), (block.height, i));
        }
        self.blocks.push(block);
    }

    pub fn config(&self) -> &LedgerConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, height: u64) -> Option<&Block> {
        self.blocks.get(height as usize)
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("ledger always has genesis")
    }

    pub fn height(&self) -> u64 {
        self.tip().height
    }

    pub fn state(&self) -> &ContractState {
        &self.state
    }

    pub fn deployment(&self) -> Deployment {
        genesis_deployment(&self.blocks[0]).expect("genesis verified")
    }

    pub fn pending_transactions(&self) -> usize {
        self.mempool.len()
    }

    /// Nonce the next transaction from `account` must carry.
    pub fn next_nonce(&self, account: &Address) -> u64 {
        let confirmed = self.state.nonce(account);
        self.mempool
            .pending_nonce(account)
            .unwrap_or(0)
            .max(confirmed)
            + 1
    }

    pub fn next_validator(&self) -> Address {
        scheduled_validator(self.state.validators(), self.height() + 1).expect("validators set at genesis")
    }

    /// Timestamp the schedule assigns to the next block.
    pub fn next_timestamp(&self) -> u64 {
        let clock = SimClock::new(self.config.schedule.clone(), self.blocks[0].timestamp_ms);
        clock.next_timestamp(self.tip().timestamp_ms, self.height() + 1)
    }

    /// Admits a signed transaction to the mempool.
    pub fn submit(&mut self, tx: Transaction) -> Result<Hash32, LedgerError> {
        tx.verify_signature()?;
        tx.decode_operation()?;
        let id = tx.id();
        if self.mempool.contains(&id) || self.tx_index.contains_key(&id) {
            return Err(LedgerError::DuplicateTransaction(id));
        }
        let expected = self.next_nonce(&tx.sender);
        if tx.nonce != expected {
            return Err(LedgerError::BadNonce {
                expected,
                got: tx.nonce,
            });
        }
        self.mempool.push(tx);
        Ok(id)
    }

    /// Signs `op` with the next nonce for `key` and submits it.
    pub fn submit_operation(&mut self, key: &KeyPair, op: &Operation) -> Result<Hash32, LedgerError> {
        let tx = Transaction::sign(key, self.next_nonce(&key.address()), op);
        self.submit(tx)
    }

    /// Produces the next block at the schedule's timestamp.
    pub fn produce_block(&mut self, validator: &KeyPair) -> Result<&Block, LedgerError> {
        let ts = self.next_timestamp();
        self.produce_block_at(validator, ts)
    }

    pub fn produce_block_at(&mut self, validator: &KeyPair, timestamp_ms: u64) -> Result<&Block, LedgerError> {
        let expected = self.next_validator();
        if validator.address() != expected {
            return Err(LedgerError::NotScheduledValidator {
                expected,
                got: validator.address(),
            });
        }
        let parent = self.tip();
        if timestamp_ms < parent.timestamp_ms {
            return Err(LedgerError::TimestampRegression {
                parent: parent.timestamp_ms,
                got: timestamp_ms,
            });
        }
        let height = parent.height + 1;
        let parent_hash = parent.block_hash;

        let backup = self.store.as_ref().map(|_| (self.state.clone(), self.mempool.clone()));
        let txs = self.mempool.take(self.config.max_block_txs);
        let (receipts, events) = apply_transactions(&mut self.state, &txs, height, timestamp_ms);
        let block = Block {
            height,
            parent_hash,
            timestamp_ms,
            validator: validator.address(),
            validator_key: validator.public_key(),
            state_root: self.state.state_hash(),
            transactions: txs,
            receipts,
            events,
            block_hash: Hash32::ZERO,
            signature: Signature::ZERO,
        }
        .seal(validator);

        if let Some(store) = &self.store {
            if let Err(e) = store.append(&block) {
                let (state, mempool) = backup.expect("taken when a store is attached");
                self.state = state;
                self.mempool = mempool;
                return Err(e.into());
            }
        }
        self.push_block(block);
        if self.store.is_some() && self.config.snapshot_every > 0 && height.is_multiple_of(self.config.snapshot_every) {
            self.write_snapshot()?;
        }
        Ok(self.tip())
    }

    /// Block and receipt of an included transaction.
    pub fn receipt(&self, tx_id: &Hash32) -> Option<(&Block, &Receipt)> {
        let (h, i) = self.tx_index.get(tx_id)?;
        let b = &self.blocks[*h as usize];
        Some((b, &b.receipts[*i]))
    }

    pub fn transaction(&self, tx_id: &Hash32) -> Option<&Transaction> {
        let (h, i) = self.tx_index.get(tx_id)?;
        Some(&self.blocks[*h as usize].transactions[*i])
    }

    /// Lifecycle events recorded in blocks, optionally for one item.
    pub fn events(&self, upc: Option<u64>) -> Vec<EventRecord> {
        self.blocks
            .iter()
            .flat_map(|b| b.events.iter())
            .filter(|e| upc.is_none_or(|u| e.upc == u))
            .cloned()
            .collect()
    }

    pub fn verify_chain(&self) -> ChainReport {
        verify_blocks(&self.blocks, self.config.parallelism)
    }

    pub fn verify_chain_with(&self, mode: Parallelism) -> ChainReport {
        verify_blocks(&self.blocks, mode)
    }

    /// Public key of a validator, from the blocks it has signed.
    pub fn validator_key(&self, validator: &Address) -> Option<PublicKey> {
        self.blocks
            .iter()
            .find(|b| &b.validator == validator)
            .map(|b| b.validator_key)
    }
}
