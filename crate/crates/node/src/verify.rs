//! Offline checks against a block store directory, without a running node.

use std::path::Path;

use pharmachain_core::codec::Decode;
use pharmachain_core::contract::ContractState;
use pharmachain_core::ledger::{verify_records, Block, BlockStore, ChainReport, Ledger, LedgerConfig, LedgerError};
use pharmachain_core::par::Parallelism;
use pharmachain_core::provenance::{verify_item, verify_item_records, ProvenanceReport};

pub fn verify_store(dir: &Path, mode: Parallelism) -> Result<ChainReport, LedgerError> {
    let store = BlockStore::open(dir)?;
    Ok(verify_records(&store.read_records()?, mode))
}

/// State from the snapshot file, if it matches an intact block.
fn trusted_snapshot(store: &BlockStore, records: &[Vec<u8>]) -> Option<ContractState> {
    let snap = store.read_snapshot().ok().flatten()?;
    let block = Block::from_canonical_bytes(records.get(snap.height as usize)?).ok()?;
    if block.block_hash != snap.block_hash || block.compute_hash() != block.block_hash || !block.verify_signature() {
        return None;
    }
    let state = ContractState::from_snapshot_entries(&snap.entries).ok()?;
    (state.state_hash() == block.state_root).then_some(state)
}

/// Verifies one item from a store. A damaged log is tolerated as long as
/// the item's state can still be established; otherwise the item is
/// reported as not authentic.
pub fn verify_item_in_store(dir: &Path, upc: u64, mode: Parallelism) -> Result<ProvenanceReport, LedgerError> {
    let store = BlockStore::open(dir)?;
    let records = store.read_records()?;
    let chain = verify_records(&records, mode);
    let Some(bad) = chain.first_bad_height else {
        let config = LedgerConfig {
            parallelism: mode,
            ..LedgerConfig::default()
        };
        let ledger = Ledger::open(store, config)?;
        return Ok(verify_item(ledger.state(), ledger.blocks(), upc, mode));
    };
    if let Some(state) = trusted_snapshot(&store, &records) {
        return Ok(verify_item_records(&state, &records, upc, mode));
    }
    Ok(ProvenanceReport {
        upc,
        authentic: false,
        state: None,
        chain_verified_to: bad.checked_sub(1),
        custody: Vec::new(),
        anomalies: vec![format!(
            "chain corrupt at height {bad}: {}",
            chain.reason.unwrap_or_default()
        )],
    })
}
