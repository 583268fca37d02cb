//! Whole-chain integrity checks.
//!
//! Per-block checks (hash, authorship, receipts, signatures) are independent
//! and run through [`crate::par`]; parent links are then walked in order.

use serde::Serialize;

use crate::codec::Decode;
use crate::contract::{Deployment, Operation};
use crate::crypto::{Address, Hash32};
use crate::par::{self, Parallelism};

use super::schedule::scheduled_validator;
use super::Block;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChainReport {
    pub blocks: u64,
    pub valid: bool,
    /// Lowest height that failed any check.
    pub first_bad_height: Option<u64>,
    pub reason: Option<String>,
    pub tip_hash: Option<Hash32>,
}

impl ChainReport {
    fn ok(blocks: &[Block]) -> Self {
        ChainReport {
            blocks: blocks.len() as u64,
            valid: true,
            first_bad_height: None,
            reason: None,
            tip_hash: blocks.last().map(|b| b.block_hash),
        }
    }

    fn bad(blocks: u64, height: u64, reason: String) -> Self {
        ChainReport {
            blocks,
            valid: false,
            first_bad_height: Some(height),
            reason: Some(reason),
            tip_hash: None,
        }
    }
}

/// Deployment carried by the genesis block.
pub fn genesis_deployment(genesis: &Block) -> Result<Deployment, String> {
    if genesis.height != 0 {
        return Err("genesis height is not 0".into());
    }
    let tx = match genesis.transactions.as_slice() {
        [tx] => tx,
        _ => return Err("genesis must hold exactly the deploy transaction".into()),
    };
    match tx.decode_operation() {
        Ok(Operation::Deploy(d)) if d.owner == tx.sender => Ok(d),
        Ok(Operation::Deploy(_)) => Err("deploy sender is not the owner".into()),
        Ok(op) => Err(format!("genesis transaction is {}", op.name())),
        Err(e) => Err(e.to_string()),
    }
}

/// Self-contained checks for one block.
fn check_block(block: &Block, index: usize, validators: &[Address]) -> Result<(), String> {
    if block.height != index as u64 {
        return Err(format!("height {} at position {index}", block.height));
    }
    if block.compute_hash() != block.block_hash {
        return Err("block hash mismatch".into());
    }
    if scheduled_validator(validators, block.height) != Some(block.validator) {
        return Err(format!("{} is not the scheduled validator", block.validator));
    }
    if !block.verify_signature() {
        return Err("bad validator signature".into());
    }
    if block.receipts.len() != block.transactions.len() {
        return Err("receipt count mismatch".into());
    }
    for (tx, r) in block.transactions.iter().zip(&block.receipts) {
        if tx.id() != r.tx_id {
            return Err(format!("receipt does not match transaction {}", tx.id().short()));
        }
        if tx.verify_signature().is_err() {
            return Err(format!("bad signature on transaction {}", tx.id().short()));
        }
    }
    if let Some(e) = block.events.iter().find(|e| e.block_height != block.height) {
        return Err(format!("event {} claims height {}", e.name, e.block_height));
    }
    Ok(())
}

fn check_link(prev: &Block, block: &Block) -> Result<(), String> {
    if block.parent_hash != prev.block_hash {
        return Err("parent hash mismatch".into());
    }
    if block.timestamp_ms < prev.timestamp_ms {
        return Err("timestamp earlier than parent".into());
    }
    Ok(())
}

/// Verifies a decoded chain from genesis.
pub fn verify_blocks(blocks: &[Block], mode: Parallelism) -> ChainReport {
    let n = blocks.len() as u64;
    let Some(genesis) = blocks.first() else {
        return ChainReport::ok(blocks);
    };
    let validators = match genesis_deployment(genesis) {
        Ok(d) => d.validators,
        Err(e) => return ChainReport::bad(n, 0, e),
    };
    if genesis.parent_hash != Hash32::ZERO {
        return ChainReport::bad(n, 0, "genesis parent hash is not zero".into());
    }

    let results = par::map_range(mode, blocks.len(), |i| check_block(&blocks[i], i, &validators));
    let mut bad = results
        .into_iter()
        .enumerate()
        .find_map(|(i, r)| r.err().map(|e| (i as u64, e)));

    let limit = bad.as_ref().map(|(h, _)| *h as usize).unwrap_or(blocks.len());
    for i in 1..limit {
        if let Err(e) = check_link(&blocks[i - 1], &blocks[i]) {
            bad = Some((i as u64, e));
            break;
        }
    }
    match bad {
        Some((h, e)) => ChainReport::bad(n, h, e),
        None => ChainReport::ok(blocks),
    }
}

/// Verifies raw block records. A record that fails to decode is bad at its
/// position.
pub fn verify_records(records: &[Vec<u8>], mode: Parallelism) -> ChainReport {
    let n = records.len() as u64;
    let decoded = par::map(mode, records, |r| Block::from_canonical_bytes(r));
    let mut blocks = Vec::with_capacity(decoded.len());
    for (i, d) in decoded.into_iter().enumerate() {
        match d {
            Ok(b) => blocks.push(b),
            Err(e) => {
                // Blocks before the undecodable record may still be bad.
                let prefix = verify_blocks(&blocks, mode);
                if !prefix.valid {
                    return ChainReport { blocks: n, ..prefix };
                }
                return ChainReport::bad(n, i as u64, format!("undecodable block: {e}"));
            }
        }
    }
    verify_blocks(&blocks, mode)
}
