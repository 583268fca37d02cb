//! Item authenticity: does an item's recorded history match the chain?

use serde::Serialize;

use crate::contract::{ContractState, Custody, LifecycleStep, Operation, ShipmentState};
use crate::crypto::{Address, Hash32};
use crate::codec::Decode;
use crate::ledger::{verify_blocks, verify_records, Block, Ledger};
use crate::par::Parallelism;

/// One step of an item's custody chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CustodyHop {
    pub event: String,
    pub state: u8,
    pub block_height: u64,
    pub timestamp_ms: u64,
    pub tx_id: Hash32,
    /// Transaction sender.
    pub actor: Address,
    pub owner: Address,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ProvenanceReport {
    pub upc: u64,
    pub authentic: bool,
    pub state: Option<String>,
    /// Highest height covered by the chain check.
    pub chain_verified_to: Option<u64>,
    pub custody: Vec<CustodyHop>,
    pub anomalies: Vec<String>,
}

/// Checks `upc` against the ledger's chain.
pub fn verify_authenticity(ledger: &Ledger, upc: u64) -> ProvenanceReport {
    verify_item(ledger.state(), ledger.blocks(), upc, ledger.config().parallelism)
}

/// Checks `upc` in `state` against `blocks`. Corruption after the item's
/// last event does not affect the verdict.
pub fn verify_item(state: &ContractState, blocks: &[Block], upc: u64, mode: Parallelism) -> ProvenanceReport {
    let mut report = ProvenanceReport {
        upc,
        authentic: false,
        state: None,
        chain_verified_to: None,
        custody: Vec::new(),
        anomalies: Vec::new(),
    };
    let Some(item) = state.item(upc) else {
        report.anomalies.push("unknown upc".into());
        return report;
    };
    report.state = Some(item.state.name().to_string());
    let anomalies = &mut report.anomalies;

    let last_height = item.history.last().map(|h| h.event.block_height).unwrap_or(0);
    let upto = (last_height as usize + 1).min(blocks.len());
    let chain = verify_blocks(&blocks[..upto], mode);
    match chain.first_bad_height {
        Some(h) => anomalies.push(format!(
            "chain corrupt at height {h}: {}",
            chain.reason.unwrap_or_default()
        )),
        None => report.chain_verified_to = Some(upto as u64 - 1),
    }

    if item.history.len() != item.state.value() as usize + 1 {
        anomalies.push(format!(
            "{} history entries for state {}",
            item.history.len(),
            item.state.name()
        ));
    }
    let mut prev_owner: Option<Address> = None;
    for (i, entry) in item.history.iter().enumerate() {
        let ev = &entry.event;
        let Some(expected) = ShipmentState::from_value(i as u8) else {
            anomalies.push(format!("history longer than the lifecycle at {}", ev.name));
            break;
        };
        if ev.name != expected.name() {
            anomalies.push(format!("event {i} is {}, expected {}", ev.name, expected.name()));
        }
        if ev.upc != upc {
            anomalies.push(format!("event {} belongs to upc {}", ev.name, ev.upc));
        }
        if entry.prior_owner != prev_owner {
            anomalies.push(format!("custody break before {}", ev.name));
        }

        let step = LifecycleStep::ALL[i.min(12)];
        let Some(block) = blocks.get(ev.block_height as usize) else {
            anomalies.push(format!("{} references missing block {}", ev.name, ev.block_height));
            prev_owner = Some(entry.new_owner);
            continue;
        };
        if !block.events.contains(ev) {
            anomalies.push(format!("{} not recorded in block {}", ev.name, block.height));
        }
        let tx_pos = block.transactions.iter().position(|t| t.id() == ev.tx_id);
        let actor = match tx_pos {
            Some(p) => {
                let tx = &block.transactions[p];
                if !block.receipts.get(p).is_some_and(|r| r.success()) {
                    anomalies.push(format!("{} transaction did not succeed", ev.name));
                }
                let op_matches = match tx.decode_operation() {
                    Ok(Operation::ProduceItem { upc: u, .. }) => {
                        step == LifecycleStep::ProduceItemByManufacturer && u == upc
                    }
                    Ok(Operation::Advance { step: s, upc: u }) => s == step && u == upc,
                    _ => false,
                };
                if !op_matches {
                    anomalies.push(format!("{} transaction does not perform that step", ev.name));
                }
                tx.sender
            }
            None => {
                anomalies.push(format!("{} transaction missing from block {}", ev.name, block.height));
                Address::default()
            }
        };
        let expected_owner = match (step.custody(), prev_owner) {
            (Custody::Keep, Some(p)) => p,
            _ => actor,
        };
        if entry.new_owner != expected_owner {
            anomalies.push(format!("unexpected owner after {}", ev.name));
        }
        report.custody.push(CustodyHop {
            event: ev.name.clone(),
            state: i as u8,
            block_height: ev.block_height,
            timestamp_ms: block.timestamp_ms,
            tx_id: ev.tx_id,
            actor,
            owner: entry.new_owner,
        });
        prev_owner = Some(entry.new_owner);
    }

    let on_chain = blocks
        .iter()
        .take(upto)
        .flat_map(|b| b.events.iter())
        .filter(|e| e.upc == upc)
        .count();
    if on_chain != item.history.len() {
        anomalies.push(format!(
            "{on_chain} events on chain, {} in item history",
            item.history.len()
        ));
    }
    if prev_owner != Some(item.owner_id) || !item.custody_consistent() {
        anomalies.push("current owner does not match custody chain".into());
    }
    report.authentic = report.anomalies.is_empty();
    report
}

/// Like [`verify_item`] but over raw block records, as read from a block
/// log that may contain undecodable entries.
pub fn verify_item_records(
    state: &ContractState,
    records: &[Vec<u8>],
    upc: u64,
    mode: Parallelism,
) -> ProvenanceReport {
    let last_height = state
        .item(upc)
        .and_then(|i| i.history.last())
        .map(|h| h.event.block_height as usize)
        .unwrap_or(0);
    let upto = (last_height + 1).min(records.len());
    let chain = verify_records(&records[..upto], mode);
    if let (Some(h), Some(item)) = (chain.first_bad_height, state.item(upc)) {
        return ProvenanceReport {
            upc,
            authentic: false,
            state: Some(item.state.name().to_string()),
            chain_verified_to: None,
            custody: Vec::new(),
            anomalies: vec![format!(
                "chain corrupt at height {h}: {}",
                chain.reason.unwrap_or_default()
            )],
        };
    }
    let blocks: Vec<Block> = records[..upto]
        .iter()
        .filter_map(|r| Block::from_canonical_bytes(r).ok())
        .collect();
    verify_item(state, &blocks, upc, mode)
}
