use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

use pharmachain_core::contract::Operation;
use pharmachain_core::ledger::BlockStore;
use pharmachain_node::network;
use pharmachain_node::service::NodeState;
use pharmachain_node::{Keystore, NodeConfig};

fn cli(args: &[&str]) -> (bool, Value) {
    let Output { status, stdout, stderr, .. } = Command::new(env!("CARGO_BIN_EXE_pharmachain"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap();
    let text = if status.success() { stdout } else { stderr };
    let text = String::from_utf8_lossy(&text);
    (status.success(), serde_json::from_str(&text).unwrap_or_else(|_| panic!("not JSON: {text}")))
}

#[test]
fn unknown_operation_is_a_json_error() {
    let (ok, v) = cli(&["frobnicate", "upc=1"]);
    assert!(!ok);
    assert_eq!(v["error"]["code"], "UnknownOperation");

    let (ok, v) = cli(&["--account", "manufacturer", "produceItemByManufacturer", "upc=1"]);
    assert!(!ok);
    assert_eq!(v["error"]["code"], "BadArguments");

    let (ok, v) = cli(&["operations"]);
    assert!(ok);
    assert!(v.as_array().unwrap().contains(&json!("purchaseItemByConsumer")));
}

#[test]
fn unreachable_node_is_reported() {
    let (ok, v) = cli(&["--node-url", "http://127.0.0.1:9", "item", "fetch", "1"]);
    assert!(!ok);
    assert_eq!(v["error"]["code"], "NodeUnavailable");
}

/// Chain with item 1 at height 2, item 2 at height 3 and an unrelated
/// block on top.
fn build_store(dir: &Path) -> NodeConfig {
    let cfg = NodeConfig::in_dir(dir);
    let ledger = network::init(&cfg).unwrap();
    let ks = Keystore::open(cfg.keystore_path()).unwrap();
    let validators = network::validator_keys(&cfg, &ks).unwrap();
    let node = NodeState::new(ledger, ks, validators, pharmachain_node::service::BlockMode::Instant).unwrap();
    for (upc, account) in [(1, "manufacturer"), (2, "manufacturer")] {
        node.submit(account, &Operation::produce(&format!("SKU-{upc}"), "Aspirin", upc)).unwrap();
        node.produce_pending().unwrap();
    }
    let retailer = node.keystore().get("retailer").unwrap().address();
    node.submit("owner", &Operation::TransferLink { to: retailer, amount: 1 }).unwrap();
    assert_eq!(node.produce_pending().unwrap(), Some(4));
    node.ledger().write_snapshot().unwrap();
    cfg
}

#[test]
fn offline_verification_localises_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = build_store(dir.path());
    let chain = cfg.chain_dir();
    let chain = chain.to_str().unwrap();

    let (ok, v) = cli(&["chain", "verify", "--store", chain]);
    assert!(ok, "{v}");
    assert_eq!(v["blocks"], 5);
    let (ok, _) = cli(&["item", "verify", "2", "--store", chain]);
    assert!(ok);

    let store = BlockStore::open(chain).unwrap();
    let mut records = store.read_records().unwrap();
    let mid = records[3].len() / 2;
    records[3][mid] ^= 0x01;
    store.write_records(&records).unwrap();

    let (ok, v) = cli(&["chain", "verify", "--store", chain]);
    assert!(!ok);
    assert_eq!(v["error"]["code"], "ChainCorrupt");
    assert_eq!(v["detail"]["first_bad_height"], 3);
    let (ok, v) = cli(&["chain", "verify", "--store", chain, "--sequential"]);
    assert!(!ok);
    assert_eq!(v["detail"]["first_bad_height"], 3);

    let (ok, v) = cli(&["item", "verify", "2", "--store", chain]);
    assert!(!ok);
    assert_eq!(v["detail"]["authentic"], false);
    let (ok, v) = cli(&["item", "verify", "1", "--store", chain]);
    assert!(ok, "{v}");
    assert_eq!(v["authentic"], true);
}
