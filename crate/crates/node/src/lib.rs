//! PharmaChain node: HTTP API over the ledger, block producer, oracle
//! runner, telemetry services and the `pharmachain` CLI.

pub mod api;
pub mod config;
pub mod demo;
pub mod keystore;
pub mod network;
pub mod oracle;
pub mod runtime;
pub mod service;
pub mod verify;

pub use config::NodeConfig;
pub use keystore::Keystore;
pub use runtime::RunningNode;
pub use service::{NodeState, SharedNode};
