//! Blocks, transactions and the proof-of-authority ledger.

mod block;
mod chain;
mod mempool;
pub mod schedule;
pub mod store;
mod transaction;
pub mod verify;

pub use block::{Block, Receipt, TxFailure};
pub use chain::{Ledger, LedgerConfig, LedgerError};
pub use mempool::Mempool;
pub use schedule::{mean_interval_secs, scheduled_validator, IntervalSchedule, SimClock};
pub use store::{BlockStore, Snapshot, StoreError};
pub use transaction::{Transaction, TxError};
pub use verify::{verify_blocks, verify_records, ChainReport};
