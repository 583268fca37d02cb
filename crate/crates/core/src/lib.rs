//! PharmaChain core: a permissioned ledger hosting a pharmaceutical
//! supply-chain contract, with role-based access control and an oracle
//! bridge for off-chain telemetry.

pub mod access;
pub mod codec;
pub mod contract;
pub mod crypto;
pub mod ledger;
pub mod oracle;
pub mod par;
pub mod provenance;
pub mod reference;
pub mod scenario;

pub use access::{GuardKind, Role, RoleRegistry};
pub use contract::{ContractState, Deployment, LifecycleStep, Operation, ShipmentState};
pub use crypto::{Address, Hash32, KeyPair};
pub use ledger::{Block, Ledger, LedgerConfig, LedgerError, Transaction};
