//! The pharmaceutical supply-chain contract: deployment, state, and the
//! deterministic transaction executor.
//!
//! Every operation validates all of its guards and funding before touching
//! state, so a failed operation leaves the state byte-identical.

mod lifecycle;
mod operation;
mod shipment;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::access::{GuardFailed, GuardKind, Role, RoleError, RoleRegistry};
use crate::codec::{CodecError, CodecResult, Decode, Decoder, Encode, Encoder};
use crate::crypto::{Address, Hash32};
use crate::oracle::{
    Clock, OracleBridge, OracleConfig, OracleError, OracleField, RequestOrigin, Settlement,
};

pub use lifecycle::{Custody, LifecycleStep};
pub use operation::{Operation, OperationError};
pub use shipment::{EventRecord, HistoryEntry, ShipmentItem, ShipmentState};

/// Deployment parameters, carried by the genesis transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deployment {
    pub owner: Address,
    pub validators: Vec<Address>,
    pub oracle: OracleConfig,
    /// LINK minted at deployment. The contract's own balance funds oracle
    /// requests; use [`Deployment::contract_address`] to fund it.
    pub link_balances: Vec<(Address, u128)>,
}

impl Deployment {
    pub fn contract_address(&self) -> Address {
        contract_address(&self.owner)
    }
}

/// Address of the contract deployed by `owner`.
pub fn contract_address(owner: &Address) -> Address {
    Address::derived(&[b"pharmachain-contract/".as_slice(), &owner.0].concat())
}

impl Encode for Deployment {
    fn encode(&self, enc: &mut Encoder) {
        enc.value(&self.owner)
            .list(&self.validators)
            .value(&self.oracle)
            .list(&self.link_balances);
    }
}

impl Decode for Deployment {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        Ok(Deployment {
            owner: dec.value()?,
            validators: dec.list()?,
            oracle: dec.value()?,
            link_balances: dec.list()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error(transparent)]
    Guard(#[from] GuardFailed),
    #[error("{account} already has role {role}")]
    AlreadyHasRole { role: Role, account: Address },
    #[error("upc {0} already exists")]
    DuplicateUpc(u64),
    #[error("unknown upc {0}")]
    UnknownUpc(u64),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("contract already deployed")]
    AlreadyDeployed,
}

impl From<RoleError> for ExecError {
    fn from(e: RoleError) -> Self {
        match e {
            RoleError::Denied(g) => ExecError::Guard(g),
            RoleError::AlreadyHasRole { role, account } => ExecError::AlreadyHasRole { role, account },
        }
    }
}

impl ExecError {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            ExecError::Guard(_) => "GuardFailed",
            ExecError::AlreadyHasRole { .. } => "AlreadyHasRole",
            ExecError::DuplicateUpc(_) => "DuplicateUPC",
            ExecError::UnknownUpc(_) => "UnknownUPC",
            ExecError::AlreadyDeployed => "AlreadyDeployed",
            ExecError::Oracle(e) => match e {
                OracleError::UnknownField(_) => "UnknownField",
                OracleError::InsufficientLink { .. } => "InsufficientLink",
                OracleError::UnknownRequest(_) => "UnknownRequest",
                OracleError::AlreadyFulfilled(_) => "AlreadyFulfilled",
                OracleError::NotOracleNode(_) => "NotOracleNode",
                OracleError::DuplicateResponder(_) => "DuplicateResponder",
                OracleError::AggregationRequired => "AggregationRequired",
                OracleError::QuorumNotReached { .. } => "QuorumNotReached",
                OracleError::NotExpired(_) => "NotExpired",
                OracleError::ValueOutOfRange { .. } => "ValueOutOfRange",
            },
        }
    }

    pub fn guard(&self) -> Option<GuardKind> {
        match self {
            ExecError::Guard(GuardFailed(kind)) => Some(*kind),
            _ => None,
        }
    }
}

/// Block context of the executing transaction.
#[derive(Debug, Clone, Copy)]
pub struct ExecContext {
    pub caller: Address,
    pub tx_id: Hash32,
    pub height: u64,
    pub timestamp_ms: u64,
}

impl ExecContext {
    fn clock(&self) -> Clock {
        Clock {
            height: self.height,
            timestamp_ms: self.timestamp_ms,
        }
    }
}

/// Observable results of a successful operation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Effects {
    pub events: Vec<EventRecord>,
    pub oracle_requests: Vec<Hash32>,
    pub settlement: Option<Settlement>,
}

/// Read-only view of one item.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ItemDetails {
    pub upc: u64,
    pub sku: String,
    pub drug_name: String,
    pub state: String,
    pub state_value: u8,
    #[serde(rename = "ownerID")]
    pub owner_id: Address,
    #[serde(rename = "originManufacturerID")]
    pub origin_manufacturer_id: Address,
    #[serde(rename = "distributorID")]
    pub distributor_id: Option<Address>,
    #[serde(rename = "retailerID")]
    pub retailer_id: Option<Address>,
    #[serde(rename = "consumerID")]
    pub consumer_id: Option<Address>,
    pub history: Vec<HistoryEntry>,
}

impl From<&ShipmentItem> for ItemDetails {
    fn from(i: &ShipmentItem) -> Self {
        Self {
            upc: i.upc,
            sku: i.sku.clone(),
            drug_name: i.drug_name.clone(),
            state: i.state.name().to_string(),
            state_value: i.state.value(),
            owner_id: i.owner_id,
            origin_manufacturer_id: i.origin_manufacturer_id,
            distributor_id: i.distributor_id,
            retailer_id: i.retailer_id,
            consumer_id: i.consumer_id,
            history: i.history.clone(),
        }
    }
}

/// Complete contract state. Every map is ordered so the snapshot encoding,
/// and hence the state hash, is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractState {
    contract: Address,
    validators: Vec<Address>,
    roles: RoleRegistry,
    items: BTreeMap<u64, ShipmentItem>,
    nonces: BTreeMap<Address, u64>,
    oracle: OracleBridge,
}

impl ContractState {
    pub fn deploy(d: &Deployment) -> Self {
        Self {
            contract: d.contract_address(),
            validators: d.validators.clone(),
            roles: RoleRegistry::with_owner(d.owner),
            items: BTreeMap::new(),
            nonces: BTreeMap::new(),
            oracle: OracleBridge::new(d.oracle.clone(), d.link_balances.iter().copied()),
        }
    }

    pub fn contract_address(&self) -> Address {
        self.contract
    }

    pub fn validators(&self) -> &[Address] {
        &self.validators
    }

    pub fn roles(&self) -> &RoleRegistry {
        &self.roles
    }

    pub fn oracle(&self) -> &OracleBridge {
        &self.oracle
    }

    pub fn item(&self, upc: u64) -> Option<&ShipmentItem> {
        self.items.get(&upc)
    }

    pub fn items(&self) -> impl Iterator<Item = &ShipmentItem> {
        self.items.values()
    }

    pub fn nonce(&self, account: &Address) -> u64 {
        self.nonces.get(account).copied().unwrap_or(0)
    }

    /// Records an included transaction's nonce, whether or not it succeeded.
    pub fn record_nonce(&mut self, account: Address, nonce: u64) {
        self.nonces.insert(account, nonce);
    }

    pub fn fetch_item_details(&self, upc: u64) -> Result<ItemDetails, ExecError> {
        self.item(upc)
            .map(ItemDetails::from)
            .ok_or(ExecError::UnknownUpc(upc))
    }

    /// Executes one operation. On error nothing has changed.
    pub fn execute(&mut self, ctx: &ExecContext, op: &Operation) -> Result<Effects, ExecError> {
        let caller = ctx.caller;
        match op {
            Operation::Deploy(_) => Err(ExecError::AlreadyDeployed),
            Operation::AddRole { role, account } => {
                self.roles.add(*role, &caller, *account)?;
                Ok(Effects::default())
            }
            Operation::RenounceRole { role } => {
                self.roles.renounce(*role, &caller)?;
                Ok(Effects::default())
            }
            Operation::TransferOwnership { new_owner } => {
                self.roles.transfer_ownership(&caller, *new_owner)?;
                Ok(Effects::default())
            }
            Operation::ProduceItem {
                sku,
                drug_name,
                upc,
            } => self.produce(ctx, sku, drug_name, *upc),
            Operation::Advance { step, upc } => self.advance(ctx, *step, *upc),
            Operation::RequestData { field, sku } => {
                let fee = self.oracle.config().fees.request_fee(*field);
                let id =
                    self.oracle
                        .request_data(self.contract, sku, *field, fee, None, ctx.clock())?;
                Ok(Effects {
                    oracle_requests: vec![id],
                    ..Effects::default()
                })
            }
            Operation::FulfillOracleRequest {
                request_id,
                outcome,
            } => {
                let s = self
                    .oracle
                    .fulfill(caller, request_id, *outcome, ctx.clock())?;
                Ok(Effects {
                    settlement: Some(s),
                    ..Effects::default()
                })
            }
            Operation::AggregateFulfill {
                request_id,
                responses,
            } => {
                let s = self
                    .oracle
                    .aggregate_fulfill(caller, request_id, responses, ctx.clock())?;
                Ok(Effects {
                    settlement: Some(s),
                    ..Effects::default()
                })
            }
            Operation::ExpireOracleRequest { request_id } => {
                let s = self.oracle.expire(request_id, ctx.clock())?;
                Ok(Effects {
                    settlement: Some(s),
                    ..Effects::default()
                })
            }
            Operation::TransferLink { to, amount } => {
                self.oracle.transfer(&caller, *to, *amount)?;
                Ok(Effects::default())
            }
        }
    }

    /// Oracle requests a lifecycle action will issue, after checking the
    /// contract can pay for them.
    fn plan_requests(&self, step: LifecycleStep) -> Result<Vec<(OracleField, u128)>, ExecError> {
        let plan = self.oracle.config().fees.requests_for(step);
        let total: u128 = plan.iter().map(|(_, f)| f).sum();
        self.oracle.check_funds(&self.contract, total)?;
        Ok(plan)
    }

    fn issue_requests(
        &mut self,
        ctx: &ExecContext,
        sku: &str,
        origin: RequestOrigin,
        plan: Vec<(OracleField, u128)>,
    ) -> Vec<Hash32> {
        plan.into_iter()
            .map(|(field, fee)| {
                self.oracle
                    .request_data(self.contract, sku, field, fee, Some(origin), ctx.clock())
                    .expect("funds checked before any mutation")
            })
            .collect()
    }

    fn produce(
        &mut self,
        ctx: &ExecContext,
        sku: &str,
        drug_name: &str,
        upc: u64,
    ) -> Result<Effects, ExecError> {
        let step = LifecycleStep::ProduceItemByManufacturer;
        for g in step.guards() {
            g.require(&self.roles, &ctx.caller, None)?;
        }
        if self.items.contains_key(&upc) {
            return Err(ExecError::DuplicateUpc(upc));
        }
        let plan = self.plan_requests(step)?;

        let event = EventRecord {
            name: step.event_name().to_string(),
            upc,
            block_height: ctx.height,
            tx_id: ctx.tx_id,
        };
        let item = ShipmentItem {
            upc,
            sku: sku.to_string(),
            drug_name: drug_name.to_string(),
            state: step.resulting_state(),
            owner_id: ctx.caller,
            origin_manufacturer_id: ctx.caller,
            distributor_id: None,
            retailer_id: None,
            consumer_id: None,
            history: vec![HistoryEntry {
                event: event.clone(),
                prior_owner: None,
                new_owner: ctx.caller,
            }],
        };
        self.items.insert(upc, item);
        let oracle_requests = self.issue_requests(ctx, sku, RequestOrigin { upc, step }, plan);
        Ok(Effects {
            events: vec![event],
            oracle_requests,
            settlement: None,
        })
    }

    fn advance(&mut self, ctx: &ExecContext, step: LifecycleStep, upc: u64) -> Result<Effects, ExecError> {
        let guards = step.guards();
        let (role_guard, item_guards) = guards.split_first().expect("role guard always present");
        role_guard.require(&self.roles, &ctx.caller, None)?;
        let item = self.items.get(&upc).ok_or(ExecError::UnknownUpc(upc))?;
        for g in item_guards {
            g.require(&self.roles, &ctx.caller, Some(item))?;
        }
        let sku = item.sku.clone();
        let plan = self.plan_requests(step)?;

        let item = self.items.get_mut(&upc).expect("looked up above");
        let prior_owner = item.owner_id;
        if let Custody::TakeAs(role) = step.custody() {
            item.owner_id = ctx.caller;
            match role {
                Role::Distributor => item.distributor_id = Some(ctx.caller),
                Role::Retailer => item.retailer_id = Some(ctx.caller),
                Role::Consumer => item.consumer_id = Some(ctx.caller),
                Role::Manufacturer => unreachable!("manufacturers never take custody by purchase"),
            }
        }
        item.state = step.resulting_state();
        let event = EventRecord {
            name: step.event_name().to_string(),
            upc,
            block_height: ctx.height,
            tx_id: ctx.tx_id,
        };
        item.history.push(HistoryEntry {
            event: event.clone(),
            prior_owner: Some(prior_owner),
            new_owner: item.owner_id,
        });
        let oracle_requests = self.issue_requests(ctx, &sku, RequestOrigin { upc, step }, plan);
        Ok(Effects {
            events: vec![event],
            oracle_requests,
            settlement: None,
        })
    }

    /// Keyed snapshot entries, sorted by key.
    pub fn snapshot_entries(&self) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        let mut meta = Encoder::new();
        meta.value(&self.contract).list(&self.validators);
        out.push(("contract".to_string(), meta.into_bytes()));
        out.push(("roles".to_string(), self.roles.to_canonical_bytes()));
        for (upc, item) in &self.items {
            out.push((format!("item/{upc:020}"), item.to_canonical_bytes()));
        }
        for (a, n) in &self.nonces {
            out.push((format!("nonce/{a}"), n.to_canonical_bytes()));
        }
        self.oracle.snapshot_entries(&mut out);
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    pub fn from_snapshot_entries(entries: &[(String, Vec<u8>)]) -> CodecResult<Self> {
        let mut contract = None;
        let mut roles = None;
        let mut items = BTreeMap::new();
        let mut nonces = BTreeMap::new();
        let invalid = |m: String| CodecError::Invalid(m);
        for (key, val) in entries {
            if key == "contract" {
                let mut dec = Decoder::new(val);
                contract = Some((dec.value::<Address>()?, dec.list::<Address>()?));
                dec.finish()?;
            } else if key == "roles" {
                roles = Some(RoleRegistry::from_canonical_bytes(val)?);
            } else if key.starts_with("item/") {
                let item = ShipmentItem::from_canonical_bytes(val)?;
                items.insert(item.upc, item);
            } else if let Some(a) = key.strip_prefix("nonce/") {
                let a: Address = a.parse().map_err(|e| invalid(format!("{e}")))?;
                nonces.insert(a, u64::from_canonical_bytes(val)?);
            }
        }
        let oracle = OracleBridge::from_snapshot_entries(
            entries
                .iter()
                .filter(|(k, _)| k.starts_with("oracle/") || k.starts_with("link/"))
                .map(|(k, v)| (k.as_str(), v.as_slice())),
        )?;
        let (contract, validators) = contract.ok_or_else(|| invalid("missing contract".into()))?;
        Ok(Self {
            contract,
            validators,
            roles: roles.ok_or_else(|| invalid("missing roles".into()))?,
            items,
            nonces,
            oracle,
        })
    }

    /// Hash over the canonical snapshot encoding.
    pub fn state_hash(&self) -> Hash32 {
        let mut enc = Encoder::new();
        let entries = self.snapshot_entries();
        enc.len(entries.len());
        for (k, v) in &entries {
            enc.str(k).bytes(v);
        }
        Hash32::digest(enc.as_bytes())
    }
}

#[cfg(test)]
mod tests;
