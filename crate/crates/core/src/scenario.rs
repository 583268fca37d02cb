//! Ready-made parties and deployments for demos, tests and benches.

use crate::access::Role;
use crate::contract::{Deployment, LifecycleStep, Operation};
use crate::crypto::{Address, Hash32, KeyPair};
use crate::ledger::{Block, Ledger, LedgerConfig, LedgerError};
use crate::oracle::{OracleConfig, LINK};

/// LINK minted to the contract by [`Parties::deployment`].
pub const CONTRACT_LINK: u128 = 1_000 * LINK;

/// Deterministic key set for one network.
#[derive(Debug, Clone)]
pub struct Parties {
    pub owner: KeyPair,
    pub manufacturer: KeyPair,
    pub distributor: KeyPair,
    pub retailer: KeyPair,
    pub consumer: KeyPair,
    pub oracle_node: KeyPair,
    pub validators: Vec<KeyPair>,
}

impl Parties {
    /// Keys derived from `prefix`, with `validators` authority nodes.
    pub fn new(prefix: &str, validators: usize) -> Self {
        let k = |name: &str| KeyPair::from_label(&format!("{prefix}/{name}"));
        Self {
            owner: k("owner"),
            manufacturer: k("manufacturer"),
            distributor: k("distributor"),
            retailer: k("retailer"),
            consumer: k("consumer"),
            oracle_node: k("oracle-node"),
            validators: (0..validators.max(1)).map(|i| k(&format!("validator-{i}"))).collect(),
        }
    }

    pub fn for_role(&self, role: Role) -> &KeyPair {
        match role {
            Role::Manufacturer => &self.manufacturer,
            Role::Distributor => &self.distributor,
            Role::Retailer => &self.retailer,
            Role::Consumer => &self.consumer,
        }
    }

    pub fn validator(&self, address: &Address) -> Option<&KeyPair> {
        self.validators.iter().find(|v| &v.address() == address)
    }

    pub fn deployment(&self) -> Deployment {
        let owner = self.owner.address();
        let contract = crate::contract::contract_address(&owner);
        Deployment {
            owner,
            validators: self.validators.iter().map(KeyPair::address).collect(),
            oracle: OracleConfig::single(self.oracle_node.address()),
            link_balances: vec![(contract, CONTRACT_LINK), (owner, 100 * LINK)],
        }
    }

    /// Genesis plus one block granting each party its role.
    pub fn bootstrap(&self, deployment: &Deployment, config: LedgerConfig, genesis_ms: u64) -> Result<Ledger, LedgerError> {
        let v0 = self.validators.iter().find(|v| v.address() == deployment.validators[0]);
        let v0 = v0.expect("validator keys cover the deployment");
        let tx = Ledger::deploy_transaction(&self.owner, deployment);
        let mut ledger = Ledger::genesis(tx, v0, genesis_ms, config)?;
        for role in Role::ALL {
            let op = Operation::AddRole {
                role,
                account: self.for_role(role).address(),
            };
            ledger.submit_operation(&self.owner, &op)?;
        }
        self.produce(&mut ledger)?;
        Ok(ledger)
    }

    /// Produces the next block with whichever validator is scheduled.
    pub fn produce<'a>(&self, ledger: &'a mut Ledger) -> Result<&'a Block, LedgerError> {
        let v = self
            .validator(&ledger.next_validator())
            .expect("all validator keys known")
            .clone();
        ledger.produce_block(&v)
    }

    /// Operation for `step` on `upc`.
    pub fn step_operation(step: LifecycleStep, upc: u64, sku: &str, drug_name: &str) -> Operation {
        match step {
            LifecycleStep::ProduceItemByManufacturer => Operation::produce(sku, drug_name, upc),
            s => Operation::advance(s, upc),
        }
    }

    /// Submits one lifecycle step from the party holding its role.
    pub fn submit_step(&self, ledger: &mut Ledger, step: LifecycleStep, upc: u64, sku: &str) -> Result<Hash32, LedgerError> {
        let op = Self::step_operation(step, upc, sku, "Paracetamol 500mg");
        ledger.submit_operation(self.for_role(step.required_role()), &op)
    }

    /// Runs all thirteen steps for one item, one block per step. Returns
    /// the transaction ids in step order.
    pub fn run_lifecycle(&self, ledger: &mut Ledger, upc: u64, sku: &str) -> Result<Vec<Hash32>, LedgerError> {
        let mut ids = Vec::with_capacity(13);
        for step in LifecycleStep::ALL {
            ids.push(self.submit_step(ledger, step, upc, sku)?);
            self.produce(ledger)?;
        }
        Ok(ids)
    }
}
