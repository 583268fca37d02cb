use super::*;
use crate::crypto::KeyPair;
use crate::oracle::{JobOutcome, LINK};
use crate::reference;

struct Net {
    state: ContractState,
    owner: KeyPair,
    m: KeyPair,
    d: KeyPair,
    r: KeyPair,
    c: KeyPair,
    node: KeyPair,
    height: u64,
}

impl Net {
    fn new(contract_link: u128) -> Self {
        let owner = KeyPair::from_label("t/owner");
        let node = KeyPair::from_label("t/node");
        let d = Deployment {
            owner: owner.address(),
            validators: vec![KeyPair::from_label("t/v").address()],
            oracle: OracleConfig::single(node.address()),
            link_balances: vec![(contract_address(&owner.address()), contract_link)],
        };
        let mut net = Net {
            state: ContractState::deploy(&d),
            owner,
            m: KeyPair::from_label("t/m"),
            d: KeyPair::from_label("t/d"),
            r: KeyPair::from_label("t/r"),
            c: KeyPair::from_label("t/c"),
            node,
            height: 0,
        };
        for (role, k) in [
            (Role::Manufacturer, net.m.address()),
            (Role::Distributor, net.d.address()),
            (Role::Retailer, net.r.address()),
            (Role::Consumer, net.c.address()),
        ] {
            let owner = net.owner.address();
            net.exec(owner, Operation::AddRole { role, account: k }).unwrap();
        }
        net
    }

    fn exec(&mut self, caller: Address, op: Operation) -> Result<Effects, ExecError> {
        self.height += 1;
        let ctx = ExecContext {
            caller,
            tx_id: Hash32::digest(&self.height.to_be_bytes()),
            height: self.height,
            timestamp_ms: self.height * 4_000,
        };
        self.state.execute(&ctx, &op)
    }

    fn actor(&self, step: LifecycleStep) -> Address {
        match step.required_role() {
            Role::Manufacturer => self.m.address(),
            Role::Distributor => self.d.address(),
            Role::Retailer => self.r.address(),
            Role::Consumer => self.c.address(),
        }
    }

    fn step(&mut self, step: LifecycleStep, upc: u64) -> Result<Effects, ExecError> {
        let op = match step {
            LifecycleStep::ProduceItemByManufacturer => Operation::produce("SKU-1", "Amoxicillin", upc),
            s => Operation::advance(s, upc),
        };
        self.exec(self.actor(step), op)
    }
}

#[test]
fn full_lifecycle_reaches_purchased_by_consumer() {
    let mut net = Net::new(100 * LINK);
    for step in LifecycleStep::ALL {
        let fx = net.step(step, 42).unwrap();
        assert_eq!(fx.events.len(), 1);
        assert_eq!(fx.events[0].name, step.event_name());
    }
    let item = net.state.item(42).unwrap();
    assert_eq!(item.state, ShipmentState::ALL[12]);
    assert_eq!(item.owner_id, net.c.address());
    assert_eq!(item.distributor_id, Some(net.d.address()));
    assert_eq!(item.retailer_id, Some(net.r.address()));
    assert_eq!(item.history.len(), 13);
    assert!(item.custody_consistent());
}

#[test]
fn failed_operation_leaves_state_hash_unchanged() {
    let mut net = Net::new(100 * LINK);
    net.step(LifecycleStep::ProduceItemByManufacturer, 1).unwrap();
    let before = net.state.state_hash();
    let r = net.exec(net.r.address(), Operation::advance(LifecycleStep::SellItemByManufacturer, 1));
    assert_eq!(r.unwrap_err().guard(), Some(GuardKind::OnlyRole(Role::Manufacturer)));
    let r = net.exec(net.m.address(), Operation::advance(LifecycleStep::ShippedItemByManufacturer, 1));
    assert_eq!(r.unwrap_err().code(), "GuardFailed");
    let r = net.step(LifecycleStep::ProduceItemByManufacturer, 1);
    assert_eq!(r.unwrap_err(), ExecError::DuplicateUpc(1));
    assert_eq!(net.state.state_hash(), before);
}

#[test]
fn wrong_owner_trips_verify_caller() {
    let mut net = Net::new(100 * LINK);
    net.step(LifecycleStep::ProduceItemByManufacturer, 5).unwrap();
    let other = KeyPair::from_label("t/m2").address();
    let owner = net.owner.address();
    net.exec(owner, Operation::AddRole { role: Role::Manufacturer, account: other }).unwrap();
    let err = net
        .exec(other, Operation::advance(LifecycleStep::SellItemByManufacturer, 5))
        .unwrap_err();
    assert!(matches!(err.guard(), Some(GuardKind::VerifyCaller(_))));
}

#[test]
fn unknown_upc_after_role_guard() {
    let mut net = Net::new(100 * LINK);
    let e = net.exec(net.c.address(), Operation::advance(LifecycleStep::SellItemByManufacturer, 9));
    assert_eq!(e.unwrap_err().code(), "GuardFailed");
    let e = net.exec(net.m.address(), Operation::advance(LifecycleStep::SellItemByManufacturer, 9));
    assert_eq!(e.unwrap_err(), ExecError::UnknownUpc(9));
}

#[test]
fn lifecycle_actions_charge_reference_link_fees() {
    let mut net = Net::new(100 * LINK);
    let contract = net.state.contract_address();
    let supply = net.state.oracle().total_supply();
    for step in LifecycleStep::ALL {
        let before = net.state.oracle().balance(&contract);
        let fx = net.step(step, 77).unwrap();
        assert_eq!(fx.oracle_requests.len(), 4);
        let paid = before - net.state.oracle().balance(&contract);
        assert_eq!(paid, reference::link_fee_for(step), "{step}");
    }
    assert_eq!(net.state.oracle().total_supply(), supply);
}

#[test]
fn insufficient_link_rejects_whole_action() {
    let mut net = Net::new(LINK / 10);
    let before = net.state.state_hash();
    let e = net.step(LifecycleStep::ProduceItemByManufacturer, 1).unwrap_err();
    assert_eq!(e.code(), "InsufficientLink");
    assert_eq!(net.state.state_hash(), before);
    assert!(net.state.item(1).is_none());
}

#[test]
fn oracle_fulfillment_stores_value_and_pays_node() {
    let mut net = Net::new(100 * LINK);
    let fx = net
        .exec(net.m.address(), Operation::RequestData { field: OracleField::Temperature, sku: "SKU-1".into() })
        .unwrap();
    let id = fx.oracle_requests[0];
    let node = net.node.address();
    let fx = net
        .exec(node, Operation::FulfillOracleRequest { request_id: id, outcome: JobOutcome::Value(2350) })
        .unwrap();
    assert_eq!(fx.settlement, Some(Settlement::Fulfilled { value: 2350 }));
    assert_eq!(net.state.oracle().value("SKU-1", OracleField::Temperature).unwrap().value, 2350);
    assert_eq!(net.state.oracle().balance(&node), LINK / 10);
    let again = net.exec(node, Operation::FulfillOracleRequest { request_id: id, outcome: JobOutcome::Value(1) });
    assert_eq!(again.unwrap_err().code(), "AlreadyFulfilled");
}

#[test]
fn snapshot_round_trip_preserves_hash() {
    let mut net = Net::new(100 * LINK);
    for step in LifecycleStep::ALL.into_iter().take(6) {
        net.step(step, 3).unwrap();
    }
    net.state.record_nonce(net.m.address(), 9);
    let entries = net.state.snapshot_entries();
    let restored = ContractState::from_snapshot_entries(&entries).unwrap();
    assert_eq!(restored, net.state);
    assert_eq!(restored.state_hash(), net.state.state_hash());
}

#[test]
fn deploy_after_genesis_is_rejected() {
    let mut net = Net::new(LINK);
    let d = Deployment {
        owner: net.m.address(),
        validators: vec![],
        oracle: OracleConfig::single(net.node.address()),
        link_balances: vec![],
    };
    assert_eq!(net.exec(net.m.address(), Operation::Deploy(d)).unwrap_err(), ExecError::AlreadyDeployed);
}
