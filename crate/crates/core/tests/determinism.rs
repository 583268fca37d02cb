use proptest::prelude::*;

use pharmachain_core::contract::LifecycleStep;
use pharmachain_core::ledger::{Ledger, LedgerConfig};
use pharmachain_core::oracle::{JobOutcome, OracleField};
use pharmachain_core::par::Parallelism;
use pharmachain_core::scenario::Parties;
use pharmachain_core::{Operation, Role};

#[derive(Debug, Clone)]
enum Action {
    Step { step: usize, upc: u64, role: usize },
    Request { field: usize, role: usize },
    FulfillOldest(i64),
    Block,
}

fn action() -> impl Strategy<Value = Action> {
    prop_oneof![
        6 => (0usize..13, 1u64..4, 0usize..4).prop_map(|(step, upc, role)| Action::Step { step, upc, role }),
        1 => (0usize..4, 0usize..4).prop_map(|(field, role)| Action::Request { field, role }),
        1 => (0i64..5000).prop_map(Action::FulfillOldest),
        2 => Just(Action::Block),
    ]
}

fn run(actions: &[Action], mode: Parallelism) -> Ledger {
    let p = Parties::new("det", 3);
    let config = LedgerConfig { parallelism: mode, ..LedgerConfig::default() };
    let mut l = p.bootstrap(&p.deployment(), config, 1_000).unwrap();
    for a in actions {
        match a {
            Action::Step { step, upc, role } => {
                let step = LifecycleStep::ALL[*step];
                let op = Parties::step_operation(step, *upc, "SKU", "Drug");
                l.submit_operation(p.for_role(Role::ALL[*role]), &op).unwrap();
            }
            Action::Request { field, role } => {
                let op = Operation::RequestData { field: OracleField::ALL[*field], sku: "SKU".into() };
                l.submit_operation(p.for_role(Role::ALL[*role]), &op).unwrap();
            }
            Action::FulfillOldest(v) => {
                let oldest = l.state().oracle().pending().next().map(|r| r.request_id);
                if let Some(request_id) = oldest {
                    let op = Operation::FulfillOracleRequest {
                        request_id,
                        outcome: JobOutcome::Value(*v),
                    };
                    l.submit_operation(&p.oracle_node, &op).unwrap();
                }
            }
            Action::Block => {
                p.produce(&mut l).unwrap();
            }
        }
    }
    p.produce(&mut l).unwrap();
    l
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn same_transactions_same_chain(actions in prop::collection::vec(action(), 1..24)) {
        let a = run(&actions, Parallelism::Parallel);
        let b = run(&actions, Parallelism::Sequential);
        prop_assert_eq!(a.tip().block_hash, b.tip().block_hash);
        prop_assert_eq!(a.state().state_hash(), b.state().state_hash());
        prop_assert!(a.verify_chain().valid);

        let replayed = Ledger::from_blocks(a.blocks().to_vec(), LedgerConfig::default()).unwrap();
        prop_assert_eq!(replayed.state().state_hash(), a.state().state_hash());

        let supply = a.state().oracle().total_supply();
        let p = Parties::new("det", 3);
        let minted: u128 = p.deployment().link_balances.iter().map(|(_, v)| v).sum();
        prop_assert_eq!(supply, minted);
    }
}
