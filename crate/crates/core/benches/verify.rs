use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use pharmachain_core::ledger::{verify_blocks, Block, Ledger, LedgerConfig, Transaction};
use pharmachain_core::par::{self, Parallelism};
use pharmachain_core::scenario::Parties;

fn chain(items: u64) -> (Parties, Ledger) {
    let p = Parties::new("bench", 4);
    let mut l = p.bootstrap(&p.deployment(), LedgerConfig::default(), 0).unwrap();
    for upc in 0..items {
        p.run_lifecycle(&mut l, upc, "SKU").unwrap();
    }
    (p, l)
}

const MODES: [Parallelism; 2] = [Parallelism::Sequential, Parallelism::Parallel];

fn bench_verify_chain(c: &mut Criterion) {
    let (_, l) = chain(8);
    let blocks: Vec<Block> = l.blocks().to_vec();
    let mut g = c.benchmark_group("verify_chain");
    for mode in MODES {
        g.bench_with_input(BenchmarkId::new(format!("{mode:?}"), blocks.len()), &blocks, |b, blocks| {
            b.iter(|| assert!(verify_blocks(blocks, mode).valid))
        });
    }
    g.finish();
}

fn bench_signatures(c: &mut Criterion) {
    let (_, l) = chain(8);
    let txs: Vec<Transaction> = l.blocks().iter().flat_map(|b| b.transactions.clone()).collect();
    let mut g = c.benchmark_group("tx_signatures");
    for mode in MODES {
        g.bench_with_input(BenchmarkId::new(format!("{mode:?}"), txs.len()), &txs, |b, txs| {
            b.iter(|| par::map(mode, txs, |t| t.verify_signature().is_ok()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_verify_chain, bench_signatures);
criterion_main!(benches);
