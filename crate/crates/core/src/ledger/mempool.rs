use std::collections::{HashMap, HashSet, VecDeque};

use crate::crypto::{Address, Hash32};

use super::Transaction;

/// FIFO queue of admitted transactions awaiting inclusion.
#[derive(Debug, Default, Clone)]
pub struct Mempool {
    queue: VecDeque<Transaction>,
    ids: HashSet<Hash32>,
    pending_nonce: HashMap<Address, u64>,
}

impl Mempool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn contains(&self, id: &Hash32) -> bool {
        self.ids.contains(id)
    }

    /// Highest queued nonce for `sender`.
    pub fn pending_nonce(&self, sender: &Address) -> Option<u64> {
        self.pending_nonce.get(sender).copied()
    }

    pub fn push(&mut self, tx: Transaction) {
        self.ids.insert(tx.id());
        let n = self.pending_nonce.entry(tx.sender).or_insert(0);
        *n = (*n).max(tx.nonce);
        self.queue.push_back(tx);
    }

    /// Removes up to `max` transactions from the front of the queue.
    pub fn take(&mut self, max: usize) -> Vec<Transaction> {
        let n = max.min(self.queue.len());
        let out: Vec<Transaction> = self.queue.drain(..n).collect();
        for tx in &out {
            self.ids.remove(&tx.id());
        }
        let still: HashSet<Address> = self.queue.iter().map(|t| t.sender).collect();
        self.pending_nonce.retain(|a, _| still.contains(a));
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transaction> {
        self.queue.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::Operation;
    use crate::crypto::KeyPair;

    #[test]
    fn fifo_and_pending_nonce() {
        let k = KeyPair::from_label("m");
        let mut m = Mempool::new();
        for n in 1..=3 {
            m.push(Transaction::sign(&k, n, &Operation::produce("S", "D", n)));
        }
        assert_eq!(m.pending_nonce(&k.address()), Some(3));
        let first = m.take(2);
        assert_eq!(first.iter().map(|t| t.nonce).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(m.len(), 1);
        assert_eq!(m.pending_nonce(&k.address()), Some(3));
        m.take(10);
        assert!(m.is_empty());
        assert_eq!(m.pending_nonce(&k.address()), None);
    }
}
