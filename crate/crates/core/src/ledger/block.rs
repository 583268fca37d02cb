use serde::Serialize;

use crate::codec::{CodecResult, Decode, Decoder, Encode, Encoder};
use crate::contract::EventRecord;
use crate::crypto::{Address, Hash32, KeyPair, PublicKey, Signature};

use super::Transaction;

const BLOCK_DOMAIN: &[u8] = b"pharmachain/block/v1";

/// Why an included transaction failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TxFailure {
    pub code: String,
    /// Guard modifier name for guard failures.
    pub guard: Option<String>,
    pub message: String,
}

/// Execution outcome of one included transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Receipt {
    pub tx_id: Hash32,
    pub failure: Option<TxFailure>,
    pub oracle_requests: Vec<Hash32>,
}

impl Receipt {
    pub fn success(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Block {
    pub height: u64,
    pub parent_hash: Hash32,
    pub timestamp_ms: u64,
    pub validator: Address,
    pub validator_key: PublicKey,
    /// Contract state hash after executing this block.
    pub state_root: Hash32,
    pub transactions: Vec<Transaction>,
    pub receipts: Vec<Receipt>,
    pub events: Vec<EventRecord>,
    pub block_hash: Hash32,
    /// Validator signature over `block_hash`.
    pub signature: Signature,
}

impl Block {
    /// Hash over every field preceding `block_hash`.
    pub fn compute_hash(&self) -> Hash32 {
        let mut enc = Encoder::new();
        enc.bytes(BLOCK_DOMAIN);
        self.encode_header_and_body(&mut enc);
        Hash32::digest(enc.as_bytes())
    }

    /// Fills in the hash and the validator signature.
    pub fn seal(mut self, validator: &KeyPair) -> Self {
        self.validator = validator.address();
        self.validator_key = validator.public_key();
        self.block_hash = self.compute_hash();
        self.signature = validator.sign(&self.block_hash.0);
        self
    }

    pub fn verify_signature(&self) -> bool {
        self.validator_key.address() == self.validator
            && self.validator_key.verify(&self.block_hash.0, &self.signature).is_ok()
    }

    pub fn timestamps(blocks: &[Block]) -> Vec<u64> {
        blocks.iter().map(|b| b.timestamp_ms).collect()
    }

    fn encode_header_and_body(&self, enc: &mut Encoder) {
        enc.u64(self.height)
            .value(&self.parent_hash)
            .u64(self.timestamp_ms)
            .value(&self.validator)
            .value(&self.validator_key)
            .value(&self.state_root)
            .list(&self.transactions)
            .list(&self.receipts)
            .list(&self.events);
    }

    pub fn receipt(&self, tx_id: &Hash32) -> Option<&Receipt> {
        self.receipts.iter().find(|r| &r.tx_id == tx_id)
    }
}

impl Encode for TxFailure {
    fn encode(&self, enc: &mut Encoder) {
        enc.str(&self.code).option(&self.guard).str(&self.message);
    }
}

impl Decode for TxFailure {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        Ok(TxFailure {
            code: dec.string()?,
            guard: dec.option()?,
            message: dec.string()?,
        })
    }
}

impl Encode for Receipt {
    fn encode(&self, enc: &mut Encoder) {
        enc.value(&self.tx_id)
            .option(&self.failure)
            .list(&self.oracle_requests);
    }
}

impl Decode for Receipt {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        Ok(Receipt {
            tx_id: dec.value()?,
            failure: dec.option()?,
            oracle_requests: dec.list()?,
        })
    }
}

impl Encode for Block {
    fn encode(&self, enc: &mut Encoder) {
        self.encode_header_and_body(enc);
        enc.value(&self.block_hash).value(&self.signature);
    }
}

impl Decode for Block {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        Ok(Block {
            height: dec.u64()?,
            parent_hash: dec.value()?,
            timestamp_ms: dec.u64()?,
            validator: dec.value()?,
            validator_key: dec.value()?,
            state_root: dec.value()?,
            transactions: dec.list()?,
            receipts: dec.list()?,
            events: dec.list()?,
            block_hash: dec.value()?,
            signature: dec.value()?,
        })
    }
}
