use serde::Serialize;
use thiserror::Error;

use crate::codec::{CodecResult, Decode, Decoder, Encode, Encoder};
use crate::contract::{Operation, OperationError};
use crate::crypto::{Address, Hash32, KeyPair, PublicKey, Signature};

const TX_DOMAIN: &[u8] = b"pharmachain/tx/v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TxError {
    #[error("invalid signature")]
    InvalidSignature,
    #[error(transparent)]
    Operation(#[from] OperationError),
}

/// Signed request to run one contract operation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Transaction {
    pub nonce: u64,
    pub sender: Address,
    pub public_key: PublicKey,
    pub operation: String,
    #[serde(with = "hex_bytes")]
    pub args: Vec<u8>,
    pub signature: Signature,
}

mod hex_bytes {
    use serde::Serializer;

    pub fn serialize<S: Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("0x{}", hex::encode(b)))
    }
}

impl Transaction {
    pub fn sign(key: &KeyPair, nonce: u64, op: &Operation) -> Self {
        let mut tx = Transaction {
            nonce,
            sender: key.address(),
            public_key: key.public_key(),
            operation: op.name(),
            args: op.encode_args(),
            signature: Signature::ZERO,
        };
        tx.signature = key.sign(&tx.signing_bytes());
        tx
    }

    /// Canonical serialization of every field except the signature.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.bytes(TX_DOMAIN)
            .u64(self.nonce)
            .value(&self.sender)
            .value(&self.public_key)
            .str(&self.operation)
            .bytes(&self.args);
        enc.into_bytes()
    }

    pub fn id(&self) -> Hash32 {
        Hash32::digest(&self.signing_bytes())
    }

    pub fn verify_signature(&self) -> Result<(), TxError> {
        if self.public_key.address() != self.sender {
            return Err(TxError::InvalidSignature);
        }
        self.public_key
            .verify(&self.signing_bytes(), &self.signature)
            .map_err(|_| TxError::InvalidSignature)
    }

    pub fn decode_operation(&self) -> Result<Operation, OperationError> {
        Operation::decode(&self.operation, &self.args)
    }
}

impl Encode for Transaction {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.nonce)
            .value(&self.sender)
            .value(&self.public_key)
            .str(&self.operation)
            .bytes(&self.args)
            .value(&self.signature);
    }
}

impl Decode for Transaction {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        Ok(Transaction {
            nonce: dec.u64()?,
            sender: dec.value()?,
            public_key: dec.value()?,
            operation: dec.string()?,
            args: dec.bytes()?,
            signature: dec.value()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::LifecycleStep;

    #[test]
    fn signed_tx_verifies() {
        let k = KeyPair::from_label("m");
        let tx = Transaction::sign(&k, 1, &Operation::produce("S", "D", 7));
        assert!(tx.verify_signature().is_ok());
        assert_eq!(tx.decode_operation().unwrap(), Operation::produce("S", "D", 7));
    }

    #[test]
    fn zeroed_signature_rejected() {
        let k = KeyPair::from_label("m");
        let mut tx = Transaction::sign(&k, 1, &Operation::produce("S", "D", 7));
        tx.signature = Signature::ZERO;
        assert_eq!(tx.verify_signature(), Err(TxError::InvalidSignature));
    }

    #[test]
    fn sender_must_match_key() {
        let k = KeyPair::from_label("m");
        let mut tx = Transaction::sign(&k, 1, &Operation::produce("S", "D", 7));
        tx.sender = KeyPair::from_label("other").address();
        assert_eq!(tx.verify_signature(), Err(TxError::InvalidSignature));
    }

    #[test]
    fn id_covers_nonce_and_arguments() {
        let k = KeyPair::from_label("m");
        let op = Operation::advance(LifecycleStep::SellItemByManufacturer, 7);
        let a = Transaction::sign(&k, 1, &op);
        let b = Transaction::sign(&k, 2, &op);
        let c = Transaction::sign(&k, 1, &Operation::advance(LifecycleStep::SellItemByManufacturer, 8));
        assert_ne!(a.id(), b.id());
        assert_ne!(a.id(), c.id());
        assert_eq!(a.id(), Transaction::sign(&k, 1, &op).id());
    }

    #[test]
    fn canonical_round_trip() {
        let k = KeyPair::from_label("m");
        let tx = Transaction::sign(&k, 9, &Operation::produce("S", "D", 7));
        assert_eq!(Transaction::from_canonical_bytes(&tx.to_canonical_bytes()).unwrap(), tx);
    }
}
