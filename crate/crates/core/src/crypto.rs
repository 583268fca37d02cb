//! Hashes, account addresses and Ed25519 signing keys.

use std::fmt;
use std::str::FromStr;

use ed25519_dalek::{Signer, Verifier};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{CodecResult, Decode, Decoder, Encode, Encoder};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("invalid hex: {0}")]
    Hex(String),
    #[error("expected {expected} bytes, got {got}")]
    Length { expected: usize, got: usize },
    #[error("invalid public key")]
    PublicKey,
    #[error("signature does not verify")]
    BadSignature,
}

fn parse_hex<const N: usize>(s: &str) -> Result<[u8; N], CryptoError> {
    let s = s.strip_prefix("0x").unwrap_or(s);
    let raw = hex::decode(s).map_err(|e| CryptoError::Hex(e.to_string()))?;
    raw.as_slice().try_into().map_err(|_| CryptoError::Length {
        expected: N,
        got: raw.len(),
    })
}

macro_rules! hex_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

/// SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Hash32(pub [u8; 32]);

impl Hash32 {
    pub const ZERO: Hash32 = Hash32([0; 32]);

    pub fn digest(data: &[u8]) -> Self {
        Hash32(Sha256::digest(data).into())
    }

    /// Hash of several byte strings, each length-prefixed so that the
    /// boundaries are unambiguous.
    pub fn digest_parts(parts: &[&[u8]]) -> Self {
        let mut h = Sha256::new();
        for p in parts {
            h.update((p.len() as u64).to_be_bytes());
            h.update(p);
        }
        Hash32(h.finalize().into())
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Display for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash32({})", self)
    }
}

impl FromStr for Hash32 {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_hex(s).map(Hash32)
    }
}

hex_serde!(Hash32);

impl Encode for Hash32 {
    fn encode(&self, enc: &mut Encoder) {
        enc.fixed(&self.0);
    }
}

impl Decode for Hash32 {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        dec.array().map(Hash32)
    }
}

/// 20-byte account identifier: the last 20 bytes of SHA-256 over the
/// account's public key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub fn from_public_key(key: &PublicKey) -> Self {
        Self::truncate(&Hash32::digest(&key.0))
    }

    /// Address for a non-key identity (contracts), derived from a label.
    pub fn derived(label: &[u8]) -> Self {
        Self::truncate(&Hash32::digest(label))
    }

    fn truncate(h: &Hash32) -> Self {
        let mut out = [0u8; 20];
        out.copy_from_slice(&h.0[12..]);
        Address(out)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({})", self)
    }
}

impl FromStr for Address {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_hex(s).map(Address)
    }
}

hex_serde!(Address);

impl Encode for Address {
    fn encode(&self, enc: &mut Encoder) {
        enc.fixed(&self.0);
    }
}

impl Decode for Address {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        dec.array().map(Address)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PublicKey(pub [u8; 32]);

impl PublicKey {
    pub fn address(&self) -> Address {
        Address::from_public_key(self)
    }

    pub fn verify(&self, message: &[u8], sig: &Signature) -> Result<(), CryptoError> {
        let key =
            ed25519_dalek::VerifyingKey::from_bytes(&self.0).map_err(|_| CryptoError::PublicKey)?;
        let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
        key.verify(message, &sig).map_err(|_| CryptoError::BadSignature)
    }
}

impl fmt::Display for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self)
    }
}

impl FromStr for PublicKey {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_hex(s).map(PublicKey)
    }
}

hex_serde!(PublicKey);

impl Encode for PublicKey {
    fn encode(&self, enc: &mut Encoder) {
        enc.fixed(&self.0);
    }
}

impl Decode for PublicKey {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        dec.array().map(PublicKey)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; 64]);

impl Signature {
    pub const ZERO: Signature = Signature([0; 64]);
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature(0x{}..)", hex::encode(&self.0[..8]))
    }
}

impl FromStr for Signature {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_hex(s).map(Signature)
    }
}

hex_serde!(Signature);

impl Encode for Signature {
    fn encode(&self, enc: &mut Encoder) {
        enc.fixed(&self.0);
    }
}

impl Decode for Signature {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        dec.array().map(Signature)
    }
}

/// Ed25519 signing key with its derived address.
#[derive(Clone)]
pub struct KeyPair {
    signing: ed25519_dalek::SigningKey,
}

impl KeyPair {
    pub fn generate<R: rand::RngCore + rand::CryptoRng>(rng: &mut R) -> Self {
        Self {
            signing: ed25519_dalek::SigningKey::generate(rng),
        }
    }

    /// Deterministic key from a 32-byte seed. Used for test fixtures and
    /// reproducible demo accounts.
    pub fn from_seed(seed: [u8; 32]) -> Self {
        Self {
            signing: ed25519_dalek::SigningKey::from_bytes(&seed),
        }
    }

    pub fn from_label(label: &str) -> Self {
        Self::from_seed(Hash32::digest(label.as_bytes()).0)
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.signing.verifying_key().to_bytes())
    }

    pub fn address(&self) -> Address {
        self.public_key().address()
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(self.signing.sign(message).to_bytes())
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("address", &self.address())
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn address_is_deterministic_and_canonical() {
        let k = KeyPair::from_label("manufacturer");
        let a = k.address();
        assert_eq!(a, Address::from_public_key(&k.public_key()));
        let text = a.to_string();
        assert_eq!(text.len(), 42);
        assert!(text.starts_with("0x"));
        assert!(text[2..].chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
        assert_eq!(text.parse::<Address>().unwrap(), a);
    }

    #[test]
    fn address_is_sha256_tail() {
        let k = KeyPair::from_label("owner");
        let h = Sha256::digest(k.public_key().0);
        assert_eq!(&k.address().0[..], &h[12..]);
    }

    #[test]
    fn sign_and_verify() {
        let k = KeyPair::from_label("x");
        let sig = k.sign(b"payload");
        assert!(k.public_key().verify(b"payload", &sig).is_ok());
        assert_eq!(
            k.public_key().verify(b"payload!", &sig),
            Err(CryptoError::BadSignature)
        );
        assert!(k.public_key().verify(b"payload", &Signature::ZERO).is_err());
    }

    #[test]
    fn mixed_case_hex_parses() {
        let a: Address = "0x3eDe97Ea0DFF3EcD7320b1822E33f4a2764E8ed4".parse().unwrap();
        assert_eq!(a.to_string(), "0x3ede97ea0dff3ecd7320b1822e33f4a2764e8ed4");
    }
}
