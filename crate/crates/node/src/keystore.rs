//! Named local accounts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use pharmachain_core::crypto::{Address, KeyPair};

#[derive(Debug, Error)]
pub enum KeystoreError {
    #[error("keystore io: {0}")]
    Io(#[from] std::io::Error),
    #[error("keystore file is malformed: {0}")]
    Malformed(String),
    #[error("account {0:?} already exists")]
    Exists(String),
    #[error("unknown account {0:?}")]
    UnknownAccount(String),
    #[error("invalid account name {0:?}")]
    BadName(String),
}

#[derive(Serialize, Deserialize)]
struct StoredAccount {
    name: String,
    address: Address,
    /// Hex Ed25519 seed.
    secret: String,
}

#[derive(Serialize, Deserialize)]
struct KeystoreFile {
    accounts: Vec<StoredAccount>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AccountInfo {
    pub name: String,
    pub address: Address,
}

#[derive(Debug, Clone, Default)]
pub struct Keystore {
    path: Option<PathBuf>,
    accounts: BTreeMap<String, KeyPair>,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.len() <= 64 && name.bytes().all(|b| b.is_ascii_alphanumeric() || b"-_.".contains(&b))
}

impl Keystore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads `path`, or starts empty if the file does not exist yet.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, KeystoreError> {
        let path = path.into();
        let mut ks = Keystore {
            path: Some(path.clone()),
            accounts: BTreeMap::new(),
        };
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(ks),
            Err(e) => return Err(e.into()),
        };
        let file: KeystoreFile = serde_json::from_str(&text).map_err(|e| KeystoreError::Malformed(e.to_string()))?;
        for a in file.accounts {
            let seed: [u8; 32] = hex::decode(&a.secret)
                .ok()
                .and_then(|b| b.try_into().ok())
                .ok_or_else(|| KeystoreError::Malformed(format!("bad secret for {}", a.name)))?;
            let key = KeyPair::from_seed(seed);
            if key.address() != a.address {
                return Err(KeystoreError::Malformed(format!("address mismatch for {}", a.name)));
            }
            if ks.accounts.insert(a.name.clone(), key).is_some() {
                return Err(KeystoreError::Malformed(format!("duplicate account {}", a.name)));
            }
        }
        Ok(ks)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn save(&self) -> Result<(), KeystoreError> {
        let Some(path) = &self.path else { return Ok(()) };
        let file = KeystoreFile {
            accounts: self
                .accounts
                .iter()
                .map(|(name, k)| StoredAccount {
                    name: name.clone(),
                    address: k.address(),
                    secret: hex::encode(k.secret_bytes()),
                })
                .collect(),
        };
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(&file).expect("keystore serializes"))?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn insert(&mut self, name: &str, key: KeyPair) -> Result<AccountInfo, KeystoreError> {
        if !valid_name(name) {
            return Err(KeystoreError::BadName(name.into()));
        }
        if self.accounts.contains_key(name) {
            return Err(KeystoreError::Exists(name.into()));
        }
        let info = AccountInfo {
            name: name.into(),
            address: key.address(),
        };
        self.accounts.insert(name.into(), key);
        Ok(info)
    }

    /// Generates a fresh random account and persists the keystore.
    pub fn create(&mut self, name: &str) -> Result<AccountInfo, KeystoreError> {
        let info = self.insert(name, KeyPair::generate(&mut rand::rngs::OsRng))?;
        if let Err(e) = self.save() {
            self.accounts.remove(name);
            return Err(e);
        }
        Ok(info)
    }

    pub fn get(&self, name: &str) -> Result<&KeyPair, KeystoreError> {
        self.accounts.get(name).ok_or_else(|| KeystoreError::UnknownAccount(name.into()))
    }

    /// Looks up by name, or by address if `name_or_address` parses as one.
    pub fn resolve(&self, name_or_address: &str) -> Result<&KeyPair, KeystoreError> {
        if let Ok(addr) = name_or_address.parse::<Address>() {
            if let Some(k) = self.accounts.values().find(|k| k.address() == addr) {
                return Ok(k);
            }
        }
        self.get(name_or_address)
    }

    pub fn list(&self) -> Vec<AccountInfo> {
        self.accounts
            .iter()
            .map(|(n, k)| AccountInfo {
                name: n.clone(),
                address: k.address(),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("keys.json");
        let mut ks = Keystore::open(&path).unwrap();
        let a = ks.create("alice").unwrap();
        assert!(matches!(ks.create("alice"), Err(KeystoreError::Exists(_))));
        assert!(matches!(ks.create("bad name"), Err(KeystoreError::BadName(_))));
        let again = Keystore::open(&path).unwrap();
        assert_eq!(again.get("alice").unwrap().address(), a.address);
        assert_eq!(again.resolve(&a.address.to_string()).unwrap().address(), a.address);

        let text = std::fs::read_to_string(&path).unwrap();
        let other = KeyPair::from_label("x").address().to_string();
        let tampered = text.replace(&a.address.to_string(), &other);
        std::fs::write(&path, tampered).unwrap();
        assert!(matches!(Keystore::open(&path), Err(KeystoreError::Malformed(_))));
    }
}
