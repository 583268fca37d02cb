//! Role registry and guard predicates.
//!
//! Four supply-chain roles plus a contract owner. Each role set is
//! independent, so one address may hold several roles. Guards are pure
//! predicates over the registry and an optional item; they never mutate.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{CodecError, CodecResult, Decode, Decoder, Encode, Encoder};
use crate::contract::{ShipmentItem, ShipmentState};
use crate::crypto::Address;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Manufacturer,
    Distributor,
    Retailer,
    Consumer,
}

impl Role {
    pub const ALL: [Role; 4] = [
        Role::Manufacturer,
        Role::Distributor,
        Role::Retailer,
        Role::Consumer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Role::Manufacturer => "Manufacturer",
            Role::Distributor => "Distributor",
            Role::Retailer => "Retailer",
            Role::Consumer => "Consumer",
        }
    }

    pub fn guard(self) -> GuardKind {
        GuardKind::OnlyRole(self)
    }

    fn tag(self) -> u8 {
        self as u8
    }

    fn from_tag(tag: u8) -> CodecResult<Self> {
        Role::ALL
            .get(tag as usize)
            .copied()
            .ok_or(CodecError::InvalidTag { what: "role", tag })
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown role {s:?}"))
    }
}

impl Encode for Role {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(self.tag());
    }
}

impl Decode for Role {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        Role::from_tag(dec.u8()?)
    }
}

/// Which custody field of an item the `verifyCaller` guard compares against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CallerBinding {
    Owner,
    OriginManufacturer,
    Distributor,
}

impl CallerBinding {
    pub fn resolve(self, item: &ShipmentItem) -> Option<Address> {
        match self {
            CallerBinding::Owner => Some(item.owner_id),
            CallerBinding::OriginManufacturer => Some(item.origin_manufacturer_id),
            CallerBinding::Distributor => item.distributor_id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GuardKind {
    OnlyOwner,
    OnlyRole(Role),
    VerifyCaller(CallerBinding),
    InState(ShipmentState),
}

impl GuardKind {
    /// Modifier name as it appears in error bodies.
    pub fn name(&self) -> &'static str {
        match self {
            GuardKind::OnlyOwner => "onlyOwner",
            GuardKind::OnlyRole(Role::Manufacturer) => "onlyManufacturer",
            GuardKind::OnlyRole(Role::Distributor) => "onlyDistributor",
            GuardKind::OnlyRole(Role::Retailer) => "onlyRetailer",
            GuardKind::OnlyRole(Role::Consumer) => "onlyConsumer",
            GuardKind::VerifyCaller(_) => "verifyCaller",
            GuardKind::InState(s) => s.guard_name(),
        }
    }

    pub fn check(&self, roles: &RoleRegistry, caller: &Address, item: Option<&ShipmentItem>) -> bool {
        match self {
            GuardKind::OnlyOwner => roles.owner() == caller,
            GuardKind::OnlyRole(r) => roles.has_role(*r, caller),
            GuardKind::VerifyCaller(binding) => item
                .and_then(|i| binding.resolve(i))
                .is_some_and(|a| &a == caller),
            GuardKind::InState(s) => item.is_some_and(|i| i.state == *s),
        }
    }

    /// Like [`check`](Self::check) but returns the failure as an error.
    pub fn require(
        &self,
        roles: &RoleRegistry,
        caller: &Address,
        item: Option<&ShipmentItem>,
    ) -> Result<(), GuardFailed> {
        if self.check(roles, caller, item) {
            Ok(())
        } else {
            Err(GuardFailed(*self))
        }
    }
}

impl fmt::Display for GuardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GuardKind::VerifyCaller(b) => {
                let field = match b {
                    CallerBinding::Owner => "ownerID",
                    CallerBinding::OriginManufacturer => "originManufacturerID",
                    CallerBinding::Distributor => "distributorID",
                };
                write!(f, "verifyCaller(items[_upc].{field})")
            }
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("guard {0} failed")]
pub struct GuardFailed(pub GuardKind);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoleError {
    #[error(transparent)]
    Denied(#[from] GuardFailed),
    #[error("{account} already has role {role}")]
    AlreadyHasRole { role: Role, account: Address },
}

/// Per-role address sets plus the contract owner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleRegistry {
    owner: Address,
    manufacturers: BTreeSet<Address>,
    distributors: BTreeSet<Address>,
    retailers: BTreeSet<Address>,
    consumers: BTreeSet<Address>,
}

impl RoleRegistry {
    /// Registry at deployment: the owner holds every role so that each
    /// peer-admitted role set has a first member.
    pub fn with_owner(owner: Address) -> Self {
        let mut reg = Self {
            owner,
            manufacturers: BTreeSet::new(),
            distributors: BTreeSet::new(),
            retailers: BTreeSet::new(),
            consumers: BTreeSet::new(),
        };
        for r in Role::ALL {
            reg.set_mut(r).insert(owner);
        }
        reg
    }

    pub fn owner(&self) -> &Address {
        &self.owner
    }

    fn set(&self, role: Role) -> &BTreeSet<Address> {
        match role {
            Role::Manufacturer => &self.manufacturers,
            Role::Distributor => &self.distributors,
            Role::Retailer => &self.retailers,
            Role::Consumer => &self.consumers,
        }
    }

    fn set_mut(&mut self, role: Role) -> &mut BTreeSet<Address> {
        match role {
            Role::Manufacturer => &mut self.manufacturers,
            Role::Distributor => &mut self.distributors,
            Role::Retailer => &mut self.retailers,
            Role::Consumer => &mut self.consumers,
        }
    }

    pub fn members(&self, role: Role) -> impl Iterator<Item = &Address> {
        self.set(role).iter()
    }

    pub fn has_role(&self, role: Role, account: &Address) -> bool {
        self.set(role).contains(account)
    }

    pub fn roles_of(&self, account: &Address) -> Vec<Role> {
        Role::ALL
            .into_iter()
            .filter(|r| self.has_role(*r, account))
            .collect()
    }

    pub fn is_manufacturer(&self, account: &Address) -> bool {
        self.has_role(Role::Manufacturer, account)
    }

    pub fn is_distributor(&self, account: &Address) -> bool {
        self.has_role(Role::Distributor, account)
    }

    pub fn is_retailer(&self, account: &Address) -> bool {
        self.has_role(Role::Retailer, account)
    }

    pub fn is_consumer(&self, account: &Address) -> bool {
        self.has_role(Role::Consumer, account)
    }

    /// `addManufacturer` and friends: peer admission, guarded by the same role.
    pub fn add(&mut self, role: Role, caller: &Address, account: Address) -> Result<(), RoleError> {
        self.check_add(role, caller, &account)?;
        self.set_mut(role).insert(account);
        Ok(())
    }

    pub fn check_add(&self, role: Role, caller: &Address, account: &Address) -> Result<(), RoleError> {
        role.guard().require(self, caller, None)?;
        if self.has_role(role, account) {
            return Err(RoleError::AlreadyHasRole {
                role,
                account: *account,
            });
        }
        Ok(())
    }

    pub fn renounce(&mut self, role: Role, caller: &Address) -> Result<(), RoleError> {
        role.guard().require(self, caller, None)?;
        self.set_mut(role).remove(caller);
        Ok(())
    }

    /// Owner transfer. Only reachable through an explicit owner action.
    pub fn transfer_ownership(&mut self, caller: &Address, new_owner: Address) -> Result<(), RoleError> {
        GuardKind::OnlyOwner.require(self, caller, None)?;
        self.owner = new_owner;
        Ok(())
    }
}

impl Encode for RoleRegistry {
    fn encode(&self, enc: &mut Encoder) {
        enc.value(&self.owner);
        for r in Role::ALL {
            let set = self.set(r);
            enc.len(set.len());
            for a in set {
                enc.value(a);
            }
        }
    }
}

impl Decode for RoleRegistry {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        let owner = dec.value()?;
        let mut reg = RoleRegistry {
            owner,
            manufacturers: BTreeSet::new(),
            distributors: BTreeSet::new(),
            retailers: BTreeSet::new(),
            consumers: BTreeSet::new(),
        };
        for r in Role::ALL {
            let members: Vec<Address> = dec.list()?;
            // canonical form is strictly ascending
            if members.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CodecError::Invalid("role set not sorted".into()));
            }
            reg.set_mut(r).extend(members);
        }
        Ok(reg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::KeyPair;
    use proptest::prelude::*;

    fn addr(label: &str) -> Address {
        KeyPair::from_label(label).address()
    }

    #[test]
    fn owner_bootstraps_every_role() {
        let owner = addr("owner");
        let mut reg = RoleRegistry::with_owner(owner);
        let a = addr("a");
        reg.add(Role::Manufacturer, &owner, a).unwrap();
        assert!(reg.is_manufacturer(&a));
        assert!(!reg.is_distributor(&a));
    }

    #[test]
    fn consumer_cannot_add_manufacturer() {
        let owner = addr("owner");
        let mut reg = RoleRegistry::with_owner(owner);
        let c = addr("consumer");
        reg.add(Role::Consumer, &owner, c).unwrap();
        assert_eq!(
            reg.add(Role::Manufacturer, &c, addr("x")),
            Err(RoleError::Denied(GuardFailed(GuardKind::OnlyRole(Role::Manufacturer))))
        );
    }

    #[test]
    fn double_add_is_rejected() {
        let owner = addr("owner");
        let mut reg = RoleRegistry::with_owner(owner);
        let a = addr("a");
        reg.add(Role::Manufacturer, &owner, a).unwrap();
        assert!(matches!(
            reg.add(Role::Manufacturer, &owner, a),
            Err(RoleError::AlreadyHasRole { .. })
        ));
    }

    #[test]
    fn renounce_is_per_role() {
        let owner = addr("owner");
        let mut reg = RoleRegistry::with_owner(owner);
        let a = addr("a");
        reg.add(Role::Manufacturer, &owner, a).unwrap();
        reg.add(Role::Distributor, &owner, a).unwrap();
        reg.renounce(Role::Manufacturer, &a).unwrap();
        assert!(!reg.is_manufacturer(&a));
        assert!(reg.is_distributor(&a));
        assert!(matches!(
            reg.renounce(Role::Manufacturer, &a),
            Err(RoleError::Denied(_))
        ));
    }

    #[test]
    fn unknown_address_has_no_role() {
        let reg = RoleRegistry::with_owner(addr("owner"));
        assert!(!reg.is_manufacturer(&addr("nobody")));
        assert!(reg.roles_of(&addr("nobody")).is_empty());
    }

    #[test]
    fn only_owner_guard() {
        let owner = addr("owner");
        let reg = RoleRegistry::with_owner(owner);
        assert!(GuardKind::OnlyOwner.check(&reg, &owner, None));
        assert!(!GuardKind::OnlyOwner.check(&reg, &addr("other"), None));
    }

    #[test]
    fn ownership_transfer_requires_owner() {
        let owner = addr("owner");
        let mut reg = RoleRegistry::with_owner(owner);
        let next = addr("next");
        assert!(reg.transfer_ownership(&next, next).is_err());
        reg.transfer_ownership(&owner, next).unwrap();
        assert_eq!(reg.owner(), &next);
    }

    #[test]
    fn unsorted_role_set_is_not_canonical() {
        let owner = addr("owner");
        let mut reg = RoleRegistry::with_owner(owner);
        reg.add(Role::Retailer, &owner, addr("r1")).unwrap();
        let mut bytes = reg.to_canonical_bytes();
        // swap the two retailer entries in place
        let start = 20 + (4 + 20) * 2 + 4;
        let (a, b) = (start, start + 20);
        let first: Vec<u8> = bytes[a..b].to_vec();
        let second: Vec<u8> = bytes[b..b + 20].to_vec();
        bytes[a..b].copy_from_slice(&second);
        bytes[b..b + 20].copy_from_slice(&first);
        assert!(RoleRegistry::from_canonical_bytes(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn add_then_renounce_round_trips(role_idx in 0usize..4, seed in any::<[u8; 32]>()) {
            let role = Role::ALL[role_idx];
            let owner = addr("owner");
            let mut reg = RoleRegistry::with_owner(owner);
            let a = KeyPair::from_seed(seed).address();
            prop_assume!(a != owner);
            reg.add(role, &owner, a).unwrap();
            prop_assert!(reg.has_role(role, &a));
            reg.renounce(role, &a).unwrap();
            prop_assert!(!reg.has_role(role, &a));
            let decoded = RoleRegistry::from_canonical_bytes(&reg.to_canonical_bytes()).unwrap();
            prop_assert_eq!(decoded, reg);
        }
    }
}
