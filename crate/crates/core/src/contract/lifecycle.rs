//! The thirteen lifecycle operations and their guard chains.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::access::{CallerBinding, GuardKind, Role};
use crate::codec::{CodecError, CodecResult, Decode, Decoder, Encode, Encoder};

use super::ShipmentState;

/// How a successful step changes custody.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Custody {
    /// Ownership stays where it is.
    Keep,
    /// Caller becomes owner and is recorded in the given party slot.
    TakeAs(Role),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LifecycleStep {
    ProduceItemByManufacturer = 0,
    SellItemByManufacturer = 1,
    PurchaseItemByDistributor = 2,
    ShippedItemByManufacturer = 3,
    ReceivedItemByDistributor = 4,
    ProcessedItemByDistributor = 5,
    PackageItemByDistributor = 6,
    SellItemByDistributor = 7,
    PurchaseItemByRetailer = 8,
    ShippedItemByDistributor = 9,
    ReceivedItemByRetailer = 10,
    SellItemByRetailer = 11,
    PurchaseItemByConsumer = 12,
}

impl LifecycleStep {
    pub const ALL: [LifecycleStep; 13] = [
        LifecycleStep::ProduceItemByManufacturer,
        LifecycleStep::SellItemByManufacturer,
        LifecycleStep::PurchaseItemByDistributor,
        LifecycleStep::ShippedItemByManufacturer,
        LifecycleStep::ReceivedItemByDistributor,
        LifecycleStep::ProcessedItemByDistributor,
        LifecycleStep::PackageItemByDistributor,
        LifecycleStep::SellItemByDistributor,
        LifecycleStep::PurchaseItemByRetailer,
        LifecycleStep::ShippedItemByDistributor,
        LifecycleStep::ReceivedItemByRetailer,
        LifecycleStep::SellItemByRetailer,
        LifecycleStep::PurchaseItemByConsumer,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Contract function name.
    pub fn function_name(self) -> &'static str {
        match self {
            LifecycleStep::ProduceItemByManufacturer => "produceItemByManufacturer",
            LifecycleStep::SellItemByManufacturer => "sellItemByManufacturer",
            LifecycleStep::PurchaseItemByDistributor => "purchaseItemByDistributor",
            LifecycleStep::ShippedItemByManufacturer => "shippedItemByManufacturer",
            LifecycleStep::ReceivedItemByDistributor => "receivedItemByDistributor",
            LifecycleStep::ProcessedItemByDistributor => "processedItemByDistributor",
            LifecycleStep::PackageItemByDistributor => "packageItemByDistributor",
            LifecycleStep::SellItemByDistributor => "sellItemByDistributor",
            LifecycleStep::PurchaseItemByRetailer => "purchaseItemByRetailer",
            LifecycleStep::ShippedItemByDistributor => "shippedItemByDistributor",
            LifecycleStep::ReceivedItemByRetailer => "receivedItemByRetailer",
            LifecycleStep::SellItemByRetailer => "sellItemByRetailer",
            LifecycleStep::PurchaseItemByConsumer => "purchaseItemByConsumer",
        }
    }

    pub fn from_function_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.function_name() == name)
    }

    /// State the item is in after this step succeeds. Also the emitted event.
    pub fn resulting_state(self) -> ShipmentState {
        ShipmentState::ALL[self.index()]
    }

    pub fn event_name(self) -> &'static str {
        self.resulting_state().name()
    }

    pub fn required_role(self) -> Role {
        use LifecycleStep::*;
        match self {
            ProduceItemByManufacturer | SellItemByManufacturer | ShippedItemByManufacturer => {
                Role::Manufacturer
            }
            PurchaseItemByDistributor
            | ReceivedItemByDistributor
            | ProcessedItemByDistributor
            | PackageItemByDistributor
            | SellItemByDistributor
            | ShippedItemByDistributor => Role::Distributor,
            PurchaseItemByRetailer | ReceivedItemByRetailer | SellItemByRetailer => Role::Retailer,
            PurchaseItemByConsumer => Role::Consumer,
        }
    }

    /// State the item must be in, `None` for creation.
    ///
    /// Every step requires the immediately preceding state. For the consumer
    /// purchase this adds a `forSaleByRetailer` check on top of the role guard.
    pub fn required_state(self) -> Option<ShipmentState> {
        match self.index() {
            0 => None,
            i => Some(ShipmentState::ALL[i - 1]),
        }
    }

    pub fn caller_binding(self) -> Option<CallerBinding> {
        use LifecycleStep::*;
        match self {
            ProduceItemByManufacturer | PurchaseItemByDistributor | PurchaseItemByRetailer
            | PurchaseItemByConsumer => None,
            ShippedItemByManufacturer => Some(CallerBinding::OriginManufacturer),
            ShippedItemByDistributor => Some(CallerBinding::Distributor),
            SellItemByManufacturer
            | ReceivedItemByDistributor
            | ProcessedItemByDistributor
            | PackageItemByDistributor
            | SellItemByDistributor
            | ReceivedItemByRetailer
            | SellItemByRetailer => Some(CallerBinding::Owner),
        }
    }

    pub fn custody(self) -> Custody {
        match self {
            LifecycleStep::PurchaseItemByDistributor => Custody::TakeAs(Role::Distributor),
            LifecycleStep::PurchaseItemByRetailer => Custody::TakeAs(Role::Retailer),
            LifecycleStep::PurchaseItemByConsumer => Custody::TakeAs(Role::Consumer),
            _ => Custody::Keep,
        }
    }

    /// Guards in evaluation order: role, state, caller identity.
    pub fn guards(self) -> Vec<GuardKind> {
        let mut g = vec![GuardKind::OnlyRole(self.required_role())];
        if let Some(s) = self.required_state() {
            g.push(GuardKind::InState(s));
        }
        if let Some(b) = self.caller_binding() {
            g.push(GuardKind::VerifyCaller(b));
        }
        g
    }
}

impl fmt::Display for LifecycleStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.function_name())
    }
}

impl Encode for LifecycleStep {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(*self as u8);
    }
}

impl Decode for LifecycleStep {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        let tag = dec.u8()?;
        Self::ALL
            .get(tag as usize)
            .copied()
            .ok_or(CodecError::InvalidTag {
                what: "lifecycle step",
                tag,
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn each_step_advances_exactly_one_state() {
        for step in LifecycleStep::ALL.into_iter().skip(1) {
            let from = step.required_state().unwrap();
            assert_eq!(from.next(), Some(step.resulting_state()));
        }
        assert_eq!(
            LifecycleStep::ProduceItemByManufacturer.resulting_state().value(),
            0
        );
    }

    #[test]
    fn guard_names_follow_modifier_catalog() {
        let names: Vec<_> = LifecycleStep::ShippedItemByDistributor
            .guards()
            .iter()
            .map(|g| g.to_string())
            .collect();
        assert_eq!(
            names,
            ["onlyDistributor", "purchasedByRetailer", "verifyCaller(items[_upc].distributorID)"]
        );
        let names: Vec<_> = LifecycleStep::PurchaseItemByConsumer
            .guards()
            .iter()
            .map(|g| g.name())
            .collect();
        assert_eq!(names, ["onlyConsumer", "forSaleByRetailer"]);
    }

    #[test]
    fn function_names_round_trip() {
        for s in LifecycleStep::ALL {
            assert_eq!(LifecycleStep::from_function_name(s.function_name()), Some(s));
        }
        assert_eq!(LifecycleStep::from_function_name("stealItem"), None);
    }
}
