use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::{CodecError, CodecResult, Decode, Decoder, Encode, Encoder};
use crate::crypto::{Address, Hash32};

/// The thirteen enumerated shipment states, in lifecycle order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ShipmentState {
    ProducedByManufacturer = 0,
    UpdateInventoryByManufacturer = 1,
    PurchasedByDistributor = 2,
    ShippedByManufacturer = 3,
    ReceivedByDistributor = 4,
    ProcessedByDistributor = 5,
    PackagedByDistributor = 6,
    ForSaleByDistributor = 7,
    PurchasedByRetailer = 8,
    ShippedByDistributor = 9,
    ReceivedByRetailer = 10,
    ForSaleByRetailer = 11,
    PurchasedByConsumer = 12,
}

impl ShipmentState {
    pub const ALL: [ShipmentState; 13] = [
        ShipmentState::ProducedByManufacturer,
        ShipmentState::UpdateInventoryByManufacturer,
        ShipmentState::PurchasedByDistributor,
        ShipmentState::ShippedByManufacturer,
        ShipmentState::ReceivedByDistributor,
        ShipmentState::ProcessedByDistributor,
        ShipmentState::PackagedByDistributor,
        ShipmentState::ForSaleByDistributor,
        ShipmentState::PurchasedByRetailer,
        ShipmentState::ShippedByDistributor,
        ShipmentState::ReceivedByRetailer,
        ShipmentState::ForSaleByRetailer,
        ShipmentState::PurchasedByConsumer,
    ];

    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn from_value(v: u8) -> Option<Self> {
        Self::ALL.get(v as usize).copied()
    }

    pub fn next(self) -> Option<Self> {
        Self::from_value(self.value() + 1)
    }

    pub fn name(self) -> &'static str {
        match self {
            ShipmentState::ProducedByManufacturer => "ProducedByManufacturer",
            ShipmentState::UpdateInventoryByManufacturer => "UpdateInventoryByManufacturer",
            ShipmentState::PurchasedByDistributor => "PurchasedByDistributor",
            ShipmentState::ShippedByManufacturer => "ShippedByManufacturer",
            ShipmentState::ReceivedByDistributor => "ReceivedByDistributor",
            ShipmentState::ProcessedByDistributor => "ProcessedByDistributor",
            ShipmentState::PackagedByDistributor => "PackagedByDistributor",
            ShipmentState::ForSaleByDistributor => "ForSaleByDistributor",
            ShipmentState::PurchasedByRetailer => "PurchasedByRetailer",
            ShipmentState::ShippedByDistributor => "ShippedByDistributor",
            ShipmentState::ReceivedByRetailer => "ReceivedByRetailer",
            ShipmentState::ForSaleByRetailer => "ForSaleByRetailer",
            ShipmentState::PurchasedByConsumer => "PurchasedByConsumer",
        }
    }

    /// Name of the modifier that tests for this state.
    pub fn guard_name(self) -> &'static str {
        match self {
            ShipmentState::ProducedByManufacturer => "producedByManufacturer",
            ShipmentState::UpdateInventoryByManufacturer => "updateInventoryByManufacturer",
            ShipmentState::PurchasedByDistributor => "purchasedByDistributor",
            ShipmentState::ShippedByManufacturer => "shippedByManufacturer",
            ShipmentState::ReceivedByDistributor => "receivedByDistributor",
            ShipmentState::ProcessedByDistributor => "processByDistributor",
            ShipmentState::PackagedByDistributor => "packagedByDistributor",
            ShipmentState::ForSaleByDistributor => "forSaleByDistributor",
            ShipmentState::PurchasedByRetailer => "purchasedByRetailer",
            ShipmentState::ShippedByDistributor => "shippedByDistributor",
            ShipmentState::ReceivedByRetailer => "receivedByRetailer",
            ShipmentState::ForSaleByRetailer => "forSaleByRetailer",
            ShipmentState::PurchasedByConsumer => "purchasedByConsumer",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

impl fmt::Display for ShipmentState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Encode for ShipmentState {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(self.value());
    }
}

impl Decode for ShipmentState {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        let tag = dec.u8()?;
        Self::from_value(tag).ok_or(CodecError::InvalidTag {
            what: "shipment state",
            tag,
        })
    }
}

/// One lifecycle event emitted into a block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub name: String,
    pub upc: u64,
    pub block_height: u64,
    pub tx_id: Hash32,
}

impl EventRecord {
    pub fn state(&self) -> Option<ShipmentState> {
        ShipmentState::from_name(&self.name)
    }
}

impl Encode for EventRecord {
    fn encode(&self, enc: &mut Encoder) {
        enc.str(&self.name)
            .u64(self.upc)
            .u64(self.block_height)
            .value(&self.tx_id);
    }
}

impl Decode for EventRecord {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        let name = dec.string()?;
        if ShipmentState::from_name(&name).is_none() {
            return Err(CodecError::Invalid(format!("unknown event name {name:?}")));
        }
        Ok(EventRecord {
            name,
            upc: dec.u64()?,
            block_height: dec.u64()?,
            tx_id: dec.value()?,
        })
    }
}

/// An event in an item's history together with the custody hand-off it caused.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub event: EventRecord,
    pub prior_owner: Option<Address>,
    pub new_owner: Address,
}

impl Encode for HistoryEntry {
    fn encode(&self, enc: &mut Encoder) {
        enc.value(&self.event)
            .option(&self.prior_owner)
            .value(&self.new_owner);
    }
}

impl Decode for HistoryEntry {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        Ok(HistoryEntry {
            event: dec.value()?,
            prior_owner: dec.option()?,
            new_owner: dec.value()?,
        })
    }
}

/// One tracked drug unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShipmentItem {
    pub upc: u64,
    pub sku: String,
    pub drug_name: String,
    pub state: ShipmentState,
    pub owner_id: Address,
    pub origin_manufacturer_id: Address,
    pub distributor_id: Option<Address>,
    pub retailer_id: Option<Address>,
    pub consumer_id: Option<Address>,
    pub history: Vec<HistoryEntry>,
}

impl ShipmentItem {
    /// Address that must hold custody in the item's current state.
    pub fn expected_owner(&self) -> Option<Address> {
        match self.state.value() {
            0..=1 => Some(self.origin_manufacturer_id),
            2..=7 => self.distributor_id,
            8..=11 => self.retailer_id,
            _ => self.consumer_id,
        }
    }

    pub fn custody_consistent(&self) -> bool {
        self.expected_owner() == Some(self.owner_id)
    }
}

impl Encode for ShipmentItem {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.upc)
            .str(&self.sku)
            .str(&self.drug_name)
            .value(&self.state)
            .value(&self.owner_id)
            .value(&self.origin_manufacturer_id)
            .option(&self.distributor_id)
            .option(&self.retailer_id)
            .option(&self.consumer_id)
            .list(&self.history);
    }
}

impl Decode for ShipmentItem {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        Ok(ShipmentItem {
            upc: dec.u64()?,
            sku: dec.string()?,
            drug_name: dec.string()?,
            state: dec.value()?,
            owner_id: dec.value()?,
            origin_manufacturer_id: dec.value()?,
            distributor_id: dec.option()?,
            retailer_id: dec.option()?,
            consumer_id: dec.option()?,
            history: dec.list()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_matches_lifecycle_table() {
        let expected = [
            ("ProducedByManufacturer", 0),
            ("UpdateInventoryByManufacturer", 1),
            ("PurchasedByDistributor", 2),
            ("ShippedByManufacturer", 3),
            ("ReceivedByDistributor", 4),
            ("ProcessedByDistributor", 5),
            ("PackagedByDistributor", 6),
            ("ForSaleByDistributor", 7),
            ("PurchasedByRetailer", 8),
            ("ShippedByDistributor", 9),
            ("ReceivedByRetailer", 10),
            ("ForSaleByRetailer", 11),
            ("PurchasedByConsumer", 12),
        ];
        for (name, value) in expected {
            let s = ShipmentState::from_name(name).unwrap();
            assert_eq!(s.value(), value);
            assert_eq!(ShipmentState::from_value(value), Some(s));
        }
        assert_eq!(ShipmentState::from_value(13), None);
        assert_eq!(ShipmentState::PurchasedByConsumer.next(), None);
    }

    #[test]
    fn out_of_range_state_tag_rejected() {
        assert!(ShipmentState::from_canonical_bytes(&[13]).is_err());
    }
}
