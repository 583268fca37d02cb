use serde::{Deserialize, Serialize};

use crate::codec::{CodecError, CodecResult, Decode, Decoder, Encode, Encoder};
use crate::contract::LifecycleStep;
use crate::reference;

use super::{OracleField, LINK};

/// LINK charged for one lifecycle action, split across the oracle
/// requests that action issues.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionFee {
    pub step: LifecycleStep,
    pub total: u128,
    pub fields: Vec<OracleField>,
}

impl ActionFee {
    /// Per-request fees. The integer remainder goes to the first request so
    /// the parts always sum to `total`.
    pub fn split(&self) -> Vec<(OracleField, u128)> {
        if self.fields.is_empty() {
            return Vec::new();
        }
        let n = self.fields.len() as u128;
        let share = self.total / n;
        let rem = self.total % n;
        self.fields
            .iter()
            .enumerate()
            .map(|(i, f)| (*f, if i == 0 { share + rem } else { share }))
            .collect()
    }
}

/// Oracle fee configuration.
///
/// The reference measurements price whole lifecycle actions only; the
/// per-request decomposition here is a modelling choice. By default every
/// action requests all four telemetry channels for the item's SKU.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeeSchedule {
    /// Fee for a direct `request*` call, indexed like [`OracleField::ALL`].
    pub request_fee: [u128; 4],
    /// Whether lifecycle actions issue their oracle requests automatically.
    pub auto_request: bool,
    pub actions: Vec<ActionFee>,
}

impl Default for FeeSchedule {
    fn default() -> Self {
        Self {
            request_fee: [LINK / 10; 4],
            auto_request: true,
            actions: LifecycleStep::ALL
                .into_iter()
                .map(|step| ActionFee {
                    step,
                    total: reference::link_fee_for(step),
                    fields: OracleField::ALL.to_vec(),
                })
                .collect(),
        }
    }
}

impl FeeSchedule {
    /// Schedule with no lifecycle-triggered requests.
    pub fn manual() -> Self {
        Self {
            auto_request: false,
            ..Self::default()
        }
    }

    pub fn request_fee(&self, field: OracleField) -> u128 {
        self.request_fee[field.index()]
    }

    pub fn action(&self, step: LifecycleStep) -> Option<&ActionFee> {
        self.actions.iter().find(|a| a.step == step)
    }

    /// Requests (with fees) a lifecycle action issues, empty when automatic
    /// requests are disabled.
    pub fn requests_for(&self, step: LifecycleStep) -> Vec<(OracleField, u128)> {
        if !self.auto_request {
            return Vec::new();
        }
        self.action(step).map(ActionFee::split).unwrap_or_default()
    }

    pub fn action_total(&self, step: LifecycleStep) -> u128 {
        self.requests_for(step).iter().map(|(_, f)| f).sum()
    }
}

impl Encode for ActionFee {
    fn encode(&self, enc: &mut Encoder) {
        enc.value(&self.step).u128(self.total).list(&self.fields);
    }
}

impl Decode for ActionFee {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        Ok(ActionFee {
            step: dec.value()?,
            total: dec.u128()?,
            fields: dec.list()?,
        })
    }
}

impl Encode for FeeSchedule {
    fn encode(&self, enc: &mut Encoder) {
        for f in self.request_fee {
            enc.u128(f);
        }
        enc.bool(self.auto_request).list(&self.actions);
    }
}

impl Decode for FeeSchedule {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        let mut request_fee = [0u128; 4];
        for f in &mut request_fee {
            *f = dec.u128()?;
        }
        let auto_request = dec.bool()?;
        let actions: Vec<ActionFee> = dec.list()?;
        for (i, a) in actions.iter().enumerate() {
            if actions[..i].iter().any(|b| b.step == a.step) {
                return Err(CodecError::Invalid(format!("duplicate fee entry for {}", a.step)));
            }
        }
        Ok(FeeSchedule {
            request_fee,
            auto_request,
            actions,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_split_is_exact() {
        let fees = FeeSchedule::default();
        assert_eq!(
            fees.requests_for(LifecycleStep::ProduceItemByManufacturer),
            OracleField::ALL
                .iter()
                .map(|f| (*f, LINK / 8))
                .collect::<Vec<_>>()
        );
        assert_eq!(
            fees.action_total(LifecycleStep::SellItemByManufacturer),
            LINK / 2
        );
        for step in LifecycleStep::ALL.into_iter().skip(2) {
            assert_eq!(fees.action_total(step), 4 * LINK / 10);
        }
    }

    #[test]
    fn remainder_goes_to_first_request() {
        let a = ActionFee {
            step: LifecycleStep::SellItemByRetailer,
            total: 10,
            fields: vec![OracleField::Temperature, OracleField::Humidity, OracleField::Latitude],
        };
        let parts = a.split();
        assert_eq!(parts.iter().map(|p| p.1).collect::<Vec<_>>(), [4, 3, 3]);
    }

    #[test]
    fn manual_schedule_issues_nothing() {
        assert!(FeeSchedule::manual()
            .requests_for(LifecycleStep::ProduceItemByManufacturer)
            .is_empty());
    }
}
