//! Contract operations: typed form, canonical argument encoding and the
//! JSON mirror used by the HTTP API.

use serde_json::{json, Value};
use thiserror::Error;

use crate::access::Role;
use crate::codec::{CodecError, Decoder, Encoder};
use crate::crypto::{Address, Hash32};
use crate::oracle::{JobOutcome, NodeResponse, OracleField};

use super::{Deployment, LifecycleStep};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OperationError {
    #[error("unknown operation {0:?}")]
    Unknown(String),
    #[error("bad arguments for {op}: {reason}")]
    BadArguments { op: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operation {
    /// Contract creation; only valid as the first transaction of the chain.
    Deploy(Deployment),
    AddRole { role: Role, account: Address },
    RenounceRole { role: Role },
    TransferOwnership { new_owner: Address },
    ProduceItem { sku: String, drug_name: String, upc: u64 },
    /// Any lifecycle step other than production.
    Advance { step: LifecycleStep, upc: u64 },
    RequestData { field: OracleField, sku: String },
    FulfillOracleRequest { request_id: Hash32, outcome: JobOutcome },
    AggregateFulfill { request_id: Hash32, responses: Vec<NodeResponse> },
    ExpireOracleRequest { request_id: Hash32 },
    TransferLink { to: Address, amount: u128 },
}

fn role_op(prefix: &str, role: Role) -> String {
    format!("{prefix}{}", role.name())
}

impl Operation {
    pub fn produce(sku: &str, drug_name: &str, upc: u64) -> Self {
        Operation::ProduceItem {
            sku: sku.into(),
            drug_name: drug_name.into(),
            upc,
        }
    }

    /// Lifecycle step with only a UPC argument. Production needs
    /// [`Operation::produce`].
    pub fn advance(step: LifecycleStep, upc: u64) -> Self {
        assert_ne!(step, LifecycleStep::ProduceItemByManufacturer);
        Operation::Advance { step, upc }
    }

    pub fn name(&self) -> String {
        match self {
            Operation::Deploy(_) => "deploy".into(),
            Operation::AddRole { role, .. } => role_op("add", *role),
            Operation::RenounceRole { role } => role_op("renounce", *role),
            Operation::TransferOwnership { .. } => "transferOwnership".into(),
            Operation::ProduceItem { .. } => {
                LifecycleStep::ProduceItemByManufacturer.function_name().into()
            }
            Operation::Advance { step, .. } => step.function_name().into(),
            Operation::RequestData { field, .. } => field.request_function().into(),
            Operation::FulfillOracleRequest { .. } => "fulfillOracleRequest".into(),
            Operation::AggregateFulfill { .. } => "aggregateFulfill".into(),
            Operation::ExpireOracleRequest { .. } => "expireOracleRequest".into(),
            Operation::TransferLink { .. } => "transferLink".into(),
        }
    }

    pub fn lifecycle_step(&self) -> Option<LifecycleStep> {
        match self {
            Operation::ProduceItem { .. } => Some(LifecycleStep::ProduceItemByManufacturer),
            Operation::Advance { step, .. } => Some(*step),
            _ => None,
        }
    }

    pub fn encode_args(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        match self {
            Operation::Deploy(d) => {
                enc.value(d);
            }
            Operation::AddRole { account, .. } => {
                enc.value(account);
            }
            Operation::RenounceRole { .. } => {}
            Operation::TransferOwnership { new_owner } => {
                enc.value(new_owner);
            }
            Operation::ProduceItem {
                sku,
                drug_name,
                upc,
            } => {
                enc.str(sku).str(drug_name).u64(*upc);
            }
            Operation::Advance { upc, .. } => {
                enc.u64(*upc);
            }
            Operation::RequestData { sku, .. } => {
                enc.str(sku);
            }
            Operation::FulfillOracleRequest {
                request_id,
                outcome,
            } => {
                enc.value(request_id).value(outcome);
            }
            Operation::AggregateFulfill {
                request_id,
                responses,
            } => {
                enc.value(request_id).list(responses);
            }
            Operation::ExpireOracleRequest { request_id } => {
                enc.value(request_id);
            }
            Operation::TransferLink { to, amount } => {
                enc.value(to).u128(*amount);
            }
        }
        enc.into_bytes()
    }

    /// Parses an operation from its name and canonical argument bytes.
    pub fn decode(name: &str, args: &[u8]) -> Result<Self, OperationError> {
        let bad = |e: CodecError| OperationError::BadArguments {
            op: name.to_string(),
            reason: e.to_string(),
        };
        let mut dec = Decoder::new(args);
        let op = Self::decode_inner(name, &mut dec).map_err(|e| match e {
            DecodeFailure::Unknown => OperationError::Unknown(name.to_string()),
            DecodeFailure::Codec(e) => bad(e),
        })?;
        dec.finish().map_err(bad)?;
        Ok(op)
    }

    fn decode_inner(name: &str, dec: &mut Decoder<'_>) -> Result<Self, DecodeFailure> {
        if name == "deploy" {
            return Ok(Operation::Deploy(dec.value()?));
        }
        for role in Role::ALL {
            if name == role_op("add", role) {
                return Ok(Operation::AddRole {
                    role,
                    account: dec.value()?,
                });
            }
            if name == role_op("renounce", role) {
                return Ok(Operation::RenounceRole { role });
            }
        }
        if let Some(step) = LifecycleStep::from_function_name(name) {
            return Ok(if step == LifecycleStep::ProduceItemByManufacturer {
                Operation::ProduceItem {
                    sku: dec.string()?,
                    drug_name: dec.string()?,
                    upc: dec.u64()?,
                }
            } else {
                Operation::Advance {
                    step,
                    upc: dec.u64()?,
                }
            });
        }
        if let Some(field) = OracleField::from_request_function(name) {
            return Ok(Operation::RequestData {
                field,
                sku: dec.string()?,
            });
        }
        Ok(match name {
            "transferOwnership" => Operation::TransferOwnership {
                new_owner: dec.value()?,
            },
            "fulfillOracleRequest" => Operation::FulfillOracleRequest {
                request_id: dec.value()?,
                outcome: dec.value()?,
            },
            "aggregateFulfill" => Operation::AggregateFulfill {
                request_id: dec.value()?,
                responses: dec.list()?,
            },
            "expireOracleRequest" => Operation::ExpireOracleRequest {
                request_id: dec.value()?,
            },
            "transferLink" => Operation::TransferLink {
                to: dec.value()?,
                amount: dec.u128()?,
            },
            _ => return Err(DecodeFailure::Unknown),
        })
    }

    /// Parses the JSON argument object accepted by the HTTP API.
    pub fn from_json(name: &str, args: &Value) -> Result<Self, OperationError> {
        let bad = |reason: String| OperationError::BadArguments {
            op: name.to_string(),
            reason,
        };
        let empty = serde_json::Map::new();
        let obj = match args {
            Value::Object(m) => m,
            Value::Null => &empty,
            _ => return Err(bad("arguments must be a JSON object".into())),
        };
        let get = |key: &str| obj.get(key).ok_or_else(|| bad(format!("missing {key:?}")));
        let string = |key: &str| -> Result<String, OperationError> {
            get(key)?
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| bad(format!("{key:?} must be a string")))
        };
        let uint = |key: &str| -> Result<u64, OperationError> {
            let v = get(key)?;
            v.as_u64()
                .or_else(|| v.as_str().and_then(|s| s.parse().ok()))
                .ok_or_else(|| bad(format!("{key:?} must be an unsigned integer")))
        };
        let address = |key: &str| -> Result<Address, OperationError> {
            string(key)?
                .parse()
                .map_err(|e| bad(format!("{key:?}: {e}")))
        };
        let hash = |key: &str| -> Result<Hash32, OperationError> {
            string(key)?
                .parse()
                .map_err(|e| bad(format!("{key:?}: {e}")))
        };

        if name == "deploy" {
            return Err(bad("deployment is only valid at genesis".into()));
        }
        for role in Role::ALL {
            if name == role_op("add", role) {
                return Ok(Operation::AddRole {
                    role,
                    account: address("account")?,
                });
            }
            if name == role_op("renounce", role) {
                return Ok(Operation::RenounceRole { role });
            }
        }
        if let Some(step) = LifecycleStep::from_function_name(name) {
            return Ok(if step == LifecycleStep::ProduceItemByManufacturer {
                Operation::ProduceItem {
                    sku: string("sku")?,
                    drug_name: string("drugName")?,
                    upc: uint("upc")?,
                }
            } else {
                Operation::Advance {
                    step,
                    upc: uint("upc")?,
                }
            });
        }
        if let Some(field) = OracleField::from_request_function(name) {
            return Ok(Operation::RequestData {
                field,
                sku: string("sku")?,
            });
        }
        match name {
            "transferOwnership" => Ok(Operation::TransferOwnership {
                new_owner: address("newOwner")?,
            }),
            "fulfillOracleRequest" => {
                let outcome = match obj.get("value") {
                    Some(Value::Null) | None => JobOutcome::SkuNotFound,
                    Some(v) => JobOutcome::Value(
                        v.as_i64()
                            .ok_or_else(|| bad("\"value\" must be an integer or null".into()))?,
                    ),
                };
                Ok(Operation::FulfillOracleRequest {
                    request_id: hash("requestId")?,
                    outcome,
                })
            }
            "aggregateFulfill" => {
                let responses = get("responses")?
                    .as_array()
                    .ok_or_else(|| bad("\"responses\" must be an array".into()))?
                    .iter()
                    .map(|r| {
                        let node = r
                            .get("node")
                            .and_then(Value::as_str)
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| bad("response needs a node address".into()))?;
                        let value = r
                            .get("value")
                            .and_then(Value::as_i64)
                            .ok_or_else(|| bad("response needs an integer value".into()))?;
                        Ok(NodeResponse { node, value })
                    })
                    .collect::<Result<_, OperationError>>()?;
                Ok(Operation::AggregateFulfill {
                    request_id: hash("requestId")?,
                    responses,
                })
            }
            "expireOracleRequest" => Ok(Operation::ExpireOracleRequest {
                request_id: hash("requestId")?,
            }),
            "transferLink" => {
                let amount = string("amount")?
                    .parse()
                    .map_err(|_| bad("\"amount\" must be a decimal string of base units".into()))?;
                Ok(Operation::TransferLink {
                    to: address("to")?,
                    amount,
                })
            }
            _ => Err(OperationError::Unknown(name.to_string())),
        }
    }

    /// JSON argument object; inverse of [`from_json`](Self::from_json).
    pub fn args_json(&self) -> Value {
        match self {
            Operation::Deploy(d) => json!({ "owner": d.owner }),
            Operation::AddRole { account, .. } => json!({ "account": account }),
            Operation::RenounceRole { .. } => json!({}),
            Operation::TransferOwnership { new_owner } => json!({ "newOwner": new_owner }),
            Operation::ProduceItem {
                sku,
                drug_name,
                upc,
            } => json!({ "sku": sku, "drugName": drug_name, "upc": upc }),
            Operation::Advance { upc, .. } => json!({ "upc": upc }),
            Operation::RequestData { sku, .. } => json!({ "sku": sku }),
            Operation::FulfillOracleRequest {
                request_id,
                outcome,
            } => {
                let value = match outcome {
                    JobOutcome::Value(v) => json!(v),
                    JobOutcome::SkuNotFound => Value::Null,
                };
                json!({ "requestId": request_id, "value": value })
            }
            Operation::AggregateFulfill {
                request_id,
                responses,
            } => json!({
                "requestId": request_id,
                "responses": responses
                    .iter()
                    .map(|r| json!({ "node": r.node, "value": r.value }))
                    .collect::<Vec<_>>(),
            }),
            Operation::ExpireOracleRequest { request_id } => json!({ "requestId": request_id }),
            Operation::TransferLink { to, amount } => {
                json!({ "to": to, "amount": amount.to_string() })
            }
        }
    }

    /// Every operation name the contract dispatches, for documentation and
    /// the CLI.
    pub fn all_names() -> Vec<String> {
        let mut names = vec!["deploy".to_string()];
        for role in Role::ALL {
            names.push(role_op("add", role));
            names.push(role_op("renounce", role));
        }
        names.push("transferOwnership".into());
        names.extend(LifecycleStep::ALL.iter().map(|s| s.function_name().to_string()));
        names.extend(OracleField::ALL.iter().map(|f| f.request_function().to_string()));
        names.extend(
            [
                "fulfillOracleRequest",
                "aggregateFulfill",
                "expireOracleRequest",
                "transferLink",
            ]
            .map(String::from),
        );
        names
    }
}

enum DecodeFailure {
    Unknown,
    Codec(CodecError),
}

impl From<CodecError> for DecodeFailure {
    fn from(e: CodecError) -> Self {
        DecodeFailure::Codec(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::KeyPair;
    use proptest::prelude::*;

    fn sample_ops() -> Vec<Operation> {
        let a = KeyPair::from_label("a").address();
        vec![
            Operation::AddRole {
                role: Role::Retailer,
                account: a,
            },
            Operation::RenounceRole {
                role: Role::Consumer,
            },
            Operation::TransferOwnership { new_owner: a },
            Operation::produce("SKU-1", "Acetaminophen", 42),
            Operation::advance(LifecycleStep::ShippedItemByDistributor, 42),
            Operation::RequestData {
                field: OracleField::Longitude,
                sku: "SKU-1".into(),
            },
            Operation::FulfillOracleRequest {
                request_id: Hash32::digest(b"r"),
                outcome: JobOutcome::Value(-12),
            },
            Operation::FulfillOracleRequest {
                request_id: Hash32::digest(b"r"),
                outcome: JobOutcome::SkuNotFound,
            },
            Operation::AggregateFulfill {
                request_id: Hash32::digest(b"r"),
                responses: vec![NodeResponse { node: a, value: 3 }],
            },
            Operation::ExpireOracleRequest {
                request_id: Hash32::digest(b"r"),
            },
            Operation::TransferLink { to: a, amount: 17 },
        ]
    }

    #[test]
    fn binary_and_json_forms_agree() {
        for op in sample_ops() {
            let name = op.name();
            assert_eq!(Operation::decode(&name, &op.encode_args()).unwrap(), op);
            assert_eq!(Operation::from_json(&name, &op.args_json()).unwrap(), op);
        }
    }

    #[test]
    fn unknown_names_are_rejected() {
        assert_eq!(
            Operation::decode("mintItem", &[]),
            Err(OperationError::Unknown("mintItem".into()))
        );
        assert!(matches!(
            Operation::from_json("mintItem", &json!({})),
            Err(OperationError::Unknown(_))
        ));
    }

    #[test]
    fn trailing_argument_bytes_rejected() {
        let mut args = Operation::advance(LifecycleStep::SellItemByRetailer, 1).encode_args();
        args.push(0);
        assert!(matches!(
            Operation::decode("sellItemByRetailer", &args),
            Err(OperationError::BadArguments { .. })
        ));
    }

    #[test]
    fn json_upc_accepts_numeric_strings() {
        let op = Operation::from_json("sellItemByManufacturer", &json!({"upc": "42"})).unwrap();
        assert_eq!(op, Operation::advance(LifecycleStep::SellItemByManufacturer, 42));
    }

    #[test]
    fn names_are_unique() {
        let names = Operation::all_names();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
        assert_eq!(names.len(), 1 + 8 + 1 + 13 + 4 + 4);
    }

    proptest! {
        #[test]
        fn produce_args_round_trip(sku in "\\PC{0,16}", drug in "\\PC{0,16}", upc in any::<u64>()) {
            let op = Operation::produce(&sku, &drug, upc);
            prop_assert_eq!(Operation::decode(&op.name(), &op.encode_args()).unwrap(), op);
        }
    }
}
