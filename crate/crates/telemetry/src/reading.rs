//! Telemetry messages and their signed envelope.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use pharmachain_core::crypto::{KeyPair, PublicKey, Signature};

const SIGN_DOMAIN: &[u8] = b"pharmachain/telemetry/v1";

/// One sensing-node sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TelemetryReading {
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub lat: f64,
    pub lng: f64,
    pub sku: String,
    pub lot: String,
    pub drug_name: String,
    /// Degrees Celsius.
    pub temp: f64,
    /// Percent relative humidity.
    pub hum: f64,
}

pub const READING_FIELDS: [&str; 8] = ["timestamp", "lat", "lng", "sku", "lot", "drugName", "temp", "hum"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MessageError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("bad signature")]
    BadSignature,
    #[error("unknown node {0:?}")]
    UnknownNode(String),
}

impl TelemetryReading {
    pub fn validate(&self) -> Result<(), MessageError> {
        let bad = |m: &str| Err(MessageError::Malformed(m.to_string()));
        if !(-90.0..=90.0).contains(&self.lat) {
            return bad("lat out of range");
        }
        if !(-180.0..=180.0).contains(&self.lng) {
            return bad("lng out of range");
        }
        if !(0.0..=100.0).contains(&self.hum) {
            return bad("hum out of range");
        }
        if !self.temp.is_finite() {
            return bad("temp not finite");
        }
        if self.sku.is_empty() {
            return bad("empty sku");
        }
        Ok(())
    }

    /// Value of a numeric channel by its message key.
    pub fn channel(&self, key: &str) -> Option<f64> {
        match key {
            "temp" => Some(self.temp),
            "hum" => Some(self.hum),
            "lat" => Some(self.lat),
            "lng" => Some(self.lng),
            _ => None,
        }
    }

    fn signing_bytes(&self, node_id: &str) -> Vec<u8> {
        let body = serde_json::to_vec(self).expect("reading serializes");
        let mut out = Vec::with_capacity(SIGN_DOMAIN.len() + node_id.len() + body.len() + 2);
        out.extend_from_slice(SIGN_DOMAIN);
        out.push(0);
        out.extend_from_slice(node_id.as_bytes());
        out.push(0);
        out.extend_from_slice(&body);
        out
    }
}

/// A reading with the publishing node's identity and signature, flattened
/// into one JSON object on the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedReading {
    pub reading: TelemetryReading,
    pub node_id: String,
    pub signature: Signature,
}

impl SignedReading {
    pub fn sign(reading: TelemetryReading, node_id: &str, key: &KeyPair) -> Self {
        let signature = key.sign(&reading.signing_bytes(node_id));
        Self {
            reading,
            node_id: node_id.to_string(),
            signature,
        }
    }

    pub fn verify(&self, key: &PublicKey) -> Result<(), MessageError> {
        key.verify(&self.reading.signing_bytes(&self.node_id), &self.signature)
            .map_err(|_| MessageError::BadSignature)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut obj = match serde_json::to_value(&self.reading) {
            Ok(Value::Object(m)) => m,
            _ => unreachable!("reading is an object"),
        };
        obj.insert("node_id".into(), Value::String(self.node_id.clone()));
        obj.insert("signature".into(), Value::String(self.signature.to_string()));
        serde_json::to_vec(&Value::Object(obj)).expect("json")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, MessageError> {
        let malformed = |e: String| MessageError::Malformed(e);
        let mut obj: Map<String, Value> =
            serde_json::from_slice(bytes).map_err(|e| malformed(e.to_string()))?;
        let node_id = match obj.remove("node_id") {
            Some(Value::String(s)) => s,
            _ => return Err(malformed("missing node_id".into())),
        };
        let signature = match obj.remove("signature") {
            Some(Value::String(s)) => s.parse().map_err(|_| malformed("bad signature encoding".into()))?,
            _ => return Err(malformed("missing signature".into())),
        };
        let reading: TelemetryReading =
            serde_json::from_value(Value::Object(obj)).map_err(|e| malformed(e.to_string()))?;
        reading.validate()?;
        Ok(Self {
            reading,
            node_id,
            signature,
        })
    }
}

#[cfg(test)]
pub(crate) fn sample(sku: &str, timestamp: u64, temp: f64) -> TelemetryReading {
    TelemetryReading {
        timestamp,
        lat: 43.6532,
        lng: -79.3832,
        sku: sku.into(),
        lot: "LOT-7".into(),
        drug_name: "Insulin".into(),
        temp,
        hum: 40.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_format_has_exactly_the_reading_fields_plus_envelope() {
        let k = KeyPair::from_label("node");
        let m = SignedReading::sign(sample("SKU-1", 10, 23.5), "n1", &k);
        let v: Map<String, Value> = serde_json::from_slice(&m.to_json()).unwrap();
        let mut keys: Vec<&str> = v.keys().map(String::as_str).collect();
        keys.sort();
        let mut expected: Vec<&str> = READING_FIELDS.iter().copied().chain(["node_id", "signature"]).collect();
        expected.sort();
        assert_eq!(keys, expected);
        assert_eq!(SignedReading::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn tampering_breaks_signature() {
        let k = KeyPair::from_label("node");
        let mut m = SignedReading::sign(sample("SKU-1", 10, 23.5), "n1", &k);
        assert!(m.verify(&k.public_key()).is_ok());
        m.reading.temp = 20.0;
        assert_eq!(m.verify(&k.public_key()), Err(MessageError::BadSignature));
    }

    #[test]
    fn extra_or_missing_fields_are_malformed() {
        let k = KeyPair::from_label("node");
        let m = SignedReading::sign(sample("SKU-1", 10, 23.5), "n1", &k);
        let mut v: Map<String, Value> = serde_json::from_slice(&m.to_json()).unwrap();
        v.insert("pressure".into(), Value::from(1));
        let extra = serde_json::to_vec(&v).unwrap();
        assert!(matches!(SignedReading::from_json(&extra), Err(MessageError::Malformed(_))));
        v.remove("pressure");
        v.remove("hum");
        let missing = serde_json::to_vec(&v).unwrap();
        assert!(matches!(SignedReading::from_json(&missing), Err(MessageError::Malformed(_))));
        assert!(SignedReading::from_json(b"not json").is_err());
    }
}
