//! Inbound-oracle bridge: request registry, LINK escrow, fulfillment and
//! multi-node aggregation.
//!
//! A request escrows its fee from the requester's balance and stays pending
//! until exactly one settlement: a fulfillment (fee paid to the fulfilling
//! node or split across the aggregating nodes), an error-flagged fulfillment
//! (fee still paid, nothing stored) or a refund (timeout or missing quorum).
//! The sum of all balances plus escrow never changes except through explicit
//! minting at deployment.

mod fees;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{CodecError, CodecResult, Decode, Decoder, Encode, Encoder};
use crate::contract::LifecycleStep;
use crate::crypto::{Address, Hash32};

pub use fees::{ActionFee, FeeSchedule};

/// Base units per LINK token.
pub const LINK: u128 = 1_000_000_000_000_000_000;

pub const DEFAULT_UNSIGNED_JOB_ID: &str = "d5270d1c311941d0b08bead21fea7747";
pub const DEFAULT_SIGNED_JOB_ID: &str = "ba1d5d5070a247eaa7070f838a42bb03";

/// Formats base units as a decimal token amount, e.g. `0.125`.
pub fn format_link(amount: u128) -> String {
    let whole = amount / LINK;
    let frac = amount % LINK;
    if frac == 0 {
        return whole.to_string();
    }
    let digits = format!("{frac:018}");
    format!("{whole}.{}", digits.trim_end_matches('0'))
}

/// Parses a decimal token amount such as `0.4` into base units.
pub fn parse_link(text: &str) -> Option<u128> {
    let (whole, frac) = text.trim().split_once('.').unwrap_or((text.trim(), ""));
    if whole.is_empty() && frac.is_empty() || frac.len() > 18 {
        return None;
    }
    let digits = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
    if !digits(whole) || !digits(frac) {
        return None;
    }
    let whole: u128 = if whole.is_empty() { 0 } else { whole.parse().ok()? };
    let frac: u128 = if frac.is_empty() { 0 } else { format!("{frac:0<18}").parse().ok()? };
    whole.checked_mul(LINK)?.checked_add(frac)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleField {
    Temperature,
    Humidity,
    Latitude,
    Longitude,
}

/// Integer job type a field is delivered through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobKind {
    Unsigned,
    Signed,
}

impl OracleField {
    pub const ALL: [OracleField; 4] = [
        OracleField::Temperature,
        OracleField::Humidity,
        OracleField::Latitude,
        OracleField::Longitude,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            OracleField::Temperature => "temperature",
            OracleField::Humidity => "humidity",
            OracleField::Latitude => "latitude",
            OracleField::Longitude => "longitude",
        }
    }

    /// Key of this channel in a telemetry JSON document.
    pub fn telemetry_key(self) -> &'static str {
        match self {
            OracleField::Temperature => "temp",
            OracleField::Humidity => "hum",
            OracleField::Latitude => "lat",
            OracleField::Longitude => "lng",
        }
    }

    /// Contract function that requests this channel.
    pub fn request_function(self) -> &'static str {
        match self {
            OracleField::Temperature => "requestTemperatureData",
            OracleField::Humidity => "requestHumidityData",
            OracleField::Latitude => "requestLatitude",
            OracleField::Longitude => "requestLongitude",
        }
    }

    pub fn from_request_function(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.request_function() == name)
    }

    pub fn job_kind(self) -> JobKind {
        match self {
            OracleField::Temperature | OracleField::Humidity => JobKind::Unsigned,
            OracleField::Latitude | OracleField::Longitude => JobKind::Signed,
        }
    }

    /// Fixed-point multiplier: 10² for temperature/humidity, 10⁶ for coordinates.
    pub fn scale(self) -> i64 {
        match self.job_kind() {
            JobKind::Unsigned => 100,
            JobKind::Signed => 1_000_000,
        }
    }

    /// Converts a raw reading into the integer delivered on-chain.
    pub fn scale_value(self, raw: f64) -> Result<i64, OracleError> {
        if !raw.is_finite() {
            return Err(OracleError::ValueOutOfRange { field: self, raw });
        }
        let scaled = (raw * self.scale() as f64).round();
        if scaled < i64::MIN as f64 || scaled > i64::MAX as f64 {
            return Err(OracleError::ValueOutOfRange { field: self, raw });
        }
        let scaled = scaled as i64;
        if self.job_kind() == JobKind::Unsigned && scaled < 0 {
            return Err(OracleError::ValueOutOfRange { field: self, raw });
        }
        Ok(scaled)
    }

    pub fn unscale(self, value: i64) -> f64 {
        value as f64 / self.scale() as f64
    }
}

impl fmt::Display for OracleField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OracleField {
    type Err = OracleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s || f.telemetry_key() == s)
            .ok_or_else(|| OracleError::UnknownField(s.to_string()))
    }
}

impl Encode for OracleField {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(*self as u8);
    }
}

impl Decode for OracleField {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        let tag = dec.u8()?;
        Self::ALL
            .get(tag as usize)
            .copied()
            .ok_or(CodecError::InvalidTag {
                what: "oracle field",
                tag,
            })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("unknown telemetry field {0:?}")]
    UnknownField(String),
    #[error("insufficient LINK: need {needed}, have {available}")]
    InsufficientLink { needed: u128, available: u128 },
    #[error("unknown oracle request {0}")]
    UnknownRequest(Hash32),
    #[error("oracle request {0} already settled")]
    AlreadyFulfilled(Hash32),
    #[error("{0} is not a registered oracle node")]
    NotOracleNode(Address),
    #[error("oracle node {0} responded more than once")]
    DuplicateResponder(Address),
    #[error("aggregation mode requires aggregateFulfill")]
    AggregationRequired,
    #[error("quorum not reached: {responses} of {quorum} responses")]
    QuorumNotReached { responses: usize, quorum: u32 },
    #[error("oracle request {0} has not expired yet")]
    NotExpired(Hash32),
    #[error("value {raw} out of range for {field}")]
    ValueOutOfRange { field: OracleField, raw: f64 },
}

/// Oracle-node set and request policy, fixed at deployment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub nodes: Vec<Address>,
    /// Minimum distinct responses for an aggregated fulfillment. `1` means
    /// single-node mode, where `fulfill` is accepted directly.
    pub quorum: u32,
    pub unsigned_job_id: String,
    pub signed_job_id: String,
    pub request_timeout_ms: u64,
    pub fees: FeeSchedule,
}

impl OracleConfig {
    pub fn single(node: Address) -> Self {
        Self {
            nodes: vec![node],
            quorum: 1,
            unsigned_job_id: DEFAULT_UNSIGNED_JOB_ID.into(),
            signed_job_id: DEFAULT_SIGNED_JOB_ID.into(),
            request_timeout_ms: 60_000,
            fees: FeeSchedule::default(),
        }
    }

    pub fn job_id(&self, field: OracleField) -> &str {
        match field.job_kind() {
            JobKind::Unsigned => &self.unsigned_job_id,
            JobKind::Signed => &self.signed_job_id,
        }
    }

    pub fn aggregated(&self) -> bool {
        self.quorum > 1
    }
}

impl Encode for OracleConfig {
    fn encode(&self, enc: &mut Encoder) {
        enc.list(&self.nodes)
            .u32(self.quorum)
            .str(&self.unsigned_job_id)
            .str(&self.signed_job_id)
            .u64(self.request_timeout_ms)
            .value(&self.fees);
    }
}

impl Decode for OracleConfig {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        Ok(OracleConfig {
            nodes: dec.list()?,
            quorum: dec.u32()?,
            unsigned_job_id: dec.string()?,
            signed_job_id: dec.string()?,
            request_timeout_ms: dec.u64()?,
            fees: dec.value()?,
        })
    }
}

/// What the contract does with a delivered value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Callback {
    /// Store the value keyed by (sku, field).
    StoreTelemetry,
}

impl Callback {
    pub fn name(self) -> &'static str {
        match self {
            Callback::StoreTelemetry => "storeTelemetry",
        }
    }
}

/// Lifecycle action that issued a request, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestOrigin {
    pub upc: u64,
    pub step: LifecycleStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RefundReason {
    Expired,
    QuorumNotReached,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RequestStatus {
    Pending,
    Fulfilled {
        value: i64,
        nodes: Vec<Address>,
        height: u64,
    },
    /// Error-flagged fulfillment: the job ran but had no data for the sku.
    Failed {
        node: Address,
        reason: String,
        height: u64,
    },
    Refunded {
        reason: RefundReason,
        height: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleRequest {
    pub request_id: Hash32,
    pub job_id: String,
    pub requester: Address,
    pub sku: String,
    pub field: OracleField,
    pub callback: Callback,
    pub fee: u128,
    pub origin: Option<RequestOrigin>,
    pub created_height: u64,
    pub created_at_ms: u64,
    pub status: RequestStatus,
}

impl OracleRequest {
    pub fn is_pending(&self) -> bool {
        self.status == RequestStatus::Pending
    }
}

/// Result of an off-chain job as reported by a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum JobOutcome {
    Value(i64),
    SkuNotFound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeResponse {
    pub node: Address,
    pub value: i64,
}

/// Oracle-delivered value stored by the fulfillment callback.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredValue {
    pub value: i64,
    pub request_id: Hash32,
    pub height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Settlement {
    Fulfilled { value: i64 },
    ErrorFlagged,
    Refunded(RefundReason),
}

/// Block context needed to settle requests.
#[derive(Debug, Clone, Copy)]
pub struct Clock {
    pub height: u64,
    pub timestamp_ms: u64,
}

/// Median of the responses; even counts average the two middle values,
/// rounding toward negative infinity.
pub fn median(values: &[i64]) -> Option<i64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        Some(v[n / 2])
    } else {
        let sum = v[n / 2 - 1] as i128 + v[n / 2] as i128;
        Some(sum.div_euclid(2) as i64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleBridge {
    config: OracleConfig,
    balances: BTreeMap<Address, u128>,
    escrow: u128,
    requests: BTreeMap<Hash32, OracleRequest>,
    request_counter: u64,
    values: BTreeMap<(String, OracleField), StoredValue>,
}

impl OracleBridge {
    pub fn new(config: OracleConfig, balances: impl IntoIterator<Item = (Address, u128)>) -> Self {
        let mut map = BTreeMap::new();
        for (a, amount) in balances {
            *map.entry(a).or_insert(0) += amount;
        }
        map.retain(|_, v| *v > 0);
        Self {
            config,
            balances: map,
            escrow: 0,
            requests: BTreeMap::new(),
            request_counter: 0,
            values: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    pub fn balance(&self, holder: &Address) -> u128 {
        self.balances.get(holder).copied().unwrap_or(0)
    }

    pub fn balances(&self) -> &BTreeMap<Address, u128> {
        &self.balances
    }

    pub fn escrow(&self) -> u128 {
        self.escrow
    }

    /// Balances plus escrow; constant across every operation.
    pub fn total_supply(&self) -> u128 {
        self.balances.values().sum::<u128>() + self.escrow
    }

    pub fn request(&self, id: &Hash32) -> Option<&OracleRequest> {
        self.requests.get(id)
    }

    pub fn requests(&self) -> impl Iterator<Item = &OracleRequest> {
        self.requests.values()
    }

    pub fn pending(&self) -> impl Iterator<Item = &OracleRequest> {
        self.requests.values().filter(|r| r.is_pending())
    }

    pub fn value(&self, sku: &str, field: OracleField) -> Option<&StoredValue> {
        self.values.get(&(sku.to_string(), field))
    }

    pub fn values(&self) -> &BTreeMap<(String, OracleField), StoredValue> {
        &self.values
    }

    pub fn is_node(&self, a: &Address) -> bool {
        self.config.nodes.contains(a)
    }

    fn credit(&mut self, holder: Address, amount: u128) {
        if amount > 0 {
            *self.balances.entry(holder).or_insert(0) += amount;
        }
    }

    fn debit(&mut self, holder: &Address, amount: u128) -> Result<(), OracleError> {
        let available = self.balance(holder);
        if available < amount {
            return Err(OracleError::InsufficientLink {
                needed: amount,
                available,
            });
        }
        let left = available - amount;
        if left == 0 {
            self.balances.remove(holder);
        } else {
            self.balances.insert(*holder, left);
        }
        Ok(())
    }

    pub fn transfer(&mut self, from: &Address, to: Address, amount: u128) -> Result<(), OracleError> {
        self.debit(from, amount)?;
        self.credit(to, amount);
        Ok(())
    }

    /// Checks that `holder` can fund all of `fees` without changing anything.
    pub fn check_funds(&self, holder: &Address, fees: u128) -> Result<(), OracleError> {
        let available = self.balance(holder);
        if available < fees {
            Err(OracleError::InsufficientLink {
                needed: fees,
                available,
            })
        } else {
            Ok(())
        }
    }

    /// Escrows `fee` and records a pending request.
    pub fn request_data(
        &mut self,
        requester: Address,
        sku: &str,
        field: OracleField,
        fee: u128,
        origin: Option<RequestOrigin>,
        clock: Clock,
    ) -> Result<Hash32, OracleError> {
        self.debit(&requester, fee)?;
        self.escrow += fee;
        self.request_counter += 1;
        let request_id = Hash32::digest_parts(&[
            b"oracle-request",
            &requester.0,
            &self.request_counter.to_be_bytes(),
            sku.as_bytes(),
            field.name().as_bytes(),
        ]);
        let req = OracleRequest {
            request_id,
            job_id: self.config.job_id(field).to_string(),
            requester,
            sku: sku.to_string(),
            field,
            callback: Callback::StoreTelemetry,
            fee,
            origin,
            created_height: clock.height,
            created_at_ms: clock.timestamp_ms,
            status: RequestStatus::Pending,
        };
        self.requests.insert(request_id, req);
        Ok(request_id)
    }

    fn pending_request(&self, id: &Hash32) -> Result<&OracleRequest, OracleError> {
        let req = self
            .requests
            .get(id)
            .ok_or(OracleError::UnknownRequest(*id))?;
        if !req.is_pending() {
            return Err(OracleError::AlreadyFulfilled(*id));
        }
        Ok(req)
    }

    /// Validation half of [`fulfill`](Self::fulfill).
    pub fn check_fulfill(&self, node: &Address, id: &Hash32) -> Result<(), OracleError> {
        if !self.is_node(node) {
            return Err(OracleError::NotOracleNode(*node));
        }
        self.pending_request(id)?;
        if self.config.aggregated() {
            return Err(OracleError::AggregationRequired);
        }
        Ok(())
    }

    /// Single-node fulfillment: pays the escrowed fee to `node` and runs the
    /// callback.
    pub fn fulfill(
        &mut self,
        node: Address,
        id: &Hash32,
        outcome: JobOutcome,
        clock: Clock,
    ) -> Result<Settlement, OracleError> {
        self.check_fulfill(&node, id)?;
        let req = self.requests.get_mut(id).expect("checked");
        let fee = req.fee;
        let settlement = match outcome {
            JobOutcome::Value(value) => {
                req.status = RequestStatus::Fulfilled {
                    value,
                    nodes: vec![node],
                    height: clock.height,
                };
                let key = (req.sku.clone(), req.field);
                self.values.insert(
                    key,
                    StoredValue {
                        value,
                        request_id: *id,
                        height: clock.height,
                    },
                );
                Settlement::Fulfilled { value }
            }
            JobOutcome::SkuNotFound => {
                req.status = RequestStatus::Failed {
                    node,
                    reason: "SkuNotFound".into(),
                    height: clock.height,
                };
                Settlement::ErrorFlagged
            }
        };
        self.escrow -= fee;
        self.credit(node, fee);
        Ok(settlement)
    }

    /// Validation half of [`aggregate_fulfill`](Self::aggregate_fulfill).
    pub fn check_aggregate(
        &self,
        submitter: &Address,
        id: &Hash32,
        responses: &[NodeResponse],
    ) -> Result<(), OracleError> {
        if !self.is_node(submitter) {
            return Err(OracleError::NotOracleNode(*submitter));
        }
        self.pending_request(id)?;
        let mut seen = BTreeSet::new();
        for r in responses {
            if !self.is_node(&r.node) {
                return Err(OracleError::NotOracleNode(r.node));
            }
            if !seen.insert(r.node) {
                return Err(OracleError::DuplicateResponder(r.node));
            }
        }
        Ok(())
    }

    /// Multi-node fulfillment with the median of the responses.
    ///
    /// With fewer responses than the quorum the request is closed and the
    /// escrow returned to the requester; this is a settlement, not a rollback.
    pub fn aggregate_fulfill(
        &mut self,
        submitter: Address,
        id: &Hash32,
        responses: &[NodeResponse],
        clock: Clock,
    ) -> Result<Settlement, OracleError> {
        self.check_aggregate(&submitter, id, responses)?;
        let quorum = self.config.quorum.max(1);
        if responses.len() < quorum as usize {
            self.refund(id, RefundReason::QuorumNotReached, clock);
            return Ok(Settlement::Refunded(RefundReason::QuorumNotReached));
        }
        let values: Vec<i64> = responses.iter().map(|r| r.value).collect();
        let value = median(&values).expect("quorum is at least one response");
        let req = self.requests.get_mut(id).expect("checked");
        let fee = req.fee;
        let nodes: Vec<Address> = responses.iter().map(|r| r.node).collect();
        req.status = RequestStatus::Fulfilled {
            value,
            nodes: nodes.clone(),
            height: clock.height,
        };
        let key = (req.sku.clone(), req.field);
        self.values.insert(
            key,
            StoredValue {
                value,
                request_id: *id,
                height: clock.height,
            },
        );
        let n = nodes.len() as u128;
        let share = fee / n;
        let rem = fee % n;
        self.escrow -= fee;
        for (i, node) in nodes.into_iter().enumerate() {
            self.credit(node, if i == 0 { share + rem } else { share });
        }
        Ok(Settlement::Fulfilled { value })
    }

    fn refund(&mut self, id: &Hash32, reason: RefundReason, clock: Clock) {
        let req = self.requests.get_mut(id).expect("caller checked");
        let (fee, requester) = (req.fee, req.requester);
        req.status = RequestStatus::Refunded {
            reason,
            height: clock.height,
        };
        self.escrow -= fee;
        self.credit(requester, fee);
    }

    pub fn check_expire(&self, id: &Hash32, now_ms: u64) -> Result<(), OracleError> {
        let req = self.pending_request(id)?;
        if now_ms < req.created_at_ms.saturating_add(self.config.request_timeout_ms) {
            return Err(OracleError::NotExpired(*id));
        }
        Ok(())
    }

    /// Refunds a request whose timeout has elapsed.
    pub fn expire(&mut self, id: &Hash32, clock: Clock) -> Result<Settlement, OracleError> {
        self.check_expire(id, clock.timestamp_ms)?;
        self.refund(id, RefundReason::Expired, clock);
        Ok(Settlement::Refunded(RefundReason::Expired))
    }
}

impl Encode for RequestOrigin {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.upc).value(&self.step);
    }
}

impl Decode for RequestOrigin {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        Ok(RequestOrigin {
            upc: dec.u64()?,
            step: dec.value()?,
        })
    }
}

impl Encode for RefundReason {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(match self {
            RefundReason::Expired => 0,
            RefundReason::QuorumNotReached => 1,
        });
    }
}

impl Decode for RefundReason {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        match dec.u8()? {
            0 => Ok(RefundReason::Expired),
            1 => Ok(RefundReason::QuorumNotReached),
            tag => Err(CodecError::InvalidTag {
                what: "refund reason",
                tag,
            }),
        }
    }
}

impl Encode for RequestStatus {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            RequestStatus::Pending => {
                enc.u8(0);
            }
            RequestStatus::Fulfilled {
                value,
                nodes,
                height,
            } => {
                enc.u8(1).i64(*value).list(nodes).u64(*height);
            }
            RequestStatus::Failed {
                node,
                reason,
                height,
            } => {
                enc.u8(2).value(node).str(reason).u64(*height);
            }
            RequestStatus::Refunded { reason, height } => {
                enc.u8(3).value(reason).u64(*height);
            }
        }
    }
}

impl Decode for RequestStatus {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        Ok(match dec.u8()? {
            0 => RequestStatus::Pending,
            1 => RequestStatus::Fulfilled {
                value: dec.i64()?,
                nodes: dec.list()?,
                height: dec.u64()?,
            },
            2 => RequestStatus::Failed {
                node: dec.value()?,
                reason: dec.string()?,
                height: dec.u64()?,
            },
            3 => RequestStatus::Refunded {
                reason: dec.value()?,
                height: dec.u64()?,
            },
            tag => {
                return Err(CodecError::InvalidTag {
                    what: "request status",
                    tag,
                })
            }
        })
    }
}

impl Encode for OracleRequest {
    fn encode(&self, enc: &mut Encoder) {
        enc.value(&self.request_id)
            .str(&self.job_id)
            .value(&self.requester)
            .str(&self.sku)
            .value(&self.field)
            .u8(0) // Callback::StoreTelemetry
            .u128(self.fee)
            .option(&self.origin)
            .u64(self.created_height)
            .u64(self.created_at_ms)
            .value(&self.status);
    }
}

impl Decode for OracleRequest {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        let request_id = dec.value()?;
        let job_id = dec.string()?;
        let requester = dec.value()?;
        let sku = dec.string()?;
        let field = dec.value()?;
        let callback = match dec.u8()? {
            0 => Callback::StoreTelemetry,
            tag => return Err(CodecError::InvalidTag { what: "callback", tag }),
        };
        Ok(OracleRequest {
            request_id,
            job_id,
            requester,
            sku,
            field,
            callback,
            fee: dec.u128()?,
            origin: dec.option()?,
            created_height: dec.u64()?,
            created_at_ms: dec.u64()?,
            status: dec.value()?,
        })
    }
}

impl Encode for JobOutcome {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            JobOutcome::Value(v) => {
                enc.u8(0).i64(*v);
            }
            JobOutcome::SkuNotFound => {
                enc.u8(1);
            }
        }
    }
}

impl Decode for JobOutcome {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        match dec.u8()? {
            0 => Ok(JobOutcome::Value(dec.i64()?)),
            1 => Ok(JobOutcome::SkuNotFound),
            tag => Err(CodecError::InvalidTag {
                what: "job outcome",
                tag,
            }),
        }
    }
}

impl Encode for NodeResponse {
    fn encode(&self, enc: &mut Encoder) {
        enc.value(&self.node).i64(self.value);
    }
}

impl Decode for NodeResponse {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        Ok(NodeResponse {
            node: dec.value()?,
            value: dec.i64()?,
        })
    }
}

impl Encode for StoredValue {
    fn encode(&self, enc: &mut Encoder) {
        enc.i64(self.value).value(&self.request_id).u64(self.height);
    }
}

impl Decode for StoredValue {
    fn decode(dec: &mut Decoder<'_>) -> CodecResult<Self> {
        Ok(StoredValue {
            value: dec.i64()?,
            request_id: dec.value()?,
            height: dec.u64()?,
        })
    }
}

impl OracleBridge {
    /// Keyed entries for the state snapshot.
    pub(crate) fn snapshot_entries(&self, out: &mut Vec<(String, Vec<u8>)>) {
        out.push(("oracle/config".into(), self.config.to_canonical_bytes()));
        let mut meta = Encoder::new();
        meta.u128(self.escrow).u64(self.request_counter);
        out.push(("oracle/meta".into(), meta.into_bytes()));
        for (a, amount) in &self.balances {
            out.push((format!("link/{a}"), amount.to_canonical_bytes()));
        }
        for (id, r) in &self.requests {
            out.push((format!("oracle/request/{id}"), r.to_canonical_bytes()));
        }
        for ((sku, field), v) in &self.values {
            let mut key = Encoder::new();
            key.str(sku).value(field);
            out.push((
                format!("oracle/value/{}", hex::encode(key.as_bytes())),
                v.to_canonical_bytes(),
            ));
        }
    }

    pub(crate) fn from_snapshot_entries<'a>(
        entries: impl Iterator<Item = (&'a str, &'a [u8])>,
    ) -> CodecResult<Self> {
        let mut config = None;
        let mut meta = None;
        let mut balances = BTreeMap::new();
        let mut requests = BTreeMap::new();
        let mut values = BTreeMap::new();
        for (key, val) in entries {
            if key == "oracle/config" {
                config = Some(OracleConfig::from_canonical_bytes(val)?);
            } else if key == "oracle/meta" {
                let mut dec = Decoder::new(val);
                meta = Some((dec.u128()?, dec.u64()?));
                dec.finish()?;
            } else if let Some(a) = key.strip_prefix("link/") {
                let a: Address = a.parse().map_err(|e| CodecError::Invalid(format!("{e}")))?;
                balances.insert(a, u128::from_canonical_bytes(val)?);
            } else if key.starts_with("oracle/request/") {
                let r = OracleRequest::from_canonical_bytes(val)?;
                requests.insert(r.request_id, r);
            } else if let Some(k) = key.strip_prefix("oracle/value/") {
                let raw = hex::decode(k).map_err(|e| CodecError::Invalid(e.to_string()))?;
                let mut dec = Decoder::new(&raw);
                let sku = dec.string()?;
                let field: OracleField = dec.value()?;
                dec.finish()?;
                values.insert((sku, field), StoredValue::from_canonical_bytes(val)?);
            }
        }
        let config = config.ok_or_else(|| CodecError::Invalid("missing oracle/config".into()))?;
        let (escrow, request_counter) =
            meta.ok_or_else(|| CodecError::Invalid("missing oracle/meta".into()))?;
        Ok(Self {
            config,
            balances,
            escrow,
            requests,
            request_counter,
            values,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::KeyPair;

    fn addr(l: &str) -> Address {
        KeyPair::from_label(l).address()
    }

    #[test]
    fn link_amounts_parse() {
        assert_eq!(parse_link("0.4"), Some(4 * LINK / 10));
        assert_eq!(parse_link("1000"), Some(1000 * LINK));
        assert_eq!(parse_link(".5"), Some(LINK / 2));
        assert_eq!(parse_link("0.000000000000000001"), Some(1));
        for bad in ["", ".", "1.2.3", "-1", "0.0000000000000000001", "abc"] {
            assert_eq!(parse_link(bad), None, "{bad}");
        }
        assert_eq!(parse_link(&format_link(123_456_789)), Some(123_456_789));
    }

    const CLOCK: Clock = Clock {
        height: 1,
        timestamp_ms: 1_000,
    };

    fn bridge(funds: u128, cfg: OracleConfig) -> (OracleBridge, Address) {
        let contract = addr("contract");
        (OracleBridge::new(cfg, [(contract, funds)]), contract)
    }

    #[test]
    fn temperature_scaling() {
        assert_eq!(OracleField::Temperature.scale_value(23.5).unwrap(), 2350);
        assert_eq!(OracleField::Humidity.scale_value(61.27).unwrap(), 6127);
        assert_eq!(OracleField::Latitude.scale_value(33.214_371).unwrap(), 33_214_371);
        assert_eq!(OracleField::Longitude.scale_value(-97.133_224).unwrap(), -97_133_224);
        assert!(OracleField::Temperature.scale_value(-1.0).is_err());
        assert!(OracleField::Temperature.scale_value(f64::NAN).is_err());
    }

    #[test]
    fn unknown_field_name() {
        assert_eq!(
            "pressure".parse::<OracleField>(),
            Err(OracleError::UnknownField("pressure".into()))
        );
        assert_eq!("temp".parse::<OracleField>(), Ok(OracleField::Temperature));
    }

    #[test]
    fn request_escrows_fee() {
        let node = addr("node");
        let (mut b, contract) = bridge(LINK, OracleConfig::single(node));
        let id = b
            .request_data(contract, "SKU-1", OracleField::Temperature, LINK / 10, None, CLOCK)
            .unwrap();
        assert_eq!(b.balance(&contract), LINK - LINK / 10);
        assert_eq!(b.escrow(), LINK / 10);
        let req = b.request(&id).unwrap();
        assert!(req.is_pending());
        assert_eq!(req.job_id, DEFAULT_UNSIGNED_JOB_ID);
        assert_eq!(b.total_supply(), LINK);
    }

    #[test]
    fn request_without_funds() {
        let node = addr("node");
        let (mut b, contract) = bridge(0, OracleConfig::single(node));
        assert_eq!(
            b.request_data(contract, "SKU-1", OracleField::Temperature, 1, None, CLOCK),
            Err(OracleError::InsufficientLink {
                needed: 1,
                available: 0
            })
        );
    }

    #[test]
    fn fulfill_exactly_once_and_pays_node() {
        let node = addr("node");
        let (mut b, contract) = bridge(LINK, OracleConfig::single(node));
        let id = b
            .request_data(contract, "SKU-1", OracleField::Temperature, LINK / 10, None, CLOCK)
            .unwrap();
        assert_eq!(
            b.fulfill(node, &id, JobOutcome::Value(2350), CLOCK),
            Ok(Settlement::Fulfilled { value: 2350 })
        );
        assert_eq!(b.value("SKU-1", OracleField::Temperature).unwrap().value, 2350);
        assert_eq!(b.balance(&node), LINK / 10);
        assert_eq!(b.escrow(), 0);
        assert_eq!(
            b.fulfill(node, &id, JobOutcome::Value(1), CLOCK),
            Err(OracleError::AlreadyFulfilled(id))
        );
        assert_eq!(b.total_supply(), LINK);
    }

    #[test]
    fn error_flagged_fulfillment_stores_nothing() {
        let node = addr("node");
        let (mut b, contract) = bridge(LINK, OracleConfig::single(node));
        let id = b
            .request_data(contract, "nope", OracleField::Humidity, 5, None, CLOCK)
            .unwrap();
        assert_eq!(
            b.fulfill(node, &id, JobOutcome::SkuNotFound, CLOCK),
            Ok(Settlement::ErrorFlagged)
        );
        assert!(b.value("nope", OracleField::Humidity).is_none());
        assert!(matches!(
            b.request(&id).unwrap().status,
            RequestStatus::Failed { .. }
        ));
    }

    #[test]
    fn stranger_cannot_fulfill() {
        let node = addr("node");
        let (mut b, contract) = bridge(LINK, OracleConfig::single(node));
        let id = b
            .request_data(contract, "s", OracleField::Humidity, 5, None, CLOCK)
            .unwrap();
        let other = addr("other");
        assert_eq!(
            b.fulfill(other, &id, JobOutcome::Value(1), CLOCK),
            Err(OracleError::NotOracleNode(other))
        );
        assert_eq!(
            b.fulfill(node, &Hash32::ZERO, JobOutcome::Value(1), CLOCK),
            Err(OracleError::UnknownRequest(Hash32::ZERO))
        );
    }

    #[test]
    fn median_by_hand() {
        assert_eq!(median(&[2340, 2350, 9999]), Some(2350));
        assert_eq!(median(&[9999, 2340, 2350]), Some(2350));
        assert_eq!(median(&[1, 4]), Some(2));
        assert_eq!(median(&[-3, 0]), Some(-2));
        assert_eq!(median(&[7]), Some(7));
        assert_eq!(median(&[]), None);
    }

    fn three_nodes(quorum: u32) -> OracleConfig {
        OracleConfig {
            nodes: vec![addr("n1"), addr("n2"), addr("n3")],
            quorum,
            ..OracleConfig::single(addr("n1"))
        }
    }

    #[test]
    fn aggregation_uses_median_and_splits_fee() {
        let (mut b, contract) = bridge(LINK, three_nodes(3));
        let id = b
            .request_data(contract, "SKU-1", OracleField::Temperature, 100, None, CLOCK)
            .unwrap();
        assert_eq!(
            b.fulfill(addr("n1"), &id, JobOutcome::Value(1), CLOCK),
            Err(OracleError::AggregationRequired)
        );
        let responses = [
            NodeResponse { node: addr("n1"), value: 2340 },
            NodeResponse { node: addr("n2"), value: 2350 },
            NodeResponse { node: addr("n3"), value: 9999 },
        ];
        assert_eq!(
            b.aggregate_fulfill(addr("n1"), &id, &responses, CLOCK),
            Ok(Settlement::Fulfilled { value: 2350 })
        );
        assert_eq!(b.balance(&addr("n1")), 34);
        assert_eq!(b.balance(&addr("n2")), 33);
        assert_eq!(b.balance(&addr("n3")), 33);
        assert_eq!(b.total_supply(), LINK);
    }

    #[test]
    fn single_node_aggregation_matches_fulfill() {
        let node = addr("node");
        let (mut a, contract) = bridge(LINK, OracleConfig::single(node));
        let mut b = a.clone();
        let id_a = a
            .request_data(contract, "S", OracleField::Temperature, 10, None, CLOCK)
            .unwrap();
        let id_b = b
            .request_data(contract, "S", OracleField::Temperature, 10, None, CLOCK)
            .unwrap();
        a.fulfill(node, &id_a, JobOutcome::Value(5), CLOCK).unwrap();
        b.aggregate_fulfill(node, &id_b, &[NodeResponse { node, value: 5 }], CLOCK)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_quorum_refunds() {
        let (mut b, contract) = bridge(LINK, three_nodes(3));
        let id = b
            .request_data(contract, "SKU-1", OracleField::Temperature, 100, None, CLOCK)
            .unwrap();
        let responses = [
            NodeResponse { node: addr("n1"), value: 1 },
            NodeResponse { node: addr("n2"), value: 2 },
        ];
        assert_eq!(
            b.aggregate_fulfill(addr("n1"), &id, &responses, CLOCK),
            Ok(Settlement::Refunded(RefundReason::QuorumNotReached))
        );
        assert_eq!(b.balance(&contract), LINK);
        assert_eq!(b.escrow(), 0);
    }

    #[test]
    fn duplicate_responder_rejected() {
        let (mut b, contract) = bridge(LINK, three_nodes(2));
        let id = b
            .request_data(contract, "S", OracleField::Temperature, 100, None, CLOCK)
            .unwrap();
        let r = NodeResponse { node: addr("n1"), value: 1 };
        assert_eq!(
            b.aggregate_fulfill(addr("n1"), &id, &[r, r], CLOCK),
            Err(OracleError::DuplicateResponder(addr("n1")))
        );
    }

    #[test]
    fn expiry_after_timeout() {
        let node = addr("node");
        let (mut b, contract) = bridge(LINK, OracleConfig::single(node));
        let id = b
            .request_data(contract, "S", OracleField::Temperature, 100, None, CLOCK)
            .unwrap();
        let early = Clock { height: 2, timestamp_ms: 60_999 };
        assert_eq!(b.expire(&id, early), Err(OracleError::NotExpired(id)));
        let late = Clock { height: 3, timestamp_ms: 61_000 };
        assert_eq!(b.expire(&id, late), Ok(Settlement::Refunded(RefundReason::Expired)));
        assert_eq!(b.balance(&contract), LINK);
    }

    #[test]
    fn link_formatting() {
        assert_eq!(format_link(LINK / 2), "0.5");
        assert_eq!(format_link(LINK / 8), "0.125");
        assert_eq!(format_link(3 * LINK), "3");
    }

    #[test]
    fn snapshot_entries_round_trip() {
        let node = addr("node");
        let (mut b, contract) = bridge(LINK, OracleConfig::single(node));
        let id = b
            .request_data(contract, "SKU-1", OracleField::Latitude, 7, None, CLOCK)
            .unwrap();
        b.fulfill(node, &id, JobOutcome::Value(-5), CLOCK).unwrap();
        let mut entries = Vec::new();
        b.snapshot_entries(&mut entries);
        let back = OracleBridge::from_snapshot_entries(
            entries.iter().map(|(k, v)| (k.as_str(), v.as_slice())),
        )
        .unwrap();
        assert_eq!(back, b);
    }
}
