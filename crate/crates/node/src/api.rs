//! JSON-over-HTTP node API.
//!
//! Error bodies are `{"error": {"code", "message", "kind"?}}`; `kind` is
//! the guard modifier name (`onlyManufacturer`, `verifyCaller(ownerID)`,
//! ...) for `GuardFailed`. Status codes: 400 malformed request, 401 unknown
//! account, 404 unknown operation or resource, 409 rejected by the
//! contract.

use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};

use pharmachain_core::contract::{ItemDetails, Operation};
use pharmachain_core::crypto::{Address, Hash32};
use pharmachain_core::ledger::{LedgerError, TxFailure};
use pharmachain_core::oracle::{OracleField, RequestStatus};
use pharmachain_core::provenance::verify_authenticity;

use crate::keystore::KeystoreError;
use crate::service::{NodeError, SharedNode};

const MINE_TIMEOUT: Duration = Duration::from_secs(30);

pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
    kind: Option<String>,
    extra: Option<Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.into(),
            message: message.into(),
            kind: None,
            extra: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BadRequest", message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut err = json!({ "code": self.code, "message": self.message });
        if let Some(k) = self.kind {
            err["kind"] = json!(k);
        }
        let mut body = json!({ "error": err });
        if let Some(Value::Object(extra)) = self.extra {
            for (k, v) in extra {
                body[k] = v;
            }
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<NodeError> for ApiError {
    fn from(e: NodeError) -> Self {
        let msg = e.to_string();
        match e {
            NodeError::Keystore(KeystoreError::UnknownAccount(_)) => {
                ApiError::new(StatusCode::UNAUTHORIZED, "UnknownAccount", msg)
            }
            NodeError::Keystore(KeystoreError::Exists(_)) => ApiError::new(StatusCode::CONFLICT, "AccountExists", msg),
            NodeError::Keystore(KeystoreError::BadName(_)) => ApiError::bad_request(msg),
            NodeError::Keystore(_) | NodeError::MissingValidatorKey(_) => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", msg)
            }
            NodeError::Ledger(le) => {
                let status = match &le {
                    LedgerError::UnknownOperation(_) => StatusCode::NOT_FOUND,
                    LedgerError::BadArguments(_) => StatusCode::BAD_REQUEST,
                    LedgerError::InvalidSignature => StatusCode::UNAUTHORIZED,
                    LedgerError::BadNonce { .. } | LedgerError::DuplicateTransaction(_) => StatusCode::CONFLICT,
                    _ => StatusCode::INTERNAL_SERVER_ERROR,
                };
                ApiError::new(status, le.code(), msg)
            }
        }
    }
}

/// Status for a transaction the contract rejected.
pub fn failure_status(f: &TxFailure) -> StatusCode {
    match f.code.as_str() {
        "UnknownUPC" | "UnknownRequest" => StatusCode::NOT_FOUND,
        "BadArguments" => StatusCode::BAD_REQUEST,
        _ => StatusCode::CONFLICT,
    }
}

fn body<T>(r: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    r.map(|Json(v)| v).map_err(|e| ApiError::bad_request(e.body_text()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TxRequest {
    account: String,
    #[serde(default)]
    args: Value,
    /// Return as soon as the transaction is queued.
    #[serde(default = "yes")]
    wait: bool,
}

fn yes() -> bool {
    true
}

async fn submit_tx(
    State(node): State<SharedNode>,
    Path(operation): Path<String>,
    req: Result<Json<TxRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let req = body(req)?;
    let op = Operation::from_json(&operation, &req.args).map_err(|e| NodeError::Ledger(e.into()))?;
    let id = node.submit(&req.account, &op)?;
    if !req.wait {
        return Ok((StatusCode::ACCEPTED, Json(json!({ "txId": id, "status": "pending" }))).into_response());
    }
    let Some(outcome) = node.wait_mined(&id, MINE_TIMEOUT).await else {
        return Ok((StatusCode::ACCEPTED, Json(json!({ "txId": id, "status": "pending" }))).into_response());
    };
    match &outcome.receipt.failure {
        None => Ok(Json(outcome).into_response()),
        Some(f) => Err(ApiError {
            status: failure_status(f),
            code: f.code.clone(),
            message: f.message.clone(),
            kind: f.guard.clone(),
            extra: Some(json!({ "txId": id, "blockHeight": outcome.block_height, "receipt": outcome.receipt })),
        }),
    }
}

fn parse_upc(s: &str) -> Result<u64, ApiError> {
    s.parse().map_err(|_| ApiError::bad_request(format!("{s:?} is not a upc")))
}

async fn item(State(node): State<SharedNode>, Path(upc): Path<String>) -> Result<Response, ApiError> {
    let upc = parse_upc(&upc)?;
    let ledger = node.ledger();
    let item = ledger.state().item(upc).ok_or_else(|| ApiError::not_found(format!("unknown upc {upc}")))?;
    Ok(Json(ItemDetails::from(item)).into_response())
}

async fn provenance(State(node): State<SharedNode>, Path(upc): Path<String>) -> Result<Response, ApiError> {
    let upc = parse_upc(&upc)?;
    let ledger = node.ledger();
    if ledger.state().item(upc).is_none() {
        return Err(ApiError::not_found(format!("unknown upc {upc}")));
    }
    Ok(Json(verify_authenticity(&ledger, upc)).into_response())
}

async fn roles(State(node): State<SharedNode>, Path(address): Path<String>) -> Result<Response, ApiError> {
    let addr: Address = address.parse().map_err(|_| ApiError::bad_request(format!("{address:?} is not an address")))?;
    let ledger = node.ledger();
    let reg = ledger.state().roles();
    let roles: Vec<&str> = reg.roles_of(&addr).iter().map(|r| r.name()).collect();
    Ok(Json(json!({ "address": addr, "owner": reg.owner() == &addr, "roles": roles })).into_response())
}

async fn chain_verify(State(node): State<SharedNode>) -> Response {
    Json(node.ledger().verify_chain()).into_response()
}

async fn chain_head(State(node): State<SharedNode>) -> Response {
    let l = node.ledger();
    let tip = l.tip();
    Json(json!({
        "height": tip.height,
        "blockHash": tip.block_hash,
        "timestampMs": tip.timestamp_ms,
        "stateRoot": tip.state_root,
        "pendingTransactions": l.pending_transactions(),
        "nextValidator": l.next_validator(),
    }))
    .into_response()
}

async fn block(State(node): State<SharedNode>, Path(height): Path<String>) -> Result<Response, ApiError> {
    let h: u64 = height.parse().map_err(|_| ApiError::bad_request("height must be an integer"))?;
    let l = node.ledger();
    let b = l.block(h).ok_or_else(|| ApiError::not_found(format!("no block {h}")))?;
    Ok(Json(b).into_response())
}

#[derive(Deserialize)]
struct RequestFilter {
    status: Option<String>,
}

async fn oracle_requests(State(node): State<SharedNode>, Query(q): Query<RequestFilter>) -> Result<Response, ApiError> {
    let l = node.ledger();
    let want = q.status.as_deref();
    if let Some(s) = want {
        if !["pending", "fulfilled", "failed", "refunded"].contains(&s) {
            return Err(ApiError::bad_request(format!("unknown status {s:?}")));
        }
    }
    let reqs: Vec<_> = l
        .state()
        .oracle()
        .requests()
        .filter(|r| {
            want.is_none_or(|s| match &r.status {
                RequestStatus::Pending => s == "pending",
                RequestStatus::Fulfilled { .. } => s == "fulfilled",
                RequestStatus::Failed { .. } => s == "failed",
                RequestStatus::Refunded { .. } => s == "refunded",
            })
        })
        .cloned()
        .collect();
    Ok(Json(reqs).into_response())
}

async fn oracle_request(State(node): State<SharedNode>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let id: Hash32 = id.parse().map_err(|_| ApiError::bad_request("malformed request id"))?;
    let l = node.ledger();
    let r = l
        .state()
        .oracle()
        .request(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown oracle request {id}")))?;
    Ok(Json(r).into_response())
}

async fn oracle_values(State(node): State<SharedNode>, Path(sku): Path<String>) -> Response {
    let l = node.ledger();
    let mut out = serde_json::Map::new();
    for f in OracleField::ALL {
        if let Some(v) = l.state().oracle().value(&sku, f) {
            out.insert(
                f.name().into(),
                json!({ "value": v.value, "decimal": f.unscale(v.value), "requestId": v.request_id, "blockHeight": v.height }),
            );
        }
    }
    Json(json!({ "sku": sku, "values": out })).into_response()
}

async fn link_balance(State(node): State<SharedNode>, Path(address): Path<String>) -> Result<Response, ApiError> {
    let addr: Address = address.parse().map_err(|_| ApiError::bad_request("malformed address"))?;
    let l = node.ledger();
    let amount = l.state().oracle().balance(&addr);
    Ok(Json(json!({ "address": addr, "balance": amount.to_string(), "link": pharmachain_core::oracle::format_link(amount) })).into_response())
}

#[derive(Deserialize)]
struct EventFilter {
    upc: Option<String>,
}

async fn events(State(node): State<SharedNode>, Query(q): Query<EventFilter>) -> Result<Response, ApiError> {
    let upc = q.upc.as_deref().map(parse_upc).transpose()?;
    Ok(Json(node.events(upc)).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewAccount {
    name: String,
}

async fn create_account(State(node): State<SharedNode>, req: Result<Json<NewAccount>, JsonRejection>) -> Result<Response, ApiError> {
    let req = body(req)?;
    let info = node.keystore().create(&req.name).map_err(NodeError::from)?;
    Ok((StatusCode::CREATED, Json(info)).into_response())
}

async fn list_accounts(State(node): State<SharedNode>) -> Response {
    let ks = node.keystore();
    let ledger = node.ledger();
    let list: Vec<Value> = ks
        .list()
        .into_iter()
        .map(|a| {
            let roles: Vec<&str> = ledger.state().roles().roles_of(&a.address).iter().map(|r| r.name()).collect();
            json!({ "name": a.name, "address": a.address, "roles": roles })
        })
        .collect();
    Json(list).into_response()
}

async fn health() -> Response {
    Json(json!({ "status": "ok" })).into_response()
}

async fn fallback() -> ApiError {
    ApiError::not_found("no such endpoint")
}

pub fn router(node: SharedNode) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/tx/{operation}", post(submit_tx))
        .route("/items/{upc}", get(item))
        .route("/items/{upc}/provenance", get(provenance))
        .route("/roles/{address}", get(roles))
        .route("/chain/verify", get(chain_verify))
        .route("/chain/head", get(chain_head))
        .route("/blocks/{height}", get(block))
        .route("/oracle/requests", get(oracle_requests))
        .route("/oracle/requests/{id}", get(oracle_request))
        .route("/oracle/values/{sku}", get(oracle_values))
        .route("/link/{address}", get(link_balance))
        .route("/events", get(events))
        .route("/accounts", get(list_accounts).post(create_account))
        .fallback(fallback)
        .with_state(node)
}
