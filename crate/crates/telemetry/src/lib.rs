//! Off-chain telemetry: sensing nodes, the pub/sub broker, the data gateway
//! and its HTTP API, and a load generator.

pub mod broker;
pub mod gateway;
pub mod http;
pub mod loadtest;
pub mod reading;
pub mod scenario;
pub mod sensing;

pub use broker::{Broker, BrokerClient, BrokerError, Bus, Publisher, DEFAULT_TOPIC};
pub use gateway::{Gateway, GatewayStats, MemorySink, OutboxSink, Rule, RuleSet, SharedGateway};
pub use http::GatewayServer;
pub use loadtest::{LoadReport, LoadTestError};
pub use reading::{MessageError, SignedReading, TelemetryReading};
pub use scenario::Scenario;
pub use sensing::SensingNode;
