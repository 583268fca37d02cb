//! Telemetry sink: verifies messages, applies threshold rules and keeps the
//! latest-value and audit tables.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use pharmachain_core::crypto::PublicKey;

use crate::reading::{MessageError, SignedReading, TelemetryReading};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<=")]
    Le,
}

impl Comparator {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Gt => value > threshold,
            Comparator::Lt => value < threshold,
            Comparator::Ge => value >= threshold,
            Comparator::Le => value <= threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleAction {
    Audit,
    Notify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub name: String,
    /// Reading key: temp, hum, lat or lng.
    pub field: String,
    pub comparator: Comparator,
    pub threshold: f64,
    pub actions: Vec<RuleAction>,
}

impl Rule {
    pub fn default_set() -> Vec<Rule> {
        vec![Rule {
            name: "temperature-above-25".into(),
            field: "temp".into(),
            comparator: Comparator::Gt,
            threshold: 25.0,
            actions: vec![RuleAction::Audit, RuleAction::Notify],
        }]
    }

    pub fn violated_by(&self, r: &TelemetryReading) -> bool {
        r.channel(&self.field).is_some_and(|v| self.comparator.holds(v, self.threshold))
    }

    fn has(&self, a: RuleAction) -> bool {
        self.actions.contains(&a)
    }
}

/// Rules file plus notification recipients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
    #[serde(default)]
    pub recipients: Vec<String>,
}

impl Default for RuleSet {
    fn default() -> Self {
        Self {
            rules: Rule::default_set(),
            recipients: Vec::new(),
        }
    }
}

impl RuleSet {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)?;
        let set: RuleSet = serde_json::from_str(&text).map_err(|e| GatewayError::BadRules(e.to_string()))?;
        for r in &set.rules {
            if !["temp", "hum", "lat", "lng"].contains(&r.field.as_str()) {
                return Err(GatewayError::BadRules(format!("rule {} uses unknown field {}", r.name, r.field)));
            }
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AuditRow {
    pub reading: TelemetryReading,
    pub node_id: String,
    pub rule: String,
    pub recorded_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Notification {
    pub recipients: Vec<String>,
    pub subject: String,
    pub body: String,
    pub sent_at_ms: u64,
}

pub trait NotificationSink: Send + Sync {
    fn send(&self, n: &Notification) -> io::Result<()>;
}

/// Keeps notifications in memory; clones share the same list.
#[derive(Clone, Default)]
pub struct MemorySink(Arc<Mutex<Vec<Notification>>>);

impl MemorySink {
    pub fn sent(&self) -> Vec<Notification> {
        self.0.lock().unwrap().clone()
    }
}

impl NotificationSink for MemorySink {
    fn send(&self, n: &Notification) -> io::Result<()> {
        self.0.lock().unwrap().push(n.clone());
        Ok(())
    }
}

/// Appends one JSON object per line to an outbox file.
pub struct OutboxSink {
    path: PathBuf,
    file: Mutex<File>,
}

impl OutboxSink {
    pub fn open(path: impl Into<PathBuf>) -> io::Result<Self> {
        let path = path.into();
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl NotificationSink for OutboxSink {
    fn send(&self, n: &Notification) -> io::Result<()> {
        let mut line = serde_json::to_vec(n)?;
        line.push(b'\n');
        self.file.lock().unwrap().write_all(&line)
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("gateway storage: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt gateway log {file} line {line}")]
    CorruptLog { file: &'static str, line: usize },
    #[error("bad rules file: {0}")]
    BadRules(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GatewayStats {
    pub accepted: u64,
    pub duplicates: u64,
    pub rejected_malformed: u64,
    pub rejected_bad_signature: u64,
    pub rejected_unknown_node: u64,
    pub audit_rows: u64,
    pub notifications: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Consumed {
    /// Names of the rules the reading violated.
    Accepted { violations: Vec<String> },
    Duplicate,
}

const ACCEPTED_LOG: &str = "accepted.log";
const AUDIT_LOG: &str = "audit.log";

struct Logs {
    accepted: File,
    audit: File,
}

type Clock = Box<dyn Fn() -> u64 + Send + Sync>;

pub struct Gateway {
    nodes: HashMap<String, PublicKey>,
    rules: RuleSet,
    latest: HashMap<String, TelemetryReading>,
    audit: BTreeMap<String, Vec<AuditRow>>,
    seen: HashSet<(String, u64, String)>,
    stats: GatewayStats,
    sink: Box<dyn NotificationSink>,
    logs: Option<Logs>,
    clock: Clock,
}

fn wall_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default().as_millis() as u64
}

impl Gateway {
    pub fn new(rules: RuleSet, sink: Box<dyn NotificationSink>) -> Self {
        Self {
            nodes: HashMap::new(),
            rules,
            latest: HashMap::new(),
            audit: BTreeMap::new(),
            seen: HashSet::new(),
            stats: GatewayStats::default(),
            sink,
            logs: None,
            clock: Box::new(wall_ms),
        }
    }

    /// Opens a persistent gateway in `dir`, replaying earlier logs. Replayed
    /// readings rebuild the latest table; audit rows are restored as written
    /// and not re-notified.
    pub fn open(dir: impl AsRef<Path>, rules: RuleSet, sink: Box<dyn NotificationSink>) -> Result<Self, GatewayError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut gw = Self::new(rules, sink);
        for (i, line) in read_lines(&dir.join(ACCEPTED_LOG))?.into_iter().enumerate() {
            let msg = SignedReading::from_json(line.as_bytes())
                .map_err(|_| GatewayError::CorruptLog { file: ACCEPTED_LOG, line: i + 1 })?;
            gw.seen.insert(dedup_key(&msg));
            gw.update_latest(&msg.reading);
            gw.stats.accepted += 1;
        }
        for (i, line) in read_lines(&dir.join(AUDIT_LOG))?.into_iter().enumerate() {
            let row: AuditRow = serde_json::from_str(&line)
                .map_err(|_| GatewayError::CorruptLog { file: AUDIT_LOG, line: i + 1 })?;
            gw.audit.entry(row.reading.sku.clone()).or_default().push(row);
            gw.stats.audit_rows += 1;
        }
        let append = |name| OpenOptions::new().create(true).append(true).open(dir.join(name));
        gw.logs = Some(Logs {
            accepted: append(ACCEPTED_LOG)?,
            audit: append(AUDIT_LOG)?,
        });
        Ok(gw)
    }

    pub fn with_clock(mut self, clock: impl Fn() -> u64 + Send + Sync + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn register_node(&mut self, node_id: &str, key: PublicKey) {
        self.nodes.insert(node_id.to_string(), key);
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn stats(&self) -> GatewayStats {
        self.stats
    }

    pub fn latest(&self, sku: &str) -> Option<&TelemetryReading> {
        self.latest.get(sku)
    }

    /// Audit rows for `sku` whose reading timestamp lies in `[from, to]`,
    /// in reading-time order.
    pub fn audit(&self, sku: &str, from: Option<u64>, to: Option<u64>) -> Vec<AuditRow> {
        let mut rows: Vec<AuditRow> = self
            .audit
            .get(sku)
            .into_iter()
            .flatten()
            .filter(|r| from.is_none_or(|f| r.reading.timestamp >= f) && to.is_none_or(|t| r.reading.timestamp <= t))
            .cloned()
            .collect();
        rows.sort_by_key(|r| r.reading.timestamp);
        rows
    }

    pub fn audit_len(&self) -> usize {
        self.audit.values().map(Vec::len).sum()
    }

    /// Verifies and applies one wire message.
    pub fn consume(&mut self, bytes: &[u8]) -> Result<Consumed, MessageError> {
        let msg = match SignedReading::from_json(bytes) {
            Ok(m) => m,
            Err(e) => {
                self.stats.rejected_malformed += 1;
                return Err(e);
            }
        };
        let Some(key) = self.nodes.get(&msg.node_id) else {
            self.stats.rejected_unknown_node += 1;
            return Err(MessageError::UnknownNode(msg.node_id));
        };
        if let Err(e) = msg.verify(key) {
            self.stats.rejected_bad_signature += 1;
            return Err(e);
        }
        let key = dedup_key(&msg);
        if self.seen.contains(&key) {
            self.stats.duplicates += 1;
            return Ok(Consumed::Duplicate);
        }
        self.seen.insert(key);
        self.stats.accepted += 1;
        if let Some(logs) = &mut self.logs {
            let mut line = msg.to_json();
            line.push(b'\n');
            if let Err(e) = logs.accepted.write_all(&line).and_then(|_| logs.accepted.sync_data()) {
                tracing::error!("writing accepted log: {e}");
            }
        }
        self.update_latest(&msg.reading);

        let now = (self.clock)();
        let mut violations = Vec::new();
        let rules = self.rules.rules.clone();
        for rule in rules.iter().filter(|r| r.violated_by(&msg.reading)) {
            violations.push(rule.name.clone());
            if rule.has(RuleAction::Audit) {
                let row = AuditRow {
                    reading: msg.reading.clone(),
                    node_id: msg.node_id.clone(),
                    rule: rule.name.clone(),
                    recorded_at_ms: now,
                };
                if let Some(logs) = &mut self.logs {
                    let mut line = serde_json::to_vec(&row).expect("audit row serializes");
                    line.push(b'\n');
                    if let Err(e) = logs.audit.write_all(&line).and_then(|_| logs.audit.sync_data()) {
                        tracing::error!("writing audit log: {e}");
                    }
                }
                self.audit.entry(row.reading.sku.clone()).or_default().push(row);
                self.stats.audit_rows += 1;
            }
            if rule.has(RuleAction::Notify) {
                let n = notification(&self.rules.recipients, rule, &msg, now);
                match self.sink.send(&n) {
                    Ok(()) => self.stats.notifications += 1,
                    Err(e) => tracing::error!("notification sink: {e}"),
                }
            }
        }
        Ok(Consumed::Accepted { violations })
    }

    fn update_latest(&mut self, r: &TelemetryReading) {
        let newer = self.latest.get(&r.sku).is_none_or(|cur| r.timestamp >= cur.timestamp);
        if newer {
            self.latest.insert(r.sku.clone(), r.clone());
        }
    }
}

fn dedup_key(m: &SignedReading) -> (String, u64, String) {
    (m.node_id.clone(), m.reading.timestamp, m.reading.sku.clone())
}

fn notification(recipients: &[String], rule: &Rule, msg: &SignedReading, now: u64) -> Notification {
    let r = &msg.reading;
    Notification {
        recipients: recipients.to_vec(),
        subject: format!("[{}] {} {} {}", rule.name, r.sku, rule.field, r.channel(&rule.field).unwrap_or_default()),
        body: serde_json::json!({
            "rule": rule.name,
            "nodeId": msg.node_id,
            "reading": r,
        })
        .to_string(),
        sent_at_ms: now,
    }
}

fn read_lines(path: &Path) -> io::Result<Vec<String>> {
    match File::open(path) {
        Ok(f) => BufReader::new(f)
            .lines()
            .filter(|l| !matches!(l, Ok(s) if s.is_empty()))
            .collect(),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(e),
    }
}

/// Gateway shared between the consumer and HTTP readers.
pub type SharedGateway = Arc<RwLock<Gateway>>;

pub fn shared(gw: Gateway) -> SharedGateway {
    Arc::new(RwLock::new(gw))
}

/// Consumes messages on a background thread until the source ends.
pub fn spawn_consumer<I>(gw: SharedGateway, source: I) -> std::thread::JoinHandle<()>
where
    I: IntoIterator<Item = (String, Vec<u8>)> + Send + 'static,
{
    std::thread::spawn(move || {
        for (_topic, payload) in source {
            if let Err(e) = gw.write().unwrap().consume(&payload) {
                tracing::warn!("rejected telemetry: {e}");
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reading::sample;
    use pharmachain_core::crypto::KeyPair;

    fn gw() -> (Gateway, MemorySink, KeyPair) {
        let sink = MemorySink::default();
        let mut g = Gateway::new(RuleSet::default(), Box::new(sink.clone())).with_clock(|| 42);
        let k = KeyPair::from_label("node");
        g.register_node("n1", k.public_key());
        (g, sink, k)
    }

    fn msg(k: &KeyPair, ts: u64, temp: f64) -> Vec<u8> {
        SignedReading::sign(sample("SKU-1", ts, temp), "n1", k).to_json()
    }

    #[test]
    fn comparators() {
        assert!(Comparator::Gt.holds(26.0, 25.0));
        assert!(!Comparator::Gt.holds(25.0, 25.0));
        assert!(Comparator::Ge.holds(25.0, 25.0));
        assert!(Comparator::Lt.holds(1.0, 2.0));
        assert!(Comparator::Le.holds(2.0, 2.0));
    }

    #[test]
    fn strict_threshold() {
        let (mut g, sink, k) = gw();
        for (ts, t) in [(1, 24.0), (2, 25.0), (3, 26.0)] {
            g.consume(&msg(&k, ts, t)).unwrap();
        }
        let rows = g.audit("SKU-1", None, None);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].reading.temp, 26.0);
        assert_eq!(rows[0].recorded_at_ms, 42);
        assert_eq!(sink.sent().len(), 1);
        assert_eq!(g.latest("SKU-1").unwrap().temp, 26.0);
    }

    #[test]
    fn latest_uses_max_timestamp() {
        let (mut g, _, k) = gw();
        g.consume(&msg(&k, 100, 20.0)).unwrap();
        g.consume(&msg(&k, 50, 21.0)).unwrap();
        assert_eq!(g.latest("SKU-1").unwrap().timestamp, 100);
    }

    #[test]
    fn duplicates_and_rejections_are_counted() {
        let (mut g, sink, k) = gw();
        let m = msg(&k, 7, 30.0);
        assert!(matches!(g.consume(&m).unwrap(), Consumed::Accepted { .. }));
        assert_eq!(g.consume(&m).unwrap(), Consumed::Duplicate);
        assert_eq!(g.audit_len(), 1);
        assert_eq!(sink.sent().len(), 1);

        let mut forged = SignedReading::from_json(&msg(&k, 8, 20.0)).unwrap();
        forged.reading.temp = 30.0;
        assert_eq!(g.consume(&forged.to_json()), Err(MessageError::BadSignature));
        assert!(matches!(g.consume(b"{}"), Err(MessageError::Malformed(_))));
        let stranger = SignedReading::sign(sample("SKU-1", 9, 1.0), "n9", &k).to_json();
        assert!(matches!(g.consume(&stranger), Err(MessageError::UnknownNode(_))));
        let s = g.stats();
        assert_eq!((s.accepted, s.duplicates, s.rejected_bad_signature, s.rejected_malformed, s.rejected_unknown_node), (1, 1, 1, 1, 1));
    }

    #[test]
    fn audit_range_filter() {
        let (mut g, _, k) = gw();
        for ts in [10, 20, 30] {
            g.consume(&msg(&k, ts, 27.0)).unwrap();
        }
        assert_eq!(g.audit("SKU-1", Some(15), Some(30)).len(), 2);
        assert!(g.audit("SKU-1", Some(40), None).is_empty());
        assert!(g.audit("SKU-2", None, None).is_empty());
    }

    #[test]
    fn rules_file_parses() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rules.json");
        std::fs::write(
            &p,
            r#"{"rules":[{"name":"dry","field":"hum","comparator":"<","threshold":20,"actions":["audit"]}],
                "recipients":["qa@example.com"]}"#,
        )
        .unwrap();
        let set = RuleSet::load(&p).unwrap();
        assert_eq!(set.rules[0].comparator, Comparator::Lt);
        std::fs::write(&p, r#"{"rules":[{"name":"x","field":"co2","comparator":">","threshold":1,"actions":[]}]}"#).unwrap();
        assert!(RuleSet::load(&p).is_err());
    }
}
