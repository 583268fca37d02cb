//! Simulated shipment-tracking device: samples a scenario on a fixed
//! cadence and publishes signed readings.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use pharmachain_core::crypto::{KeyPair, PublicKey};

use crate::broker::{Publisher, DEFAULT_TOPIC};
use crate::reading::{SignedReading, TelemetryReading};
use crate::scenario::{Sample, Scenario};

pub const DEFAULT_INTERVAL_SECS: u64 = 60;
pub const DEFAULT_QUEUE_CAPACITY: usize = 256;

/// Outcome of one publication tick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublishStatus {
    pub timestamp: u64,
    /// True if this tick's reading reached the broker.
    pub published: bool,
    /// Readings still waiting for the broker after this tick.
    pub queued: usize,
}

pub struct SensingNode {
    node_id: String,
    key: KeyPair,
    scenario: Scenario,
    interval_secs: u64,
    topic: String,
    /// Epoch seconds at scenario t = 0.
    start: u64,
    queue: VecDeque<(u64, Vec<u8>)>,
    queue_capacity: usize,
    dropped: u64,
    /// Scenario time of the next simulated tick.
    next_t: u64,
}

impl SensingNode {
    pub fn new(node_id: &str, key: KeyPair, scenario: Scenario) -> Self {
        Self {
            node_id: node_id.to_string(),
            key,
            scenario,
            interval_secs: DEFAULT_INTERVAL_SECS,
            topic: DEFAULT_TOPIC.to_string(),
            start: 1_700_000_000,
            queue: VecDeque::new(),
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            dropped: 0,
            next_t: 0,
        }
    }

    pub fn with_interval(mut self, secs: u64) -> Self {
        assert!(secs > 0, "interval must be positive");
        self.interval_secs = secs;
        self
    }

    pub fn with_topic(mut self, topic: &str) -> Self {
        self.topic = topic.to_string();
        self
    }

    pub fn with_start(mut self, epoch_secs: u64) -> Self {
        self.start = epoch_secs;
        self
    }

    pub fn with_queue_capacity(mut self, n: usize) -> Self {
        self.queue_capacity = n.max(1);
        self
    }

    pub fn node_id(&self) -> &str {
        &self.node_id
    }

    pub fn public_key(&self) -> PublicKey {
        self.key.public_key()
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn interval_secs(&self) -> u64 {
        self.interval_secs
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    /// Readings discarded because the queue was full.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    fn message(&self, timestamp: u64, s: Sample) -> SignedReading {
        // GPS to 6 places, DHT-class sensors to 2.
        let round = |v: f64, places: i32| (v * 10f64.powi(places)).round() / 10f64.powi(places);
        let reading = TelemetryReading {
            timestamp,
            lat: round(s.lat, 6),
            lng: round(s.lng, 6),
            sku: self.scenario.sku.clone(),
            lot: self.scenario.lot.clone(),
            drug_name: self.scenario.drug_name.clone(),
            temp: round(s.temp, 2),
            hum: round(s.hum, 2),
        };
        SignedReading::sign(reading, &self.node_id, &self.key)
    }

    /// Queues one reading and flushes as much of the queue as the broker
    /// accepts, oldest first.
    fn tick(&mut self, publisher: &mut dyn Publisher, msg: SignedReading) -> PublishStatus {
        let ts = msg.reading.timestamp;
        if self.queue.len() == self.queue_capacity {
            self.queue.pop_front();
            self.dropped += 1;
        }
        self.queue.push_back((ts, msg.to_json()));
        let mut published = false;
        while let Some((qts, bytes)) = self.queue.front() {
            match publisher.publish(&self.topic, bytes) {
                Ok(_) => {
                    published |= *qts == ts;
                    self.queue.pop_front();
                }
                Err(e) => {
                    tracing::warn!(node = %self.node_id, "publish failed, retrying next tick: {e}");
                    break;
                }
            }
        }
        PublishStatus {
            timestamp: ts,
            published,
            queued: self.queue.len(),
        }
    }

    /// Advances the simulated clock by `duration_secs`, publishing at every
    /// interval boundary in that window, both ends included. The first call
    /// starts at scenario t = 0; later calls continue where it stopped.
    pub fn run(&mut self, publisher: &mut dyn Publisher, duration_secs: u64) -> Vec<PublishStatus> {
        let scenario = self.scenario.clone();
        let mut sampler = scenario.sampler();
        let mut out = Vec::new();
        let end = self.next_t + duration_secs;
        while self.next_t <= end {
            let t = self.next_t;
            let msg = self.message(self.start + t, sampler.sample(t as f64));
            out.push(self.tick(publisher, msg));
            self.next_t += self.interval_secs;
        }
        out
    }

    /// The messages `run` would publish, without a broker.
    pub fn messages(&self, duration_secs: u64) -> Vec<SignedReading> {
        let mut sampler = self.scenario.sampler();
        (0..=duration_secs)
            .step_by(self.interval_secs as usize)
            .map(|t| self.message(self.start + t, sampler.sample(t as f64)))
            .collect()
    }

    /// Runs against the wall clock until `stop` is set. `interval` overrides
    /// the configured cadence; scenario time advances with elapsed seconds.
    pub fn run_live(&mut self, publisher: &mut dyn Publisher, interval: Duration, stop: &AtomicBool) -> Vec<PublishStatus> {
        let scenario = self.scenario.clone();
        let mut sampler = scenario.sampler();
        let began = std::time::Instant::now();
        let mut out = Vec::new();
        while !stop.load(Ordering::SeqCst) {
            let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default().as_secs();
            let elapsed = began.elapsed().as_secs_f64();
            let msg = self.message(now, sampler.sample(elapsed));
            out.push(self.tick(publisher, msg));
            let next = interval * out.len() as u32;
            while !stop.load(Ordering::SeqCst) && began.elapsed() < next {
                std::thread::sleep(Duration::from_millis(10).min(interval));
            }
        }
        out
    }
}
