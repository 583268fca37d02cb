//! Replayable sensor profiles: breakpoints with linear interpolation.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("malformed scenario: {0}")]
    Malformed(String),
    #[error("reading scenario: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    /// Seconds from scenario start.
    pub t: f64,
    pub lat: f64,
    pub lng: f64,
    pub temp: f64,
    pub hum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Jitter {
    /// Standard deviation applied to temp and hum.
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Scenario {
    pub sku: String,
    #[serde(default)]
    pub lot: String,
    #[serde(default)]
    pub drug_name: String,
    #[serde(default)]
    pub jitter: Jitter,
    pub breakpoints: Vec<Breakpoint>,
}

/// Interpolated channel values at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub lat: f64,
    pub lng: f64,
    pub temp: f64,
    pub hum: f64,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(json: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(json).map_err(|e| ScenarioError::Malformed(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// Constant profile, handy for tests.
    pub fn steady(sku: &str, temp: f64, hum: f64) -> Self {
        Scenario {
            sku: sku.into(),
            lot: "LOT-1".into(),
            drug_name: "Paracetamol 500mg".into(),
            jitter: Jitter::default(),
            breakpoints: vec![Breakpoint {
                t: 0.0,
                lat: 43.6532,
                lng: -79.3832,
                temp,
                hum,
            }],
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Malformed(m));
        if self.sku.is_empty() {
            return bad("empty sku".into());
        }
        if self.breakpoints.is_empty() {
            return bad("no breakpoints".into());
        }
        for w in self.breakpoints.windows(2) {
            if w[1].t <= w[0].t {
                return bad(format!("breakpoint times not increasing at t={}", w[1].t));
            }
        }
        for b in &self.breakpoints {
            let finite = [b.t, b.lat, b.lng, b.temp, b.hum].iter().all(|v| v.is_finite());
            if !finite || b.t < 0.0 {
                return bad(format!("bad breakpoint at t={}", b.t));
            }
            if !(-90.0..=90.0).contains(&b.lat) || !(-180.0..=180.0).contains(&b.lng) {
                return bad(format!("position out of range at t={}", b.t));
            }
            if !(0.0..=100.0).contains(&b.hum) {
                return bad(format!("humidity out of range at t={}", b.t));
            }
        }
        if !(self.jitter.sigma >= 0.0 && self.jitter.sigma.is_finite()) {
            return bad("negative jitter".into());
        }
        Ok(())
    }

    /// Noise-free values at `t` seconds.
    pub fn at(&self, t: f64) -> Sample {
        let bp = &self.breakpoints;
        let first = bp[0];
        let last = bp[bp.len() - 1];
        let pick = |b: Breakpoint| Sample {
            lat: b.lat,
            lng: b.lng,
            temp: b.temp,
            hum: b.hum,
        };
        if t <= first.t {
            return pick(first);
        }
        if t >= last.t {
            return pick(last);
        }
        let i = bp.partition_point(|b| b.t <= t);
        let (a, b) = (bp[i - 1], bp[i]);
        let f = (t - a.t) / (b.t - a.t);
        let lerp = |x: f64, y: f64| x + (y - x) * f;
        Sample {
            lat: lerp(a.lat, b.lat),
            lng: lerp(a.lng, b.lng),
            temp: lerp(a.temp, b.temp),
            hum: lerp(a.hum, b.hum),
        }
    }

    /// Sampler that applies the configured jitter deterministically.
    pub fn sampler(&self) -> Sampler<'_> {
        Sampler {
            scenario: self,
            rng: ChaCha8Rng::seed_from_u64(self.jitter.seed),
            noise: (self.jitter.sigma > 0.0).then(|| Normal::new(0.0, self.jitter.sigma).expect("sigma validated")),
        }
    }
}

pub struct Sampler<'a> {
    scenario: &'a Scenario,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
}

impl Sampler<'_> {
    pub fn sample(&mut self, t: f64) -> Sample {
        let mut s = self.scenario.at(t);
        if let Some(n) = &self.noise {
            s.temp += n.sample(&mut self.rng);
            s.hum = (s.hum + n.sample(&mut self.rng)).clamp(0.0, 100.0);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_between_breakpoints() {
        let s = Scenario::parse(
            r#"{"sku":"S","breakpoints":[
                {"t":0,"lat":0,"lng":0,"temp":20,"hum":40},
                {"t":100,"lat":10,"lng":20,"temp":30,"hum":60}]}"#,
        )
        .unwrap();
        let m = s.at(50.0);
        assert_eq!(m.temp, 25.0);
        assert_eq!(m.hum, 50.0);
        assert_eq!(m.lat, 5.0);
        assert_eq!(s.at(-5.0).temp, 20.0);
        assert_eq!(s.at(500.0).temp, 30.0);
    }

    #[test]
    fn single_breakpoint_is_constant() {
        let s = Scenario::steady("S", 22.0, 45.0);
        for t in [0.0, 60.0, 1e6] {
            assert_eq!(s.at(t).temp, 22.0);
        }
    }

    #[test]
    fn malformed_scenarios() {
        for bad in [
            r#"{"sku":"S","breakpoints":[]}"#,
            r#"{"sku":"S","breakpoints":[{"t":5,"lat":0,"lng":0,"temp":1,"hum":1},{"t":5,"lat":0,"lng":0,"temp":1,"hum":1}]}"#,
            r#"{"sku":"S","breakpoints":[{"t":0,"lat":91,"lng":0,"temp":1,"hum":1}]}"#,
            r#"{"sku":"S"}"#,
            "[]",
        ] {
            assert!(matches!(Scenario::parse(bad), Err(ScenarioError::Malformed(_))), "{bad}");
        }
    }

    #[test]
    fn jitter_is_seeded() {
        let mut s = Scenario::steady("S", 22.0, 45.0);
        s.jitter = Jitter { sigma: 0.5, seed: 9 };
        let a: Vec<f64> = { let mut x = s.sampler(); (0..10).map(|i| x.sample(i as f64).temp).collect() };
        let b: Vec<f64> = { let mut x = s.sampler(); (0..10).map(|i| x.sample(i as f64).temp).collect() };
        assert_eq!(a, b);
        assert!(a.iter().any(|t| *t != 22.0));
    }
}
