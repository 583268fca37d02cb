//! Round-robin validator rotation and block-interval schedules.

use serde::{Deserialize, Serialize};

use crate::crypto::Address;

/// Validator for `height`: `validators[height mod n]`.
pub fn scheduled_validator(validators: &[Address], height: u64) -> Option<Address> {
    if validators.is_empty() {
        return None;
    }
    Some(validators[(height % validators.len() as u64) as usize])
}

/// Spacing between consecutive blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntervalSchedule {
    /// Produce only when asked (test mode).
    OnDemand,
    Fixed { interval_ms: u64 },
    /// Replays a recorded sequence of intervals, cycling when exhausted.
    Sequence { intervals_ms: Vec<u64> },
}

impl Default for IntervalSchedule {
    fn default() -> Self {
        IntervalSchedule::Fixed { interval_ms: 4_000 }
    }
}

impl IntervalSchedule {
    pub fn from_secs(secs: &[u64]) -> Self {
        IntervalSchedule::Sequence {
            intervals_ms: secs.iter().map(|s| s * 1000).collect(),
        }
    }

    /// Gap between block `height - 1` and block `height`, for `height >= 1`.
    pub fn interval_before(&self, height: u64) -> u64 {
        match self {
            IntervalSchedule::OnDemand => 0,
            IntervalSchedule::Fixed { interval_ms } => *interval_ms,
            IntervalSchedule::Sequence { intervals_ms } if intervals_ms.is_empty() => 0,
            IntervalSchedule::Sequence { intervals_ms } => {
                let i = (height.saturating_sub(1) % intervals_ms.len() as u64) as usize;
                intervals_ms[i]
            }
        }
    }
}

/// Simulated clock that advances by the schedule at each block.
#[derive(Debug, Clone)]
pub struct SimClock {
    pub schedule: IntervalSchedule,
    pub genesis_ms: u64,
}

impl SimClock {
    pub fn new(schedule: IntervalSchedule, genesis_ms: u64) -> Self {
        Self {
            schedule,
            genesis_ms,
        }
    }

    /// Timestamp of the block at `height` given its parent's timestamp.
    pub fn next_timestamp(&self, parent_ms: u64, height: u64) -> u64 {
        parent_ms + self.schedule.interval_before(height)
    }
}

/// Mean of consecutive timestamp gaps in seconds.
pub fn mean_interval_secs(timestamps_ms: &[u64]) -> Option<f64> {
    if timestamps_ms.len() < 2 {
        return None;
    }
    let gaps: u64 = timestamps_ms.windows(2).map(|w| w[1] - w[0]).sum();
    Some(gaps as f64 / 1000.0 / (timestamps_ms.len() - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::KeyPair;

    #[test]
    fn rotation_is_height_mod_n() {
        let v: Vec<Address> = (0..3).map(|i| KeyPair::from_label(&format!("v{i}")).address()).collect();
        for h in 0..10u64 {
            assert_eq!(scheduled_validator(&v, h), Some(v[(h % 3) as usize]));
        }
        assert_eq!(scheduled_validator(&[], 0), None);
    }

    #[test]
    fn sequence_cycles() {
        let s = IntervalSchedule::from_secs(&[8, 4]);
        assert_eq!(s.interval_before(1), 8000);
        assert_eq!(s.interval_before(2), 4000);
        assert_eq!(s.interval_before(3), 8000);
    }

    #[test]
    fn mean_of_gaps() {
        assert_eq!(mean_interval_secs(&[0, 4000, 12000]), Some(6.0));
        assert_eq!(mean_interval_secs(&[5]), None);
    }
}
