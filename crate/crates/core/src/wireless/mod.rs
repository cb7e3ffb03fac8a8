//! Unit-disk radio and a single-category 802.11p-style DCF MAC.

mod medium;

pub use medium::{Dest, Frame, MacEvent, MacOutput, Medium, MediumStats};

use crate::mobility::{distance, Point};
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq)]
pub struct PhyConfig {
    /// Meters; reception is possible iff the sender is at most this far away.
    pub tx_range: f64,
    /// Meters; transmissions within this distance make the medium busy.
    pub cs_range: f64,
    /// Meters; an overlapping transmission from within this distance of a
    /// receiver destroys the frame being received.
    pub interference_range: f64,
    /// Mbit/s, one of the 10 MHz channel rates between 3 and 27.
    pub rate_mbps: f64,
    pub phy_overhead: SimTime,
}

impl Default for PhyConfig {
    fn default() -> Self {
        PhyConfig {
            tx_range: 250.0,
            cs_range: 550.0,
            interference_range: 250.0,
            rate_mbps: 6.0,
            phy_overhead: SimTime::from_micros(40),
        }
    }
}

impl PhyConfig {
    pub const MIN_RATE_MBPS: f64 = 3.0;
    pub const MAX_RATE_MBPS: f64 = 27.0;

    pub fn validate(&self) -> Result<(), String> {
        if !(self.rate_mbps >= Self::MIN_RATE_MBPS && self.rate_mbps <= Self::MAX_RATE_MBPS) {
            return Err(format!("data rate {} Mbit/s outside [3, 27]", self.rate_mbps));
        }
        if !(self.tx_range > 0.0 && self.tx_range.is_finite()) {
            return Err(format!("tx range {} must be positive", self.tx_range));
        }
        if !(self.cs_range >= self.tx_range && self.cs_range.is_finite()) {
            return Err(format!("carrier-sense range {} must be at least the tx range", self.cs_range));
        }
        if !(self.interference_range > 0.0 && self.interference_range.is_finite()) {
            return Err(format!("interference range {} must be positive", self.interference_range));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacConfig {
    pub slot: SimTime,
    pub sifs: SimTime,
    /// AIFS = SIFS + `aifsn` slots.
    pub aifsn: u32,
    pub cw_min: u32,
    pub cw_max: u32,
    pub retry_limit: u32,
    pub header_bytes: u32,
    pub ack_bytes: u32,
    pub queue_capacity: usize,
}

impl Default for MacConfig {
    fn default() -> Self {
        MacConfig {
            slot: SimTime::from_micros(13),
            sifs: SimTime::from_micros(32),
            aifsn: 2,
            cw_min: 15,
            cw_max: 1023,
            retry_limit: 7,
            header_bytes: 28,
            ack_bytes: 14,
            queue_capacity: 50,
        }
    }
}

impl MacConfig {
    pub fn aifs(&self) -> SimTime {
        self.sifs + self.slot.mul(u64::from(self.aifsn))
    }

    /// Contention window after `failures` unsuccessful attempts.
    pub fn cw(&self, failures: u32) -> u32 {
        let grown = (u64::from(self.cw_min) + 1).checked_shl(failures.min(40)).unwrap_or(u64::MAX) - 1;
        grown.min(u64::from(self.cw_max)) as u32
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.cw_min > self.cw_max {
            return Err(format!("cw_min {} exceeds cw_max {}", self.cw_min, self.cw_max));
        }
        if self.slot == SimTime::ZERO {
            return Err("slot time must be positive".into());
        }
        if self.queue_capacity == 0 {
            return Err("queue capacity must be positive".into());
        }
        Ok(())
    }
}

pub fn in_range(a: Point, b: Point, range: f64) -> bool {
    distance(a, b) <= range
}

/// Preamble plus payload time for `bytes` at the configured rate, rounded up
/// to whole microseconds.
pub fn airtime(bytes: u32, phy: &PhyConfig) -> SimTime {
    let rate_kbps = (phy.rate_mbps * 1000.0).round().max(1.0) as u64;
    let bits_x1000 = u64::from(bytes) * 8 * 1000;
    phy.phy_overhead + SimTime::from_micros(bits_x1000.div_ceil(rate_kbps))
}
