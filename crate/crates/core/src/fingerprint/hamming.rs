//! Hamming-weight conditioned features for receivers that expose only a
//! per-byte frequency proxy instead of IQ.

use crate::error::{Error, Result};
use crate::fingerprint::ValidMask;

/// Hamming-weight bins, in feature order after the packet mean.
pub const HW_BINS: [u32; 4] = [0, 2, 4, 8];

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyPacket {
    /// Per-byte frequency estimates in receiver LSB units.
    pub freq_proxies: Vec<f64>,
    pub bytes: Vec<u8>,
    pub timestamp: f64,
}

/// `[mean f_b, mean f_b | w=0, w=2, w=4, w=8]` in proxy units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HwFingerprint {
    pub components: [f64; 5],
    pub valid: ValidMask,
}

impl HwFingerprint {
    pub fn cfo_packet_proxy(&self) -> f64 {
        self.components[0]
    }

    pub fn bin(&self, weight: u32) -> Option<f64> {
        let slot = 1 + HW_BINS.iter().position(|&w| w == weight)?;
        self.valid.is_valid(slot).then_some(self.components[slot])
    }
}

pub fn extract_hw_fingerprint(packet: &ProxyPacket) -> Result<HwFingerprint> {
    if packet.freq_proxies.is_empty() {
        return Err(Error::DegenerateInput("empty proxy packet".into()));
    }
    if packet.freq_proxies.len() != packet.bytes.len() {
        return Err(Error::ShapeMismatch { expected: packet.bytes.len(), actual: packet.freq_proxies.len() });
    }
    let mut sums = [0.0f64; 4];
    let mut counts = [0usize; 4];
    for (&f, &y) in packet.freq_proxies.iter().zip(&packet.bytes) {
        if let Some(slot) = HW_BINS.iter().position(|&w| w == y.count_ones()) {
            sums[slot] += f;
            counts[slot] += 1;
        }
    }
    let mean = packet.freq_proxies.iter().sum::<f64>() / packet.freq_proxies.len() as f64;
    let mut components = [mean, f64::NAN, f64::NAN, f64::NAN, f64::NAN];
    let mut flags = [true, false, false, false, false];
    for slot in 0..4 {
        if counts[slot] > 0 {
            components[slot + 1] = sums[slot] / counts[slot] as f64;
            flags[slot + 1] = true;
        }
    }
    Ok(HwFingerprint { components, valid: ValidMask::from_flags(flags) })
}
