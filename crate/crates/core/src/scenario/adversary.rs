use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::model::{calibrate, Drift};
use super::synth::{format_mac, mix};
use crate::detection::{Ecosystem, PacketRecord};
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::gfsk::{DeviceProfile, IqPacket, TransitionBiases};

fn default_label() -> String {
    "adversary".into()
}
fn default_ecosystem() -> Ecosystem {
    Ecosystem::Apple
}
fn yes() -> bool {
    true
}
fn default_tau() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryConfig {
    /// Ground-truth label written on every adversary record.
    #[serde(default = "default_label")]
    pub label: String,
    #[serde(default = "default_ecosystem")]
    pub ecosystem: Ecosystem,
    pub cfo_hz: f64,
    #[serde(default)]
    pub initial_phase: f64,
    #[serde(default)]
    pub transition_bias_hz: TransitionBiases,
    #[serde(default = "default_tau")]
    pub settling_tau_symbols: f64,
    pub t_tx_s: f64,
    /// Fresh identifier on every emission; a single fixed one otherwise.
    #[serde(default = "yes")]
    pub rotate_per_tx: bool,
    #[serde(default)]
    pub present_from_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub present_to_s: Option<f64>,
    /// Replay a captured-style trace at this native interval, downsampled
    /// to `t_tx_s`, instead of emitting on an exact grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_native_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdversaryMode {
    /// Emissions at exactly `present_from_s + k * t_tx_s`.
    Direct,
    /// Every `stride`-th packet of a jittered native trace.
    Replay { native_s: f64, stride: usize },
}

impl AdversaryConfig {
    pub fn new(cfo_hz: f64, t_tx_s: f64) -> Self {
        AdversaryConfig {
            label: default_label(),
            ecosystem: default_ecosystem(),
            cfo_hz,
            initial_phase: 0.0,
            transition_bias_hz: TransitionBiases::default(),
            settling_tau_symbols: default_tau(),
            t_tx_s,
            rotate_per_tx: true,
            present_from_s: 0.0,
            present_to_s: None,
            replay_native_s: None,
        }
    }

    pub fn profile(&self) -> DeviceProfile {
        DeviceProfile {
            device_id: self.label.clone(),
            cfo_hz: self.cfo_hz,
            initial_phase: self.initial_phase,
            transition_bias_hz: self.transition_bias_hz,
            settling_tau_symbols: self.settling_tau_symbols,
        }
    }

    pub fn mode(&self) -> AdversaryMode {
        match self.replay_native_s {
            Some(native_s) => AdversaryMode::Replay { native_s, stride: ((self.t_tx_s / native_s).round() as usize).max(1) },
            None => AdversaryMode::Direct,
        }
    }

    pub fn presence(&self, duration_s: f64) -> (f64, f64) {
        (self.present_from_s, self.present_to_s.unwrap_or(duration_s))
    }

    pub fn validate(&self, duration_s: f64) -> Result<()> {
        if !(self.t_tx_s > 0.0 && self.t_tx_s.is_finite()) {
            return Err(Error::Config("t_tx_s must be positive".into()));
        }
        if self.label.is_empty() {
            return Err(Error::Config("label must be non-empty".into()));
        }
        if let Some(n) = self.replay_native_s {
            if !(n > 0.0 && n <= self.t_tx_s) {
                return Err(Error::Config("replay_native_s must be positive and at most t_tx_s".into()));
            }
        }
        let (from, to) = self.presence(duration_s);
        if !(0.0 <= from && from < to && to <= duration_s) {
            return Err(Error::Config("presence must lie within the scenario".into()));
        }
        Ok(())
    }
}

/// Identifier `counter` of adversary `slot`: bit 47 set, the slot in bits
/// 32..47, and a seeded 32-bit counter below.
pub fn adversary_identifier(seed: u64, slot: u16, counter: u32) -> String {
    let start = mix(seed ^ 0xadd7_e55e ^ ((slot as u64) << 20)) as u32;
    let v = (1u64 << 47) | (((slot & 0x7fff) as u64) << 32) | start.wrapping_add(counter) as u64;
    format_mac(v)
}

fn emission_times(adversary: &AdversaryConfig, scenario: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (from, to) = adversary.presence(scenario.duration_s);
    match adversary.mode() {
        AdversaryMode::Direct => (0..).map(|k| from + k as f64 * adversary.t_tx_s).take_while(|&t| t < to).collect(),
        AdversaryMode::Replay { native_s, stride } => {
            let mut native = Vec::new();
            let mut t = from;
            while t < to {
                native.push(t);
                let j = if scenario.jitter > 0.0 { rng.random_range(-scenario.jitter..scenario.jitter) } else { 0.0 };
                t += native_s * (1.0 + j);
            }
            native.into_iter().step_by(stride).collect()
        }
    }
}

fn record(
    adversary: &AdversaryConfig,
    slot: u16,
    scenario: &ScenarioConfig,
    seed: u64,
    k: usize,
    t: f64,
    fp: Fingerprint,
) -> PacketRecord {
    let counter = if adversary.rotate_per_tx { k as u32 } else { 0 };
    let mut r = PacketRecord::new(t, adversary_identifier(seed, slot, counter), adversary.ecosystem, fp);
    r.label = adversary.label.clone();
    r.phase = scenario.phase_at(t).to_string();
    r
}

fn stream_seed(slot: u16, seed: u64) -> u64 {
    mix(seed ^ mix(0xa11 + slot as u64))
}

/// Adds one adversary to `base` and returns the merged trace, ordered by
/// timestamp. `slot` keeps identifier namespaces of concurrent adversaries
/// apart.
pub fn inject_adversary(
    base: Vec<PacketRecord>,
    adversary: &AdversaryConfig,
    slot: u16,
    scenario: &ScenarioConfig,
    seed: u64,
) -> Result<Vec<PacketRecord>> {
    adversary.validate(scenario.duration_s)?;
    let stream_seed = stream_seed(slot, seed);
    let sampler = calibrate(&adversary.profile(), &scenario.fingerprint_model(), stream_seed ^ 0xca1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed);
    let times = emission_times(adversary, scenario, &mut rng);
    let mut drift = Drift::new(scenario.drift_hz, scenario.drift_tau_s, &mut rng);
    let mut out = base;
    out.reserve(times.len());
    for (k, &t) in times.iter().enumerate() {
        let fp = sampler.sample(t, &mut rng)?.shifted(drift.at(t, &mut rng));
        out.push(record(adversary, slot, scenario, seed, k, t, fp));
    }
    out.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    Ok(out)
}

/// Physically synthesised emissions of one adversary, in time order.
pub fn adversary_capture(
    adversary: &AdversaryConfig,
    slot: u16,
    scenario: &ScenarioConfig,
    seed: u64,
) -> Result<Vec<(PacketRecord, IqPacket)>> {
    adversary.validate(scenario.duration_s)?;
    let model = scenario.fingerprint_model();
    let profile = adversary.profile();
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(slot, seed));
    let times = emission_times(adversary, scenario, &mut rng);
    let mut drift = Drift::new(scenario.drift_hz, scenario.drift_tau_s, &mut rng);
    let mut out = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let shifted = DeviceProfile { cfo_hz: profile.cfo_hz + drift.at(t, &mut rng), ..profile.clone() };
        let packet = model.emit_packet(&shifted, t, &mut rng)?;
        let fp = model.extract(&packet)?;
        out.push((record(adversary, slot, scenario, seed, k, t, fp), packet));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn run(adv: &AdversaryConfig, duration: f64) -> Vec<PacketRecord> {
        inject_adversary(Vec::new(), adv, 0, &ScenarioConfig::new("s", duration), 1).unwrap()
    }

    #[test]
    fn ten_second_rotation_over_600s() {
        let adv = AdversaryConfig { present_from_s: 100.0, present_to_s: Some(700.0), ..AdversaryConfig::new(5000.0, 10.0) };
        let recs = run(&adv, 1000.0);
        assert_eq!(recs.len(), 60);
        assert_eq!(recs.iter().map(|r| &r.identifier).collect::<HashSet<_>>().len(), 60);
        assert!(recs.iter().all(|r| r.label == "adversary"));
    }

    #[test]
    fn emission_ratio_between_extremes() {
        let fast = run(&AdversaryConfig::new(0.0, 2.0), 3600.0).len();
        let slow = run(&AdversaryConfig::new(0.0, 60.0), 3600.0).len();
        assert_eq!(fast, 30 * slow);
    }

    #[test]
    fn replay_keeps_every_fifteenth() {
        let adv = AdversaryConfig { replay_native_s: Some(2.0), ..AdversaryConfig::new(0.0, 30.0) };
        assert_eq!(adv.mode(), AdversaryMode::Replay { native_s: 2.0, stride: 15 });
        let mut scenario = ScenarioConfig::new("s", 3000.0);
        scenario.jitter = 0.0;
        let recs = inject_adversary(Vec::new(), &adv, 0, &scenario, 3).unwrap();
        assert_eq!(recs.len(), 100);
        assert!(recs.windows(2).all(|w| (w[1].timestamp - w[0].timestamp - 30.0).abs() < 1e-9));
    }

    #[test]
    fn namespaces_are_disjoint() {
        let a: HashSet<String> = (0..1000).map(|k| adversary_identifier(5, 0, k)).collect();
        let b: HashSet<String> = (0..1000).map(|k| adversary_identifier(5, 1, k)).collect();
        assert_eq!(a.len(), 1000);
        assert!(a.is_disjoint(&b));
        assert!(a.iter().all(|id| u8::from_str_radix(&id[..2], 16).unwrap() >= 0x80));
    }

    #[test]
    fn fixed_identifier_without_rotation() {
        let adv = AdversaryConfig { rotate_per_tx: false, ..AdversaryConfig::new(0.0, 10.0) };
        let recs = run(&adv, 300.0);
        assert_eq!(recs.iter().map(|r| &r.identifier).collect::<HashSet<_>>().len(), 1);
    }
}
