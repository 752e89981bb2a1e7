//! Scenario file schema.
//!
//! A scenario is a TOML document of flat keys plus repeated stanzas:
//!
//! ```toml
//! name = "car"
//! duration_s = 3780
//! seed = 3              # overridden by --seed
//! jitter = 0.1          # emission jitter, fraction of the interval
//! noise_std = 0.05      # complex AWGN std of the synthetic receiver
//! physical = false      # true: synthesise every packet, no fast path
//!
//! [[phase]]
//! name = "drive"
//! start_s = 0
//! end_s = 3780
//!
//! [[device]]            # one explicit background tag
//! name = "backpack"
//! ecosystem = "tile"
//! cfo_hz = -21500
//! transition_bias_hz = { "10" = 250, "01" = -180 }
//!
//! [[population]]        # many tags drawn from ranges
//! name = "passers"
//! ecosystem = "apple"
//! count = 40
//! stay_min_s = 600
//! stay_max_s = 1800
//!
//! [[adversary]]         # used by `inject` and the sweep
//! cfo_hz = 9000
//! t_tx_s = 10
//! ```
//!
//! Rotation periods accept `inf` for "never"; omitted policy keys fall back
//! to the family's lost-state preset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::adversary::AdversaryConfig;
use super::model::FingerprintModel;
use super::EcosystemPolicy;
use crate::detection::Ecosystem;
use crate::error::{Error, Result};
use crate::gfsk::{DeviceProfile, GfskConfig, TransitionBiases};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub name: String,
    pub start_s: f64,
    pub end_s: f64,
}

fn default_tau() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundDevice {
    pub name: String,
    pub ecosystem: Ecosystem,
    pub cfo_hz: f64,
    #[serde(default)]
    pub initial_phase: f64,
    #[serde(default)]
    pub transition_bias_hz: TransitionBiases,
    #[serde(default = "default_tau")]
    pub settling_tau_symbols: f64,
    #[serde(default)]
    pub present_from_s: f64,
    /// End of presence; the scenario end when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub present_to_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adv_interval_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mac_rotation_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_id_rotation_s: Option<f64>,
    /// Probability that an emission is captured by the receiver.
    #[serde(default = "one")]
    pub reception: f64,
}

fn one() -> f64 {
    1.0
}

impl BackgroundDevice {
    pub fn profile(&self) -> DeviceProfile {
        DeviceProfile {
            device_id: self.name.clone(),
            cfo_hz: self.cfo_hz,
            initial_phase: self.initial_phase,
            transition_bias_hz: self.transition_bias_hz,
            settling_tau_symbols: self.settling_tau_symbols,
        }
    }

    pub fn policy(&self) -> EcosystemPolicy {
        let never_if_inf = |v: f64| v.is_finite().then_some(v);
        let preset = EcosystemPolicy::lost_mode(self.ecosystem);
        EcosystemPolicy {
            ecosystem: self.ecosystem,
            mac_rotation_s: self.mac_rotation_s.map_or(preset.mac_rotation_s, never_if_inf),
            payload_id_rotation_s: self.payload_id_rotation_s.map_or(preset.payload_id_rotation_s, never_if_inf),
            adv_interval_s: self.adv_interval_s.unwrap_or(preset.adv_interval_s),
        }
    }

    pub fn presence(&self, duration_s: f64) -> (f64, f64) {
        (self.present_from_s, self.present_to_s.unwrap_or(duration_s))
    }
}

fn default_cfo_min() -> f64 {
    -80_000.0
}
fn default_cfo_max() -> f64 {
    40_000.0
}
fn default_bias_std() -> f64 {
    10000.0
}

/// A group of tags with randomly drawn profiles and presence intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Population {
    pub name: String,
    pub ecosystem: Ecosystem,
    pub count: usize,
    #[serde(default = "default_cfo_min")]
    pub cfo_min_hz: f64,
    #[serde(default = "default_cfo_max")]
    pub cfo_max_hz: f64,
    /// Std of the per-class transition biases.
    #[serde(default = "default_bias_std")]
    pub bias_std_hz: f64,
    /// Arrivals are uniform over `[arrive_from_s, arrive_to_s)`.
    #[serde(default)]
    pub arrive_from_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrive_to_s: Option<f64>,
    /// Stay lengths are uniform over `[stay_min_s, stay_max_s]`; omitted
    /// means present until the end.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stay_min_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stay_max_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adv_interval_s: Option<f64>,
    /// Address rotation period; the family preset when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mac_rotation_s: Option<f64>,
    #[serde(default = "one")]
    pub reception: f64,
}

fn default_jitter() -> f64 {
    0.1
}
fn default_noise() -> f64 {
    FingerprintModel::default().noise_std
}
fn default_drift_tau() -> f64 {
    600.0
}
fn default_payload_bits() -> usize {
    FingerprintModel::default().payload_bits
}
fn default_calibration() -> usize {
    FingerprintModel::default().calibration_packets
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    #[serde(default = "default_noise")]
    pub noise_std: f64,
    #[serde(default)]
    pub physical: bool,
    /// Stationary std of each device's slow carrier drift.
    #[serde(default)]
    pub drift_hz: f64,
    #[serde(default = "default_drift_tau")]
    pub drift_tau_s: f64,
    #[serde(default = "default_payload_bits")]
    pub payload_bits: usize,
    #[serde(default = "default_calibration")]
    pub calibration_packets: usize,
    #[serde(default)]
    pub gfsk: GfskConfig,
    #[serde(default, rename = "phase")]
    pub phases: Vec<Phase>,
    #[serde(default, rename = "device")]
    pub devices: Vec<BackgroundDevice>,
    #[serde(default, rename = "population")]
    pub populations: Vec<Population>,
    #[serde(default, rename = "adversary")]
    pub adversaries: Vec<AdversaryConfig>,
}

impl ScenarioConfig {
    pub fn new(name: impl Into<String>, duration_s: f64) -> Self {
        ScenarioConfig {
            name: name.into(),
            duration_s,
            seed: 0,
            jitter: default_jitter(),
            noise_std: default_noise(),
            physical: false,
            drift_hz: 0.0,
            drift_tau_s: default_drift_tau(),
            payload_bits: default_payload_bits(),
            calibration_packets: default_calibration(),
            gfsk: GfskConfig::default(),
            phases: Vec::new(),
            devices: Vec::new(),
            populations: Vec::new(),
            adversaries: Vec::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string() + &span_hint(text, e.span())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn fingerprint_model(&self) -> FingerprintModel {
        FingerprintModel {
            physical: self.physical,
            noise_std: self.noise_std,
            payload_bits: self.payload_bits,
            calibration_packets: self.calibration_packets,
            gfsk: self.gfsk,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::Config("duration_s must be positive".into()));
        }
        if !(self.drift_hz >= 0.0 && self.drift_tau_s > 0.0) {
            return Err(Error::Config("drift_hz must be non-negative and drift_tau_s positive".into()));
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return Err(Error::Config("jitter must be in [0, 1)".into()));
        }
        self.fingerprint_model().validate()?;
        let mut last_end = f64::NEG_INFINITY;
        for (i, p) in self.phases.iter().enumerate() {
            if !(p.start_s < p.end_s) || p.start_s < 0.0 || p.end_s > self.duration_s {
                return Err(Error::Config(format!("phase[{i}] ({}): need 0 <= start_s < end_s <= duration_s", p.name)));
            }
            if p.start_s < last_end {
                return Err(Error::Config(format!("phase[{i}] ({}): phases must be ordered and non-overlapping", p.name)));
            }
            last_end = p.end_s;
        }
        for (i, d) in self.devices.iter().enumerate() {
            let (from, to) = d.presence(self.duration_s);
            if !(0.0 <= from && from < to && to <= self.duration_s) {
                return Err(Error::Config(format!("device[{i}] ({}): presence must lie within the scenario", d.name)));
            }
            if !(d.reception > 0.0 && d.reception <= 1.0) {
                return Err(Error::Config(format!("device[{i}] ({}): reception must be in (0, 1]", d.name)));
            }
            d.policy().validate().map_err(|e| Error::Config(format!("device[{i}] ({}): {e}", d.name)))?;
            d.profile().validate(&self.gfsk).map_err(|e| Error::Config(format!("device[{i}] ({}): {e}", d.name)))?;
        }
        for (i, p) in self.populations.iter().enumerate() {
            let to = p.arrive_to_s.unwrap_or(self.duration_s);
            if !(p.cfo_min_hz <= p.cfo_max_hz) || !(0.0 <= p.arrive_from_s && p.arrive_from_s < to && to <= self.duration_s) {
                return Err(Error::Config(format!("population[{i}] ({}): empty cfo or arrival range", p.name)));
            }
            if let (Some(a), Some(b)) = (p.stay_min_s, p.stay_max_s) {
                if !(0.0 < a && a <= b) {
                    return Err(Error::Config(format!("population[{i}] ({}): need 0 < stay_min_s <= stay_max_s", p.name)));
                }
            } else if p.stay_min_s.is_some() != p.stay_max_s.is_some() {
                return Err(Error::Config(format!("population[{i}] ({}): set both stay_min_s and stay_max_s", p.name)));
            }
            if !(p.reception > 0.0 && p.reception <= 1.0) {
                return Err(Error::Config(format!("population[{i}] ({}): reception must be in (0, 1]", p.name)));
            }
            if p.mac_rotation_s.is_some_and(|m| !(m > 0.0)) {
                return Err(Error::Config(format!("population[{i}] ({}): mac_rotation_s must be positive", p.name)));
            }
            if !(p.bias_std_hz >= 0.0) {
                return Err(Error::Config(format!("population[{i}] ({}): bias_std_hz must be non-negative", p.name)));
            }
        }
        for (i, a) in self.adversaries.iter().enumerate() {
            a.validate(self.duration_s).map_err(|e| Error::Config(format!("adversary[{i}]: {e}")))?;
        }
        Ok(())
    }

    /// Explicit devices followed by every population member, drawn from the
    /// scenario seed.
    pub fn resolved_devices(&self) -> Vec<BackgroundDevice> {
        let mut out = self.devices.clone();
        for (pi, p) in self.populations.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (0x5eed_0000 + pi as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let bias = Normal::new(0.0, p.bias_std_hz.max(f64::MIN_POSITIVE)).expect("finite std");
            let arrive_to = p.arrive_to_s.unwrap_or(self.duration_s);
            for i in 0..p.count {
                let cfo = if p.cfo_max_hz > p.cfo_min_hz { rng.random_range(p.cfo_min_hz..p.cfo_max_hz) } else { p.cfo_min_hz };
                let b = TransitionBiases {
                    zero_zero: bias.sample(&mut rng),
                    one_one: bias.sample(&mut rng),
                    one_zero: bias.sample(&mut rng),
                    zero_one: bias.sample(&mut rng),
                };
                let from = rng.random_range(p.arrive_from_s..arrive_to);
                let to = match (p.stay_min_s, p.stay_max_s) {
                    (Some(a), Some(b)) => (from + rng.random_range(a..=b)).min(self.duration_s),
                    _ => self.duration_s,
                };
                out.push(BackgroundDevice {
                    name: format!("{}-{i}", p.name),
                    ecosystem: p.ecosystem,
                    cfo_hz: cfo,
                    initial_phase: rng.random_range(0.0..std::f64::consts::TAU),
                    transition_bias_hz: b,
                    settling_tau_symbols: default_tau(),
                    present_from_s: from,
                    present_to_s: Some(to),
                    adv_interval_s: p.adv_interval_s,
                    mac_rotation_s: p.mac_rotation_s,
                    payload_id_rotation_s: None,
                    reception: p.reception,
                });
            }
        }
        out
    }

    pub fn phase_at(&self, t: f64) -> &str {
        self.phases.iter().find(|p| p.start_s <= t && t < p.end_s).map_or("", |p| p.name.as_str())
    }
}

fn span_hint(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(s) => {
            let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
            format!(" (line {line}: {:?})", text.get(s).unwrap_or("").trim())
        }
        None => String::new(),
    }
}
