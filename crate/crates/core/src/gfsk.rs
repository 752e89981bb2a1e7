//! GFSK baseband synthesis for virtual BLE-style transmitters.
//!
//! The modulator produces unit-magnitude samples whose instantaneous
//! frequency is the Gaussian-filtered NRZ bit train. Device impairments are
//! applied afterwards: a constant carrier offset rotation, a per-transition
//! frequency bias (exponentially settling on jump transitions) and circular
//! white noise.

use std::f64::consts::{LN_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GfskConfig {
    pub sample_rate: f64,
    pub symbol_rate: f64,
    pub samples_per_symbol: usize,
    pub gaussian_bt: f64,
    pub freq_deviation: f64,
    pub filter_span_symbols: usize,
}

impl Default for GfskConfig {
    /// BLE 1M PHY shape at 8 samples per symbol.
    fn default() -> Self {
        GfskConfig {
            sample_rate: 8.0e6,
            symbol_rate: 1.0e6,
            samples_per_symbol: 8,
            gaussian_bt: 0.5,
            freq_deviation: 250.0e3,
            filter_span_symbols: 3,
        }
    }
}

impl GfskConfig {
    pub fn validate(&self) -> Result<()> {
        let sps = self.samples_per_symbol;
        if sps < 2 {
            return Err(Error::Config(format!("samples_per_symbol must be >= 2, got {sps}")));
        }
        if !(self.symbol_rate > 0.0) || self.sample_rate != sps as f64 * self.symbol_rate {
            return Err(Error::Config(format!(
                "sample_rate {} must equal samples_per_symbol x symbol_rate ({} x {})",
                self.sample_rate, sps, self.symbol_rate
            )));
        }
        if !(self.gaussian_bt > 0.0 && self.gaussian_bt <= 1.0) {
            return Err(Error::Config(format!("gaussian_bt must be in (0, 1], got {}", self.gaussian_bt)));
        }
        if !(self.freq_deviation > 0.0) {
            return Err(Error::Config("freq_deviation must be positive".into()));
        }
        if self.filter_span_symbols < 1 {
            return Err(Error::Config("filter_span_symbols must be >= 1".into()));
        }
        Ok(())
    }

    /// Gaussian pulse taps normalised to unit DC gain.
    pub fn gaussian_taps(&self) -> Vec<f64> {
        let sps = self.samples_per_symbol as f64;
        let len = self.filter_span_symbols * self.samples_per_symbol;
        let center = len as f64 / 2.0;
        let bt = self.gaussian_bt;
        let mut taps: Vec<f64> = (0..=len)
            .map(|k| {
                let t = (k as f64 - center) / sps;
                (-2.0 * PI * PI * bt * bt * t * t / LN_2).exp()
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|h| *h /= sum);
        taps
    }
}

/// Bit-transition class `(b[i-1] -> b[i])` of a symbol window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TransitionClass {
    #[serde(rename = "00")]
    ZeroZero,
    #[serde(rename = "11")]
    OneOne,
    #[serde(rename = "10")]
    OneZero,
    #[serde(rename = "01")]
    ZeroOne,
}

impl TransitionClass {
    /// Fingerprint order: 00, 11, 10, 01.
    pub const ALL: [TransitionClass; 4] =
        [TransitionClass::ZeroZero, TransitionClass::OneOne, TransitionClass::OneZero, TransitionClass::ZeroOne];

    pub fn of(prev: bool, cur: bool) -> Self {
        match (prev, cur) {
            (false, false) => TransitionClass::ZeroZero,
            (true, true) => TransitionClass::OneOne,
            (true, false) => TransitionClass::OneZero,
            (false, true) => TransitionClass::ZeroOne,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_jump(self) -> bool {
        matches!(self, TransitionClass::OneZero | TransitionClass::ZeroOne)
    }

    /// Class of every symbol in `bits`; symbol 0 is labelled `(b0 -> b0)`.
    pub fn per_symbol(bits: &[bool]) -> impl Iterator<Item = TransitionClass> + '_ {
        bits.iter().enumerate().map(|(i, &b)| {
            let prev = if i == 0 { b } else { bits[i - 1] };
            TransitionClass::of(prev, b)
        })
    }
}

impl fmt::Display for TransitionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransitionClass::ZeroZero => "00",
            TransitionClass::OneOne => "11",
            TransitionClass::OneZero => "10",
            TransitionClass::ZeroOne => "01",
        })
    }
}

impl FromStr for TransitionClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "00" => Ok(TransitionClass::ZeroZero),
            "11" => Ok(TransitionClass::OneOne),
            "10" => Ok(TransitionClass::OneZero),
            "01" => Ok(TransitionClass::ZeroOne),
            other => Err(Error::Config(format!("unknown transition class {other:?}"))),
        }
    }
}

/// Frequency bias (Hz) applied during each transition class's symbol window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionBiases {
    #[serde(rename = "00", default)]
    pub zero_zero: f64,
    #[serde(rename = "11", default)]
    pub one_one: f64,
    #[serde(rename = "10", default)]
    pub one_zero: f64,
    #[serde(rename = "01", default)]
    pub zero_one: f64,
}

impl TransitionBiases {
    pub fn get(&self, class: TransitionClass) -> f64 {
        match class {
            TransitionClass::ZeroZero => self.zero_zero,
            TransitionClass::OneOne => self.one_one,
            TransitionClass::OneZero => self.one_zero,
            TransitionClass::ZeroOne => self.zero_one,
        }
    }

    pub fn set(&mut self, class: TransitionClass, hz: f64) {
        match class {
            TransitionClass::ZeroZero => self.zero_zero = hz,
            TransitionClass::OneOne => self.one_one = hz,
            TransitionClass::OneZero => self.one_zero = hz,
            TransitionClass::ZeroOne => self.zero_one = hz,
        }
    }

    pub fn max_abs(&self) -> f64 {
        TransitionClass::ALL.iter().map(|&c| self.get(c).abs()).fold(0.0, f64::max)
    }
}

/// Analog impairments of one virtual transmitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    pub device_id: String,
    pub cfo_hz: f64,
    #[serde(default)]
    pub initial_phase: f64,
    #[serde(default)]
    pub transition_bias_hz: TransitionBiases,
    #[serde(default = "default_settling_tau")]
    pub settling_tau_symbols: f64,
}

fn default_settling_tau() -> f64 {
    0.3
}

impl DeviceProfile {
    pub fn new(device_id: impl Into<String>, cfo_hz: f64) -> Self {
        DeviceProfile {
            device_id: device_id.into(),
            cfo_hz,
            initial_phase: 0.0,
            transition_bias_hz: TransitionBiases::default(),
            settling_tau_symbols: default_settling_tau(),
        }
    }

    pub fn validate(&self, config: &GfskConfig) -> Result<()> {
        if !self.cfo_hz.is_finite() || self.cfo_hz.abs() >= config.sample_rate / 2.0 {
            return Err(Error::Config(format!(
                "device {}: |cfo_hz| = {} must be below sample_rate/2",
                self.device_id, self.cfo_hz
            )));
        }
        if !(self.settling_tau_symbols >= 0.0) {
            return Err(Error::Config(format!("device {}: settling_tau_symbols must be non-negative", self.device_id)));
        }
        Ok(())
    }

    /// Injected frequency bias (Hz) at sample `k` of a window of `class`.
    pub fn bias_at(&self, class: TransitionClass, k: usize, sps: usize) -> f64 {
        let bias = self.transition_bias_hz.get(class);
        if !class.is_jump() {
            return bias;
        }
        let tau = self.settling_tau_symbols * sps as f64;
        if tau > 0.0 {
            bias * (-(k as f64) / tau).exp()
        } else if k == 0 {
            bias
        } else {
            0.0
        }
    }
}

/// A decoder-exact packet window with its recovered bits.
#[derive(Debug, Clone, PartialEq)]
pub struct IqPacket {
    pub samples: Vec<Complex64>,
    pub bits: Vec<bool>,
    pub sps: usize,
    pub sample_rate: f64,
    pub timestamp: f64,
    pub truth: Option<DeviceProfile>,
}

impl IqPacket {
    pub fn validate(&self) -> Result<()> {
        if self.bits.len() < 2 {
            return Err(Error::DegenerateInput(format!("packet needs at least 2 bits, got {}", self.bits.len())));
        }
        let expected = self.bits.len() * self.sps;
        if self.samples.len() != expected {
            return Err(Error::ShapeMismatch { expected, actual: self.samples.len() });
        }
        Ok(())
    }
}

/// Gaussian-filtered continuous-phase FSK.
pub fn modulate(bits: &[bool], config: &GfskConfig) -> Result<Vec<Complex64>> {
    if bits.is_empty() {
        return Err(Error::DegenerateInput("empty bit sequence".into()));
    }
    config.validate()?;
    let freq = instantaneous_frequency(bits, config);
    let step = TAU / config.sample_rate;
    let mut phase = 0.0f64;
    Ok(freq
        .iter()
        .enumerate()
        .map(|(n, &f)| {
            if n > 0 {
                phase = (phase + step * f).rem_euclid(TAU);
            }
            Complex64::from_polar(1.0, phase)
        })
        .collect())
}

/// Filtered NRZ train scaled to ±deviation, one value per sample. The bit
/// stream is extended with its edge values so the edges sit at steady state.
pub fn instantaneous_frequency(bits: &[bool], config: &GfskConfig) -> Vec<f64> {
    let sps = config.samples_per_symbol as isize;
    let taps = config.gaussian_taps();
    let half = (taps.len() / 2) as isize;
    let last = bits.len() as isize - 1;
    let nrz = |i: isize| -> f64 {
        let sym = i.div_euclid(sps).clamp(0, last) as usize;
        if bits[sym] {
            1.0
        } else {
            -1.0
        }
    };
    let n = bits.len() * config.samples_per_symbol;
    (0..n as isize)
        .map(|n| {
            let g: f64 = taps.iter().enumerate().map(|(k, h)| h * nrz(n + k as isize - half)).sum();
            config.freq_deviation * g
        })
        .collect()
}

/// Applies the device's carrier offset, transition biases and AWGN.
pub fn apply_impairments(
    samples: &[Complex64],
    bits: &[bool],
    profile: &DeviceProfile,
    config: &GfskConfig,
    noise_std: f64,
    seed: u64,
) -> Result<Vec<Complex64>> {
    let sps = config.samples_per_symbol;
    let expected = bits.len() * sps;
    if samples.len() != expected {
        return Err(Error::ShapeMismatch { expected, actual: samples.len() });
    }
    if !(noise_std >= 0.0) {
        return Err(Error::Config(format!("noise_std must be non-negative, got {noise_std}")));
    }
    let step = TAU / config.sample_rate;
    let mut bias_phase = 0.0f64;
    let mut out = Vec::with_capacity(samples.len());
    for (i, class) in TransitionClass::per_symbol(bits).enumerate() {
        for k in 0..sps {
            let n = i * sps + k;
            if n > 0 {
                bias_phase = (bias_phase + step * profile.bias_at(class, k, sps)).rem_euclid(TAU);
            }
            let cfo_phase = (step * profile.cfo_hz * n as f64 + profile.initial_phase).rem_euclid(TAU);
            out.push(samples[n] * Complex64::from_polar(1.0, cfo_phase + bias_phase));
        }
    }
    if noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_std / 2f64.sqrt()).expect("finite std");
        for x in out.iter_mut() {
            *x += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
        }
    }
    Ok(out)
}

pub fn generate_packet(
    profile: &DeviceProfile,
    payload_bits: &[bool],
    timestamp: f64,
    config: &GfskConfig,
    noise_std: f64,
    seed: u64,
) -> Result<IqPacket> {
    profile.validate(config)?;
    let clean = modulate(payload_bits, config)?;
    let samples = apply_impairments(&clean, payload_bits, profile, config, noise_std, seed)?;
    Ok(IqPacket {
        samples,
        bits: payload_bits.to_vec(),
        sps: config.samples_per_symbol,
        sample_rate: config.sample_rate,
        timestamp,
        truth: Some(profile.clone()),
    })
}
