//! CFO fingerprints from decoded packet windows.
//!
//! The packet-level offset is the phasor-sum estimate
//! `f_s / 2π · arg Σ x[n] x*[n-1]` over the whole window. The same products
//! are split by the bit transition that owns them (the product at the start
//! of symbol window `i` belongs to `b[i-1] -> b[i]`, symbol 0 to `b0 -> b0`),
//! which gives four transition-conditioned offsets whose accumulators add
//! back up to the packet sum.

mod hamming;

pub use hamming::{extract_hw_fingerprint, HwFingerprint, ProxyPacket, HW_BINS};

use std::f64::consts::TAU;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::gfsk::{modulate, GfskConfig, IqPacket, TransitionClass};

/// Tolerance of the recombination self-check performed on every extraction.
pub const RECOMBINATION_TOLERANCE: f64 = 1e-6;

/// Per-component validity of a 5-component feature vector.
///
/// Bit 0 is the packet-level component; bits 1..=4 follow the component
/// order of the vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ValidMask(pub u8);

impl ValidMask {
    pub const ALL: ValidMask = ValidMask(0b1_1111);

    pub fn is_valid(self, component: usize) -> bool {
        self.0 & (1 << component) != 0
    }

    pub fn from_flags(flags: [bool; 5]) -> Self {
        ValidMask(flags.iter().enumerate().fold(0u8, |m, (i, &v)| if v { m | (1 << i) } else { m }))
    }
}

impl fmt::Display for ValidMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `[Δf_packet, Δf_00, Δf_11, Δf_10, Δf_01]` in Hz.
///
/// Invalid components hold `NaN`; zero is a legitimate offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fingerprint {
    pub components: [f64; 5],
    pub valid: ValidMask,
}

impl Fingerprint {
    pub fn new(components: [f64; 5], valid: ValidMask) -> Self {
        let mut components = components;
        for (i, c) in components.iter_mut().enumerate() {
            if !valid.is_valid(i) {
                *c = f64::NAN;
            }
        }
        Fingerprint { components, valid }
    }

    /// The same fingerprint with every valid component offset by `hz`.
    pub fn shifted(mut self, hz: f64) -> Self {
        for (j, c) in self.components.iter_mut().enumerate() {
            if self.valid.is_valid(j) {
                *c += hz;
            }
        }
        self
    }

    pub fn cfo_packet(&self) -> f64 {
        self.components[0]
    }

    pub fn cfo_class(&self, class: TransitionClass) -> Option<f64> {
        let i = 1 + class.index();
        self.valid.is_valid(i).then_some(self.components[i])
    }

    /// Euclidean distance over components valid in both vectors.
    pub fn distance(&self, other: &Fingerprint) -> f64 {
        (0..5)
            .filter(|&i| self.valid.is_valid(i) && other.valid.is_valid(i))
            .map(|i| (self.components[i] - other.components[i]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Phasor-sum accumulators for the four transition classes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TransitionAccumulators {
    pub sums: [Complex64; 4],
    pub counts: [usize; 4],
}

impl TransitionAccumulators {
    pub fn sum(&self, class: TransitionClass) -> Complex64 {
        self.sums[class.index()]
    }

    pub fn count(&self, class: TransitionClass) -> usize {
        self.counts[class.index()]
    }

    pub fn total_count(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn recombined(&self) -> Complex64 {
        self.sums.iter().sum()
    }
}

fn phase_floor(n_products: usize) -> f64 {
    1e-12 * n_products as f64
}

fn hz_from_phasor(sum: Complex64, sample_rate: f64) -> f64 {
    sample_rate / TAU * sum.arg()
}

/// `Σ_{n=1}^{N-1} x[n] x*[n-1]`.
pub fn phasor_sum(samples: &[Complex64]) -> Complex64 {
    samples.windows(2).map(|w| w[1] * w[0].conj()).sum()
}

/// Packet-level CFO in Hz.
pub fn estimate_cfo_packet(samples: &[Complex64], sample_rate: f64) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::DegenerateInput(format!("need at least 2 samples, got {}", samples.len())));
    }
    let sum = phasor_sum(samples);
    let floor = phase_floor(samples.len());
    if !(sum.norm() > floor) {
        return Err(Error::DegeneratePhase { magnitude: sum.norm(), floor });
    }
    Ok(hz_from_phasor(sum, sample_rate))
}

pub fn partition_transitions(samples: &[Complex64], bits: &[bool], sps: usize) -> Result<TransitionAccumulators> {
    let expected = bits.len() * sps;
    if sps == 0 || samples.len() != expected {
        return Err(Error::ShapeMismatch { expected, actual: samples.len() });
    }
    if bits.len() < 2 {
        return Err(Error::DegenerateInput(format!("need at least 2 bits, got {}", bits.len())));
    }
    let mut acc = TransitionAccumulators::default();
    for (i, class) in TransitionClass::per_symbol(bits).enumerate() {
        let start = (i * sps).max(1);
        let end = (i + 1) * sps;
        let c = class.index();
        for n in start..end {
            acc.sums[c] += samples[n] * samples[n - 1].conj();
        }
        acc.counts[c] += end - start;
    }
    Ok(acc)
}

pub fn estimate_cfo_transition(acc: &TransitionAccumulators, class: TransitionClass, sample_rate: f64) -> Result<f64> {
    let count = acc.count(class);
    if count == 0 {
        return Err(Error::EmptyClass(class));
    }
    let sum = acc.sum(class);
    let floor = phase_floor(count);
    if !(sum.norm() > floor) {
        return Err(Error::DegeneratePhase { magnitude: sum.norm(), floor });
    }
    Ok(hz_from_phasor(sum, sample_rate))
}

/// How the packet window is prepared before forming products.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FingerprintOptions {
    /// When set, the window is multiplied by the conjugate of the GFSK
    /// waveform re-modulated from the recovered bits, so every product
    /// carries only the transmitter's offset and its transition biases.
    /// When `None` the products are taken on the raw samples and the
    /// transition classes include the modulation deviation itself.
    pub remodulate: Option<GfskConfig>,
    /// Drop low-energy edge symbols before estimation. Decoder-exact
    /// windows are unaffected.
    pub energy_gate: bool,
}

impl FingerprintOptions {
    pub fn remodulated(config: GfskConfig) -> Self {
        FingerprintOptions { remodulate: Some(config), energy_gate: false }
    }

    pub fn raw() -> Self {
        FingerprintOptions { remodulate: None, energy_gate: false }
    }
}

impl Default for FingerprintOptions {
    fn default() -> Self {
        FingerprintOptions::remodulated(GfskConfig::default())
    }
}

/// Trims edge symbols whose mean power is below a quarter of the median
/// symbol power. Returns the retained symbol range.
fn energy_gate(samples: &[Complex64], n_bits: usize, sps: usize) -> std::ops::Range<usize> {
    let power: Vec<f64> =
        (0..n_bits).map(|i| samples[i * sps..(i + 1) * sps].iter().map(|z| z.norm_sqr()).sum::<f64>() / sps as f64).collect();
    let mut sorted = power.clone();
    sorted.sort_by(f64::total_cmp);
    let threshold = 0.25 * sorted[sorted.len() / 2];
    let start = power.iter().position(|&p| p >= threshold).unwrap_or(0);
    let end = power.iter().rposition(|&p| p >= threshold).map_or(n_bits, |i| i + 1);
    start..end
}

pub fn extract_fingerprint(packet: &IqPacket, options: &FingerprintOptions) -> Result<Fingerprint> {
    packet.validate()?;
    let sps = packet.sps;
    let symbols = if options.energy_gate { energy_gate(&packet.samples, packet.bits.len(), sps) } else { 0..packet.bits.len() };
    let bits = &packet.bits[symbols.clone()];
    let raw = &packet.samples[symbols.start * sps..symbols.end * sps];
    if bits.len() < 2 {
        return Err(Error::DegenerateInput("fewer than 2 symbols left after gating".into()));
    }

    let window: Vec<Complex64> = match &options.remodulate {
        Some(config) => {
            if config.samples_per_symbol != sps || config.sample_rate != packet.sample_rate {
                return Err(Error::Config(format!(
                    "reference waveform ({} sps @ {} Hz) does not match packet ({} sps @ {} Hz)",
                    config.samples_per_symbol, config.sample_rate, sps, packet.sample_rate
                )));
            }
            let reference = modulate(&packet.bits, config)?;
            raw.iter().zip(&reference[symbols.start * sps..]).map(|(r, s)| r * s.conj()).collect()
        }
        None => raw.to_vec(),
    };

    let fs = packet.sample_rate;
    let cfo_packet = estimate_cfo_packet(&window, fs)?;
    let acc = partition_transitions(&window, bits, sps)?;

    let total = phasor_sum(&window);
    let recombined = acc.recombined();
    let recombined_hz = hz_from_phasor(recombined, fs);
    if acc.total_count() != window.len() - 1
        || (recombined - total).norm() > RECOMBINATION_TOLERANCE * total.norm()
        || (recombined_hz - cfo_packet).abs() > RECOMBINATION_TOLERANCE * cfo_packet.abs().max(1.0)
    {
        return Err(Error::InternalInconsistency(format!(
            "class accumulators recombine to {recombined_hz} Hz, packet estimate {cfo_packet} Hz"
        )));
    }

    let mut components = [cfo_packet, 0.0, 0.0, 0.0, 0.0];
    let mut flags = [true; 5];
    for class in TransitionClass::ALL {
        let slot = 1 + class.index();
        match estimate_cfo_transition(&acc, class, fs) {
            Ok(hz) => components[slot] = hz,
            Err(Error::EmptyClass(_)) => flags[slot] = false,
            Err(e) => return Err(e),
        }
    }
    Ok(Fingerprint::new(components, ValidMask::from_flags(flags)))
}

/// Per-packet extraction over a batch; output order follows input order.
pub fn extract_batch(packets: &[IqPacket], options: &FingerprintOptions, exec: Exec) -> Vec<Result<Fingerprint>> {
    exec.map(packets, |p| extract_fingerprint(p, options))
}
