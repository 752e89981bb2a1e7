use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::{extract_fingerprint, Fingerprint, FingerprintOptions, ValidMask};
use crate::gfsk::{generate_packet, DeviceProfile, GfskConfig, IqPacket};

/// How per-emission fingerprints are produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FingerprintModel {
    /// Synthesise and extract every emission instead of sampling the
    /// calibrated Gaussian.
    pub physical: bool,
    pub noise_std: f64,
    pub payload_bits: usize,
    pub calibration_packets: usize,
    pub gfsk: GfskConfig,
}

impl Default for FingerprintModel {
    fn default() -> Self {
        FingerprintModel {
            physical: false,
            noise_std: 0.05,
            payload_bits: 256,
            calibration_packets: 32,
            gfsk: GfskConfig::default(),
        }
    }
}

impl FingerprintModel {
    pub fn validate(&self) -> Result<()> {
        self.gfsk.validate()?;
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config("noise_std must be non-negative".into()));
        }
        if self.payload_bits < 16 {
            return Err(Error::Config("payload_bits must be at least 16".into()));
        }
        if self.calibration_packets < 2 {
            return Err(Error::Config("calibration_packets must be at least 2".into()));
        }
        Ok(())
    }

    /// One physical emission: random payload, synthesis, extraction.
    pub fn emit(&self, profile: &DeviceProfile, timestamp: f64, rng: &mut ChaCha8Rng) -> Result<Fingerprint> {
        self.extract(&self.emit_packet(profile, timestamp, rng)?)
    }

    pub fn emit_packet(&self, profile: &DeviceProfile, timestamp: f64, rng: &mut ChaCha8Rng) -> Result<IqPacket> {
        let bits: Vec<bool> = (0..self.payload_bits).map(|_| rng.random()).collect();
        generate_packet(profile, &bits, timestamp, &self.gfsk, self.noise_std, rng.random())
    }

    pub fn extract(&self, packet: &IqPacket) -> Result<Fingerprint> {
        extract_fingerprint(packet, &FingerprintOptions::remodulated(self.gfsk))
    }
}

/// Per-device fingerprint generator.
#[derive(Debug, Clone)]
pub enum FingerprintSampler {
    Physical {
        profile: DeviceProfile,
        model: FingerprintModel,
    },
    /// Multivariate Gaussian `mean + L z` with `L` the Cholesky factor of the
    /// calibration covariance.
    Gaussian {
        mean: [f64; 5],
        chol: [[f64; 5]; 5],
    },
}

impl FingerprintSampler {
    pub fn sample(&self, timestamp: f64, rng: &mut ChaCha8Rng) -> Result<Fingerprint> {
        match self {
            FingerprintSampler::Physical { profile, model } => model.emit(profile, timestamp, rng),
            FingerprintSampler::Gaussian { mean, chol } => {
                let z: [f64; 5] = std::array::from_fn(|_| rng.sample(StandardNormal));
                let c = std::array::from_fn(|i| mean[i] + (0..=i).map(|j| chol[i][j] * z[j]).sum::<f64>());
                Ok(Fingerprint::new(c, ValidMask::ALL))
            }
        }
    }
}

/// Slow carrier drift: an Ornstein–Uhlenbeck offset with stationary std
/// `std_hz` and correlation time `tau_s`, added to every component.
#[derive(Debug, Clone)]
pub struct Drift {
    std_hz: f64,
    tau_s: f64,
    value: f64,
    last_t: Option<f64>,
}

impl Drift {
    pub fn new(std_hz: f64, tau_s: f64, rng: &mut ChaCha8Rng) -> Self {
        let value = if std_hz > 0.0 { std_hz * rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
        Drift { std_hz, tau_s, value, last_t: None }
    }

    pub fn at(&mut self, t: f64, rng: &mut ChaCha8Rng) -> f64 {
        if self.std_hz == 0.0 {
            return 0.0;
        }
        if let Some(last) = self.last_t {
            let a = (-(t - last).max(0.0) / self.tau_s).exp();
            self.value = a * self.value + self.std_hz * (1.0 - a * a).sqrt() * rng.sample::<f64, _>(StandardNormal);
        }
        self.last_t = Some(t);
        self.value
    }
}

fn cholesky(cov: &[[f64; 5]; 5]) -> Option<[[f64; 5]; 5]> {
    let mut l = [[0.0; 5]; 5];
    for i in 0..5 {
        for j in 0..=i {
            let s: f64 = cov[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Builds the sampler for one device. The Gaussian fast path is fitted to
/// `calibration_packets` physical emissions; a singular covariance falls
/// back to independent components.
pub fn calibrate(profile: &DeviceProfile, model: &FingerprintModel, seed: u64) -> Result<FingerprintSampler> {
    model.validate()?;
    profile.validate(&model.gfsk)?;
    if model.physical {
        return Ok(FingerprintSampler::Physical { profile: profile.clone(), model: *model });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(model.calibration_packets);
    while rows.len() < model.calibration_packets {
        let fp = model.emit(profile, 0.0, &mut rng)?;
        if fp.valid == ValidMask::ALL {
            rows.push(fp.components);
        }
    }
    let n = rows.len() as f64;
    let mean: [f64; 5] = std::array::from_fn(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n);
    let mut cov = [[0.0; 5]; 5];
    for (i, row) in cov.iter_mut().enumerate() {
        for (j, c) in row.iter_mut().enumerate() {
            *c = rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (n - 1.0);
        }
    }
    let chol = cholesky(&cov).unwrap_or_else(|| {
        let mut d = [[0.0; 5]; 5];
        for i in 0..5 {
            d[i][i] = cov[i][i].max(0.0).sqrt();
        }
        d
    });
    Ok(FingerprintSampler::Gaussian { mean, chol })
}
