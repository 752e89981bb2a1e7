//! Synthetic packet-feature traces: background tag populations under their
//! ecosystem identifier policies, mobility phases, and injected adversaries
//! that rotate their identifier on every emission.

mod adversary;
mod anonymize;
mod config;
mod model;
pub mod presets;
mod sweep;
mod synth;

pub use adversary::{adversary_capture, adversary_identifier, inject_adversary, AdversaryConfig, AdversaryMode};
pub use anonymize::{anonymize_id, anonymize_ids};
pub use config::{BackgroundDevice, Phase, Population, ScenarioConfig};
pub use model::{calibrate, Drift, FingerprintModel, FingerprintSampler};
pub use sweep::{arm_densities, grid_sweep, ArmDensity, DensityArm, SweepCell, SweepConfig, SweepOutput, SweepRow, SweepSpec};
pub use synth::{background_identifier, synthesize_background, synthesize_capture, synthesize_scenario};

use serde::{Deserialize, Serialize};

use crate::detection::Ecosystem;
use crate::error::{Error, Result};

/// Identifier behaviour of one tag family. `None` periods never rotate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EcosystemPolicy {
    pub ecosystem: Ecosystem,
    pub mac_rotation_s: Option<f64>,
    pub payload_id_rotation_s: Option<f64>,
    pub adv_interval_s: f64,
}

impl EcosystemPolicy {
    /// Lost-state behaviour of each family, advertising every 2 s.
    pub fn lost_mode(ecosystem: Ecosystem) -> Self {
        let (mac, payload) = match ecosystem {
            Ecosystem::Apple | Ecosystem::Tile | Ecosystem::Unknown => (None, None),
            Ecosystem::Google => (None, Some(900.0)),
            Ecosystem::Samsung => (Some(900.0), Some(86_400.0)),
        };
        EcosystemPolicy { ecosystem, mac_rotation_s: mac, payload_id_rotation_s: payload, adv_interval_s: 2.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: Option<f64>| v.is_none_or(|p| p > 0.0 && p.is_finite());
        if !ok(self.mac_rotation_s) || !ok(self.payload_id_rotation_s) {
            return Err(Error::Config(format!("{}: rotation periods must be positive", self.ecosystem)));
        }
        if !(self.adv_interval_s > 0.0 && self.adv_interval_s.is_finite()) {
            return Err(Error::Config(format!("{}: adv_interval_s must be positive", self.ecosystem)));
        }
        Ok(())
    }

    /// Whether the detector segments on the payload identifier rather than
    /// the advertiser address.
    pub fn segments_on_payload(&self) -> bool {
        self.ecosystem == Ecosystem::Samsung
    }
}
