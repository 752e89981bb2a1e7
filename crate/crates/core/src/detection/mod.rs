//! Streaming tracker detection over CFO feature rows.
//!
//! Each block of the stream goes through four steps: segmentation by
//! (window, ecosystem, identifier), per-ecosystem embedding and Ward
//! clustering, core-density scoring of every cluster, and the persistence
//! episode that turns dense blocks into alerts.

mod embed;
mod score;
mod segment;
mod select;
mod stream;
mod ward;

pub use embed::{embed_type, Embedding};
pub use score::{medoid, score_cluster, Cluster};
pub use segment::{segment_block, Segment};
pub use select::{select_k, silhouette};
pub use stream::{
    analyze_block, process_block, replay_persistence, run_stream, Alert, BlockAnalysis, BlockOutcome, BlockReport, BlockSpan,
    ClusterDiagnostic, EpisodeState, StreamDetector, StreamOutput,
};
pub use ward::{ward_cluster, Dendrogram};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ecosystem {
    Apple,
    Google,
    Tile,
    Samsung,
    Unknown,
}

impl Ecosystem {
    pub const ALL: [Ecosystem; 5] =
        [Ecosystem::Apple, Ecosystem::Google, Ecosystem::Tile, Ecosystem::Samsung, Ecosystem::Unknown];

    pub fn as_str(self) -> &'static str {
        match self {
            Ecosystem::Apple => "apple",
            Ecosystem::Google => "google",
            Ecosystem::Tile => "tile",
            Ecosystem::Samsung => "samsung",
            Ecosystem::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Ecosystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ecosystem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ecosystem::ALL
            .into_iter()
            .find(|e| e.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown ecosystem {s:?}")))
    }
}

/// One observed advertisement after feature extraction.
///
/// `identifier` is already the segmentation identifier: the advertiser
/// address, or the payload private identifier for Samsung.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketRecord {
    pub timestamp: f64,
    pub identifier: String,
    pub ecosystem: Ecosystem,
    pub fingerprint: Fingerprint,
    /// Ground-truth label, empty for unlabelled traffic.
    pub label: String,
    /// Mobility phase the record was generated in, empty when unknown.
    pub phase: String,
    /// Link-layer address when it differs from `identifier`.
    pub mac: Option<String>,
}

impl PacketRecord {
    pub fn new(timestamp: f64, identifier: impl Into<String>, ecosystem: Ecosystem, fingerprint: Fingerprint) -> Self {
        PacketRecord {
            timestamp,
            identifier: identifier.into(),
            ecosystem,
            fingerprint,
            label: String::new(),
            phase: String::new(),
            mac: None,
        }
    }

    /// Usable by the detector: sane timestamp and a packet-level offset.
    pub fn is_valid(&self) -> bool {
        self.timestamp.is_finite()
            && self.timestamp >= 0.0
            && self.fingerprint.valid.is_valid(0)
            && self.fingerprint.cfo_packet().is_finite()
    }

    pub fn is_labeled(&self) -> bool {
        !self.label.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub window_s: f64,
    pub block_s: f64,
    pub density_threshold: f64,
    pub lambda: f64,
    pub r_min: f64,
    pub epsilon: f64,
    pub k_min: usize,
    pub t_min_s: f64,
    pub t_gap_s: f64,
    pub k_grid_max: usize,
    /// Block grid origin; the first record's timestamp when unset.
    pub block_anchor_s: Option<f64>,
    /// How far behind the newest timestamp a record may arrive and still be
    /// reordered into place.
    pub reorder_slack_s: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            window_s: 120.0,
            block_s: 2400.0,
            density_threshold: 1.15,
            lambda: 1.5,
            r_min: 0.15,
            epsilon: 1e-9,
            k_min: 3,
            t_min_s: 2400.0,
            t_gap_s: 86_400.0,
            k_grid_max: 8,
            block_anchor_s: None,
            reorder_slack_s: 1.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("window_s", self.window_s),
            ("block_s", self.block_s),
            ("density_threshold", self.density_threshold),
            ("lambda", self.lambda),
            ("r_min", self.r_min),
            ("epsilon", self.epsilon),
            ("t_min_s", self.t_min_s),
            ("t_gap_s", self.t_gap_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.k_min == 0 {
            return Err(Error::Config("k_min must be positive".into()));
        }
        if self.k_grid_max < 2 {
            return Err(Error::Config("k_grid_max must be at least 2".into()));
        }
        if !(self.reorder_slack_s >= 0.0) {
            return Err(Error::Config("reorder_slack_s must be non-negative".into()));
        }
        if self.t_min_s < self.block_s {
            log::warn!(
                "t_min_s ({}) is shorter than block_s ({}); episodes can only be judged at block ends",
                self.t_min_s,
                self.block_s
            );
        }
        Ok(())
    }
}
