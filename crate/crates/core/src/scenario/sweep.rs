//! Detection grid over scenarios, transmission periods and adversary counts.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::adversary::{inject_adversary, AdversaryConfig};
use super::config::ScenarioConfig;
use super::synth::{mix, synthesize_background};
use crate::detection::{replay_persistence, run_stream, BlockReport, DetectorConfig, PacketRecord};
use crate::error::{Error, Result};
use crate::exec::Exec;

fn default_grid() -> Vec<f64> {
    vec![2.0, 10.0, 15.0, 30.0, 60.0]
}
fn default_max_adv() -> usize {
    4
}

/// Sweep file schema. Scenarios are preset names or paths, resolved by the
/// caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub scenarios: Vec<String>,
    #[serde(default)]
    pub benign_scenarios: Vec<String>,
    #[serde(default = "default_grid")]
    pub t_tx_grid: Vec<f64>,
    #[serde(default = "default_max_adv")]
    pub max_adversaries: usize,
    /// Extra density thresholds replayed over the same clustering.
    #[serde(default)]
    pub thresholds: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub detector: DetectorConfig,
    /// Adversary templates; cell with `n` adversaries uses the first `n`.
    #[serde(rename = "adversary")]
    pub adversaries: Vec<AdversaryConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub scenarios: Vec<ScenarioConfig>,
    pub benign: Vec<ScenarioConfig>,
    pub t_tx_grid: Vec<f64>,
    pub max_adversaries: usize,
    pub thresholds: Vec<f64>,
    pub seed: u64,
    pub detector: DetectorConfig,
    pub adversaries: Vec<AdversaryConfig>,
}

impl SweepConfig {
    pub fn from_spec(spec: SweepSpec, mut resolve: impl FnMut(&str) -> Result<ScenarioConfig>) -> Result<Self> {
        let scenarios = spec.scenarios.iter().map(|s| resolve(s)).collect::<Result<Vec<_>>>()?;
        let benign = spec.benign_scenarios.iter().map(|s| resolve(s)).collect::<Result<Vec<_>>>()?;
        let config = SweepConfig {
            scenarios,
            benign,
            t_tx_grid: spec.t_tx_grid,
            max_adversaries: spec.max_adversaries,
            thresholds: spec.thresholds,
            seed: spec.seed,
            detector: spec.detector,
            adversaries: spec.adversaries,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        if self.adversaries.len() < self.max_adversaries {
            return Err(Error::Config(format!(
                "max_adversaries = {} but only {} [[adversary]] templates",
                self.max_adversaries,
                self.adversaries.len()
            )));
        }
        if self.t_tx_grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::Config("t_tx_grid entries must be positive".into()));
        }
        if self.thresholds.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::Config("thresholds must be positive".into()));
        }
        for s in &self.benign {
            s.validate()?;
        }
        for s in &self.scenarios {
            s.validate()?;
            for (i, a) in self.adversaries.iter().take(self.max_adversaries).enumerate() {
                a.validate(s.duration_s).map_err(|e| Error::Config(format!("adversary[{i}] in {}: {e}", s.name)))?;
            }
        }
        Ok(())
    }
}

/// Clustering result of one grid cell; persistence is replayed per
/// threshold from the stored block reports.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub scenario: String,
    /// `None` for a benign cell.
    pub t_tx_s: Option<f64>,
    pub n_adversaries: usize,
    pub adversary_start_s: Option<f64>,
    pub blocks: Vec<BlockReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub scenario: String,
    pub t_tx_s: Option<f64>,
    pub n_adversaries: usize,
    pub density_threshold: f64,
    pub alerted: bool,
    /// First alert time minus the earliest adversary presence start.
    pub first_alert_latency_s: Option<f64>,
    pub max_core_density: f64,
}

impl SweepCell {
    pub fn is_benign(&self) -> bool {
        self.n_adversaries == 0
    }

    pub fn row(&self, detector: &DetectorConfig) -> SweepRow {
        let alerts = replay_persistence(&self.blocks, detector);
        let first = alerts.first().map(|a| a.flag_time_s);
        SweepRow {
            scenario: self.scenario.clone(),
            t_tx_s: self.t_tx_s,
            n_adversaries: self.n_adversaries,
            density_threshold: detector.density_threshold,
            alerted: !alerts.is_empty(),
            first_alert_latency_s: match (first, self.adversary_start_s) {
                (Some(f), Some(s)) => Some(f - s),
                (Some(f), None) => Some(f),
                _ => None,
            },
            max_core_density: self.blocks.iter().flat_map(|b| b.clusters.iter().map(|c| c.core_density)).fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityArm {
    /// Clusters of benign-only traces.
    Background,
    /// Clusters holding at least one adversary segment.
    Adversary,
    /// Clusters of adversary traces without adversary segments.
    CoLocated,
}

impl DensityArm {
    pub fn as_str(self) -> &'static str {
        match self {
            DensityArm::Background => "background",
            DensityArm::Adversary => "adversary",
            DensityArm::CoLocated => "co_located",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmDensity {
    pub arm: DensityArm,
    pub scenario: String,
    pub t_tx_s: Option<f64>,
    pub n_adversaries: usize,
    pub block_index: i64,
    pub core_density: f64,
}

pub fn arm_densities(cells: &[SweepCell]) -> Vec<ArmDensity> {
    let mut out = Vec::new();
    for cell in cells {
        for block in &cell.blocks {
            for c in &block.clusters {
                let arm = match (cell.is_benign(), c.labeled_segments > 0) {
                    (true, _) => DensityArm::Background,
                    (false, true) => DensityArm::Adversary,
                    (false, false) => DensityArm::CoLocated,
                };
                out.push(ArmDensity {
                    arm,
                    scenario: cell.scenario.clone(),
                    t_tx_s: cell.t_tx_s,
                    n_adversaries: cell.n_adversaries,
                    block_index: block.span.index,
                    core_density: c.core_density,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub detector: DetectorConfig,
    pub thresholds: Vec<f64>,
    pub cells: Vec<SweepCell>,
}

impl SweepOutput {
    /// Rows of adversary cells at `delta`, in grid order.
    pub fn rows(&self, delta: f64) -> Vec<SweepRow> {
        let d = DetectorConfig { density_threshold: delta, ..self.detector };
        self.cells.iter().filter(|c| !c.is_benign()).map(|c| c.row(&d)).collect()
    }

    pub fn benign_rows(&self, delta: f64) -> Vec<SweepRow> {
        let d = DetectorConfig { density_threshold: delta, ..self.detector };
        self.cells.iter().filter(|c| c.is_benign()).map(|c| c.row(&d)).collect()
    }

    pub fn densities(&self) -> Vec<ArmDensity> {
        arm_densities(&self.cells)
    }
}

#[derive(Clone, Copy)]
struct CellSpec {
    scenario: usize,
    benign: bool,
    t_tx: f64,
    n: usize,
}

fn adversary_trace(
    background: &[PacketRecord],
    scenario: &ScenarioConfig,
    templates: &[AdversaryConfig],
    t_tx: f64,
    n: usize,
    seed: u64,
) -> Result<(Vec<PacketRecord>, f64)> {
    let mut records = background.to_vec();
    let mut start = f64::INFINITY;
    for (slot, template) in templates.iter().take(n).enumerate() {
        let adv = AdversaryConfig { t_tx_s: t_tx, ..template.clone() };
        start = start.min(adv.present_from_s);
        records = inject_adversary(records, &adv, slot as u16, scenario, seed)?;
    }
    Ok((records, start))
}

/// Runs every (scenario × T_tx × adversary count) cell plus one cell per
/// benign scenario. Backgrounds are synthesised once per scenario from its
/// own seed; adversaries are seeded per cell from the sweep seed.
pub fn grid_sweep(config: &SweepConfig, exec: Exec) -> Result<SweepOutput> {
    config.validate()?;
    let mut specs = Vec::new();
    for (i, _) in config.scenarios.iter().enumerate() {
        for &t_tx in &config.t_tx_grid {
            for n in 1..=config.max_adversaries {
                specs.push(CellSpec { scenario: i, benign: false, t_tx, n });
            }
        }
    }
    for (i, _) in config.benign.iter().enumerate() {
        specs.push(CellSpec { scenario: i, benign: true, t_tx: 0.0, n: 0 });
    }

    let all_scenarios: Vec<(bool, usize)> =
        (0..config.scenarios.len()).map(|i| (false, i)).chain((0..config.benign.len()).map(|i| (true, i))).collect();
    let scenario_of = |benign: bool, i: usize| if benign { &config.benign[i] } else { &config.scenarios[i] };
    let backgrounds: HashMap<(bool, usize), Vec<PacketRecord>> = exec
        .map(&all_scenarios, |&(b, i)| synthesize_background(scenario_of(b, i), exec).map(|r| ((b, i), r)))
        .into_iter()
        .collect::<Result<_>>()?;

    let cells = exec.map(&specs, |spec| -> Result<SweepCell> {
        let scenario = scenario_of(spec.benign, spec.scenario);
        let background = &backgrounds[&(spec.benign, spec.scenario)];
        if spec.benign {
            let out = run_stream(background.iter().cloned(), &config.detector, exec)?;
            return Ok(SweepCell {
                scenario: scenario.name.clone(),
                t_tx_s: None,
                n_adversaries: 0,
                adversary_start_s: None,
                blocks: out.blocks,
            });
        }
        let seed = mix(config.seed ^ mix(spec.scenario as u64) ^ mix(spec.t_tx.to_bits()) ^ spec.n as u64);
        let (records, start) = adversary_trace(background, scenario, &config.adversaries, spec.t_tx, spec.n, seed)?;
        let out = run_stream(records, &config.detector, exec)?;
        Ok(SweepCell {
            scenario: scenario.name.clone(),
            t_tx_s: Some(spec.t_tx),
            n_adversaries: spec.n,
            adversary_start_s: Some(start),
            blocks: out.blocks,
        })
    });
    Ok(SweepOutput {
        detector: config.detector,
        thresholds: config.thresholds.clone(),
        cells: cells.into_iter().collect::<Result<_>>()?,
    })
}
