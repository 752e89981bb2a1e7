use std::path::{Path, PathBuf};

use aircatch::detection::DetectorConfig;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "aircatch", version, about = "CFO fingerprinting and tracker detection for BLE advertisements")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Synthesise a scenario as an IQ capture, or as feature rows.
    Synth(SynthArgs),
    /// Extract CFO fingerprints from an IQ capture.
    Extract(ExtractArgs),
    /// Add the adversaries of an inject file to a feature trace.
    Inject(InjectArgs),
    /// Run the streaming detector over a feature trace.
    Detect(DetectArgs),
    /// Run the detection grid and dump per-arm densities.
    Sweep(SweepArgs),
    /// Summarise a sweep directory.
    Report(ReportArgs),
    /// Re-execute a run from its manifest and compare outputs.
    Rerun(RerunArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Extract(_) => "extract",
            Command::Inject(_) => "inject",
            Command::Detect(_) => "detect",
            Command::Sweep(_) => "sweep",
            Command::Report(_) => "report",
            Command::Rerun(_) => "rerun",
        }
    }

    pub fn out(&self) -> Option<&Path> {
        match self {
            Command::Synth(a) => Some(&a.out),
            Command::Extract(a) => Some(&a.out),
            Command::Inject(a) => Some(&a.out),
            Command::Detect(a) => Some(&a.out),
            Command::Sweep(a) => Some(&a.out),
            Command::Report(a) => a.out.as_deref(),
            Command::Rerun(_) => None,
        }
    }

    pub fn set_out(&mut self, out: PathBuf) {
        match self {
            Command::Synth(a) => a.out = out,
            Command::Extract(a) => a.out = out,
            Command::Inject(a) => a.out = out,
            Command::Detect(a) => a.out = out,
            Command::Sweep(a) => a.out = out,
            Command::Report(a) => a.out = Some(out),
            Command::Rerun(_) => {}
        }
    }

    /// Makes every file path absolute so the invocation can be replayed from
    /// any directory. Config references that are not files (preset names)
    /// are kept as given.
    pub fn absolutize(&mut self) -> std::io::Result<()> {
        fn abs(p: &mut PathBuf) -> std::io::Result<()> {
            *p = std::path::absolute(&*p)?;
            Ok(())
        }
        fn abs_ref(p: &mut Option<PathBuf>) -> std::io::Result<()> {
            match p {
                Some(path) if path.exists() => abs(path),
                _ => Ok(()),
            }
        }
        match self {
            Command::Synth(a) => {
                abs(&mut a.out)?;
                abs_ref(&mut a.config)?;
                abs_ref(&mut a.anonymize)
            }
            Command::Extract(a) => {
                abs(&mut a.iq)?;
                abs(&mut a.sidecar)?;
                abs(&mut a.out)?;
                abs_ref(&mut a.config)?;
                abs_ref(&mut a.anonymize)
            }
            Command::Inject(a) => {
                abs(&mut a.features)?;
                abs(&mut a.out)?;
                abs_ref(&mut a.config)?;
                abs_ref(&mut a.anonymize)
            }
            Command::Detect(a) => {
                abs(&mut a.features)?;
                abs(&mut a.out)?;
                abs_ref(&mut a.config)
            }
            Command::Sweep(a) => {
                abs(&mut a.out)?;
                abs_ref(&mut a.config)
            }
            Command::Report(a) => {
                abs(&mut a.sweep_dir)?;
                if let Some(o) = &mut a.out {
                    abs(o)?;
                }
                Ok(())
            }
            Command::Rerun(a) => abs(&mut a.manifest),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    /// Scenario TOML file or built-in preset name.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Feature CSV, or IQ file with its sidecar at `<out>.idx`.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[arg(long)]
    pub features_only: bool,
    #[arg(long, value_name = "KEYFILE")]
    pub anonymize: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ExtractArgs {
    /// Little-endian interleaved f32 I/Q samples.
    pub iq: PathBuf,
    /// One line per packet: start_sample,end_sample,timestamp_s,bits_hex,device_label.
    pub sidecar: PathBuf,
    /// Scenario TOML or preset whose `[gfsk]` table describes the capture.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[arg(long, value_name = "KEYFILE")]
    pub anonymize: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct InjectArgs {
    pub features: PathBuf,
    /// Inject file: `scenario = "<preset or path>"` plus `[[adversary]]` tables.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[arg(long, value_name = "KEYFILE")]
    pub anonymize: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DetectArgs {
    pub features: PathBuf,
    /// Detector TOML; flags below override it.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Directory receiving alerts.csv and diagnostics.csv.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub detector: DetectorFlags,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    /// Sweep TOML; the built-in grid when omitted.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub detector: DetectorFlags,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    /// Output directory of `aircatch sweep`.
    pub sweep_dir: PathBuf,
    /// Report file; `<sweep_dir>/report.txt` when omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Threshold for the density fractions; the sweep's own by default.
    #[arg(long, value_name = "F64")]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RerunArgs {
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct DetectorFlags {
    #[arg(long, value_name = "F64")]
    pub delta: Option<f64>,
    #[arg(long = "t-min-s", value_name = "U64")]
    pub t_min_s: Option<u64>,
    #[arg(long = "t-gap-s", value_name = "U64")]
    pub t_gap_s: Option<u64>,
    #[arg(long = "window-s", value_name = "U64")]
    pub window_s: Option<u64>,
    #[arg(long = "block-s", value_name = "U64")]
    pub block_s: Option<u64>,
    #[arg(long = "k-min", value_name = "U32")]
    pub k_min: Option<u32>,
    #[arg(long, value_name = "F64")]
    pub lambda: Option<f64>,
    #[arg(long = "r-min", value_name = "F64")]
    pub r_min: Option<f64>,
}

impl DetectorFlags {
    pub fn apply(&self, c: &mut DetectorConfig) {
        if let Some(v) = self.delta {
            c.density_threshold = v;
        }
        if let Some(v) = self.t_min_s {
            c.t_min_s = v as f64;
        }
        if let Some(v) = self.t_gap_s {
            c.t_gap_s = v as f64;
        }
        if let Some(v) = self.window_s {
            c.window_s = v as f64;
        }
        if let Some(v) = self.block_s {
            c.block_s = v as f64;
        }
        if let Some(v) = self.k_min {
            c.k_min = v as usize;
        }
        if let Some(v) = self.lambda {
            c.lambda = v;
        }
        if let Some(v) = self.r_min {
            c.r_min = v;
        }
    }
}
