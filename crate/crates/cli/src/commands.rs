use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use aircatch::detection::{run_stream, DetectorConfig, PacketRecord};
use aircatch::fingerprint::{extract_batch, FingerprintOptions};
use aircatch::gfsk::GfskConfig;
use aircatch::io::{self as fmt, DensityRow, DeviceLabel, SweepCsvRow, ThresholdRow};
use aircatch::scenario::{
    anonymize_id, anonymize_ids, grid_sweep, inject_adversary, presets, synthesize_capture, synthesize_scenario, AdversaryConfig,
    DensityArm, ScenarioConfig, SweepSpec,
};
use aircatch::Exec;
use anyhow::{anyhow, bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::args::*;
use crate::manifest::{manifest_path, read_manifest, FileDigest, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_MISMATCH: i32 = 1;
pub const EXIT_ALERTS: i32 = 10;

/// Largest tolerated fraction of malformed feature rows.
const MAX_BAD_FRACTION: f64 = 0.01;

#[derive(Default)]
struct Outcome {
    inputs: Vec<FileDigest>,
    outputs: Vec<PathBuf>,
    config: Option<String>,
    seed: Option<u64>,
    details: Map<String, Value>,
    exit_code: i32,
}

impl Outcome {
    fn detail(&mut self, key: &str, value: impl Into<Value>) {
        self.details.insert(key.into(), value.into());
    }
}

/// Runs one command and writes its manifest. Returns the exit code.
pub fn run(mut command: Command) -> Result<i32> {
    if let Command::Report(a) = &mut command {
        a.out = Some(report_path(a));
    }
    command.absolutize().context("resolving paths")?;
    if let Command::Rerun(a) = &command {
        return rerun(&a.manifest);
    }
    let started = Instant::now();
    let outcome = match &command {
        Command::Synth(a) => synth(a)?,
        Command::Extract(a) => extract(a)?,
        Command::Inject(a) => inject(a)?,
        Command::Detect(a) => detect(a)?,
        Command::Sweep(a) => sweep(a)?,
        Command::Report(a) => report(a)?,
        Command::Rerun(_) => unreachable!(),
    };
    let outputs = outcome.outputs.iter().map(|p| FileDigest::of_file(p)).collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        command: command.name().into(),
        invocation: command.clone(),
        config: outcome.config,
        seed: outcome.seed,
        inputs: outcome.inputs,
        outputs,
        exit_code: outcome.exit_code,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        wall_clock_s: started.elapsed().as_secs_f64(),
        details: outcome.details,
    };
    let out = command.out().map(Path::to_path_buf).expect("every command has an output");
    let path = manifest_path(&out);
    write_atomic(&path, |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest)?;
        writeln!(w)?;
        Ok(())
    })?;
    log::info!("{} finished in {:.2} s; manifest {}", command.name(), manifest.wall_clock_s, path.display());
    Ok(outcome.exit_code)
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temporary file in {}", dir.display()))?;
    let mut w = BufWriter::new(tmp.reopen()?);
    body(&mut w).with_context(|| format!("writing {}", path.display()))?;
    w.flush()?;
    drop(w);
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// A config reference is a file when one exists at that path, a built-in
/// preset name otherwise.
fn read_config_ref(reference: &Path, presets_of: impl Fn(&str) -> Option<&'static str>) -> Result<(String, FileDigest)> {
    if reference.is_file() {
        let text = std::fs::read_to_string(reference).with_context(|| format!("reading {}", reference.display()))?;
        return Ok((text, FileDigest::of_file(reference)?));
    }
    let name = reference.to_string_lossy();
    match presets_of(&name) {
        Some(text) => Ok((text.to_string(), FileDigest::of_preset(&name, text))),
        None => bail!("config {name:?} is neither a file nor a built-in preset"),
    }
}

fn load_scenario(reference: Option<&Path>) -> Result<(ScenarioConfig, FileDigest)> {
    let reference = reference.ok_or_else(|| anyhow!("--config is required"))?;
    let (text, digest) = read_config_ref(reference, presets::source)?;
    let config = ScenarioConfig::from_toml(&text).with_context(|| format!("config {}", reference.display()))?;
    Ok((config, digest))
}

fn load_key(path: &Path) -> Result<(Vec<u8>, FileDigest)> {
    let mut key = std::fs::read(path).with_context(|| format!("reading key file {}", path.display()))?;
    while key.last().is_some_and(|b| *b == b'\n' || *b == b'\r') {
        key.pop();
    }
    ensure!(!key.is_empty(), "key file {} is empty", path.display());
    Ok((key, FileDigest::of_file(path)?))
}

fn load_features(path: &Path, outcome: &mut Outcome) -> Result<Vec<PacketRecord>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let table = fmt::read_features(std::io::BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    outcome.inputs.push(FileDigest::of_file(path)?);
    outcome.detail("rows", table.rows);
    outcome.detail("malformed_rows", table.malformed.len());
    if let Some(first) = table.malformed.first() {
        log::warn!(
            "{}: {} of {} rows malformed; first at byte {} (line {}): {}",
            path.display(),
            table.malformed.len(),
            table.rows,
            first.offset,
            first.line,
            first.message
        );
        ensure!(
            table.bad_fraction() <= MAX_BAD_FRACTION,
            "format error at byte {}: {} ({} of {} rows malformed, above the {}% limit)",
            first.offset,
            first.message,
            table.malformed.len(),
            table.rows,
            MAX_BAD_FRACTION * 100.0
        );
    }
    Ok(table.records)
}

fn write_features(path: &Path, records: &[PacketRecord]) -> Result<()> {
    write_atomic(path, |w| Ok(fmt::write_features(w, records, true)?))
}

fn synth(a: &SynthArgs) -> Result<Outcome> {
    let mut o = Outcome::default();
    let (mut config, digest) = load_scenario(a.config.as_deref())?;
    o.inputs.push(digest);
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let key = match &a.anonymize {
        Some(p) => {
            let (k, d) = load_key(p)?;
            o.inputs.push(d);
            Some(k)
        }
        None => None,
    };
    o.seed = Some(config.seed);
    o.config = Some(config.to_toml()?);

    if a.features_only {
        let mut records = synthesize_scenario(&config, Exec::default())?;
        if let Some(k) = &key {
            records = anonymize_ids(records, k)?;
        }
        write_features(&a.out, &records)?;
        o.detail("records", records.len());
        o.outputs.push(a.out.clone());
        return Ok(o);
    }

    let capture = synthesize_capture(&config, Exec::default())?;
    let samples: usize = capture.iter().map(|(_, p)| p.samples.len()).sum();
    if samples > 1 << 27 {
        log::warn!("capture holds {samples} samples ({} MiB)", (samples * fmt::SAMPLE_BYTES) >> 20);
    }
    let labels = capture
        .iter()
        .map(|(r, _)| {
            let identifier = match &key {
                Some(k) => anonymize_id(&r.identifier, k)?,
                None => r.identifier.clone(),
            };
            Ok(DeviceLabel { ecosystem: r.ecosystem, identifier, label: r.label.clone() }.encode())
        })
        .collect::<Result<Vec<_>>>()?;
    let sidecar = sidecar_path(&a.out);
    let mut iq_bytes = Vec::with_capacity(samples * fmt::SAMPLE_BYTES);
    let mut index = Vec::new();
    fmt::write_capture(&mut iq_bytes, &mut index, capture.iter().map(|(_, p)| p).zip(labels))?;
    write_atomic(&a.out, |w| Ok(w.write_all(&iq_bytes)?))?;
    write_atomic(&sidecar, |w| Ok(w.write_all(&index)?))?;
    o.detail("packets", capture.len());
    o.detail("samples", samples);
    o.outputs.push(a.out.clone());
    o.outputs.push(sidecar);
    Ok(o)
}

pub fn sidecar_path(iq: &Path) -> PathBuf {
    let mut s = iq.as_os_str().to_owned();
    s.push(".idx");
    PathBuf::from(s)
}

/// Packets are sliced and extracted in chunks to bound memory.
const EXTRACT_CHUNK: usize = 4096;

fn extract(a: &ExtractArgs) -> Result<Outcome> {
    let mut o = Outcome::default();
    let gfsk = match &a.config {
        Some(p) => {
            let (c, d) = load_scenario(Some(p))?;
            o.inputs.push(d);
            c.gfsk
        }
        None => GfskConfig::default(),
    };
    gfsk.validate()?;
    o.config = Some(toml::to_string(&gfsk)?);
    let key = match &a.anonymize {
        Some(p) => {
            let (k, d) = load_key(p)?;
            o.inputs.push(d);
            Some(k)
        }
        None => None,
    };

    let bytes = std::fs::read(&a.iq).with_context(|| format!("reading {}", a.iq.display()))?;
    let iq = fmt::read_iq(&bytes).with_context(|| format!("IQ file {}", a.iq.display()))?;
    drop(bytes);
    let file = File::open(&a.sidecar).with_context(|| format!("opening {}", a.sidecar.display()))?;
    let entries = fmt::read_sidecar(std::io::BufReader::new(file)).with_context(|| format!("sidecar {}", a.sidecar.display()))?;
    o.inputs.push(FileDigest::of_file(&a.iq)?);
    o.inputs.push(FileDigest::of_file(&a.sidecar)?);
    let needed = entries.iter().map(|e| e.end_sample).max().unwrap_or(0);
    let have = iq.len() as u64;
    ensure!(
        needed <= have,
        "IQ file {} truncated at byte {}: holds {have} samples, sidecar needs {needed}; missing samples {have}..{needed}",
        a.iq.display(),
        have * fmt::SAMPLE_BYTES as u64
    );

    let options = FingerprintOptions::remodulated(gfsk);
    let mut records = Vec::with_capacity(entries.len());
    let mut degenerate = 0usize;
    for chunk in entries.chunks(EXTRACT_CHUNK) {
        let packets = chunk
            .iter()
            .map(|e| e.packet(&iq, &gfsk).with_context(|| format!("sidecar {}", a.sidecar.display())))
            .collect::<Result<Vec<_>>>()?;
        for (entry, fp) in chunk.iter().zip(extract_batch(&packets, &options, Exec::default())) {
            match fp {
                Ok(fp) => {
                    let label = DeviceLabel::parse(&entry.device_label);
                    let identifier = match &key {
                        Some(k) => anonymize_id(&label.identifier, k)?,
                        None => label.identifier,
                    };
                    let mut r = PacketRecord::new(entry.timestamp_s, identifier, label.ecosystem, fp);
                    r.label = label.label;
                    records.push(r);
                }
                Err(e) => {
                    degenerate += 1;
                    log::warn!("skipping packet at t={} (sidecar byte {}): {e}", entry.timestamp_s, entry.offset);
                }
            }
        }
    }
    write_atomic(&a.out, |w| Ok(fmt::write_features(w, &records, false)?))?;
    o.detail("packets", entries.len());
    o.detail("records", records.len());
    o.detail("degenerate", degenerate);
    o.outputs.push(a.out.clone());
    Ok(o)
}

/// Inject file schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectSpec {
    /// Preset name or scenario path relative to the inject file.
    pub scenario: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(rename = "adversary")]
    pub adversaries: Vec<AdversaryConfig>,
}

fn inject(a: &InjectArgs) -> Result<Outcome> {
    let mut o = Outcome::default();
    let path = a.config.as_deref().ok_or_else(|| anyhow!("--config is required"))?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    o.inputs.push(FileDigest::of_file(path)?);
    let spec: InjectSpec = toml::from_str(&text).map_err(|e| anyhow!("config {}: {}", path.display(), e.message()))?;
    ensure!(!spec.adversaries.is_empty(), "config {}: no [[adversary]] tables", path.display());
    let base = path.parent().unwrap_or(Path::new("."));
    let scenario = presets::resolve(&spec.scenario, base)?;
    if presets::source(&spec.scenario).is_none() {
        o.inputs.push(FileDigest::of_file(&base.join(&spec.scenario))?);
    }
    let seed = a.seed.or(spec.seed).unwrap_or(scenario.seed);
    let key = match &a.anonymize {
        Some(p) => {
            let (k, d) = load_key(p)?;
            o.inputs.push(d);
            Some(k)
        }
        None => None,
    };
    let mut records = load_features(&a.features, &mut o)?;
    for (slot, adv) in spec.adversaries.iter().enumerate() {
        records = inject_adversary(records, adv, slot as u16, &scenario, seed)?;
    }
    if let Some(k) = &key {
        records = anonymize_ids(records, k)?;
    }
    write_features(&a.out, &records)?;
    o.seed = Some(seed);
    o.config =
        Some(toml::to_string(&InjectSpec { scenario: scenario.to_toml()?, seed: Some(seed), adversaries: spec.adversaries })?);
    o.detail("records", records.len());
    o.outputs.push(a.out.clone());
    Ok(o)
}

fn detector_config(config: Option<&Path>, flags: &DetectorFlags, o: &mut Outcome) -> Result<DetectorConfig> {
    let mut c = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            o.inputs.push(FileDigest::of_file(p)?);
            toml::from_str(&text).map_err(|e| anyhow!("config {}: {}", p.display(), e.message()))?
        }
        None => DetectorConfig::default(),
    };
    flags.apply(&mut c);
    c.validate()?;
    Ok(c)
}

fn detect(a: &DetectArgs) -> Result<Outcome> {
    let mut o = Outcome::default();
    let config = detector_config(a.config.as_deref(), &a.detector, &mut o)?;
    o.config = Some(toml::to_string(&config)?);
    let records = load_features(&a.features, &mut o)?;
    let out = run_stream(records, &config, Exec::default())?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let alerts = a.out.join("alerts.csv");
    let diagnostics = a.out.join("diagnostics.csv");
    write_atomic(&alerts, |w| Ok(fmt::write_alerts(w, &out.alerts)?))?;
    write_atomic(&diagnostics, |w| Ok(fmt::write_diagnostics(w, &out.blocks)?))?;
    for alert in &out.alerts {
        log::info!(
            "alert at t={} ({}): episode {}..{}, density {:.3}",
            alert.flag_time_s,
            alert.ecosystem,
            alert.episode_start_s,
            alert.episode_end_s,
            alert.cluster_core_density
        );
    }
    o.detail("records_used", out.records_used);
    o.detail("dropped_out_of_order", out.dropped_out_of_order);
    o.detail("invalid_records", out.malformed);
    o.detail("blocks", out.blocks.len());
    o.detail("alerts", out.alerts.len());
    o.outputs.extend([alerts, diagnostics]);
    o.exit_code = if out.alerts.is_empty() { EXIT_OK } else { EXIT_ALERTS };
    Ok(o)
}

pub const SWEEP_FILE: &str = "sweep.csv";
pub const BENIGN_FILE: &str = "benign.csv";
pub const THRESHOLDS_FILE: &str = "thresholds.csv";

pub fn density_file(arm: DensityArm) -> String {
    format!("densities_{}.csv", arm.as_str())
}

const ARMS: [DensityArm; 3] = [DensityArm::Background, DensityArm::Adversary, DensityArm::CoLocated];

fn sweep(a: &SweepArgs) -> Result<Outcome> {
    let mut o = Outcome::default();
    let (text, digest, base) = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            (text, FileDigest::of_file(p)?, p.parent().unwrap_or(Path::new(".")).to_path_buf())
        }
        None => (presets::DEFAULT_SWEEP.to_string(), FileDigest::of_preset("sweep", presets::DEFAULT_SWEEP), PathBuf::from(".")),
    };
    o.inputs.push(digest);
    let mut spec: SweepSpec = toml::from_str(&text).map_err(|e| anyhow!("sweep config: {}", e.message()))?;
    for reference in spec.scenarios.iter().chain(&spec.benign_scenarios) {
        if presets::source(reference).is_none() {
            let d = FileDigest::of_file(&base.join(reference))?;
            if !o.inputs.contains(&d) {
                o.inputs.push(d);
            }
        }
    }
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    a.detector.apply(&mut spec.detector);
    o.seed = Some(spec.seed);
    let config = aircatch::scenario::SweepConfig::from_spec(spec.clone(), |r| presets::resolve(r, &base))?;
    o.config = Some(toml::to_string(&spec)?);

    let result = grid_sweep(&config, Exec::default())?;
    let delta = config.detector.density_threshold;
    let mut thresholds = config.thresholds.clone();
    thresholds.push(delta);
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let rows: Vec<SweepCsvRow> = result.rows(delta).iter().map(SweepCsvRow::from).collect();
    let benign: Vec<SweepCsvRow> = result.benign_rows(delta).iter().map(SweepCsvRow::from).collect();
    let replayed: Vec<ThresholdRow> = thresholds
        .iter()
        .flat_map(|&d| result.rows(d).into_iter().chain(result.benign_rows(d)))
        .map(|r| ThresholdRow::from(&r))
        .collect();
    let densities: Vec<DensityRow> = result.densities().iter().map(DensityRow::from).collect();

    let mut write = |name: &str, f: &dyn Fn(&mut BufWriter<File>) -> Result<()>| -> Result<()> {
        let path = a.out.join(name);
        write_atomic(&path, |w| f(w))?;
        o.outputs.push(path);
        Ok(())
    };
    write(SWEEP_FILE, &|w| Ok(fmt::write_rows(w, &fmt::SWEEP_HEADER, &rows)?))?;
    write(BENIGN_FILE, &|w| Ok(fmt::write_rows(w, &fmt::SWEEP_HEADER, &benign)?))?;
    write(THRESHOLDS_FILE, &|w| Ok(fmt::write_rows(w, &fmt::THRESHOLD_HEADER, &replayed)?))?;
    for arm in ARMS {
        let subset: Vec<&DensityRow> = densities.iter().filter(|d| d.arm == arm).collect();
        write(&density_file(arm), &|w| Ok(fmt::write_rows(w, &fmt::DENSITY_HEADER, &subset)?))?;
    }
    o.detail("cells", result.cells.len());
    o.detail("alerted_cells", rows.iter().filter(|r| r.alerted).count());
    o.detail("benign_alerts", benign.iter().filter(|r| r.alerted).count());
    Ok(o)
}

fn report_path(a: &ReportArgs) -> PathBuf {
    a.out.clone().unwrap_or_else(|| a.sweep_dir.join("report.txt"))
}

fn read_table<T: for<'de> Deserialize<'de>>(path: &Path, o: &mut Outcome) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    o.inputs.push(FileDigest::of_file(path)?);
    fmt::read_rows(std::io::BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn report(a: &ReportArgs) -> Result<Outcome> {
    let mut o = Outcome::default();
    let dir = &a.sweep_dir;
    let sweep_manifest = read_manifest(&dir.join("manifest.json")).ok();
    let sweep_delta = sweep_manifest
        .as_ref()
        .and_then(|m| m.config.as_deref())
        .and_then(|c| toml::from_str::<SweepSpec>(c).ok())
        .map(|s| s.detector.density_threshold);
    let delta = a.delta.or(sweep_delta).unwrap_or(DetectorConfig::default().density_threshold);
    let replayed: Vec<ThresholdRow> = read_table(&dir.join(THRESHOLDS_FILE), &mut o)?;

    let mut text = String::new();
    let mut line = |s: String| {
        text.push_str(&s);
        text.push('\n');
    };
    line(format!("density threshold for arm fractions: {delta}"));
    line(String::new());
    line("arm            clusters   median   frac<=delta".into());
    let mut arms = Map::new();
    for arm in ARMS {
        let rows: Vec<DensityRow> = read_table(&dir.join(density_file(arm)), &mut o)?;
        let mut d: Vec<f64> = rows.iter().map(|r| r.core_density).collect();
        let below = d.iter().filter(|&&x| x <= delta).count() as f64 / d.len().max(1) as f64;
        let med = median(&mut d);
        line(format!(
            "{:<14} {:>8}   {:>6}   {:>10.3}",
            arm.as_str(),
            d.len(),
            med.map_or("-".into(), |m| format!("{m:.3}")),
            below
        ));
        arms.insert(arm.as_str().into(), json!({ "clusters": d.len(), "median": med, "fraction_at_or_below": below }));
    }
    line(String::new());
    line("delta    recall        benign alerts   latency min..max (s)".into());
    let mut deltas: Vec<f64> = replayed.iter().map(|r| r.density_threshold).collect();
    deltas.sort_by(f64::total_cmp);
    deltas.dedup();
    let mut per_delta = Map::new();
    for d in deltas {
        let at: Vec<&ThresholdRow> = replayed.iter().filter(|r| r.density_threshold == d).collect();
        let adv: Vec<&&ThresholdRow> = at.iter().filter(|r| r.n_adversaries > 0).collect();
        let hit = adv.iter().filter(|r| r.alerted).count();
        let benign_alerts = at.iter().filter(|r| r.n_adversaries == 0 && r.alerted).count();
        let lat: Vec<f64> = adv.iter().filter_map(|r| r.first_alert_latency_s).collect();
        let span = match (lat.iter().copied().reduce(f64::min), lat.iter().copied().reduce(f64::max)) {
            (Some(lo), Some(hi)) => format!("{lo:.0}..{hi:.0}"),
            _ => "-".into(),
        };
        line(format!("{d:<8} {:>4}/{:<4}     {benign_alerts:>6}          {span}", hit, adv.len()));
        per_delta.insert(d.to_string(), json!({ "alerted": hit, "cells": adv.len(), "benign_alerts": benign_alerts }));
    }
    print!("{text}");
    let out = report_path(a);
    write_atomic(&out, |w| Ok(w.write_all(text.as_bytes())?))?;
    o.outputs.push(out);
    o.detail("arms", arms);
    o.detail("thresholds", per_delta);
    Ok(o)
}

fn rerun(manifest_file: &Path) -> Result<i32> {
    let manifest = read_manifest(manifest_file)?;
    for input in &manifest.inputs {
        let current = match input.path.strip_prefix("preset:") {
            Some("sweep") => FileDigest::of_preset("sweep", presets::DEFAULT_SWEEP),
            Some(name) => FileDigest::of_preset(name, presets::source(name).ok_or_else(|| anyhow!("unknown preset {name}"))?),
            None => FileDigest::of_file(Path::new(&input.path))?,
        };
        ensure!(current.sha256 == input.sha256, "input {} changed since the recorded run", input.path);
    }
    if manifest.tool_version != env!("CARGO_PKG_VERSION") {
        log::warn!("manifest written by version {}, replaying with {}", manifest.tool_version, env!("CARGO_PKG_VERSION"));
    }
    let original_out = manifest.invocation.out().map(Path::to_path_buf).ok_or_else(|| anyhow!("manifest has no output path"))?;
    let scratch = tempfile::tempdir()?;
    let name = original_out.file_name().ok_or_else(|| anyhow!("output path {} has no file name", original_out.display()))?;
    let replay_out = scratch.path().join(name);
    let mut invocation = manifest.invocation.clone();
    invocation.set_out(replay_out.clone());
    let exit = run(invocation)?;

    let original = original_out.to_string_lossy().into_owned();
    let mut mismatches = 0;
    for out in &manifest.outputs {
        // inside an output directory, or a sibling file such as `<out>.idx`
        let replayed = match Path::new(&out.path).strip_prefix(&original_out) {
            Ok(rel) if rel.as_os_str().is_empty() => replay_out.clone(),
            Ok(rel) => replay_out.join(rel),
            Err(_) => {
                let suffix =
                    out.path.strip_prefix(&original).ok_or_else(|| anyhow!("output {} lies outside {original}", out.path))?;
                PathBuf::from(format!("{}{suffix}", replay_out.display()))
            }
        };
        let digest = FileDigest::of_file(&replayed)?;
        let same = digest.sha256 == out.sha256;
        println!("{} {}", if same { "identical" } else { "DIFFERS  " }, out.path);
        mismatches += usize::from(!same);
    }
    if exit != manifest.exit_code {
        println!("exit code {exit}, recorded {}", manifest.exit_code);
        mismatches += 1;
    }
    Ok(if mismatches == 0 { EXIT_OK } else { EXIT_MISMATCH })
}
