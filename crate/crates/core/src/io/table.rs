//! CSV tables: feature rows, detector outputs and sweep results.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::detection::{Alert, BlockReport, PacketRecord};
use crate::error::{Error, Result};
use crate::fingerprint::{Fingerprint, ValidMask};
use crate::scenario::{ArmDensity, DensityArm, SweepRow};

pub const FEATURE_COLUMNS: [&str; 10] = [
    "timestamp_s",
    "identifier",
    "ecosystem",
    "cfo_packet_hz",
    "cfo_00_hz",
    "cfo_11_hz",
    "cfo_10_hz",
    "cfo_01_hz",
    "valid_mask",
    "label",
];

fn csv_err(e: csv::Error) -> Error {
    let offset = e.position().map_or(0, |p| p.byte());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Format { offset, message: format!("{kind:?}") },
    }
}

/// Feature header, with `phase` before the trailing `label` when asked for.
pub fn feature_header(with_phase: bool) -> Vec<&'static str> {
    let mut h = FEATURE_COLUMNS.to_vec();
    if with_phase {
        h.insert(9, "phase");
    }
    h
}

fn component(v: f64, valid: bool) -> String {
    if valid {
        v.to_string()
    } else {
        String::new()
    }
}

/// Invalid components are written as empty fields.
pub fn write_features<W: Write>(w: W, records: &[PacketRecord], with_phase: bool) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(feature_header(with_phase)).map_err(csv_err)?;
    for r in records {
        let fp = &r.fingerprint;
        let mut row = vec![r.timestamp.to_string(), r.identifier.clone(), r.ecosystem.to_string()];
        row.extend((0..5).map(|i| component(fp.components[i], fp.valid.is_valid(i))));
        row.push(fp.valid.to_string());
        if with_phase {
            row.push(r.phase.clone());
        }
        row.push(r.label.clone());
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub line: u64,
    pub offset: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct FeatureTable {
    pub records: Vec<PacketRecord>,
    pub rows: usize,
    pub malformed: Vec<RowError>,
}

impl FeatureTable {
    pub fn bad_fraction(&self) -> f64 {
        if self.rows == 0 {
            0.0
        } else {
            self.malformed.len() as f64 / self.rows as f64
        }
    }
}

struct Columns {
    index: [usize; 10],
    phase: Option<usize>,
}

impl Columns {
    fn from_header(header: &csv::StringRecord) -> Result<Self> {
        let find = |name: &str| header.iter().position(|h| h.trim() == name);
        let mut index = [0; 10];
        for (slot, name) in index.iter_mut().zip(FEATURE_COLUMNS) {
            *slot = find(name).ok_or_else(|| Error::Format { offset: 0, message: format!("header lacks column {name:?}") })?;
        }
        Ok(Columns { index, phase: find("phase") })
    }

    fn parse(&self, row: &csv::StringRecord) -> std::result::Result<PacketRecord, String> {
        let field = |i: usize| row.get(self.index[i]).ok_or_else(|| format!("missing {}", FEATURE_COLUMNS[i]));
        let number = |i: usize| -> std::result::Result<f64, String> {
            let s = field(i)?.trim();
            s.parse::<f64>().map_err(|_| format!("{} is not a number: {s:?}", FEATURE_COLUMNS[i]))
        };
        let timestamp = number(0)?;
        let identifier = field(1)?.to_string();
        if identifier.is_empty() {
            return Err("empty identifier".into());
        }
        let ecosystem = field(2)?.parse().map_err(|_| format!("unknown ecosystem {:?}", field(2).unwrap_or("")))?;
        let mask: u8 =
            field(8)?.trim().parse().map_err(|_| format!("valid_mask {:?} is not an integer", field(8).unwrap_or("")))?;
        if mask > ValidMask::ALL.0 {
            return Err(format!("valid_mask {mask} exceeds 5 bits"));
        }
        let valid = ValidMask(mask);
        let mut components = [f64::NAN; 5];
        for (i, c) in components.iter_mut().enumerate() {
            if valid.is_valid(i) {
                let v = number(3 + i)?;
                if !v.is_finite() {
                    return Err(format!("{} marked valid but not finite", FEATURE_COLUMNS[3 + i]));
                }
                *c = v;
            }
        }
        let mut r = PacketRecord::new(timestamp, identifier, ecosystem, Fingerprint::new(components, valid));
        r.label = field(9)?.to_string();
        if let Some(p) = self.phase {
            r.phase = row.get(p).unwrap_or("").to_string();
        }
        Ok(r)
    }
}

/// Reads feature rows, counting rather than failing on bad rows. A missing
/// or incomplete header is a hard format error.
pub fn read_features<R: Read>(r: R) -> Result<FeatureTable> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    let header = reader.headers().map_err(csv_err)?.clone();
    let columns = Columns::from_header(&header)?;
    let mut table = FeatureTable::default();
    let mut row = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {
                table.rows += 1;
                let pos = row.position().map_or((0, 0), |p| (p.line(), p.byte()));
                match columns.parse(&row) {
                    Ok(rec) => table.records.push(rec),
                    Err(message) => table.malformed.push(RowError { line: pos.0, offset: pos.1, message }),
                }
            }
            Err(e) => {
                if let csv::ErrorKind::Io(_) = e.kind() {
                    return Err(csv_err(e));
                }
                table.rows += 1;
                let pos = e.position().map_or((0, 0), |p| (p.line(), p.byte()));
                table.malformed.push(RowError { line: pos.0, offset: pos.1, message: e.to_string() });
            }
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertRow {
    pub flag_time_s: f64,
    pub episode_start_s: f64,
    pub episode_end_s: f64,
    pub ecosystem: String,
    pub cluster_core_density: f64,
    pub unique_ids: usize,
}

impl From<&Alert> for AlertRow {
    fn from(a: &Alert) -> Self {
        AlertRow {
            flag_time_s: a.flag_time_s,
            episode_start_s: a.episode_start_s,
            episode_end_s: a.episode_end_s,
            ecosystem: a.ecosystem.to_string(),
            cluster_core_density: a.cluster_core_density,
            unique_ids: a.unique_ids,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub block_index: i64,
    pub ecosystem: String,
    pub n_segments: usize,
    pub unique_ids: usize,
    pub core_radius: f64,
    pub core_density: f64,
    pub t_min_s: f64,
    pub t_max_s: f64,
}

pub fn diagnostic_rows(blocks: &[BlockReport]) -> Vec<DiagnosticRow> {
    blocks
        .iter()
        .flat_map(|b| {
            b.clusters.iter().map(|c| DiagnosticRow {
                block_index: c.block_index,
                ecosystem: c.ecosystem.to_string(),
                n_segments: c.n_segments,
                unique_ids: c.unique_ids,
                core_radius: c.core_radius,
                core_density: c.core_density,
                t_min_s: c.t_min,
                t_max_s: c.t_max,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCsvRow {
    pub scenario: String,
    pub t_tx_s: Option<f64>,
    pub n_adversaries: usize,
    pub alerted: bool,
    pub first_alert_latency_s: Option<f64>,
    pub max_core_density: f64,
}

impl From<&SweepRow> for SweepCsvRow {
    fn from(r: &SweepRow) -> Self {
        SweepCsvRow {
            scenario: r.scenario.clone(),
            t_tx_s: r.t_tx_s,
            n_adversaries: r.n_adversaries,
            alerted: r.alerted,
            first_alert_latency_s: r.first_alert_latency_s,
            max_core_density: r.max_core_density,
        }
    }
}

/// A sweep row tagged with the density threshold it was replayed at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub density_threshold: f64,
    pub scenario: String,
    pub t_tx_s: Option<f64>,
    pub n_adversaries: usize,
    pub alerted: bool,
    pub first_alert_latency_s: Option<f64>,
    pub max_core_density: f64,
}

impl From<&SweepRow> for ThresholdRow {
    fn from(r: &SweepRow) -> Self {
        ThresholdRow {
            density_threshold: r.density_threshold,
            scenario: r.scenario.clone(),
            t_tx_s: r.t_tx_s,
            n_adversaries: r.n_adversaries,
            alerted: r.alerted,
            first_alert_latency_s: r.first_alert_latency_s,
            max_core_density: r.max_core_density,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub arm: DensityArm,
    pub scenario: String,
    pub t_tx_s: Option<f64>,
    pub n_adversaries: usize,
    pub block_index: i64,
    pub core_density: f64,
}

impl From<&ArmDensity> for DensityRow {
    fn from(d: &ArmDensity) -> Self {
        DensityRow {
            arm: d.arm,
            scenario: d.scenario.clone(),
            t_tx_s: d.t_tx_s,
            n_adversaries: d.n_adversaries,
            block_index: d.block_index,
            core_density: d.core_density,
        }
    }
}

/// Serialises `rows` with a header, even when there are none.
pub fn write_rows<W: Write, T: Serialize>(w: W, header: &[&str], rows: &[T]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(header).map_err(csv_err)?;
    for r in rows {
        out.serialize(r).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(r: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(r).deserialize().map(|row| row.map_err(csv_err)).collect()
}

pub const ALERT_HEADER: [&str; 6] =
    ["flag_time_s", "episode_start_s", "episode_end_s", "ecosystem", "cluster_core_density", "unique_ids"];
pub const DIAGNOSTIC_HEADER: [&str; 8] =
    ["block_index", "ecosystem", "n_segments", "unique_ids", "core_radius", "core_density", "t_min_s", "t_max_s"];
pub const SWEEP_HEADER: [&str; 6] =
    ["scenario", "t_tx_s", "n_adversaries", "alerted", "first_alert_latency_s", "max_core_density"];
pub const THRESHOLD_HEADER: [&str; 7] =
    ["density_threshold", "scenario", "t_tx_s", "n_adversaries", "alerted", "first_alert_latency_s", "max_core_density"];
pub const DENSITY_HEADER: [&str; 6] = ["arm", "scenario", "t_tx_s", "n_adversaries", "block_index", "core_density"];

pub fn write_alerts<W: Write>(w: W, alerts: &[Alert]) -> Result<()> {
    let rows: Vec<AlertRow> = alerts.iter().map(AlertRow::from).collect();
    write_rows(w, &ALERT_HEADER, &rows)
}

pub fn write_diagnostics<W: Write>(w: W, blocks: &[BlockReport]) -> Result<()> {
    write_rows(w, &DIAGNOSTIC_HEADER, &diagnostic_rows(blocks))
}
