//! Raw IQ captures and their per-packet sidecar index.

use std::io::{BufRead, BufReader, Read, Write};

use num_complex::Complex64;

use crate::detection::Ecosystem;
use crate::error::{Error, Result};
use crate::gfsk::{GfskConfig, IqPacket};

pub const SIDECAR_HEADER: &str = "start_sample,end_sample,timestamp_s,bits_hex,device_label";

/// Bytes per complex sample: two little-endian `f32`.
pub const SAMPLE_BYTES: usize = 8;

pub fn write_iq<W: Write>(w: &mut W, samples: &[Complex64]) -> Result<()> {
    let mut buf = Vec::with_capacity(samples.len() * SAMPLE_BYTES);
    for s in samples {
        buf.extend_from_slice(&(s.re as f32).to_le_bytes());
        buf.extend_from_slice(&(s.im as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_iq(bytes: &[u8]) -> Result<Vec<Complex64>> {
    let whole = bytes.len() - bytes.len() % SAMPLE_BYTES;
    if whole != bytes.len() {
        return Err(Error::Format {
            offset: whole as u64,
            message: format!("{} trailing bytes do not form a complete I/Q sample", bytes.len() - whole),
        });
    }
    Ok(bytes
        .chunks_exact(SAMPLE_BYTES)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex64::new(re as f64, im as f64)
        })
        .collect())
}

/// MSB-first packing, zero padded to whole bytes.
pub fn bits_to_hex(bits: &[bool]) -> String {
    let bytes: Vec<u8> =
        bits.chunks(8).map(|c| c.iter().enumerate().fold(0u8, |b, (i, &v)| if v { b | (0x80 >> i) } else { b })).collect();
    hex::encode(bytes)
}

pub fn hex_to_bits(hex_str: &str, n_bits: usize) -> Option<Vec<bool>> {
    let bytes = hex::decode(hex_str).ok()?;
    if bytes.len() != n_bits.div_ceil(8) {
        return None;
    }
    Some((0..n_bits).map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0).collect())
}

/// Identity carried in a sidecar `device_label`: `ecosystem/identifier/label`,
/// the label part free text. A label without that shape is read as a bare
/// identifier of unknown ecosystem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceLabel {
    pub ecosystem: Ecosystem,
    pub identifier: String,
    pub label: String,
}

impl DeviceLabel {
    pub fn encode(&self) -> String {
        format!("{}/{}/{}", self.ecosystem, self.identifier, self.label)
    }

    pub fn parse(s: &str) -> Self {
        let mut parts = s.splitn(3, '/');
        if let (Some(e), Some(id), Some(label)) = (parts.next(), parts.next(), parts.next()) {
            if let Ok(ecosystem) = e.parse::<Ecosystem>() {
                if !id.is_empty() {
                    return DeviceLabel { ecosystem, identifier: id.to_string(), label: label.to_string() };
                }
            }
        }
        DeviceLabel { ecosystem: Ecosystem::Unknown, identifier: s.to_string(), label: String::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SidecarEntry {
    pub start_sample: u64,
    pub end_sample: u64,
    pub timestamp_s: f64,
    pub bits_hex: String,
    pub device_label: String,
    /// Byte offset of the line in the sidecar file.
    pub offset: u64,
}

impl SidecarEntry {
    pub fn n_samples(&self) -> u64 {
        self.end_sample - self.start_sample
    }

    /// Cuts this packet out of `iq`. Sample count must be a whole number of
    /// symbols and agree with the hex payload length.
    pub fn packet(&self, iq: &[Complex64], gfsk: &GfskConfig) -> Result<IqPacket> {
        let have = iq.len() as u64;
        if self.end_sample > have {
            return Err(Error::Format {
                offset: have * SAMPLE_BYTES as u64,
                message: format!(
                    "IQ file truncated: holds {have} samples, missing samples {}..{} of packet at t={}",
                    have.max(self.start_sample),
                    self.end_sample,
                    self.timestamp_s
                ),
            });
        }
        let sps = gfsk.samples_per_symbol as u64;
        if !self.n_samples().is_multiple_of(sps) {
            return Err(Error::Format {
                offset: self.offset,
                message: format!("packet length {} is not a multiple of {sps} samples per symbol", self.n_samples()),
            });
        }
        let n_bits = (self.n_samples() / sps) as usize;
        let bits = hex_to_bits(&self.bits_hex, n_bits)
            .ok_or_else(|| Error::Format { offset: self.offset, message: format!("bits_hex does not encode {n_bits} bits") })?;
        Ok(IqPacket {
            samples: iq[self.start_sample as usize..self.end_sample as usize].to_vec(),
            bits,
            sps: gfsk.samples_per_symbol,
            sample_rate: gfsk.sample_rate,
            timestamp: self.timestamp_s,
            truth: None,
        })
    }
}

/// Writes a capture: packets back to back in the IQ stream, one sidecar
/// line each.
pub fn write_capture<'a, W1: Write, W2: Write>(
    iq: &mut W1,
    sidecar: &mut W2,
    packets: impl IntoIterator<Item = (&'a IqPacket, String)>,
) -> Result<usize> {
    writeln!(sidecar, "{SIDECAR_HEADER}")?;
    let mut start = 0u64;
    let mut n = 0;
    for (packet, label) in packets {
        if label.contains(['\n', '\r']) {
            return Err(Error::Config(format!("device label {label:?} spans lines")));
        }
        write_iq(iq, &packet.samples)?;
        let end = start + packet.samples.len() as u64;
        writeln!(sidecar, "{start},{end},{},{},{label}", packet.timestamp, bits_to_hex(&packet.bits))?;
        start = end;
        n += 1;
    }
    Ok(n)
}

/// Strict parse: any bad line fails with its byte offset. The header line
/// is optional; `device_label` runs to the end of the line and may hold
/// commas.
pub fn read_sidecar<R: Read>(r: R) -> Result<Vec<SidecarEntry>> {
    let mut reader = BufReader::new(r);
    let mut out = Vec::new();
    let mut offset = 0u64;
    let mut line = String::new();
    let mut first = true;
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| Error::Format { offset, message: e.to_string() })?;
        if n == 0 {
            break;
        }
        let text = line.trim_end_matches(['\n', '\r']);
        let here = offset;
        offset += n as u64;
        if text.is_empty() || (first && text == SIDECAR_HEADER) {
            first = false;
            continue;
        }
        first = false;
        out.push(parse_sidecar_line(text, here)?);
    }
    Ok(out)
}

fn parse_sidecar_line(text: &str, offset: u64) -> Result<SidecarEntry> {
    let bad = |message: String| Error::Format { offset, message };
    let fields: Vec<&str> = text.splitn(5, ',').collect();
    if fields.len() != 5 {
        return Err(bad(format!("expected 5 fields, found {}", fields.len())));
    }
    let start_sample: u64 = fields[0].trim().parse().map_err(|_| bad(format!("bad start_sample {:?}", fields[0])))?;
    let end_sample: u64 = fields[1].trim().parse().map_err(|_| bad(format!("bad end_sample {:?}", fields[1])))?;
    let timestamp_s: f64 = fields[2].trim().parse().map_err(|_| bad(format!("bad timestamp_s {:?}", fields[2])))?;
    if end_sample <= start_sample {
        return Err(bad(format!("empty sample range {start_sample}..{end_sample}")));
    }
    if !timestamp_s.is_finite() {
        return Err(bad("timestamp_s is not finite".into()));
    }
    let bits_hex = fields[3].trim();
    if !bits_hex.len().is_multiple_of(2) || !bits_hex.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(bad(format!("bits_hex {bits_hex:?} is not hex")));
    }
    Ok(SidecarEntry {
        start_sample,
        end_sample,
        timestamp_s,
        bits_hex: bits_hex.to_string(),
        device_label: fields[4].to_string(),
        offset,
    })
}
