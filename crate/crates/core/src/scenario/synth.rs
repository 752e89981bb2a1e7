use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adversary::{adversary_capture, inject_adversary};
use super::config::{BackgroundDevice, ScenarioConfig};
use super::model::{calibrate, Drift};
use crate::detection::PacketRecord;
use crate::error::Result;
use crate::exec::Exec;
use crate::gfsk::{DeviceProfile, IqPacket};

pub(crate) fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn format_mac(v: u64) -> String {
    let b = v.to_be_bytes();
    format!("{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}", b[2], b[3], b[4], b[5], b[6], b[7])
}

/// 48-bit background identifier with the top bit clear; adversary
/// identifiers always have it set.
pub fn background_identifier(seed: u64, device: usize, kind: u64, epoch: i64) -> String {
    let h = mix(mix(mix(seed) ^ device as u64) ^ (kind << 56) ^ epoch as u64);
    format_mac(h & 0x7fff_ffff_ffff)
}

pub(crate) fn device_seed(seed: u64, index: usize) -> u64 {
    mix(seed ^ mix(index as u64 + 1))
}

fn rotating(seed: u64, device: usize, kind: u64, period: Option<f64>, offset: f64, t: f64) -> String {
    let epoch = period.map_or(0, |p| ((t + offset) / p).floor() as i64);
    background_identifier(seed, device, kind, epoch)
}

/// Emission loop of one device. With `capture` set every emission is
/// synthesised physically and its IQ packet is pushed alongside the record.
fn device_records(
    config: &ScenarioConfig,
    index: usize,
    device: &BackgroundDevice,
    mut capture: Option<&mut Vec<IqPacket>>,
) -> Result<Vec<PacketRecord>> {
    let seed = device_seed(config.seed, index);
    let policy = device.policy();
    let model = config.fingerprint_model();
    let profile = device.profile();
    let sampler = if capture.is_none() { Some(calibrate(&profile, &model, seed ^ 0xca1)?) } else { None };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (from, to) = device.presence(config.duration_s);
    let mac_offset = policy.mac_rotation_s.map_or(0.0, |p| rng.random_range(0.0..p));
    let id_offset = policy.payload_id_rotation_s.map_or(0.0, |p| rng.random_range(0.0..p));

    let mut drift = Drift::new(config.drift_hz, config.drift_tau_s, &mut rng);
    let interval = policy.adv_interval_s;
    let mut out = Vec::with_capacity(((to - from) / interval) as usize + 1);
    let mut t = from + rng.random_range(0.0..interval);
    while t < to {
        let offset = drift.at(t, &mut rng);
        if rng.random::<f64>() < device.reception {
            let mac = rotating(config.seed, index, 0, policy.mac_rotation_s, mac_offset, t);
            let fp = match (&sampler, capture.as_deref_mut()) {
                (Some(s), _) => s.sample(t, &mut rng)?.shifted(offset),
                (None, Some(packets)) => {
                    let shifted = DeviceProfile { cfo_hz: profile.cfo_hz + offset, ..profile.clone() };
                    let packet = model.emit_packet(&shifted, t, &mut rng)?;
                    let fp = model.extract(&packet)?;
                    packets.push(packet);
                    fp
                }
                (None, None) => unreachable!("sampler exists whenever capture is off"),
            };
            let mut r = if policy.segments_on_payload() {
                let privid = rotating(config.seed, index, 1, policy.payload_id_rotation_s, id_offset, t).replace(':', "");
                let mut r = PacketRecord::new(t, privid, policy.ecosystem, fp);
                r.mac = Some(mac);
                r
            } else {
                PacketRecord::new(t, mac, policy.ecosystem, fp)
            };
            r.phase = config.phase_at(t).to_string();
            out.push(r);
        }
        let j = if config.jitter > 0.0 { rng.random_range(-config.jitter..config.jitter) } else { 0.0 };
        t += interval * (1.0 + j);
    }
    Ok(out)
}

/// Merges per-device emissions into one time-ordered, unlabelled trace.
/// Each device draws from its own seeded generator, so the result does not
/// depend on `exec`.
pub fn synthesize_background(config: &ScenarioConfig, exec: Exec) -> Result<Vec<PacketRecord>> {
    config.validate()?;
    let devices = config.resolved_devices();
    let indexed: Vec<(usize, &BackgroundDevice)> = devices.iter().enumerate().collect();
    let per_device = exec.map(&indexed, |&(i, d)| device_records(config, i, d, None));
    let mut all = Vec::new();
    for r in per_device {
        all.extend(r?);
    }
    all.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    Ok(all)
}

/// Background plus the adversaries declared in the scenario itself.
pub fn synthesize_scenario(config: &ScenarioConfig, exec: Exec) -> Result<Vec<PacketRecord>> {
    let mut records = synthesize_background(config, exec)?;
    for (slot, adv) in config.adversaries.iter().enumerate() {
        records = inject_adversary(records, adv, slot as u16, config, config.seed)?;
    }
    Ok(records)
}

/// Physical synthesis of every emission of the scenario, adversaries
/// included, as (record, packet) pairs in time order. Identifiers and
/// timestamps match [`synthesize_scenario`] with `physical = true`.
pub fn synthesize_capture(config: &ScenarioConfig, exec: Exec) -> Result<Vec<(PacketRecord, IqPacket)>> {
    config.validate()?;
    let devices = config.resolved_devices();
    let indexed: Vec<(usize, &BackgroundDevice)> = devices.iter().enumerate().collect();
    let per_device = exec.map(&indexed, |&(i, d)| {
        let mut packets = Vec::new();
        device_records(config, i, d, Some(&mut packets)).map(|r| r.into_iter().zip(packets).collect::<Vec<_>>())
    });
    let mut all = Vec::new();
    for r in per_device {
        all.extend(r?);
    }
    for (slot, adv) in config.adversaries.iter().enumerate() {
        all.extend(adversary_capture(adv, slot as u16, config, config.seed)?);
    }
    all.sort_by(|a, b| a.0.timestamp.total_cmp(&b.0.timestamp));
    Ok(all)
}
