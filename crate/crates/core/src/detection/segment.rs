use std::collections::HashMap;

use crate::detection::{DetectorConfig, Ecosystem, PacketRecord};
use crate::fingerprint::ValidMask;

/// One identifier's packets within one window and ecosystem.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub window_index: i64,
    pub ecosystem: Ecosystem,
    pub device_id: String,
    /// Component-wise mean over packets where the component is valid.
    pub mean_fingerprint: [f64; 5],
    /// Components with at least one valid packet.
    pub valid: ValidMask,
    pub packet_count: usize,
    pub t_min: f64,
    pub t_max: f64,
    /// Packets carrying a ground-truth label.
    pub labeled_count: usize,
}

struct Acc {
    sums: [f64; 5],
    counts: [usize; 5],
    packets: usize,
    labeled: usize,
    t_min: f64,
    t_max: f64,
}

/// Groups packets by `(floor(t / W), ecosystem, identifier)`.
///
/// Records are sorted on entry; invalid records are skipped. Segments come
/// out in order of their first packet.
pub fn segment_block(records: &[PacketRecord], config: &DetectorConfig) -> Vec<Segment> {
    let mut order: Vec<&PacketRecord> = records.iter().filter(|r| r.is_valid()).collect();
    order.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));

    let mut index: HashMap<(i64, Ecosystem, &str), usize> = HashMap::new();
    let mut keys: Vec<(i64, Ecosystem, &str)> = Vec::new();
    let mut accs: Vec<Acc> = Vec::new();
    for r in order {
        let window = (r.timestamp / config.window_s).floor() as i64;
        let key = (window, r.ecosystem, r.identifier.as_str());
        let slot = *index.entry(key).or_insert_with(|| {
            keys.push(key);
            accs.push(Acc {
                sums: [0.0; 5],
                counts: [0; 5],
                packets: 0,
                labeled: 0,
                t_min: f64::INFINITY,
                t_max: f64::NEG_INFINITY,
            });
            accs.len() - 1
        });
        let acc = &mut accs[slot];
        for (i, &v) in r.fingerprint.components.iter().enumerate() {
            if r.fingerprint.valid.is_valid(i) && v.is_finite() {
                acc.sums[i] += v;
                acc.counts[i] += 1;
            }
        }
        acc.packets += 1;
        acc.labeled += r.is_labeled() as usize;
        acc.t_min = acc.t_min.min(r.timestamp);
        acc.t_max = acc.t_max.max(r.timestamp);
    }

    keys.into_iter()
        .zip(accs)
        .map(|((window, ecosystem, id), acc)| {
            let mut mean = [f64::NAN; 5];
            let mut flags = [false; 5];
            for i in 0..5 {
                if acc.counts[i] > 0 {
                    mean[i] = acc.sums[i] / acc.counts[i] as f64;
                    flags[i] = true;
                }
            }
            Segment {
                window_index: window,
                ecosystem,
                device_id: id.to_string(),
                mean_fingerprint: mean,
                valid: ValidMask::from_flags(flags),
                packet_count: acc.packets,
                t_min: acc.t_min,
                t_max: acc.t_max,
                labeled_count: acc.labeled,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::Fingerprint;

    fn rec(t: f64, id: &str, eco: Ecosystem, cfo: f64) -> PacketRecord {
        PacketRecord::new(t, id, eco, Fingerprint::new([cfo; 5], ValidMask::ALL))
    }

    #[test]
    fn window_boundary_splits() {
        let cfg = DetectorConfig::default();
        let recs = vec![
            rec(130.0, "a", Ecosystem::Apple, 3.0),
            rec(10.0, "a", Ecosystem::Apple, 1.0),
            rec(50.0, "a", Ecosystem::Apple, 2.0),
        ];
        let segs = segment_block(&recs, &cfg);
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].packet_count, 2);
        assert_eq!(segs[0].mean_fingerprint[0], 1.5);
        assert_eq!((segs[0].t_min, segs[0].t_max), (10.0, 50.0));
        assert_eq!(segs[1].packet_count, 1);
        assert_eq!(segs[1].window_index, 1);
    }

    #[test]
    fn distinct_ids_and_ecosystems_split() {
        let cfg = DetectorConfig::default();
        let recs =
            vec![rec(1.0, "a", Ecosystem::Apple, 0.0), rec(2.0, "b", Ecosystem::Apple, 0.0), rec(3.0, "a", Ecosystem::Tile, 0.0)];
        assert_eq!(segment_block(&recs, &cfg).len(), 3);
    }

    #[test]
    fn invalid_components_excluded_from_means() {
        let cfg = DetectorConfig::default();
        let mut a = rec(1.0, "a", Ecosystem::Google, 10.0);
        a.fingerprint = Fingerprint::new([10.0, 1.0, 2.0, 3.0, 4.0], ValidMask(0b0_0111));
        let b = PacketRecord::new(2.0, "a", Ecosystem::Google, Fingerprint::new([20.0, 3.0, 4.0, 5.0, 6.0], ValidMask::ALL));
        let segs = segment_block(&[a, b], &cfg);
        assert_eq!(segs[0].mean_fingerprint, [15.0, 2.0, 3.0, 5.0, 6.0]);
        assert_eq!(segs[0].valid, ValidMask::ALL);
    }

    #[test]
    fn packets_without_packet_cfo_are_skipped() {
        let cfg = DetectorConfig::default();
        let mut a = rec(1.0, "a", Ecosystem::Apple, 1.0);
        a.fingerprint = Fingerprint::new([1.0; 5], ValidMask(0b1_1110));
        assert!(segment_block(&[a], &cfg).is_empty());
        assert!(segment_block(&[], &cfg).is_empty());
    }
}
