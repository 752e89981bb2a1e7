use std::collections::HashSet;

use crate::detection::{DetectorConfig, Ecosystem, Segment};

/// A scored cluster of segments from one ecosystem within one block.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub ecosystem: Ecosystem,
    /// Indices into the block's segment list.
    pub segments: Vec<usize>,
    pub medoid: usize,
    pub core_members: Vec<usize>,
    pub core_radius: f64,
    pub unique_ids: usize,
    pub mac_diversity: f64,
    pub core_density: f64,
    pub t_min: f64,
    pub t_max: f64,
    /// Segments holding at least one labelled packet.
    pub labeled_segments: usize,
}

fn dist(a: &[f64; 5], b: &[f64; 5]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Member minimising the summed distance to all others; lowest position wins ties.
pub fn medoid(members: &[usize], y: &[[f64; 5]]) -> usize {
    let mut best = (f64::INFINITY, members[0]);
    for &i in members {
        let total: f64 = members.iter().map(|&j| dist(&y[i], &y[j])).sum();
        if total < best.0 {
            best = (total, i);
        }
    }
    best.1
}

/// Core density of one cluster. `y` is indexed like `segments`.
///
/// # Panics
/// If `members` is empty.
pub fn score_cluster(members: Vec<usize>, segments: &[Segment], y: &[[f64; 5]], config: &DetectorConfig) -> Cluster {
    assert!(!members.is_empty(), "cannot score an empty cluster");
    let n = members.len();
    let center = medoid(&members, y);
    let d: Vec<f64> = members.iter().map(|&i| dist(&y[i], &y[center])).collect();

    let (mu, sigma) = mean_std(d.iter().copied());
    let gate = mu + config.lambda * sigma;
    let mut core: Vec<usize> = (0..n).filter(|&p| d[p] <= gate).collect();
    if core.len() < config.k_min {
        let mut by_distance: Vec<usize> = (0..n).collect();
        by_distance.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
        by_distance.truncate(config.k_min.min(n));
        by_distance.sort_unstable();
        core = by_distance;
    }
    let (mu_core, sigma_core) = mean_std(core.iter().map(|&p| d[p]));
    let core_radius = (mu_core + config.lambda * sigma_core).max(config.r_min);

    let unique_ids = members.iter().map(|&i| segments[i].device_id.as_str()).collect::<HashSet<_>>().len();
    let mac_diversity = unique_ids as f64 / n as f64;
    let core_density = if unique_ids >= 2 { mac_diversity / (core_radius + config.epsilon) } else { 0.0 };

    let t_min = members.iter().map(|&i| segments[i].t_min).fold(f64::INFINITY, f64::min);
    let t_max = members.iter().map(|&i| segments[i].t_max).fold(f64::NEG_INFINITY, f64::max);
    let labeled_segments = members.iter().filter(|&&i| segments[i].labeled_count > 0).count();

    Cluster {
        ecosystem: segments[members[0]].ecosystem,
        core_members: core.iter().map(|&p| members[p]).collect(),
        medoid: center,
        segments: members,
        core_radius,
        unique_ids,
        mac_diversity,
        core_density,
        t_min,
        t_max,
        labeled_segments,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::ValidMask;

    fn seg(id: &str, t: f64) -> Segment {
        Segment {
            window_index: 0,
            ecosystem: Ecosystem::Apple,
            device_id: id.into(),
            mean_fingerprint: [0.0; 5],
            valid: ValidMask::ALL,
            packet_count: 1,
            t_min: t,
            t_max: t + 1.0,
            labeled_count: 0,
        }
    }

    #[test]
    fn identical_points_clamp_to_r_min() {
        let cfg = DetectorConfig::default();
        let segs: Vec<Segment> = ["a", "b", "c", "d"].iter().enumerate().map(|(i, id)| seg(id, i as f64)).collect();
        let y = vec![[0.3; 5]; 4];
        let c = score_cluster(vec![0, 1, 2, 3], &segs, &y, &cfg);
        assert_eq!(c.core_radius, 0.15);
        assert_eq!(c.mac_diversity, 1.0);
        assert!((c.core_density - 1.0 / (0.15 + 1e-9)).abs() < 1e-9);
        assert!((c.core_density - 6.667).abs() < 1e-3);
        assert_eq!((c.t_min, c.t_max), (0.0, 4.0));
    }

    #[test]
    fn single_identifier_scores_zero() {
        let cfg = DetectorConfig::default();
        let segs: Vec<Segment> = (0..5).map(|i| seg("same", i as f64)).collect();
        let c = score_cluster((0..5).collect(), &segs, &[[0.0; 5]; 5], &cfg);
        assert_eq!(c.unique_ids, 1);
        assert_eq!(c.core_density, 0.0);
    }

    #[test]
    fn two_ids_over_four_tight_segments() {
        let cfg = DetectorConfig::default();
        let segs = vec![seg("a", 0.0), seg("a", 1.0), seg("b", 2.0), seg("b", 3.0)];
        let c = score_cluster(vec![0, 1, 2, 3], &segs, &[[1.0; 5]; 4], &cfg);
        assert_eq!(c.mac_diversity, 0.5);
        assert!((c.core_density - 0.5 / 0.15).abs() < 1e-6);
    }

    #[test]
    fn core_gate_excludes_outlier_and_sets_radius() {
        let cfg = DetectorConfig::default();
        let segs: Vec<Segment> = (0..6).map(|i| seg(&format!("id{i}"), i as f64)).collect();
        // five points on a line near the origin and one far outlier
        let y: Vec<[f64; 5]> = [0.0, 0.2, 0.4, 0.4, 0.6, 20.0].iter().map(|&v| [v, 0.0, 0.0, 0.0, 0.0]).collect();
        let c = score_cluster((0..6).collect(), &segs, &y, &cfg);
        assert_eq!(c.medoid, 2);
        assert!(!c.core_members.contains(&5));
        assert_eq!(c.core_members.len(), 5);
        // core distances from the medoid: 0.4, 0.2, 0, 0, 0.2
        let (m, s) = mean_std([0.4, 0.2, 0.0, 0.0, 0.2].into_iter());
        assert!((c.core_radius - (m + 1.5 * s)).abs() < 1e-12);
        assert!((c.core_density * (c.core_radius + cfg.epsilon) - c.mac_diversity).abs() < 1e-12);
    }

    #[test]
    fn small_core_padded_to_k_min() {
        let cfg = DetectorConfig { k_min: 3, ..Default::default() };
        let segs: Vec<Segment> = (0..2).map(|i| seg(&format!("id{i}"), 0.0)).collect();
        let y = vec![[0.0; 5], [1.0, 0.0, 0.0, 0.0, 0.0]];
        let c = score_cluster(vec![0, 1], &segs, &y, &cfg);
        // fewer than k_min segments: all of them form the core
        assert_eq!(c.core_members, vec![0, 1]);
        assert!((c.core_radius - 1.25).abs() < 1e-12);
    }
}
