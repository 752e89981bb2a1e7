//! Block streaming and the persistence episode.

use log::{debug, warn};

use crate::detection::embed::embed_type;
use crate::detection::score::{score_cluster, Cluster};
use crate::detection::segment::{segment_block, Segment};
use crate::detection::select::choose_partition;
use crate::detection::{DetectorConfig, Ecosystem, PacketRecord};
use crate::error::{Error, Result};
use crate::exec::Exec;

/// Block `index` of the grid `anchor + index * length`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockSpan {
    pub index: i64,
    pub anchor: f64,
    pub length: f64,
}

impl BlockSpan {
    pub fn containing(t: f64, anchor: f64, length: f64) -> Self {
        BlockSpan { index: ((t - anchor) / length).floor() as i64, anchor, length }
    }

    pub fn start(&self) -> f64 {
        self.anchor + self.index as f64 * self.length
    }

    pub fn end(&self) -> f64 {
        self.anchor + (self.index + 1) as f64 * self.length
    }

    pub fn contains(&self, t: f64) -> bool {
        ((t - self.anchor) / self.length).floor() as i64 == self.index
    }
}

/// Clustering result for one block.
#[derive(Debug, Clone)]
pub struct BlockAnalysis {
    pub span: BlockSpan,
    /// Latest packet timestamp in the block.
    pub t_end: Option<f64>,
    pub segments: Vec<Segment>,
    pub clusters: Vec<Cluster>,
}

/// What the persistence step needs from one cluster, and what the
/// diagnostics file records.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterDiagnostic {
    pub block_index: i64,
    pub ecosystem: Ecosystem,
    pub n_segments: usize,
    pub unique_ids: usize,
    pub mac_diversity: f64,
    pub core_radius: f64,
    pub core_density: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub labeled_segments: usize,
}

/// Per-block summary kept by the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    pub span: BlockSpan,
    pub t_end: f64,
    pub clusters: Vec<ClusterDiagnostic>,
}

impl BlockAnalysis {
    pub fn report(&self) -> Option<BlockReport> {
        let t_end = self.t_end?;
        let clusters = self
            .clusters
            .iter()
            .map(|c| ClusterDiagnostic {
                block_index: self.span.index,
                ecosystem: c.ecosystem,
                n_segments: c.segments.len(),
                unique_ids: c.unique_ids,
                mac_diversity: c.mac_diversity,
                core_radius: c.core_radius,
                core_density: c.core_density,
                t_min: c.t_min,
                t_max: c.t_max,
                labeled_segments: c.labeled_segments,
            })
            .collect();
        Some(BlockReport { span: self.span, t_end, clusters })
    }
}

pub fn analyze_block(records: &[PacketRecord], span: BlockSpan, config: &DetectorConfig, exec: Exec) -> Result<BlockAnalysis> {
    if let Some(r) = records.iter().find(|r| !span.contains(r.timestamp)) {
        return Err(Error::BlockViolation { timestamp: r.timestamp, start: span.start(), end: span.end() });
    }
    let segments = segment_block(records, config);
    let t_end = segments.iter().map(|s| s.t_max).reduce(f64::max);

    let groups: Vec<Vec<usize>> = Ecosystem::ALL
        .iter()
        .map(|&eco| (0..segments.len()).filter(|&i| segments[i].ecosystem == eco).collect::<Vec<_>>())
        .filter(|g| !g.is_empty())
        .collect();

    let per_type = exec.map(&groups, |members| {
        let refs: Vec<&Segment> = members.iter().map(|&i| &segments[i]).collect();
        let embedding = embed_type(&refs);
        let (k, labels) = choose_partition(&embedding.x, config.k_grid_max, exec);
        let mut y = vec![[0.0; 5]; segments.len()];
        for (&i, row) in members.iter().zip(&embedding.y) {
            y[i] = *row;
        }
        let mut parts: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (&i, &l) in members.iter().zip(&labels) {
            parts[l].push(i);
        }
        parts.into_iter().map(|p| score_cluster(p, &segments, &y, config)).collect::<Vec<_>>()
    });

    Ok(BlockAnalysis { span, t_end, clusters: per_type.into_iter().flatten().collect(), segments })
}

/// Persistence state `(t_start, t_end, t_last+)`; all unset between episodes.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpisodeState {
    pub t_start: Option<f64>,
    pub t_end: Option<f64>,
    pub t_last_pos: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alert {
    pub flag_time_s: f64,
    pub episode_start_s: f64,
    pub episode_end_s: f64,
    pub ecosystem: Ecosystem,
    /// Densest positive cluster of the flagging block.
    pub cluster_core_density: f64,
    pub unique_ids: usize,
    pub block_index: i64,
}

impl EpisodeState {
    pub fn is_idle(&self) -> bool {
        self.t_start.is_none()
    }

    /// Persistence update for one block. Returns the alert if the episode
    /// reached `t_min_s`, after which the state is reset.
    pub fn advance(&mut self, report: &BlockReport, config: &DetectorConfig) -> Option<Alert> {
        let positives: Vec<&ClusterDiagnostic> =
            report.clusters.iter().filter(|c| c.core_density >= config.density_threshold).collect();

        if positives.is_empty() {
            if let Some(last) = self.t_last_pos {
                if report.t_end - last > config.t_gap_s {
                    debug!("block {}: episode forgotten after {:.0} s without positives", report.span.index, report.t_end - last);
                    *self = EpisodeState::default();
                }
            }
            return None;
        }

        let lo = positives.iter().map(|c| c.t_min).fold(f64::INFINITY, f64::min);
        let hi = positives.iter().map(|c| c.t_max).fold(f64::NEG_INFINITY, f64::max);
        let (start, end) = match (self.t_start, self.t_end) {
            (Some(s), Some(e)) => (s.min(lo), e.max(hi)),
            _ => (lo, hi),
        };
        self.t_start = Some(start);
        self.t_end = Some(end);
        self.t_last_pos = Some(hi);

        if end - start >= config.t_min_s {
            let densest =
                positives.iter().copied().reduce(|a, b| if b.core_density > a.core_density { b } else { a }).expect("non-empty");
            *self = EpisodeState::default();
            return Some(Alert {
                flag_time_s: report.t_end,
                episode_start_s: start,
                episode_end_s: end,
                ecosystem: densest.ecosystem,
                cluster_core_density: densest.core_density,
                unique_ids: densest.unique_ids,
                block_index: report.span.index,
            });
        }
        None
    }
}

#[derive(Debug, Clone)]
pub struct BlockOutcome {
    pub alerts: Vec<Alert>,
    pub state: EpisodeState,
    pub report: Option<BlockReport>,
    pub positive: bool,
}

/// Analyses one block and advances the persistence state.
pub fn process_block(
    records: &[PacketRecord],
    span: BlockSpan,
    state: EpisodeState,
    config: &DetectorConfig,
    exec: Exec,
) -> Result<BlockOutcome> {
    let analysis = analyze_block(records, span, config, exec)?;
    let mut state = state;
    let report = analysis.report();
    let (alerts, positive) = match &report {
        Some(r) => {
            let positive = r.clusters.iter().any(|c| c.core_density >= config.density_threshold);
            (state.advance(r, config).into_iter().collect(), positive)
        }
        None => (Vec::new(), false),
    };
    Ok(BlockOutcome { alerts, state, report, positive })
}

/// Re-runs the persistence step over stored block reports, e.g. for a
/// different density threshold.
pub fn replay_persistence(blocks: &[BlockReport], config: &DetectorConfig) -> Vec<Alert> {
    let mut state = EpisodeState::default();
    blocks.iter().filter_map(|b| state.advance(b, config)).collect()
}

#[derive(Debug, Clone, Default)]
pub struct StreamOutput {
    pub alerts: Vec<Alert>,
    pub blocks: Vec<BlockReport>,
    pub records_used: usize,
    pub dropped_out_of_order: usize,
    pub malformed: usize,
}

/// Incremental detector: push records in (roughly) time order, then finish.
pub struct StreamDetector {
    config: DetectorConfig,
    exec: Exec,
    anchor: Option<f64>,
    block: Option<BlockSpan>,
    block_records: Vec<PacketRecord>,
    pending: Vec<PacketRecord>,
    newest: f64,
    state: EpisodeState,
    out: StreamOutput,
}

impl StreamDetector {
    pub fn new(config: DetectorConfig, exec: Exec) -> Result<Self> {
        config.validate()?;
        Ok(StreamDetector {
            anchor: config.block_anchor_s,
            config,
            exec,
            block: None,
            block_records: Vec::new(),
            pending: Vec::new(),
            newest: f64::NEG_INFINITY,
            state: EpisodeState::default(),
            out: StreamOutput::default(),
        })
    }

    pub fn state(&self) -> EpisodeState {
        self.state
    }

    pub fn push(&mut self, record: PacketRecord) -> Result<()> {
        if !record.is_valid() {
            self.out.malformed += 1;
            return Ok(());
        }
        let slack = self.config.reorder_slack_s;
        if record.timestamp < self.newest - slack {
            warn!("dropping record at t={} more than {slack} s behind the stream head {}", record.timestamp, self.newest);
            self.out.dropped_out_of_order += 1;
            return Ok(());
        }
        self.newest = self.newest.max(record.timestamp);
        let at = self.pending.partition_point(|r| r.timestamp <= record.timestamp);
        self.pending.insert(at, record);
        let ready = self.pending.partition_point(|r| r.timestamp < self.newest - slack);
        let released: Vec<PacketRecord> = self.pending.drain(..ready).collect();
        for r in released {
            self.release(r)?;
        }
        Ok(())
    }

    fn release(&mut self, record: PacketRecord) -> Result<()> {
        let anchor = *self.anchor.get_or_insert(record.timestamp);
        let span = BlockSpan::containing(record.timestamp, anchor, self.config.block_s);
        if let Some(current) = self.block {
            if current.index != span.index {
                self.flush()?;
            }
        }
        self.block = Some(span);
        self.block_records.push(record);
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        let Some(span) = self.block.take() else { return Ok(()) };
        let records = std::mem::take(&mut self.block_records);
        self.out.records_used += records.len();
        let outcome = process_block(&records, span, self.state, &self.config, self.exec)?;
        self.state = outcome.state;
        for a in &outcome.alerts {
            debug!("block {}: alert at t={} (episode {}..{})", span.index, a.flag_time_s, a.episode_start_s, a.episode_end_s);
        }
        self.out.alerts.extend(outcome.alerts);
        self.out.blocks.extend(outcome.report);
        Ok(())
    }

    pub fn finish(mut self) -> Result<StreamOutput> {
        let rest: Vec<PacketRecord> = std::mem::take(&mut self.pending);
        for r in rest {
            self.release(r)?;
        }
        self.flush()?;
        Ok(self.out)
    }
}

pub fn run_stream<I>(records: I, config: &DetectorConfig, exec: Exec) -> Result<StreamOutput>
where
    I: IntoIterator<Item = PacketRecord>,
{
    let mut detector = StreamDetector::new(*config, exec)?;
    for r in records {
        detector.push(r)?;
    }
    detector.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::{Fingerprint, ValidMask};

    fn diag(density: f64, t_min: f64, t_max: f64) -> ClusterDiagnostic {
        ClusterDiagnostic {
            block_index: 0,
            ecosystem: Ecosystem::Apple,
            n_segments: 10,
            unique_ids: 10,
            mac_diversity: 1.0,
            core_radius: 0.15,
            core_density: density,
            t_min,
            t_max,
            labeled_segments: 0,
        }
    }

    fn report(index: i64, t_end: f64, clusters: Vec<ClusterDiagnostic>) -> BlockReport {
        BlockReport { span: BlockSpan { index, anchor: 0.0, length: 2400.0 }, t_end, clusters }
    }

    #[test]
    fn two_positive_blocks_reach_t_min() {
        let cfg = DetectorConfig::default();
        let mut st = EpisodeState::default();
        assert!(st.advance(&report(0, 2399.0, vec![diag(2.0, 5.0, 2390.0), diag(0.3, 0.0, 2399.0)]), &cfg).is_none());
        assert_eq!(st.t_start, Some(5.0));
        assert_eq!(st.t_end, Some(2390.0));
        assert_eq!(st.t_last_pos, Some(2390.0));
        let alert = st.advance(&report(1, 4795.0, vec![diag(1.5, 2405.0, 4790.0)]), &cfg).expect("alert");
        assert_eq!((alert.episode_start_s, alert.episode_end_s), (5.0, 4790.0));
        assert_eq!(alert.flag_time_s, 4795.0);
        assert_eq!(alert.cluster_core_density, 1.5);
        assert!(st.is_idle());
    }

    #[test]
    fn positives_forgotten_after_gap() {
        let cfg = DetectorConfig::default();
        let mut st = EpisodeState::default();
        st.advance(&report(0, 2000.0, vec![diag(3.0, 100.0, 1900.0)]), &cfg);
        assert!(!st.is_idle());
        // quiet block within the gap keeps the episode
        st.advance(&report(1, 4000.0, vec![diag(0.2, 2400.0, 4000.0)]), &cfg);
        assert!(!st.is_idle());
        st.advance(&report(40, 1900.0 + 86_400.0 + 1.0, vec![diag(0.2, 0.0, 1.0)]), &cfg);
        assert!(st.is_idle());
    }

    #[test]
    fn threshold_is_inclusive() {
        let cfg = DetectorConfig::default();
        let mut st = EpisodeState::default();
        st.advance(&report(0, 10.0, vec![diag(1.15, 0.0, 10.0)]), &cfg);
        assert!(!st.is_idle());
    }

    #[test]
    fn block_span_membership() {
        let s = BlockSpan::containing(2400.3, 0.3, 2400.0);
        assert_eq!(s.index, 1);
        assert!(s.contains(2400.3) && !s.contains(2400.2));
    }

    fn rec(t: f64, id: &str) -> PacketRecord {
        PacketRecord::new(t, id, Ecosystem::Tile, Fingerprint::new([100.0; 5], ValidMask::ALL))
    }

    #[test]
    fn block_violation_reported() {
        let span = BlockSpan { index: 0, anchor: 0.0, length: 100.0 };
        let err = analyze_block(&[rec(150.0, "a")], span, &DetectorConfig::default(), Exec::Sequential);
        assert!(matches!(err, Err(Error::BlockViolation { .. })));
    }

    #[test]
    fn empty_stream_is_quiet() {
        let out = run_stream(Vec::new(), &DetectorConfig::default(), Exec::Sequential).unwrap();
        assert!(out.alerts.is_empty() && out.blocks.is_empty());
    }

    #[test]
    fn small_reordering_absorbed_large_dropped() {
        let cfg = DetectorConfig::default();
        let recs = vec![rec(10.0, "a"), rec(12.0, "a"), rec(11.5, "b"), rec(30.0, "a"), rec(20.0, "c"), rec(2500.0, "a")];
        let out = run_stream(recs, &cfg, Exec::Sequential).unwrap();
        assert_eq!(out.dropped_out_of_order, 1);
        assert_eq!(out.records_used, 5);
        assert_eq!(out.blocks.len(), 2);
        assert_eq!(out.blocks[0].span.anchor, 10.0);
    }

    #[test]
    fn malformed_records_counted() {
        let mut bad = rec(5.0, "a");
        bad.timestamp = f64::NAN;
        let out = run_stream(vec![bad, rec(6.0, "a")], &DetectorConfig::default(), Exec::Sequential).unwrap();
        assert_eq!(out.malformed, 1);
        assert_eq!(out.records_used, 1);
    }
}
