use crate::detection::Segment;

/// Per-type embedding of segment mean fingerprints.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    /// Standardised mean fingerprints, used for medoids and core radii.
    pub y: Vec<[f64; 5]>,
    /// `y` followed by the standardised L2 and L1 deviations from the
    /// type-level median fingerprint; the clustering space.
    pub x: Vec<[f64; 7]>,
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len().is_multiple_of(2) { 0.5 * (values[mid - 1] + values[mid]) } else { values[mid] })
}

/// Population z-score of the `Some` entries; zero spread and missing
/// entries map to 0.
fn zscore(values: &[Option<f64>]) -> Vec<f64> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        return vec![0.0; values.len()];
    }
    let n = present.len() as f64;
    let mean = present.iter().sum::<f64>() / n;
    let var = present.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 1e-12 * (1.0 + mean.abs())) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| v.map_or(0.0, |v| (v - mean) / std)).collect()
}

pub fn embed_type(segments: &[&Segment]) -> Embedding {
    let n = segments.len();
    let column = |j: usize| -> Vec<Option<f64>> {
        segments
            .iter()
            .map(|s| (s.valid.is_valid(j) && s.mean_fingerprint[j].is_finite()).then_some(s.mean_fingerprint[j]))
            .collect()
    };

    let mut y = vec![[0.0; 5]; n];
    let mut center = [None; 5];
    for j in 0..5 {
        let col = column(j);
        for (row, z) in y.iter_mut().zip(zscore(&col)) {
            row[j] = z;
        }
        let mut present: Vec<f64> = col.into_iter().flatten().collect();
        center[j] = median(&mut present);
    }

    let (mut l2, mut l1) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for s in segments {
        let (mut sq, mut abs) = (0.0, 0.0);
        for (j, c) in center.iter().enumerate() {
            if let (Some(c), true) = (c, s.valid.is_valid(j)) {
                let d = s.mean_fingerprint[j] - c;
                if d.is_finite() {
                    sq += d * d;
                    abs += d.abs();
                }
            }
        }
        l2.push(Some(sq.sqrt()));
        l1.push(Some(abs));
    }
    let (z2, z1) = (zscore(&l2), zscore(&l1));

    let x = y.iter().zip(z2.iter().zip(&z1)).map(|(yr, (&a, &b))| [yr[0], yr[1], yr[2], yr[3], yr[4], a, b]).collect();
    Embedding { y, x }
}
