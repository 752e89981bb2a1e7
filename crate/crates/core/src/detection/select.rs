//! Cluster-count selection by mean silhouette over a bounded grid.

use crate::detection::ward::Dendrogram;
use crate::exec::Exec;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean silhouette of several labelings at once, sharing one pass over the
/// pairwise distances. Singleton clusters score 0.
fn mean_silhouettes<P: AsRef<[f64]> + Sync>(points: &[P], labelings: &[(usize, Vec<usize>)], exec: Exec) -> Vec<f64> {
    let n = points.len();
    let sizes: Vec<Vec<usize>> = labelings
        .iter()
        .map(|(k, labels)| {
            let mut s = vec![0usize; *k];
            labels.iter().for_each(|&l| s[l] += 1);
            s
        })
        .collect();

    let per_point: Vec<Vec<f64>> = exec.map_range(n, |i| {
        let mut sums: Vec<Vec<f64>> = labelings.iter().map(|(k, _)| vec![0.0; *k]).collect();
        let pi = points[i].as_ref();
        for (j, pj) in points.iter().enumerate() {
            if j == i {
                continue;
            }
            let d = dist(pi, pj.as_ref());
            for (acc, (_, labels)) in sums.iter_mut().zip(labelings) {
                acc[labels[j]] += d;
            }
        }
        sums.iter()
            .zip(labelings)
            .zip(&sizes)
            .map(|((acc, (_, labels)), size)| {
                let own = labels[i];
                if size[own] <= 1 {
                    return 0.0;
                }
                let a = acc[own] / (size[own] - 1) as f64;
                let b = acc
                    .iter()
                    .zip(size)
                    .enumerate()
                    .filter(|&(c, (_, &sz))| c != own && sz > 0)
                    .map(|(_, (s, &sz))| s / sz as f64)
                    .fold(f64::INFINITY, f64::min);
                let m = a.max(b);
                if m > 0.0 && b.is_finite() {
                    (b - a) / m
                } else {
                    0.0
                }
            })
            .collect()
    });

    (0..labelings.len()).map(|l| per_point.iter().map(|row| row[l]).sum::<f64>() / n as f64).collect()
}

/// Mean Euclidean silhouette of one labeling.
pub fn silhouette<P: AsRef<[f64]> + Sync>(points: &[P], labels: &[usize], exec: Exec) -> f64 {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    mean_silhouettes(points, &[(k, labels.to_vec())], exec)[0]
}

fn all_identical<P: AsRef<[f64]>>(points: &[P]) -> bool {
    let first = points[0].as_ref();
    points.iter().all(|p| p.as_ref() == first)
}

/// Picks K from `2..=min(k_grid_max, n-1)` by maximum mean silhouette, ties
/// to the smaller K, and returns it with its Ward partition. Fewer than
/// three points, or all points identical, give a single cluster.
pub(crate) fn choose_partition<P: AsRef<[f64]> + Sync>(points: &[P], k_grid_max: usize, exec: Exec) -> (usize, Vec<usize>) {
    let n = points.len();
    if n < 3 || all_identical(points) {
        return (1, vec![0; n]);
    }
    let dendro = Dendrogram::build(points);
    let k_hi = k_grid_max.min(n - 1);
    let labelings: Vec<(usize, Vec<usize>)> = (2..=k_hi).map(|k| (k, dendro.cut(k).expect("k within range"))).collect();
    let scores = mean_silhouettes(points, &labelings, exec);
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    let (k, labels) = labelings.into_iter().nth(best).expect("non-empty grid");
    (k, labels)
}

pub fn select_k<P: AsRef<[f64]> + Sync>(points: &[P], k_grid_max: usize) -> usize {
    choose_partition(points, k_grid_max, Exec::default()).0
}
