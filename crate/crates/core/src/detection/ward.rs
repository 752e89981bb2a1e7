//! Ward minimum-variance agglomeration.
//!
//! Built with the nearest-neighbour chain over cluster centroids, which for
//! Ward's (reducible) criterion yields the same hierarchy as the textbook
//! Lance–Williams procedure in O(n²) time and O(n) extra memory. The merge
//! cost is the increase in within-cluster sum of squares,
//! `|A||B| / (|A|+|B|) · ||c_A - c_B||²`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    /// Lowest point index of each side; the merged cluster keeps `a`.
    pub a: usize,
    pub b: usize,
    pub cost: f64,
}

/// Full merge history of `n` points, sorted by cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub n: usize,
    pub merges: Vec<Merge>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl Dendrogram {
    pub fn build<P: AsRef<[f64]>>(points: &[P]) -> Dendrogram {
        let n = points.len();
        let mut centroid: Vec<Vec<f64>> = points.iter().map(|p| p.as_ref().to_vec()).collect();
        let mut size = vec![1.0f64; n];
        let mut active = vec![true; n];
        let mut merges = Vec::with_capacity(n.saturating_sub(1));
        let mut chain: Vec<usize> = Vec::with_capacity(n);

        let cost = |centroid: &[Vec<f64>], size: &[f64], i: usize, j: usize| {
            size[i] * size[j] / (size[i] + size[j]) * sq_dist(&centroid[i], &centroid[j])
        };

        let mut remaining = n;
        while remaining > 1 {
            if chain.is_empty() {
                chain.push(active.iter().position(|&a| a).expect("active cluster"));
            }
            let top = *chain.last().unwrap();
            let prev = chain.len().checked_sub(2).map(|i| chain[i]);
            // Nearest active neighbour of `top`; the chain predecessor wins
            // ties so the chain always terminates, otherwise the lowest index.
            let mut best = usize::MAX;
            let mut best_cost = f64::INFINITY;
            if let Some(p) = prev {
                best = p;
                best_cost = cost(&centroid, &size, top, p);
            }
            for (j, &live) in active.iter().enumerate() {
                if !live || j == top || Some(j) == prev {
                    continue;
                }
                let c = cost(&centroid, &size, top, j);
                if c < best_cost || (c == best_cost && prev.is_none() && j < best) {
                    best = j;
                    best_cost = c;
                }
            }
            if Some(best) == prev {
                chain.pop();
                chain.pop();
                let (a, b) = if top < best { (top, best) } else { (best, top) };
                let total = size[a] + size[b];
                let merged: Vec<f64> =
                    centroid[a].iter().zip(&centroid[b]).map(|(x, y)| (size[a] * x + size[b] * y) / total).collect();
                centroid[a] = merged;
                size[a] = total;
                active[b] = false;
                merges.push(Merge { a, b, cost: best_cost });
                remaining -= 1;
            } else {
                chain.push(best);
            }
        }
        // Merges come out of the chain in a non-monotone order; a stable sort
        // keeps children ahead of parents at equal cost.
        merges.sort_by(|x, y| x.cost.total_cmp(&y.cost));
        Dendrogram { n, merges }
    }

    /// Flat partition into `k` clusters. Labels are numbered by the lowest
    /// point index in each cluster.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>> {
        if k < 1 || k > self.n {
            return Err(Error::InvalidK { k, n: self.n });
        }
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for m in &self.merges[..self.n - k] {
            let (ra, rb) = (find(&mut parent, m.a), find(&mut parent, m.b));
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            parent[hi] = lo;
        }
        let mut label_of_root = vec![usize::MAX; self.n];
        let mut next = 0;
        let mut labels = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let r = find(&mut parent, i);
            if label_of_root[r] == usize::MAX {
                label_of_root[r] = next;
                next += 1;
            }
            labels.push(label_of_root[r]);
        }
        Ok(labels)
    }
}

/// Partition `points` into `k` Ward clusters.
pub fn ward_cluster<P: AsRef<[f64]>>(points: &[P], k: usize) -> Result<Vec<usize>> {
    if k < 1 || k > points.len() {
        return Err(Error::InvalidK { k, n: points.len() });
    }
    Dendrogram::build(points).cut(k)
}
