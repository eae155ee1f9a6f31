//! Seeded k-means (k-means++ init, Lloyd refinement) used to place rule
//! antecedents on the normalized inputs.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

pub struct Cluster<T> {
    pub center: Vec<T>,
    /// Per-dimension RMS distance of members to the center; zero for
    /// singleton clusters (callers floor it).
    pub rms_widths: Vec<T>,
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum()
}

/// Partition `points` into `k` clusters. Deterministic for a given seed.
pub fn cluster<T: Scalar>(points: &[Vec<T>], k: usize, seed: u64) -> Vec<Cluster<T>> {
    assert!(k >= 1 && points.len() >= k, "need at least k points");
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding
    let mut centers: Vec<Vec<T>> = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..points.len())].clone());
    let mut d2: Vec<T> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: T = d2.iter().copied().sum();
        let next = if total > T::zero() {
            let mut threshold = T::of(rng.random_range(0.0..1.0)) * total;
            let mut chosen = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if threshold <= w {
                    chosen = i;
                    break;
                }
                threshold = threshold - w;
            }
            chosen
        } else {
            // all remaining points coincide with a center
            rng.random_range(0..points.len())
        };
        centers.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            let d = sq_dist(p, centers.last().unwrap());
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }

    // Lloyd iterations until assignments settle
    let mut assign = vec![0usize; points.len()];
    for _ in 0..100 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = T::infinity();
            for (c, center) in centers.iter().enumerate() {
                let d = sq_dist(p, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }

        let mut sums = vec![vec![T::zero(); dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assign[i]] += 1;
            for j in 0..dim {
                sums[assign[i]][j] = sums[assign[i]][j] + p[j];
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // revive an empty cluster at the point farthest from its center
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        sq_dist(&points[a], &centers[assign[a]])
                            .partial_cmp(&sq_dist(&points[b], &centers[assign[b]]))
                            .unwrap_or(std::cmp::Ordering::Equal)
                    })
                    .expect("points non-empty");
                centers[c] = points[far].clone();
                assign[far] = c;
                changed = true;
            } else {
                let n = T::of_usize(counts[c]);
                for j in 0..dim {
                    centers[c][j] = sums[c][j] / n;
                }
            }
        }
        if !changed {
            break;
        }
    }

    // per-dimension RMS spread of each cluster
    let mut sq_sums = vec![vec![T::zero(); dim]; k];
    let mut counts = vec![0usize; k];
    for (i, p) in points.iter().enumerate() {
        counts[assign[i]] += 1;
        for j in 0..dim {
            let d = p[j] - centers[assign[i]][j];
            sq_sums[assign[i]][j] = sq_sums[assign[i]][j] + d * d;
        }
    }
    centers
        .into_iter()
        .enumerate()
        .map(|(c, center)| {
            let rms_widths = if counts[c] > 0 {
                let n = T::of_usize(counts[c]);
                sq_sums[c].iter().map(|&s| (s / n).sqrt()).collect()
            } else {
                vec![T::zero(); dim]
            };
            Cluster { center, rms_widths }
        })
        .collect()
}
