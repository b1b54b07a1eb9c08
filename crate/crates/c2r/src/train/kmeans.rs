use crate::diffcore::Rng;

use super::{Result, TrainError};

pub struct KmeansResult {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// within-cluster SSE after each Lloyd iteration
    pub sse_history: Vec<f64>,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means with k-means++ seeding and Lloyd iterations. Stops when the
/// max centroid shift drops below `tol` or after `max_iters`. Empty
/// clusters are re-seeded to the point farthest from its centroid.
pub fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    rng: &mut Rng,
    max_iters: usize,
    tol: f64,
) -> Result<KmeansResult> {
    if points.len() < k || k == 0 {
        return Err(TrainError::Contract(format!(
            "kmeans needs at least k={k} points, got {}",
            points.len()
        )));
    }
    let n = points.len();
    let mut centroids = plus_plus_seed(points, k, rng);
    let mut assignments = vec![0usize; n];
    let mut sse_history = Vec::new();

    for _ in 0..max_iters {
        // assignment step
        let mut sse = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (best, d) = centroids
                .iter()
                .enumerate()
                .map(|(c, cen)| (c, dist2(p, cen)))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            assignments[i] = best;
            sse += d;
        }
        sse_history.push(sse);

        // update step
        let d = points[0].len();
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assignments[i]] += 1;
            for (s, &x) in sums[assignments[i]].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut new_centroids = Vec::with_capacity(k);
        for c in 0..k {
            if counts[c] == 0 {
                // farthest point from its current centroid
                let far = (0..n)
                    .max_by(|&a, &b| {
                        dist2(&points[a], &centroids[assignments[a]])
                            .partial_cmp(&dist2(&points[b], &centroids[assignments[b]]))
                            .unwrap()
                    })
                    .unwrap();
                new_centroids.push(points[far].clone());
            } else {
                new_centroids
                    .push(sums[c].iter().map(|s| s / counts[c] as f64).collect());
            }
        }
        let shift = centroids
            .iter()
            .zip(&new_centroids)
            .map(|(a, b)| dist2(a, b).sqrt())
            .fold(0.0f64, f64::max);
        centroids = new_centroids;
        if shift < tol {
            break;
        }
    }
    // final assignment so every sample's centroid is its nearest
    for (i, p) in points.iter().enumerate() {
        assignments[i] = centroids
            .iter()
            .enumerate()
            .min_by(|a, b| dist2(p, a.1).partial_cmp(&dist2(p, b.1)).unwrap())
            .map(|(c, _)| c)
            .unwrap();
    }
    Ok(KmeansResult { centroids, assignments, sse_history })
}

fn plus_plus_seed(points: &[Vec<f64>], k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.below(n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            rng.below(n)
        } else {
            let mut target = rng.uniform() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            idx
        };
        centroids.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(dist2(p, centroids.last().unwrap()));
        }
    }
    centroids
}

/// Adjusted Rand index between two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ka = a.iter().max().map_or(0, |&m| m + 1);
    let kb = b.iter().max().map_or(0, |&m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let choose2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let sum_ij: f64 = table.iter().flatten().map(|&x| choose2(x)).sum();
    let sum_a: f64 = table.iter().map(|row| choose2(row.iter().sum())).sum();
    let sum_b: f64 = (0..kb)
        .map(|j| choose2(table.iter().map(|row| row[j]).sum()))
        .sum();
    let total = choose2(a.len() as u64);
    let expected = sum_a * sum_b / total;
    let max_index = (sum_a + sum_b) / 2.0;
    if (max_index - expected).abs() < 1e-15 {
        return 1.0;
    }
    (sum_ij - expected) / (max_index - expected)
}
