//! Lloyd's K-means with k-means++ seeding and restarts.

use crate::error::{Result, VtccError};
use crate::rng::SeededRng;

pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after each assignment step of the winning restart.
    pub history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut SeededRng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.below(points.len())].clone()];
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.uniform() * total;
            let mut idx = points.len() - 1;
            for (i, &d) in dist.iter().enumerate() {
                if target < d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            rng.below(points.len())
        };
        centroids.push(points[pick].clone());
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

/// Total squared distance of each point to its assigned centroid.
pub fn inertia(points: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points.iter().zip(labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum()
}

fn lloyd(points: &[Vec<f64>], k: usize, max_iter: usize, rng: &mut SeededRng) -> KMeansResult {
    let dim = points[0].len();
    let mut centroids = plus_plus(points, k, rng);
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut history = vec![inertia(points, &labels, &centroids)];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        // an empty cluster takes over the point worst served by its centroid
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..points.len())
                    .max_by(|&i, &j| {
                        let di = sq_dist(&points[i], &centroids[labels[i]]);
                        let dj = sq_dist(&points[j], &centroids[labels[j]]);
                        di.total_cmp(&dj).then(j.cmp(&i))
                    })
                    .unwrap_or(0);
                centroids[c] = points[far].clone();
                labels[far] = c;
                counts[c] = 1;
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        let changed = next != labels;
        labels = next;
        history.push(inertia(points, &labels, &centroids));
        if !changed {
            break;
        }
    }
    let inertia = inertia(points, &labels, &centroids);
    KMeansResult {
        labels,
        centroids,
        inertia,
        iterations,
        history,
    }
}

/// Best of `restarts` seeded runs by inertia.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize, restarts: usize) -> Result<KMeansResult> {
    if k == 0 || points.len() < k {
        return Err(VtccError::Contract(format!("K-means needs n >= K >= 1 (n={}, K={k})", points.len())));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite())) {
        return Err(VtccError::Contract("K-means points must be finite and equally sized".into()));
    }
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts.max(1) {
        let mut rng = SeededRng::derive(seed, &[0x4B4D, r as u64]);
        let run = lloyd(points, k, max_iter, &mut rng);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicated_locations_are_recovered() {
        let sites = [[0.0, 0.0], [5.0, 5.0], [-4.0, 6.0]];
        let points: Vec<Vec<f64>> = (0..15).map(|i| sites[i % 3].to_vec()).collect();
        let res = kmeans(&points, 3, 1, 100, DEFAULT_RESTARTS).unwrap();
        for i in 0..15 {
            assert_eq!(res.labels[i], res.labels[i % 3]);
        }
        assert_eq!(res.inertia, 0.0);
    }

    #[test]
    fn lloyd_never_increases_inertia() {
        let mut rng = SeededRng::new(9);
        let points: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.normal(), rng.normal(), rng.normal()]).collect();
        for seed in 0..5 {
            let res = kmeans(&points, 4, seed, 100, 1).unwrap();
            for w in res.history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{:?}", res.history);
            }
        }
    }

    #[test]
    fn too_few_points() {
        assert!(kmeans(&[vec![1.0]], 2, 0, 10, 1).is_err());
    }
}
