//! Seeded k-means (k-means++ init, Lloyd iterations) used to pick diverse
//! representative samples.

use rand::Rng;

use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; the lowest index wins ties.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_distance(point, centroid);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

/// Sum of squared distances from each point to its assigned centroid.
pub fn inertia(points: &[Vec<f64>], result: &KMeans) -> f64 {
    points
        .iter()
        .zip(&result.assignments)
        .map(|(p, &c)| squared_distance(p, &result.centroids[c]))
        .sum()
}

/// Clusters `points` into `k` groups.
///
/// Stops when assignments repeat or after `max_iter` rounds. A cluster left
/// empty takes the point farthest from its own centroid (lowest index on
/// ties) among clusters that can spare one.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> KMeans {
    assert!(k >= 1 && k <= points.len(), "k must be in 1..=points");
    let mut r = rng::stream(seed, &[rng::tag::KMEANS]);
    let mut centroids = plus_plus_init(points, k, &mut r);
    let mut assignments: Vec<usize> = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iter.max(1) {
        let fresh: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        iterations += 1;
        if fresh == assignments {
            break;
        }
        assignments = fresh;
        let mut working = assignments.clone();
        centroids = update_centroids(points, &mut working, k);
    }
    KMeans {
        centroids,
        assignments,
        iterations,
    }
}

fn plus_plus_init<R: Rng>(points: &[Vec<f64>], k: usize, r: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[r.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| squared_distance(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let u = r.random_range(0.0..total);
            let mut cumulative = 0.0;
            d2.iter()
                .position(|&d| {
                    cumulative += d;
                    cumulative > u
                })
                .unwrap_or(points.len() - 1)
        } else {
            r.random_range(0..points.len())
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn update_centroids(points: &[Vec<f64>], assignments: &mut [usize], k: usize) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    let mut centroids = mean_centroids(points, assignments, k, dim, &counts);
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut donor: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            let c = assignments[i];
            if counts[c] < 2 {
                continue;
            }
            let d = squared_distance(p, &centroids[c]);
            if donor.is_none_or(|(_, best)| d > best) {
                donor = Some((i, d));
            }
        }
        if let Some((i, _)) = donor {
            counts[assignments[i]] -= 1;
            assignments[i] = empty;
            counts[empty] = 1;
            centroids = mean_centroids(points, assignments, k, dim, &counts);
        }
    }
    centroids
}

fn mean_centroids(points: &[Vec<f64>], assignments: &[usize], k: usize, dim: usize, counts: &[usize]) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    for (p, &a) in points.iter().zip(assignments) {
        for (s, v) in sums[a].iter_mut().zip(p) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, &n)| s.into_iter().map(|v| if n > 0 { v / n as f64 } else { 0.0 }).collect())
        .collect()
}

/// One distinct point per cluster: the member nearest the centroid (lowest
/// index on ties). A cluster with no unused member takes the nearest unused
/// point overall, so the result always has `k` distinct indices.
pub fn representatives(points: &[Vec<f64>], result: &KMeans) -> Vec<usize> {
    let mut used = vec![false; points.len()];
    let mut picks = Vec::with_capacity(result.centroids.len());
    for (c, centroid) in result.centroids.iter().enumerate() {
        let closest = |members_only: bool| {
            points
                .iter()
                .enumerate()
                .filter(|&(i, _)| !used[i] && (!members_only || result.assignments[i] == c))
                .map(|(i, p)| (squared_distance(p, centroid), i))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .map(|(_, i)| i)
        };
        if let Some(i) = closest(true).or_else(|| closest(false)) {
            used[i] = true;
            picks.push(i);
        }
    }
    picks
}
