//! k-means++ seeded Lloyd iterations, silhouette and Davies–Bouldin scores.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::ClusterError;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KMeans {
    /// Cluster ids numbered by first appearance in the input.
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after each Lloyd step of the winning restart.
    pub inertia_history: Vec<f64>,
    /// Final inertia of every restart, in order.
    pub restart_inertias: Vec<f64>,
}

fn plus_plus<P: AsRef<[f64]>>(points: &[P], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centers = vec![points[rng.random_range(0..n)].as_ref().to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p.as_ref(), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if *d > 0.0 && r < *d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].as_ref().to_vec();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p.as_ref(), &c));
        }
        centers.push(c);
    }
    centers
}

fn assign<P: AsRef<[f64]>>(points: &[P], centers: &[Vec<f64>], labels: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (l, p) in labels.iter_mut().zip(points) {
        let (best, d) = centers
            .iter()
            .enumerate()
            .map(|(c, ctr)| (c, sq_dist(p.as_ref(), ctr)))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        *l = best;
        inertia += d;
    }
    inertia
}

fn lloyd<P: AsRef<[f64]>>(points: &[P], mut centers: Vec<Vec<f64>>) -> (Vec<usize>, Vec<Vec<f64>>, Vec<f64>) {
    let (n, k, dim) = (points.len(), centers.len(), points[0].as_ref().len());
    let mut labels = vec![0; n];
    let mut history = vec![assign(points, &centers, &mut labels)];
    for _ in 0..300 {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (l, p) in labels.iter().zip(points) {
            counts[*l] += 1;
            for (s, v) in sums[*l].iter_mut().zip(p.as_ref()) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        // An empty cluster takes the point farthest from its centroid; this
        // only lowers the inertia.
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .filter(|i| counts[labels[*i]] > 1)
                    .max_by(|a, b| {
                        let da = sq_dist(points[*a].as_ref(), &centers[labels[*a]]);
                        let db = sq_dist(points[*b].as_ref(), &centers[labels[*b]]);
                        da.total_cmp(&db).then(b.cmp(a))
                    });
                if let Some(i) = far {
                    counts[labels[i]] -= 1;
                    counts[c] = 1;
                    labels[i] = c;
                    centers[c] = points[i].as_ref().to_vec();
                }
            }
        }
        let inertia = assign(points, &centers, &mut labels);
        let last = *history.last().unwrap();
        history.push(inertia);
        if last - inertia <= 1e-10 * last.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    (labels, centers, history)
}

fn canonical(labels: &[usize], centers: Vec<Vec<f64>>) -> (Vec<usize>, Vec<Vec<f64>>) {
    let mut map = vec![usize::MAX; centers.len()];
    let mut next = 0;
    for l in labels {
        if map[*l] == usize::MAX {
            map[*l] = next;
            next += 1;
        }
    }
    for m in map.iter_mut() {
        if *m == usize::MAX {
            *m = next;
            next += 1;
        }
    }
    let mut ordered = vec![Vec::new(); centers.len()];
    for (old, c) in centers.into_iter().enumerate() {
        ordered[map[old]] = c;
    }
    (labels.iter().map(|l| map[*l]).collect(), ordered)
}

/// Best of `restarts` k-means++ seeded Lloyd runs by inertia.
pub fn kmeans<P: AsRef<[f64]>>(points: &[P], k: usize, restarts: usize, seed: u64) -> Result<KMeans, ClusterError> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(ClusterError::KTooLarge { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeans> = None;
    let mut restart_inertias = Vec::new();
    for _ in 0..restarts.max(1) {
        let centers = plus_plus(points, k, &mut rng);
        let (labels, centers, history) = lloyd(points, centers);
        let inertia = *history.last().unwrap();
        restart_inertias.push(inertia);
        if best.as_ref().is_none_or(|b| inertia < b.inertia) {
            let (labels, centroids) = canonical(&labels, centers);
            best = Some(KMeans { labels, centroids, inertia, inertia_history: history, restart_inertias: Vec::new() });
        }
    }
    let mut best = best.unwrap();
    best.restart_inertias = restart_inertias;
    Ok(best)
}

fn cluster_count(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |m| m + 1)
}

fn check_labels(n: usize, labels: &[usize]) -> Result<Vec<usize>, ClusterError> {
    if labels.len() != n {
        return Err(ClusterError::LengthMismatch(n, labels.len()));
    }
    let k = cluster_count(labels);
    let mut sizes = vec![0; k];
    for l in labels {
        sizes[*l] += 1;
    }
    if let Some(c) = sizes.iter().position(|s| *s == 0) {
        return Err(ClusterError::EmptyCluster(c));
    }
    if k >= 2 && sizes.iter().all(|s| *s == 1) {
        return Err(ClusterError::SingletonOnly);
    }
    if k < 2 || k > n - 1 {
        return Err(ClusterError::BadClusterCount { k, n });
    }
    Ok(sizes)
}

/// Mean silhouette width. Members of singleton clusters score 0.
pub fn silhouette<P: AsRef<[f64]> + Sync>(points: &[P], labels: &[usize]) -> Result<f64, ClusterError> {
    use rayon::prelude::*;
    let n = points.len();
    let sizes = check_labels(n, labels)?;
    let k = sizes.len();
    let widths: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            if sizes[labels[i]] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for j in 0..n {
                sums[labels[j]] += dist(points[i].as_ref(), points[j].as_ref());
            }
            let own = labels[i];
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k).filter(|c| *c != own).map(|c| sums[c] / sizes[c] as f64).fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 {
                (b - a) / m
            } else {
                0.0
            }
        })
        .collect();
    Ok(widths.iter().sum::<f64>() / n as f64)
}

/// Davies–Bouldin index from centroid distances and mean distances to the
/// centroid.
pub fn davies_bouldin<P: AsRef<[f64]>>(points: &[P], labels: &[usize]) -> Result<f64, ClusterError> {
    let n = points.len();
    let sizes = check_labels(n, labels)?;
    let k = sizes.len();
    let dim = points[0].as_ref().len();
    let mut centroids = vec![vec![0.0; dim]; k];
    for (l, p) in labels.iter().zip(points) {
        for (c, v) in centroids[*l].iter_mut().zip(p.as_ref()) {
            *c += v / sizes[*l] as f64;
        }
    }
    let mut spread = vec![0.0; k];
    for (l, p) in labels.iter().zip(points) {
        spread[*l] += dist(p.as_ref(), &centroids[*l]) / sizes[*l] as f64;
    }
    let mut total = 0.0;
    for i in 0..k {
        let mut worst: f64 = 0.0;
        for j in 0..k {
            if i == j {
                continue;
            }
            let d = dist(&centroids[i], &centroids[j]);
            if d == 0.0 {
                return Err(ClusterError::CoincidentCentroids(i.min(j), i.max(j)));
            }
            worst = worst.max((spread[i] + spread[j]) / d);
        }
        total += worst;
    }
    Ok(total / k as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KScore {
    pub k: usize,
    pub silhouette: f64,
    pub davies_bouldin: f64,
    pub inertia: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KSelection {
    pub k_best: usize,
    pub table: Vec<KScore>,
}

/// Scores every k in `k_min..=k_max` and picks the highest silhouette;
/// a lower Davies–Bouldin index breaks ties.
pub fn select_k<P: AsRef<[f64]> + Sync>(points: &[P], k_min: usize, k_max: usize, restarts: usize, seed: u64) -> Result<KSelection, ClusterError> {
    let n = points.len();
    if k_min < 2 || k_max < k_min || k_max > n.saturating_sub(1) {
        return Err(ClusterError::BadKRange { k_min, k_max, n });
    }
    let mut table = Vec::new();
    for k in k_min..=k_max {
        let km = kmeans(points, k, restarts, seed)?;
        table.push(KScore {
            k,
            silhouette: silhouette(points, &km.labels)?,
            davies_bouldin: davies_bouldin(points, &km.labels).unwrap_or(f64::INFINITY),
            inertia: km.inertia,
        });
    }
    let best = table
        .iter()
        .fold(None::<&KScore>, |acc, s| match acc {
            None => Some(s),
            Some(b) if s.silhouette > b.silhouette + 1e-12 => Some(s),
            Some(b) if (s.silhouette - b.silhouette).abs() <= 1e-12 && s.davies_bouldin < b.davies_bouldin => Some(s),
            keep => keep,
        })
        .unwrap();
    Ok(KSelection { k_best: best.k, table })
}
