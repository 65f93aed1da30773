use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::synth::gen_blobs;

fn cloud(seed: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Silhouette from an explicit distance matrix.
fn silhouette_oracle(x: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = x.len();
    let k = labels.iter().max().unwrap() + 1;
    let d: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| euclid(&x[i], &x[j])).collect()).collect();
    let mut total = 0.0;
    for i in 0..n {
        let mates: Vec<usize> = (0..n).filter(|j| *j != i && labels[*j] == labels[i]).collect();
        if mates.is_empty() {
            continue;
        }
        let a = mates.iter().map(|j| d[i][*j]).sum::<f64>() / mates.len() as f64;
        let mut b = f64::INFINITY;
        for c in (0..k).filter(|c| *c != labels[i]) {
            let members: Vec<usize> = (0..n).filter(|j| labels[*j] == c).collect();
            b = b.min(members.iter().map(|j| d[i][*j]).sum::<f64>() / members.len() as f64);
        }
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

fn davies_bouldin_oracle(x: &[Vec<f64>], labels: &[usize]) -> f64 {
    let k = labels.iter().max().unwrap() + 1;
    let members: Vec<Vec<&Vec<f64>>> = (0..k).map(|c| x.iter().zip(labels).filter(|(_, l)| **l == c).map(|(r, _)| r).collect()).collect();
    let centroid: Vec<Vec<f64>> = members
        .iter()
        .map(|m| (0..x[0].len()).map(|d| m.iter().map(|r| r[d]).sum::<f64>() / m.len() as f64).collect())
        .collect();
    let s: Vec<f64> = (0..k).map(|c| members[c].iter().map(|r| euclid(r, &centroid[c])).sum::<f64>() / members[c].len() as f64).collect();
    (0..k)
        .map(|i| (0..k).filter(|j| *j != i).map(|j| (s[i] + s[j]) / euclid(&centroid[i], &centroid[j])).fold(0.0, f64::max))
        .sum::<f64>()
        / k as f64
}

/// Fraction of points whose nearest other point carries the same label.
fn nn_consistency(points: &[[f64; 2]], labels: &[usize]) -> f64 {
    let n = points.len();
    let hits = (0..n)
        .filter(|i| {
            let nn = (0..n)
                .filter(|j| j != i)
                .min_by(|a, b| euclid(&points[*i], &points[*a]).total_cmp(&euclid(&points[*i], &points[*b])))
                .unwrap();
            labels[nn] == labels[*i]
        })
        .count();
    hits as f64 / n as f64
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

#[test]
fn variance_filter_examples() {
    let rows: Vec<Vec<f64>> = [-1.0, 0.0, 1.0].iter().map(|s| (0..4).map(|j| s * f64::from(j).sqrt()).collect()).collect();
    assert_eq!(variance_filter(&rows, 50.0).unwrap(), vec![2, 3]);

    let equal: Vec<Vec<f64>> = [[1.0, 5.0, -2.0], [2.0, 6.0, -1.0], [4.0, 8.0, 1.0]].iter().map(|r| r.to_vec()).collect();
    assert_eq!(variance_filter(&equal, 50.0).unwrap(), vec![0, 1, 2]);
    assert_eq!(variance_filter(&[vec![1.0], vec![2.0]], 50.0), Err(ClusterError::TooFewColumns));
}

#[test]
fn standardize_examples() {
    let rows = vec![vec![2.0, 10.0], vec![4.0, 10.5], vec![6.0, 12.0]];
    let (z, s) = standardize(&rows).unwrap();
    assert_eq!(z.iter().map(|r| r[0]).collect::<Vec<_>>(), vec![-1.0, 0.0, 1.0]);
    for j in 0..2 {
        let c: Vec<f64> = z.iter().map(|r| r[j]).collect();
        assert!(mean(&c).abs() < 1e-12 && (sample_sd(&c) - 1.0).abs() < 1e-12);
    }
    let back = s.inverse(&z);
    for (a, b) in back.iter().flatten().zip(rows.iter().flatten()) {
        assert!((a - b).abs() < 1e-12);
    }
    let (again, _) = standardize(&z).unwrap();
    for (a, b) in again.iter().flatten().zip(z.iter().flatten()) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(standardize(&[vec![1.0, 3.0], vec![2.0, 3.0]]).unwrap_err(), ClusterError::ZeroVariance(1));
}

#[test]
fn subject_codes_are_stable_per_id() {
    let c = subject_code(&["S01", "S02", "S01"]);
    assert_eq!(c[0], c[2]);
    assert_ne!(c[0], c[1]);
    assert!(c.iter().all(|v| (0.0..1.0).contains(v)));
}

#[test]
fn tsne_separates_two_blobs() {
    let b = gen_blobs(2, 50, 10.0, 5, 3).unwrap();
    let e = tsne_embed(&b.rows, &EmbeddingConfig { seed: 1, ..EmbeddingConfig::default() }).unwrap();
    assert!(nn_consistency(&e.points, &b.labels) >= 0.95);
    assert!(e.kl_final <= e.kl_after_exaggeration);
    let cx = e.points.iter().map(|p| p[0]).sum::<f64>() / 100.0;
    let cy = e.points.iter().map(|p| p[1]).sum::<f64>() / 100.0;
    assert!(cx.abs() < 1e-9 && cy.abs() < 1e-9);

    let again = tsne_embed(&b.rows, &EmbeddingConfig { seed: 1, ..EmbeddingConfig::default() }).unwrap();
    assert_eq!(e.points, again.points);

    let scores: Vec<f64> = (2..6)
        .map(|s| nn_consistency(&tsne_embed(&b.rows, &EmbeddingConfig { seed: s, ..EmbeddingConfig::default() }).unwrap().points, &b.labels))
        .collect();
    let spread = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max) - scores.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(spread < 0.05, "{scores:?}");
}

#[test]
fn tsne_keeps_duplicates_together() {
    let mut rows = cloud(5, 40, 4);
    rows.push(rows[7].clone());
    let e = tsne_embed(&rows, &EmbeddingConfig { perplexity: 10.0, ..EmbeddingConfig::default() }).unwrap();
    let mut all = Vec::new();
    for i in 0..e.points.len() {
        for j in i + 1..e.points.len() {
            all.push(euclid(&e.points[i], &e.points[j]));
        }
    }
    let p5 = percentile(&all, 5.0);
    assert!(euclid(&e.points[7], &e.points[40]) < p5);
}

#[test]
fn tsne_caps_perplexity() {
    let rows = cloud(2, 10, 3);
    let e = tsne_embed(&rows, &EmbeddingConfig::default()).unwrap();
    assert_eq!(e.perplexity, 3.0);
    assert_eq!(e.warnings.len(), 1);
    let strict = EmbeddingConfig { cap_perplexity: false, ..EmbeddingConfig::default() };
    assert!(matches!(tsne_embed(&rows, &strict), Err(ClusterError::PerplexityTooLarge { .. })));
    assert!(matches!(tsne_embed(&rows[..4], &EmbeddingConfig::default()), Err(ClusterError::TooFewRows { .. })));
}

#[test]
fn exact_and_barnes_hut_agree_on_quality() {
    let b = gen_blobs(3, 20, 8.0, 4, 11).unwrap();
    let bh = tsne_embed(&b.rows, &EmbeddingConfig::default()).unwrap();
    let exact = tsne_embed(&b.rows, &EmbeddingConfig { theta: 0.0, ..EmbeddingConfig::default() }).unwrap();
    assert!((bh.kl_final - exact.kl_final).abs() < 0.1 * exact.kl_final.max(0.1), "{} vs {}", bh.kl_final, exact.kl_final);
}

#[test]
fn kmeans_examples() {
    let x = cloud(1, 30, 3);
    let one = kmeans(&x, 1, 3, 0).unwrap();
    let m: Vec<f64> = (0..3).map(|d| x.iter().map(|r| r[d]).sum::<f64>() / 30.0).collect();
    for d in 0..3 {
        assert!((one.centroids[0][d] - m[d]).abs() < 1e-12);
    }
    let tss: f64 = x.iter().map(|r| r.iter().zip(&m).map(|(a, b)| (a - b).powi(2)).sum::<f64>()).sum();
    assert!((one.inertia - tss).abs() < 1e-9);

    let all = kmeans(&x, 30, 1, 0).unwrap();
    assert!(all.inertia.abs() < 1e-12);
    assert_eq!(kmeans(&x, 31, 1, 0).unwrap_err(), ClusterError::KTooLarge { k: 31, n: 30 });

    let b = gen_blobs(3, 30, 10.0, 4, 7).unwrap();
    let km = kmeans(&b.rows, 3, 10, 7).unwrap();
    assert!(same_partition(&km.labels, &b.labels));
    assert_eq!(km.inertia, km.restart_inertias.iter().copied().fold(f64::INFINITY, f64::min));
    for w in km.inertia_history.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12));
    }
}

#[test]
fn silhouette_examples() {
    let b = gen_blobs(2, 25, 12.0, 3, 4).unwrap();
    assert!(silhouette(&b.rows, &b.labels).unwrap() >= 0.8);

    let x = cloud(9, 200, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let random: Vec<usize> = (0..200).map(|_| rng.random_range(0..3)).collect();
    assert!(silhouette(&x, &random).unwrap().abs() <= 0.1);

    assert_eq!(silhouette(&x[..3], &[0, 1, 2]), Err(ClusterError::SingletonOnly));
    assert!(matches!(silhouette(&x[..3], &[0, 0, 0]), Err(ClusterError::BadClusterCount { .. })));
}

#[test]
fn scores_match_brute_force() {
    for seed in 0..5 {
        let x = cloud(100 + seed, 50, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels: Vec<usize> = (0..50).map(|_| rng.random_range(0..4)).collect();
        labels[..4].copy_from_slice(&[0, 1, 2, 3]);
        assert!((silhouette(&x, &labels).unwrap() - silhouette_oracle(&x, &labels)).abs() <= 1e-12);
        let y = cloud(200 + seed, 30, 3);
        let l30: Vec<usize> = (0..30).map(|i| i % 3).collect();
        assert!((davies_bouldin(&y, &l30).unwrap() - davies_bouldin_oracle(&y, &l30)).abs() <= 1e-12);
    }
    // A singleton cluster contributes zero widths.
    let x = cloud(3, 10, 2);
    let labels = [0, 0, 0, 0, 1, 1, 1, 1, 1, 2];
    assert!((silhouette(&x, &labels).unwrap() - silhouette_oracle(&x, &labels)).abs() <= 1e-12);
}

#[test]
fn davies_bouldin_examples() {
    let points = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![50.0, 0.0], vec![50.0, 0.0]];
    assert_eq!(davies_bouldin(&points, &[0, 0, 1, 1]).unwrap(), 0.0);

    let base = cloud(4, 40, 2);
    let mut last = f64::INFINITY;
    for sep in [2.0, 4.0, 8.0, 16.0] {
        let x: Vec<Vec<f64>> = base.iter().enumerate().map(|(i, r)| if i < 20 { r.clone() } else { vec![r[0] + sep, r[1]] }).collect();
        let labels: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
        let db = davies_bouldin(&x, &labels).unwrap();
        assert!(db < last);
        last = db;
    }

    let sym = vec![vec![-1.0, 0.0], vec![1.0, 0.0], vec![0.0, -1.0], vec![0.0, 1.0]];
    assert_eq!(davies_bouldin(&sym, &[0, 0, 1, 1]), Err(ClusterError::CoincidentCentroids(0, 1)));
}

#[test]
fn select_k_examples() {
    let three = gen_blobs(3, 20, 10.0, 4, 1).unwrap();
    assert_eq!(select_k(&three.rows, 2, 8, 10, 0).unwrap().k_best, 3);
    let two = gen_blobs(2, 20, 10.0, 4, 2).unwrap();
    assert_eq!(select_k(&two.rows, 2, 8, 10, 0).unwrap().k_best, 2);
    let single = cloud(3, 60, 2);
    let sel = select_k(&single, 2, 8, 10, 0).unwrap();
    assert_eq!(sel.table.len(), 7);
    assert!(sel.table.iter().all(|s| s.silhouette < 0.5));
    assert!(matches!(select_k(&single[..5], 2, 8, 1, 0), Err(ClusterError::BadKRange { .. })));
}

#[test]
fn full_model_recovers_blobs() {
    let b = gen_blobs(3, 30, 10.0, 6, 5).unwrap();
    let m = fit_cluster_model(&b.rows, &ClusterConfig { feature_space_scores: true, ..ClusterConfig::default() }).unwrap();
    assert_eq!(m.k, 3);
    assert!(same_partition(&m.labels, &b.labels));
    assert!(m.silhouette >= 0.8);
    assert!(m.feature_space.is_some());
    assert!(m.labels.iter().all(|l| *l < m.k));
}

#[test]
fn profile_flags_shifted_feature() {
    let labels: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let noise: Vec<f64> = (0..40).map(|_| StandardNormal.sample(&mut rng)).collect();
    let shifted: Vec<f64> = noise.iter().enumerate().map(|(i, v)| if i < 20 { v + 30.0 } else { *v }).collect();
    let names = vec!["shifted".to_string(), "noise".to_string()];
    let p = cluster_profile(&labels, &names, &[shifted, noise], 0.05).unwrap();
    assert_eq!(p.sizes, vec![20, 20]);
    assert_eq!(p.features.len(), 2);
    assert!(p.features.iter().all(|f| f.per_cluster.len() == 2));
    let c = &p.features[0].comparisons[0];
    assert!(c.significant);
    assert_eq!(c.u, Some(0.0));
}

#[test]
fn profile_is_calibrated_under_the_null() {
    let names: Vec<String> = (0..10).map(|i| format!("f{i}")).collect();
    let mut flagged = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..30).map(|i| usize::from(i >= 15)).collect();
        let cols: Vec<Vec<f64>> = (0..10).map(|_| (0..30).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let p = cluster_profile(&labels, &names, &cols, 0.05).unwrap();
        flagged += p.features.iter().filter(|f| f.comparisons[0].significant).count();
    }
    assert!(flagged as f64 / 200.0 <= 0.10, "{flagged} of 200");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn scores_ignore_rigid_motions(seed in 0u64..1000, angle in 0.0..6.28f64, dx in -50.0..50.0f64, dy in -50.0..50.0f64) {
        let b = gen_blobs(3, 10, 4.0, 2, seed).unwrap();
        let moved: Vec<Vec<f64>> = b.rows.iter().map(|r| vec![
            angle.cos() * r[0] - angle.sin() * r[1] + dx,
            angle.sin() * r[0] + angle.cos() * r[1] + dy,
        ]).collect();
        prop_assert!((silhouette(&b.rows, &b.labels).unwrap() - silhouette(&moved, &b.labels).unwrap()).abs() < 1e-9);
        prop_assert!((davies_bouldin(&b.rows, &b.labels).unwrap() - davies_bouldin(&moved, &b.labels).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn filter_and_standardize_track_columns(seed in 0u64..1000, perm in Just(vec![3usize, 0, 4, 1, 2]).prop_shuffle()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scales = [0.5, 1.0, 2.0, 3.0, 4.0];
        let rows: Vec<Vec<f64>> = (0..20).map(|_| scales.iter().map(|s| s * rng.random::<f64>()).collect()).collect();
        let permuted: Vec<Vec<f64>> = rows.iter().map(|r| perm.iter().map(|j| r[*j]).collect()).collect();
        let kept = variance_filter(&rows, 50.0).unwrap();
        let kept_p = variance_filter(&permuted, 50.0).unwrap();
        let mut mapped: Vec<usize> = kept_p.iter().map(|j| perm[*j]).collect();
        mapped.sort();
        prop_assert_eq!(&mapped, &kept);
        let (z, _) = standardize(&rows).unwrap();
        let (zp, _) = standardize(&permuted).unwrap();
        for (r, rp) in z.iter().zip(&zp) {
            for (jp, j) in perm.iter().enumerate() {
                prop_assert!((rp[jp] - r[*j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kmeans_labels_are_valid(seed in 0u64..1000, k in 1usize..6) {
        let x = cloud(seed, 25, 2);
        let km = kmeans(&x, k, 2, seed).unwrap();
        let mut seen = vec![false; k];
        for l in &km.labels {
            prop_assert!(*l < k);
            seen[*l] = true;
        }
        prop_assert!(seen.iter().all(|s| *s));
    }
}
