//! Bagged CART regression forest used for gap interpolation.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows trees until leaves are pure or cannot be split.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features tried per split; `None` means all of them.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { n_trees: 100, max_depth: None, min_samples_split: 2, max_features: None, seed: 0 }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

/// Random forest regressor: bootstrap-resampled trees, variance-reduction
/// splits, prediction by averaging.
#[derive(Debug, Clone)]
pub struct RandomForest {
    trees: Vec<Tree>,
}

impl RandomForest {
    /// Fits on row-major `rows` (each of equal width) against `targets`.
    ///
    /// Each tree draws its own generator from `seed` and its index, so the
    /// result does not depend on how trees are scheduled across threads.
    pub fn fit(rows: &[Vec<f64>], targets: &[f64], cfg: &ForestConfig) -> Self {
        assert_eq!(rows.len(), targets.len());
        assert!(!rows.is_empty(), "cannot fit a forest on zero rows");
        let trees = (0..cfg.n_trees.max(1))
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let n = rows.len();
                let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let mut builder = TreeBuilder { rows, targets, cfg, rng, nodes: Vec::new() };
                builder.grow(sample);
                Tree { nodes: builder.nodes }
            })
            .collect();
        RandomForest { trees }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}

struct TreeBuilder<'a> {
    rows: &'a [Vec<f64>],
    targets: &'a [f64],
    cfg: &'a ForestConfig,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    /// Grows the tree with an explicit work list, since
    /// unbalanced splits can get far deeper than a worker thread's stack.
    fn grow(&mut self, root: Vec<usize>) {
        let mut work = vec![(0usize, root, 0usize)];
        self.nodes.push(Node::Leaf(0.0));
        while let Some((at, idx, depth)) = work.pop() {
            let first = self.targets[idx[0]];
            if idx.iter().all(|i| self.targets[*i] == first) {
                self.nodes[at] = Node::Leaf(first);
                continue;
            }
            let mean = idx.iter().map(|i| self.targets[*i]).sum::<f64>() / idx.len() as f64;
            self.nodes[at] = Node::Leaf(mean);
            let depth_ok = self.cfg.max_depth.is_none_or(|d| depth < d);
            if !depth_ok || idx.len() < self.cfg.min_samples_split.max(2) {
                continue;
            }
            let Some((feature, threshold)) = self.best_split(&idx) else {
                continue;
            };
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
                idx.iter().partition(|i| self.rows[**i][feature] <= threshold);
            if left_idx.is_empty() || right_idx.is_empty() {
                continue;
            }
            let left = self.nodes.len();
            let right = left + 1;
            self.nodes.push(Node::Leaf(0.0));
            self.nodes.push(Node::Leaf(0.0));
            self.nodes[at] = Node::Split { feature, threshold, left, right };
            work.push((right, right_idx, depth + 1));
            work.push((left, left_idx, depth + 1));
        }
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let width = self.rows[0].len();
        let mut features: Vec<usize> = (0..width).collect();
        if let Some(k) = self.cfg.max_features.filter(|k| *k < width) {
            for i in 0..k {
                let j = self.rng.random_range(i..width);
                features.swap(i, j);
            }
            features.truncate(k.max(1));
        }
        features
    }

    /// Split minimizing the summed squared error of the two children.
    fn best_split(&mut self, idx: &[usize]) -> Option<(usize, f64)> {
        let n = idx.len() as f64;
        let total: f64 = idx.iter().map(|i| self.targets[*i]).sum();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for f in self.candidate_features() {
            order.sort_by(|a, b| self.rows[*a][f].total_cmp(&self.rows[*b][f]).then(a.cmp(b)));
            let mut left_sum = 0.0;
            for k in 0..order.len() - 1 {
                left_sum += self.targets[order[k]];
                let x_here = self.rows[order[k]][f];
                let x_next = self.rows[order[k + 1]][f];
                if x_here == x_next {
                    continue;
                }
                let nl = (k + 1) as f64;
                let nr = n - nl;
                let right_sum = total - left_sum;
                // Maximizing this is equivalent to minimizing child SSE.
                let score = left_sum * left_sum / nl + right_sum * right_sum / nr;
                if best.is_none_or(|(s, _, _)| score > s) {
                    let mut mid = x_here + (x_next - x_here) / 2.0;
                    if mid >= x_next {
                        mid = x_here;
                    }
                    best = Some((score, f, mid));
                }
            }
        }
        let (score, feature, threshold) = best?;
        (score > total * total / n).then_some((feature, threshold))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_target_is_reproduced_exactly() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, (i * 7 % 11) as f64]).collect();
        let forest = RandomForest::fit(&rows, &[3.25; 50], &ForestConfig::default());
        assert_eq!(forest.predict(&[17.5, 2.0]), 3.25);
    }

    #[test]
    fn step_function_learned() {
        let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..200).map(|i| if i < 100 { 0.0 } else { 10.0 }).collect();
        let forest = RandomForest::fit(&rows, &y, &ForestConfig { n_trees: 20, ..Default::default() });
        assert!(forest.predict(&[20.0]).abs() < 1e-12);
        assert!((forest.predict(&[180.0]) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn fit_is_deterministic_for_a_seed() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![(i as f64).sin(), i as f64]).collect();
        let y: Vec<f64> = (0..100).map(|i| (i as f64 * 0.1).cos()).collect();
        let cfg = ForestConfig { n_trees: 10, seed: 42, max_features: Some(1), ..Default::default() };
        let a = RandomForest::fit(&rows, &y, &cfg);
        let b = RandomForest::fit(&rows, &y, &cfg);
        for q in [0.3, 1.7, -0.2] {
            assert_eq!(a.predict(&[q, 50.0]).to_bits(), b.predict(&[q, 50.0]).to_bits());
        }
    }
}
