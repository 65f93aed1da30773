//! Barnes–Hut t-SNE to two dimensions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ClusterError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub components: usize,
    /// Lowered to (n−1)/3 when the sample is too small, unless
    /// `cap_perplexity` is off.
    pub perplexity: f64,
    pub cap_perplexity: bool,
    /// Barnes–Hut opening angle; 0 gives exact repulsion.
    pub theta: f64,
    pub iterations: usize,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    /// Ceiling on the step size. With `auto_learning_rate` the step is
    /// min(learning_rate, max(n / (4·early_exaggeration), 50)); larger steps
    /// make small samples diverge during exaggeration.
    pub learning_rate: f64,
    pub auto_learning_rate: bool,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            components: 2,
            perplexity: 30.0,
            cap_perplexity: true,
            theta: 0.5,
            iterations: 1000,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            learning_rate: 200.0,
            auto_learning_rate: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Embedding {
    pub points: Vec<[f64; 2]>,
    /// Perplexity actually used.
    pub perplexity: f64,
    /// Exact KL(P‖Q) right after the exaggeration phase and at the end.
    pub kl_after_exaggeration: f64,
    pub kl_final: f64,
    pub warnings: Vec<String>,
}

/// Sparse symmetric affinities in compressed row form.
struct Affinities {
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Row of conditional probabilities over the given squared distances whose
/// entropy matches ln(perplexity).
fn conditional_row(d2: &[f64], perplexity: f64) -> Vec<f64> {
    let target = perplexity.ln();
    let (mut beta, mut lo, mut hi) = (1.0, f64::NEG_INFINITY, f64::INFINITY);
    // Shift by the smallest distance so the exponentials never all underflow.
    let dmin = d2.iter().copied().fold(f64::INFINITY, f64::min);
    let mut p = vec![0.0; d2.len()];
    for _ in 0..200 {
        let mut sum = 0.0;
        for (pj, d) in p.iter_mut().zip(d2) {
            *pj = (-beta * (d - dmin)).exp();
            sum += *pj;
        }
        let mean_d: f64 = p.iter().zip(d2).map(|(pj, d)| pj * (d - dmin)).sum::<f64>() / sum;
        let entropy = sum.ln() + beta * mean_d;
        for pj in p.iter_mut() {
            *pj /= sum;
        }
        let diff = entropy - target;
        if diff.abs() < 1e-5 {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = if lo.is_finite() { (beta + lo) / 2.0 } else { beta / 2.0 };
        }
    }
    p
}

fn affinities(data: &[Vec<f64>], perplexity: f64) -> Affinities {
    let n = data.len();
    let k = ((3.0 * perplexity).floor() as usize).min(n - 1);
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<(usize, f64)> = (0..n).filter(|j| *j != i).map(|j| (j, sq_dist(&data[i], &data[j]))).collect();
            d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            d.truncate(k);
            let d2: Vec<f64> = d.iter().map(|e| e.1).collect();
            let p = conditional_row(&d2, perplexity);
            d.iter().zip(p).map(|(e, p)| (e.0, p)).collect()
        })
        .collect();

    // Symmetrize: P = (P + Pᵀ) / Σ.
    let mut sym: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); n];
    for (i, row) in rows.iter().enumerate() {
        for &(j, p) in row {
            *sym[i].entry(j).or_default() += p;
            *sym[j].entry(i).or_default() += p;
        }
    }
    let total: f64 = sym.iter().flat_map(|r| r.values()).sum();
    let mut out = Affinities { row_start: vec![0], cols: Vec::new(), vals: Vec::new() };
    for r in sym {
        for (j, v) in r {
            out.cols.push(j);
            out.vals.push(v / total);
        }
        out.row_start.push(out.cols.len());
    }
    out
}

/// Quadtree node; leaves hold point indices.
struct Node {
    center: [f64; 2],
    half: f64,
    mass: f64,
    com: [f64; 2],
    children: Option<[usize; 4]>,
    points: Vec<usize>,
}

struct QuadTree {
    nodes: Vec<Node>,
}

impl QuadTree {
    fn build(y: &[[f64; 2]]) -> QuadTree {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in y {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let center = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
        let half = ((hi[0] - lo[0]).max(hi[1] - lo[1]) / 2.0).max(1e-12) * (1.0 + 1e-9);
        let mut t = QuadTree { nodes: vec![Node::new(center, half)] };
        for (i, p) in y.iter().enumerate() {
            t.insert(i, p, y);
        }
        t
    }

    fn insert(&mut self, i: usize, p: &[f64; 2], y: &[[f64; 2]]) {
        let mut at = 0;
        loop {
            let node = &mut self.nodes[at];
            let m = node.mass;
            node.com = [(node.com[0] * m + p[0]) / (m + 1.0), (node.com[1] * m + p[1]) / (m + 1.0)];
            node.mass += 1.0;
            match node.children {
                Some(ch) => at = ch[node.quadrant(p)],
                None => {
                    // Leaves split once they would hold two distinct points, down
                    // to a minimum cell size where coincident points pile up.
                    if node.points.is_empty() || node.half < 1e-10 || node.points.iter().all(|j| y[*j] == *p) {
                        node.points.push(i);
                        return;
                    }
                    let (c, h) = (node.center, node.half / 2.0);
                    let base = self.nodes.len();
                    for q in 0..4 {
                        let dx = if q & 1 == 0 { -h } else { h };
                        let dy = if q & 2 == 0 { -h } else { h };
                        self.nodes.push(Node::new([c[0] + dx, c[1] + dy], h));
                    }
                    let moved = std::mem::take(&mut self.nodes[at].points);
                    self.nodes[at].children = Some([base, base + 1, base + 2, base + 3]);
                    for j in moved {
                        let q = self.nodes[at].quadrant(&y[j]);
                        let child = &mut self.nodes[base + q];
                        child.mass += 1.0;
                        child.com = y[j];
                        child.points.push(j);
                    }
                    at = base + self.nodes[at].quadrant(p);
                }
            }
        }
    }

    /// Unnormalised repulsive force on point `i` and its share of Z.
    fn repulsion(&self, i: usize, y: &[[f64; 2]], theta: f64) -> ([f64; 2], f64) {
        let p = y[i];
        let (mut f, mut z) = ([0.0; 2], 0.0);
        let mut stack = vec![0usize];
        while let Some(at) = stack.pop() {
            let node = &self.nodes[at];
            if node.mass == 0.0 {
                continue;
            }
            match node.children {
                None => {
                    for &j in &node.points {
                        if j == i {
                            continue;
                        }
                        let (dx, dy) = (p[0] - y[j][0], p[1] - y[j][1]);
                        let q = 1.0 / (1.0 + dx * dx + dy * dy);
                        z += q;
                        f[0] += q * q * dx;
                        f[1] += q * q * dy;
                    }
                }
                Some(ch) => {
                    let (dx, dy) = (p[0] - node.com[0], p[1] - node.com[1]);
                    let d2 = dx * dx + dy * dy;
                    if 2.0 * node.half < theta * d2.sqrt() {
                        let q = 1.0 / (1.0 + d2);
                        z += node.mass * q;
                        f[0] += node.mass * q * q * dx;
                        f[1] += node.mass * q * q * dy;
                    } else {
                        stack.extend(ch);
                    }
                }
            }
        }
        (f, z)
    }
}

impl Node {
    fn new(center: [f64; 2], half: f64) -> Node {
        Node { center, half, mass: 0.0, com: [0.0; 2], children: None, points: Vec::new() }
    }

    fn quadrant(&self, p: &[f64; 2]) -> usize {
        usize::from(p[0] > self.center[0]) | (usize::from(p[1] > self.center[1]) << 1)
    }
}

fn kl_divergence(p: &Affinities, y: &[[f64; 2]]) -> f64 {
    let n = y.len();
    let z: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .filter(|j| *j != i)
                .map(|j| 1.0 / (1.0 + (y[i][0] - y[j][0]).powi(2) + (y[i][1] - y[j][1]).powi(2)))
                .sum::<f64>()
        })
        .sum();
    let mut kl = 0.0;
    for i in 0..n {
        for e in p.row_start[i]..p.row_start[i + 1] {
            let j = p.cols[e];
            let q = 1.0 / (1.0 + (y[i][0] - y[j][0]).powi(2) + (y[i][1] - y[j][1]).powi(2)) / z;
            let pij = p.vals[e];
            if pij > 0.0 {
                kl += pij * (pij / q.max(f64::MIN_POSITIVE)).ln();
            }
        }
    }
    kl
}

/// Embeds the rows of `data` in two dimensions. Deterministic for a given
/// seed regardless of thread count.
pub fn tsne_embed(data: &[Vec<f64>], cfg: &EmbeddingConfig) -> Result<Embedding, ClusterError> {
    let n = data.len();
    if n < 5 {
        return Err(ClusterError::TooFewRows { needed: 5, got: n });
    }
    if cfg.components != 2 {
        return Err(ClusterError::InvalidConfig(format!("only 2 components are supported, got {}", cfg.components)));
    }
    if !(0.0..=1.0).contains(&cfg.theta) || cfg.perplexity < 1.0 || cfg.learning_rate <= 0.0 {
        return Err(ClusterError::InvalidConfig("theta must lie in [0, 1], perplexity ≥ 1, learning rate > 0".into()));
    }
    if data.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ClusterError::NonFinite);
    }
    let mut warnings = Vec::new();
    let cap = (n - 1) as f64 / 3.0;
    let mut perplexity = cfg.perplexity;
    if perplexity > cap {
        if !cfg.cap_perplexity {
            return Err(ClusterError::PerplexityTooLarge { perplexity, max: cap });
        }
        perplexity = cap;
        warnings.push(format!("perplexity {} lowered to {:.4} for n = {n}", cfg.perplexity, cap));
    }

    let learning_rate = if cfg.auto_learning_rate {
        cfg.learning_rate.min((n as f64 / (4.0 * cfg.early_exaggeration)).max(50.0))
    } else {
        cfg.learning_rate
    };

    let p = affinities(data, perplexity);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            [1e-4 * a, 1e-4 * b]
        })
        .collect();
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut kl_after_exaggeration = f64::NAN;

    for iter in 0..cfg.iterations {
        let exaggerating = iter < cfg.exaggeration_iterations;
        let exaggeration = if exaggerating { cfg.early_exaggeration } else { 1.0 };
        let momentum = if exaggerating { 0.5 } else { 0.8 };
        let tree = QuadTree::build(&y);
        let parts: Vec<([f64; 2], [f64; 2], f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut attract = [0.0; 2];
                for e in p.row_start[i]..p.row_start[i + 1] {
                    let j = p.cols[e];
                    let (dx, dy) = (y[i][0] - y[j][0], y[i][1] - y[j][1]);
                    let w = p.vals[e] / (1.0 + dx * dx + dy * dy);
                    attract[0] += w * dx;
                    attract[1] += w * dy;
                }
                let (rep, z) = tree.repulsion(i, &y, cfg.theta);
                (attract, rep, z)
            })
            .collect();
        let z: f64 = parts.iter().map(|t| t.2).sum();
        for (i, (attract, rep, _)) in parts.iter().enumerate() {
            for d in 0..2 {
                let grad = 4.0 * (exaggeration * attract[d] - rep[d] / z);
                gains[i][d] = if (grad > 0.0) != (update[i][d] > 0.0) { gains[i][d] + 0.2 } else { (gains[i][d] * 0.8).max(0.01) };
                update[i][d] = momentum * update[i][d] - learning_rate * gains[i][d] * grad;
                y[i][d] += update[i][d];
            }
        }
        let c = [y.iter().map(|v| v[0]).sum::<f64>() / n as f64, y.iter().map(|v| v[1]).sum::<f64>() / n as f64];
        for v in y.iter_mut() {
            v[0] -= c[0];
            v[1] -= c[1];
        }
        if iter + 1 == cfg.exaggeration_iterations {
            kl_after_exaggeration = kl_divergence(&p, &y);
        }
    }
    let kl_final = kl_divergence(&p, &y);
    if kl_after_exaggeration.is_nan() {
        kl_after_exaggeration = kl_final;
    }
    Ok(Embedding { points: y, perplexity, kl_after_exaggeration, kl_final, warnings })
}
