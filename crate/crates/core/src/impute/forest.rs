//! Regression trees and a bootstrap ensemble for the temporal random-forest
//! imputer. Splits minimize within-leaf variance over a random subset of
//! sqrt(features) per split; leaves hold at least `min_leaf` rows.

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct RegressionTree {
    nodes: Vec<Node>,
}

pub(crate) struct TreeParams {
    pub min_leaf: usize,
    pub mtry: usize,
}

impl RegressionTree {
    /// Fits a tree on the given row subset (typically a bootstrap sample).
    pub fn fit(
        x: &Array2<f64>,
        y: &[f64],
        rows: Vec<usize>,
        params: &TreeParams,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut tree = RegressionTree { nodes: Vec::new() };
        tree.grow(x, y, rows, params, rng);
        tree
    }

    fn grow(
        &mut self,
        x: &Array2<f64>,
        y: &[f64],
        rows: Vec<usize>,
        params: &TreeParams,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let id = self.nodes.len();
        let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(Node::Leaf(mean));

        if rows.len() < 2 * params.min_leaf {
            return id;
        }
        let first = y[rows[0]];
        if rows.iter().all(|&r| y[r] == first) {
            return id; // zero variance
        }

        let nfeat = x.ncols();
        let candidates = rand::seq::index::sample(rng, nfeat, params.mtry.min(nfeat));
        let mut best: Option<(f64, usize, f64)> = None; // (cost, feature, threshold)
        let mut scratch: Vec<(f64, f64)> = Vec::with_capacity(rows.len());
        for feature in candidates.iter() {
            scratch.clear();
            scratch.extend(rows.iter().map(|&r| (x[[r, feature]], y[r])));
            scratch.sort_by(|a, b| a.0.total_cmp(&b.0));

            // prefix sums over the sorted rows
            let n = scratch.len();
            let mut sum = 0.0;
            let mut sum2 = 0.0;
            let total: f64 = scratch.iter().map(|p| p.1).sum();
            let total2: f64 = scratch.iter().map(|p| p.1 * p.1).sum();
            for i in 0..n - 1 {
                sum += scratch[i].1;
                sum2 += scratch[i].1 * scratch[i].1;
                let nl = i + 1;
                let nr = n - nl;
                if nl < params.min_leaf || nr < params.min_leaf {
                    continue;
                }
                if scratch[i].0 == scratch[i + 1].0 {
                    continue; // cannot split between equal values
                }
                let sse_l = sum2 - sum * sum / nl as f64;
                let sse_r = (total2 - sum2) - (total - sum) * (total - sum) / nr as f64;
                let cost = sse_l + sse_r;
                if best.map_or(true, |(c, _, _)| cost < c) {
                    let threshold = 0.5 * (scratch[i].0 + scratch[i + 1].0);
                    best = Some((cost, feature, threshold));
                }
            }
        }

        let Some((_, feature, threshold)) = best else {
            return id; // no valid split among the sampled features
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&r| x[[r, feature]] <= threshold);
        let left = self.grow(x, y, left_rows, params, rng);
        let right = self.grow(x, y, right_rows, params, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    pub fn predict(&self, row: ArrayView1<f64>) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }
}

/// Bootstrap ensemble; prediction is the mean over trees. Each tree gets
/// its own seeded generator, so training is deterministic no matter how
/// targets are scheduled.
pub(crate) struct Forest {
    trees: Vec<RegressionTree>,
}

impl Forest {
    pub fn fit(
        x: &Array2<f64>,
        y: &[f64],
        n_trees: usize,
        min_leaf: usize,
        tree_seeds: impl Iterator<Item = u64>,
    ) -> Self {
        let n = y.len();
        let nfeat = x.ncols();
        let mtry = ((nfeat as f64).sqrt().round() as usize).max(1);
        let params = TreeParams { min_leaf, mtry };
        let trees = tree_seeds
            .take(n_trees)
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                RegressionTree::fit(x, y, rows, &params, &mut rng)
            })
            .collect();
        Forest { trees }
    }

    pub fn predict(&self, row: ArrayView1<f64>) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        s / self.trees.len() as f64
    }
}
