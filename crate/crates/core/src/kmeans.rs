//! Lloyd's K-means over sparse vectors with dense centroids, and routing
//! of unseen paragraphs to their nearest training cluster.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{SparseVector, Vocabulary};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ClusterError {
    #[error("no points to cluster")]
    EmptyInput,
    #[error("k = {k} exceeds the number of points ({n})")]
    KTooLarge { k: usize, n: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub const DEFAULT_CLUSTER_DIVISOR: usize = 200;
pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-6;

/// `max(1, round(n_train / divisor))`, halves rounded up.
pub fn default_cluster_count(n_train: usize, divisor: usize) -> usize {
    let divisor = divisor.max(1);
    ((n_train + divisor / 2) / divisor).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub seed: u64,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances after each assignment step.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    /// Final assignment of the fitted points.
    #[serde(skip)]
    pub labels: Vec<usize>,
    /// Reference to the similarity vocabulary this model lives in.
    pub vocab_ref: Option<String>,
    #[serde(skip)]
    pub similarity_vocab: Option<Vocabulary>,
}

/// `‖x - c‖²` with `‖c‖²` precomputed.
fn sq_distance(x: &SparseVector, x_sq: f64, c: &[f64], c_sq: f64) -> f64 {
    (x_sq - 2.0 * x.dot_dense(c) + c_sq).max(0.0)
}

fn nearest(x: &SparseVector, x_sq: f64, centroids: &[Vec<f64>], norms: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, (c, &n)) in centroids.iter().zip(norms).enumerate() {
        let d = sq_distance(x, x_sq, c, n);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Direct `Σ (x_j - c_j)²` scan used for routing, free of the cancellation
/// error of the expanded form.
fn nearest_exact(x: &SparseVector, centroids: &[Vec<f64>]) -> (usize, f64) {
    let dense = x.to_dense();
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d: f64 = dense.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn norms(centroids: &[Vec<f64>]) -> Vec<f64> {
    centroids.iter().map(|c| c.iter().map(|v| v * v).sum()).collect()
}

pub fn fit_kmeans(
    x: &[SparseVector],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<ClusterModel, ClusterError> {
    if x.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    if k == 0 {
        return Err(ClusterError::ZeroK);
    }
    if k > x.len() {
        return Err(ClusterError::KTooLarge { k, n: x.len() });
    }
    let dim = x[0].dim();
    if let Some(bad) = x.iter().find(|v| v.dim() != dim) {
        return Err(ClusterError::DimensionMismatch { expected: dim, got: bad.dim() });
    }
    let x_sq: Vec<f64> = x.iter().map(SparseVector::squared_norm).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init: Vec<usize> = sample(&mut rng, x.len(), k).into_vec();
    init.sort_unstable();
    let mut centroids: Vec<Vec<f64>> = init.iter().map(|&i| x[i].to_dense()).collect();

    let mut history = Vec::new();
    let mut labels = vec![0usize; x.len()];
    let mut iterations = 0;
    for _ in 0..max_iter.max(1) {
        iterations += 1;
        let cn = norms(&centroids);
        let assigned: Vec<(usize, f64)> = x
            .par_iter()
            .zip(&x_sq)
            .map(|(v, &s)| nearest(v, s, &centroids, &cn))
            .collect();
        let inertia: f64 = assigned.iter().map(|a| a.1).sum();
        history.push(inertia);
        for (l, a) in labels.iter_mut().zip(&assigned) {
            *l = a.0;
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (v, &l) in x.iter().zip(&labels) {
            counts[l] += 1;
            for (j, w) in v.iter() {
                sums[l][j] += w;
            }
        }
        // Empty clusters take the point farthest from its centroid; each
        // such point is used once.
        let mut taken = vec![false; x.len()];
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = assigned
                .iter()
                .enumerate()
                .filter(|(i, _)| !taken[*i] && counts[labels[*i]] > 1)
                .fold(None, |acc: Option<(usize, f64)>, (i, a)| match acc {
                    Some((_, d)) if d >= a.1 => acc,
                    _ => Some((i, a.1)),
                });
            let Some((i, _)) = far else { continue };
            taken[i] = true;
            let old = labels[i];
            counts[old] -= 1;
            for (j, w) in x[i].iter() {
                sums[old][j] -= w;
            }
            labels[i] = c;
            counts[c] = 1;
            sums[c] = x[i].to_dense();
        }

        let mut shift = 0.0f64;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let inv = 1.0 / counts[c] as f64;
            let mut d2 = 0.0;
            for (old, s) in centroids[c].iter_mut().zip(&sums[c]) {
                let new = s * inv;
                d2 += (new - *old) * (new - *old);
                *old = new;
            }
            shift = shift.max(d2.sqrt());
        }
        if shift < tol {
            break;
        }
    }
    // Final labels are the routing assignment of the final centroids.
    let last: Vec<(usize, f64)> = x.par_iter().map(|v| nearest_exact(v, &centroids)).collect();
    let inertia: f64 = last.iter().map(|a| a.1).sum();
    if history.last().is_none_or(|&h| inertia < h) {
        history.push(inertia);
    }
    labels = last.into_iter().map(|a| a.0).collect();

    Ok(ClusterModel {
        k,
        seed,
        centroids,
        inertia_history: history,
        iterations,
        labels,
        vocab_ref: None,
        similarity_vocab: None,
    })
}

impl ClusterModel {
    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    pub fn assign(&self, x: &SparseVector) -> Result<usize, ClusterError> {
        if x.dim() != self.dim() {
            return Err(ClusterError::DimensionMismatch { expected: self.dim(), got: x.dim() });
        }
        Ok(nearest_exact(x, &self.centroids).0)
    }

    pub fn assign_all(&self, xs: &[SparseVector]) -> Result<Vec<usize>, ClusterError> {
        xs.par_iter()
            .map(|x| {
                if x.dim() != self.dim() {
                    return Err(ClusterError::DimensionMismatch {
                        expected: self.dim(),
                        got: x.dim(),
                    });
                }
                Ok(nearest_exact(x, &self.centroids).0)
            })
            .collect()
    }

    pub fn inertia(&self, xs: &[SparseVector]) -> f64 {
        xs.iter().map(|x| nearest_exact(x, &self.centroids).1).sum()
    }
}

/// Groups item indices by cluster; every cluster gets a bucket, possibly
/// empty.
pub fn partition_by_cluster(
    model: &ClusterModel,
    xs: &[SparseVector],
) -> Result<Vec<Vec<usize>>, ClusterError> {
    let mut buckets = vec![Vec::new(); model.k];
    for (i, c) in model.assign_all(xs)?.into_iter().enumerate() {
        buckets[c].push(i);
    }
    Ok(buckets)
}
