use ndarray::Array2;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::GnnError;
use crate::util;

pub const DEFAULT_RESTARTS: usize = 50;
const MAX_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
}

fn d2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl KMeans {
    /// Nearest centroid, ties to the lower index.
    pub fn predict_row(&self, x: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (c, m) in self.centroids.iter().enumerate() {
            let d = d2(x, m);
            if d < best.0 {
                best = (d, c);
            }
        }
        best.1
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Vec<usize> {
        rows.iter().map(|r| self.predict_row(r)).collect()
    }
}

fn plus_plus(rows: &[Vec<f64>], k: usize, rng: &mut util::Rng) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut dist: Vec<f64> = rows.iter().map(|r| d2(r, &rows[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut t = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, d) in dist.iter().enumerate() {
                if t < *d {
                    pick = i;
                    break;
                }
                t -= d;
            }
            pick
        } else {
            // Everything left coincides with a centroid.
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, r) in rows.iter().enumerate() {
            dist[i] = dist[i].min(d2(r, &rows[next]));
        }
    }
    chosen.iter().map(|&i| rows[i].clone()).collect()
}

fn lloyd(rows: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> (KMeans, Vec<usize>) {
    let k = centroids.len();
    let dim = rows[0].len();
    let mut model = KMeans { centroids: centroids.clone(), inertia: 0.0 };
    let mut labels = model.predict(rows);
    for _ in 0..MAX_ITERS {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (r, &l) in rows.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(r) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            } else {
                // Empty cluster: move it onto the worst-fit point.
                let far = (0..rows.len())
                    .max_by(|&a, &b| {
                        d2(&rows[a], &centroids[labels[a]])
                            .total_cmp(&d2(&rows[b], &centroids[labels[b]]))
                            .then(b.cmp(&a))
                    })
                    .expect("rows");
                centroids[c] = rows[far].clone();
            }
        }
        model.centroids = centroids.clone();
        let next = model.predict(rows);
        if next == labels {
            break;
        }
        labels = next;
    }
    model.inertia = rows.iter().zip(&labels).map(|(r, &l)| d2(r, &model.centroids[l])).sum();
    (model, labels)
}

/// k-means++ seeded Lloyd, best inertia over `restarts` runs.
pub fn kmeans_fit(rows: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> Result<(KMeans, Vec<usize>), GnnError> {
    if k == 0 || k > rows.len() {
        return Err(GnnError::BadK { k, rows: rows.len() });
    }
    let runs: Vec<(KMeans, Vec<usize>)> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = util::rng(util::derive_seed(seed, r as u64), 0x4b3);
            lloyd(rows, plus_plus(rows, k, &mut rng))
        })
        .collect();
    let best = runs.iter().enumerate().fold(0, |b, (i, r)| if r.0.inertia < runs[b].0.inertia { i } else { b });
    Ok(runs.into_iter().nth(best).expect("at least one run"))
}

/// Cluster labels for embedding rows.
pub fn embedding_clustering(e: &Array2<f64>, k: usize, seed: u64) -> Result<Vec<usize>, GnnError> {
    let rows: Vec<Vec<f64>> = e.rows().into_iter().map(|r| r.to_vec()).collect();
    Ok(kmeans_fit(&rows, k, DEFAULT_RESTARTS, seed)?.1)
}
