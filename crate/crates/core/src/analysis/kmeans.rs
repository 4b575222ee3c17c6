use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_rows, sq_dist, AnalysisError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Inertia after seeding and after every Lloyd iteration.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
}

impl KMeansModel {
    /// Index of the nearest centroid; ties go to the lower index.
    pub fn predict(&self, x: &[f64]) -> usize {
        nearest(&self.centroids, x).0
    }
}

fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(centroid, x);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

pub fn inertia(data: &[Vec<f64>], centroids: &[Vec<f64>], assignments: &[usize]) -> f64 {
    data.iter().zip(assignments).map(|(x, &a)| sq_dist(x, &centroids[a])).sum()
}

fn plus_plus(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut centroids = vec![data[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = data.iter().map(|x| sq_dist(x, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = d2.iter().rposition(|d| *d > 0.0).unwrap_or(n - 1);
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(data[pick].clone());
        for (i, x) in data.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(x, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

/// k-means++ seeding followed by Lloyd iterations until the assignment stops changing.
/// A cluster that loses all its points is moved onto the point farthest from its centroid.
pub fn kmeans_fit(data: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<KMeansModel> {
    let dim = check_rows(data)?;
    if k == 0 || data.len() < k {
        return Err(AnalysisError::Contract(format!("k-means needs 1 <= k <= N, got k = {k}, N = {}", data.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(data, k, &mut rng);
    let assign = |cs: &[Vec<f64>]| data.iter().map(|x| nearest(cs, x).0).collect::<Vec<_>>();
    let mut assignments = assign(&centroids);
    let mut history = vec![inertia(data, &centroids, &assignments)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &a) in data.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(x) {
                *s += v;
            }
        }
        let mut taken = Vec::new();
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..data.len())
                    .filter(|i| !taken.contains(i))
                    .map(|i| (i, sq_dist(&data[i], &centroids[assignments[i]])))
                    .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
                taken.push(far.0);
                centroids[c] = data[far.0].clone();
            }
        }
        let next = assign(&centroids);
        history.push(inertia(data, &centroids, &next));
        let same = next == assignments;
        assignments = next;
        if same {
            converged = true;
            break;
        }
    }
    Ok(KMeansModel {
        k,
        inertia: *history.last().expect("history is never empty"),
        centroids,
        assignments,
        inertia_history: history,
        iterations,
        converged,
        seed,
    })
}

/// Final inertia for each `k`, to help pick a cluster count.
pub fn inertia_sweep(data: &[Vec<f64>], ks: &[usize], seed: u64, max_iter: usize) -> Result<Vec<(usize, f64)>> {
    ks.iter().map(|&k| Ok((k, kmeans_fit(data, k, seed, max_iter)?.inertia))).collect()
}

/// Fraction of points whose cluster matches `labels` under the best relabelling of clusters.
pub fn label_agreement(labels: &[usize], assignments: &[usize], k: usize) -> f64 {
    assert_eq!(labels.len(), assignments.len());
    if labels.is_empty() {
        return 1.0;
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0;
    permute(&mut perm, 0, &mut |p| {
        let hits = labels.iter().zip(assignments).filter(|(l, a)| p.get(**a) == Some(*l)).count();
        best = best.max(hits);
    });
    best as f64 / labels.len() as f64
}

fn permute(p: &mut Vec<usize>, start: usize, f: &mut dyn FnMut(&[usize])) {
    if start == p.len() {
        f(p);
        return;
    }
    for i in start..p.len() {
        p.swap(start, i);
        permute(p, start + 1, f);
        p.swap(start, i);
    }
}
