use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_rows, sq_dist, AnalysisError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self { perplexity: 30.0, iterations: 1000, learning_rate: 200.0, early_exaggeration: 12.0, exaggeration_iters: 250, seed: 0 }
    }
}

pub const KL_EVERY: usize = 50;
const PERPLEXITY_TOL: f64 = 1e-7;
const MAX_SEARCH: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneEmbedding {
    pub points: Vec<[f64; 2]>,
    pub perplexity: f64,
    /// Per-point precision `1 / (2 sigma^2)` found by the bandwidth search.
    pub betas: Vec<f64>,
    /// Perplexity each conditional distribution actually reached.
    pub achieved_perplexity: Vec<f64>,
    /// `(iteration, KL(P || Q))` every [`KL_EVERY`] iterations, starting at 0.
    pub kl_history: Vec<(usize, f64)>,
    pub final_kl: f64,
    pub seed: u64,
}

/// Conditional distribution for one row of squared distances at precision `beta`,
/// returned with its Shannon entropy in nats.
fn conditional(d: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    let dmin = d.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
    let mut z = 0.0;
    for (j, (o, dj)) in out.iter_mut().zip(d).enumerate() {
        *o = if j == i { 0.0 } else { (-beta * (dj - dmin)).exp() };
        z += *o;
    }
    let mut weighted = 0.0;
    for (o, dj) in out.iter_mut().zip(d) {
        *o /= z;
        weighted += *o * (dj - dmin);
    }
    z.ln() + beta * weighted
}

/// Binary search on `beta` so that `exp(H(P_i))` matches `perplexity`.
fn search_row(d: &[f64], i: usize, perplexity: f64, row: &mut [f64]) -> (f64, f64) {
    let spread = d.iter().enumerate().filter(|(j, _)| *j != i).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, v)| (lo.min(*v), hi.max(*v)));
    if spread.1 - spread.0 <= 0.0 {
        // equidistant neighbours: every bandwidth gives the uniform distribution
        let h = conditional(d, i, 1.0, row);
        return (1.0, h.exp());
    }
    let target = perplexity.ln();
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    let mut beta = 1.0 / (spread.1 - spread.0);
    let mut h = conditional(d, i, beta, row);
    for _ in 0..MAX_SEARCH {
        if (h.exp() - perplexity).abs() < PERPLEXITY_TOL {
            break;
        }
        if h > target {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
        h = conditional(d, i, beta, row);
    }
    (beta, h.exp())
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(pi, _)| **pi > 0.0).map(|(pi, qi)| pi * (pi / qi).ln()).sum()
}

/// Student-t affinities of the current layout, normalized, plus the unnormalized kernel.
fn low_dim_affinities(y: &[[f64; 2]], q: &mut [f64], num: &mut [f64]) {
    let n = y.len();
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            num[k] = if i == j {
                0.0
            } else {
                let (dx, dy) = (y[i][0] - y[j][0], y[i][1] - y[j][1]);
                1.0 / (1.0 + dx * dx + dy * dy)
            };
            z += num[k];
        }
    }
    for (qk, nk) in q.iter_mut().zip(num.iter()) {
        *qk = (nk / z).max(1e-12);
    }
}

/// Exact O(N^2) t-SNE into two dimensions.
pub fn tsne_embed(data: &[Vec<f64>], config: &TsneConfig) -> Result<TsneEmbedding> {
    check_rows(data)?;
    let n = data.len();
    if n < 5 {
        return Err(AnalysisError::Contract(format!("t-SNE needs at least 5 points, got {n}")));
    }
    if !(config.perplexity > 1.0 && config.perplexity < n as f64 / 3.0) {
        return Err(AnalysisError::Contract(format!(
            "perplexity {} is infeasible for {n} points (needs 1 < perplexity < N/3)",
            config.perplexity
        )));
    }
    let d: Vec<f64> = (0..n * n).map(|k| sq_dist(&data[k / n], &data[k % n])).collect();
    let mut cond = vec![0.0; n * n];
    let mut betas = Vec::with_capacity(n);
    let mut achieved = Vec::with_capacity(n);
    for i in 0..n {
        let (beta, perp) = search_row(&d[i * n..(i + 1) * n], i, config.perplexity, &mut cond[i * n..(i + 1) * n]);
        betas.push(beta);
        achieved.push(perp);
    }
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(1e-12);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, 1e-4).expect("valid sigma");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    let mut velocity = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut q = vec![0.0; n * n];
    let mut num = vec![0.0; n * n];
    let mut kl_history = Vec::new();

    for it in 0..config.iterations {
        low_dim_affinities(&y, &mut q, &mut num);
        if it % KL_EVERY == 0 {
            kl_history.push((it, kl(&p, &q)));
        }
        let exaggeration = if it < config.exaggeration_iters { config.early_exaggeration } else { 1.0 };
        let momentum = if it < config.exaggeration_iters { 0.5 } else { 0.8 };
        for i in 0..n {
            let mut g = [0.0; 2];
            for j in 0..n {
                let k = i * n + j;
                let m = (exaggeration * p[k] - q[k]) * num[k];
                g[0] += 4.0 * m * (y[i][0] - y[j][0]);
                g[1] += 4.0 * m * (y[i][1] - y[j][1]);
            }
            for c in 0..2 {
                gains[i][c] = if (g[c] > 0.0) != (velocity[i][c] > 0.0) { gains[i][c] + 0.2 } else { gains[i][c] * 0.8 };
                gains[i][c] = gains[i][c].max(0.01);
                velocity[i][c] = momentum * velocity[i][c] - config.learning_rate * gains[i][c] * g[c];
            }
        }
        for (yi, vi) in y.iter_mut().zip(&velocity) {
            yi[0] += vi[0];
            yi[1] += vi[1];
        }
        let mean = y.iter().fold([0.0; 2], |m, v| [m[0] + v[0] / n as f64, m[1] + v[1] / n as f64]);
        for yi in &mut y {
            yi[0] -= mean[0];
            yi[1] -= mean[1];
        }
        if y.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
            return Err(AnalysisError::NonFinite(format!("t-SNE layout diverged at iteration {it}")));
        }
    }
    low_dim_affinities(&y, &mut q, &mut num);
    let final_kl = kl(&p, &q);
    if config.iterations % KL_EVERY == 0 {
        kl_history.push((config.iterations, final_kl));
    }
    Ok(TsneEmbedding {
        points: y,
        perplexity: config.perplexity,
        betas,
        achieved_perplexity: achieved,
        kl_history,
        final_kl,
        seed: config.seed,
    })
}
