//! Neighbor-embedding layout on the unit sphere.
//!
//! A k-nearest-neighbor graph under the target distance is turned into fuzzy
//! membership strengths (per-point bandwidth calibration, then probabilistic
//! union), and positions are refined by edge-sampled SGD with negative
//! sampling. Points start at their own normalized embedding and are projected
//! back onto the sphere after every move.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::vectors::{dot, EmbeddingSnapshot, EmbeddingVector};

use super::target::{TargetHierarchy, DISTANCE_FLOOR};
use super::AlignmentSpec;

/// Curve parameters `(a, b)` so that `1 / (1 + a d^(2b))` approximates a unit
/// plateau up to `min_dist` followed by exponential decay with scale `spread`.
pub fn fit_ab(spread: f64, min_dist: f64) -> Result<(f64, f64)> {
    if !(spread > 0.0 && min_dist >= 0.0 && min_dist < 3.0 * spread) {
        return Err(Error::Parameter(format!("bad spread {spread} / min_dist {min_dist}")));
    }
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * spread * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| if x < min_dist { 1.0 } else { (-(x - min_dist) / spread).exp() })
        .collect();

    // Levenberg-Marquardt on the two parameters, skipping x = 0 where the
    // derivative in b is undefined.
    let residuals = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let f = 1.0 / (1.0 + a * x.powf(2.0 * b));
                (f - y).powi(2)
            })
            .sum()
    };
    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut lambda = 1e-3;
    let mut cost = residuals(a, b);
    for _ in 0..500 {
        let (mut jtj, mut jtr) = ([[0.0f64; 2]; 2], [0.0f64; 2]);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x <= 0.0 {
                continue;
            }
            let p = x.powf(2.0 * b);
            let den = 1.0 + a * p;
            let f = 1.0 / den;
            let r = f - y;
            let da = -p / (den * den);
            let db = -a * p * 2.0 * x.ln() / (den * den);
            let j = [da, db];
            for u in 0..2 {
                jtr[u] += j[u] * r;
                for w in 0..2 {
                    jtj[u][w] += j[u] * j[w];
                }
            }
        }
        let m = [
            [jtj[0][0] * (1.0 + lambda), jtj[0][1]],
            [jtj[1][0], jtj[1][1] * (1.0 + lambda)],
        ];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let step_a = (m[1][1] * jtr[0] - m[0][1] * jtr[1]) / det;
        let step_b = (m[0][0] * jtr[1] - m[1][0] * jtr[0]) / det;
        let (na, nb) = (a - step_a, b - step_b);
        let new_cost = if na > 0.0 && nb > 0.0 { residuals(na, nb) } else { f64::INFINITY };
        if new_cost < cost {
            let done = (cost - new_cost) < 1e-15 * cost.max(1e-300);
            a = na;
            b = nb;
            cost = new_cost;
            lambda = (lambda * 0.3).max(1e-12);
            if done {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    Ok((a, b))
}

/// Symmetric fuzzy neighbor graph as `(i, j, weight)` with `i < j`, sorted.
pub(crate) fn fuzzy_graph(knn: &[Vec<(usize, f64)>]) -> Vec<(usize, usize, f64)> {
    let n = knn.len();
    let mut directed: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    for row in knn {
        let k = row.len();
        let target = (k as f64).log2();
        let rho = row.iter().map(|&(_, d)| d).fold(f64::INFINITY, f64::min);
        let mean = row.iter().map(|&(_, d)| d).sum::<f64>() / k as f64;
        let excess = |sigma: f64| -> f64 { row.iter().map(|&(_, d)| (-(d - rho).max(0.0) / sigma).exp()).sum() };
        // Bisection on sigma; the membership sum is increasing in sigma.
        let (mut lo, mut hi, mut sigma) = (0.0f64, f64::INFINITY, 1.0f64);
        for _ in 0..64 {
            let s = excess(sigma);
            if (s - target).abs() < 1e-5 {
                break;
            }
            if s > target {
                hi = sigma;
                sigma = (lo + hi) / 2.0;
            } else {
                lo = sigma;
                sigma = if hi.is_infinite() { sigma * 2.0 } else { (lo + hi) / 2.0 };
            }
        }
        let sigma = sigma.max(1e-3 * mean).max(1e-12);
        directed.push(row.iter().map(|&(j, d)| (j, (-(d - rho).max(0.0) / sigma).exp())).collect());
    }
    let mut pairs: std::collections::BTreeMap<(usize, usize), (f64, f64)> = std::collections::BTreeMap::new();
    for (i, row) in directed.iter().enumerate() {
        for &(j, w) in row {
            let e = pairs.entry((i.min(j), i.max(j))).or_insert((0.0, 0.0));
            if i < j {
                e.0 = w;
            } else {
                e.1 = w;
            }
        }
    }
    pairs
        .into_iter()
        .map(|((i, j), (a, b))| (i, j, a + b - a * b))
        .filter(|&(_, _, w)| w > 0.0)
        .collect()
}

/// k nearest neighbors of every training sample under the target distance.
fn knn_under_target(
    x: &[Vec<f64>],
    labels: &[usize],
    target: &TargetHierarchy,
    spec: &AlignmentSpec,
) -> Vec<Vec<(usize, f64)>> {
    let n = x.len();
    let k = spec.n_neighbors;
    let mut out = Vec::with_capacity(n);
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(n);
    for i in 0..n {
        row.clear();
        for j in 0..n {
            if j != i {
                let cos = 1.0 - dot(&x[i], &x[j]);
                let d = target.combine(cos, labels[i], labels[j], spec).max(DISTANCE_FLOOR);
                row.push((j, d));
            }
        }
        let cmp = |p: &(usize, f64), q: &(usize, f64)| p.1.total_cmp(&q.1).then(p.0.cmp(&q.0));
        row.select_nth_unstable_by(k - 1, cmp);
        let mut nn = row[..k].to_vec();
        nn.sort_by(cmp);
        out.push(nn);
    }
    out
}

fn project(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn clip(g: f64) -> f64 {
    g.clamp(-4.0, 4.0)
}

/// Per-sample target positions on the unit sphere, in snapshot record order.
pub fn build_target_layout(
    train: &EmbeddingSnapshot,
    target: &TargetHierarchy,
    spec: &AlignmentSpec,
) -> Result<Vec<EmbeddingVector>> {
    spec.validate()?;
    let n = train.len();
    if spec.n_neighbors >= n {
        return Err(Error::Parameter(format!(
            "n_neighbors {} must be below the training size {n}",
            spec.n_neighbors
        )));
    }
    let labels: Vec<usize> = train
        .records()
        .iter()
        .map(|(l, _)| target.label_index(l))
        .collect::<Result<_>>()?;
    let mut y: Vec<Vec<f64>> = train
        .records()
        .iter()
        .map(|(_, v)| v.normalized().map(|u| u.into_inner()))
        .collect::<Result<_>>()?;

    let knn = knn_under_target(&y, &labels, target, spec);
    let graph = fuzzy_graph(&knn);
    let (a, b) = fit_ab(1.0, spec.min_dist)?;
    optimize(&mut y, &graph, a, b, spec);

    y.into_iter().map(EmbeddingVector::new).collect()
}

fn optimize(u: &mut [Vec<f64>], graph: &[(usize, usize, f64)], a: f64, b: f64, spec: &AlignmentSpec) {
    let n = u.len();
    let dim = u[0].len();
    let epochs = spec.layout_epochs;
    // Points live on the unit sphere; the membership curve sees distances on
    // a sphere of radius `r`.
    let r = spec.layout_radius;
    let max_w = graph.iter().map(|e| e.2).fold(0.0f64, f64::max);
    // Edges too weak to be sampled even once are dropped.
    let edges: Vec<(usize, usize, f64)> = graph
        .iter()
        .filter(|e| e.2 >= max_w / epochs as f64)
        .map(|&(i, j, w)| (i, j, max_w / w))
        .collect();
    let neg_rate = spec.negative_sample_rate as f64;
    let mut next_sample: Vec<f64> = edges.iter().map(|e| e.2).collect();
    let mut next_negative: Vec<f64> = edges.iter().map(|e| e.2 / neg_rate).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut step = vec![0.0f64; dim];
    let sq = |p: &[f64], q: &[f64]| -> f64 { r * r * p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() };

    for epoch in 0..epochs {
        let alpha = spec.layout_learning_rate * (1.0 - epoch as f64 / epochs as f64);
        let now = epoch as f64;
        for (e, &(i, j, every)) in edges.iter().enumerate() {
            if next_sample[e] > now {
                continue;
            }
            let d2 = sq(&u[i], &u[j]);
            if d2 > 0.0 {
                let coeff = -2.0 * a * b * d2.powf(b - 1.0) / (a * d2.powf(b) + 1.0);
                for k in 0..dim {
                    step[k] = clip(coeff * r * (u[i][k] - u[j][k])) * alpha / r;
                }
                for k in 0..dim {
                    u[i][k] += step[k];
                    u[j][k] -= step[k];
                }
                project(&mut u[i]);
                project(&mut u[j]);
            }
            next_sample[e] += every;

            let every_neg = every / neg_rate;
            let n_neg = ((now - next_negative[e]) / every_neg).floor().max(0.0) as usize;
            for _ in 0..n_neg {
                let m = rng.gen_range(0..n);
                if m == i {
                    continue;
                }
                let d2 = sq(&u[i], &u[m]);
                if d2 > 0.0 {
                    let coeff = 2.0 * b / ((0.001 + d2) * (a * d2.powf(b) + 1.0));
                    for k in 0..dim {
                        step[k] = clip(coeff * r * (u[i][k] - u[m][k])) * alpha / r;
                    }
                } else {
                    step.iter_mut().for_each(|g| *g = 4.0 * alpha / r);
                }
                for k in 0..dim {
                    u[i][k] += step[k];
                }
                project(&mut u[i]);
            }
            next_negative[e] += n_neg as f64 * every_neg;
        }
    }
}
