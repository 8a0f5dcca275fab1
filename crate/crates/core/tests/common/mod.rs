//! Independent reference implementations shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use rand::Rng;
use rand_distr::{Distribution, Normal};
use wellfm::metrics::PrPoint;
use wellfm::rng::ModelRng;
use wellfm::train::pair_gradient;
use wellfm::{EncodedRow, FmModel, TrainConfig};

/// Literal double loop over feature pairs on a dense row.
pub fn dense_score(model: &FmModel, x: &[f64]) -> f64 {
    let n = x.len();
    let mut total = model.w0;
    for i in 0..n {
        total += model.w[i] * x[i];
    }
    for i in 0..n {
        if x[i] == 0.0 {
            continue;
        }
        for j in (i + 1)..n {
            let dot: f64 = model
                .factors(i)
                .iter()
                .zip(model.factors(j))
                .map(|(a, b)| a * b)
                .sum();
            total += dot * x[i] * x[j];
        }
    }
    total
}

pub fn random_model(rng: &mut ModelRng, n: usize, k: usize) -> FmModel {
    let normal = Normal::new(0.0, 0.5).unwrap();
    let w0 = normal.sample(rng);
    let w = (0..n).map(|_| normal.sample(rng)).collect();
    let v = (0..n * k).map(|_| normal.sample(rng)).collect();
    FmModel::from_parts(
        w0,
        w,
        v,
        k,
        TrainConfig {
            factors: k,
            ..Default::default()
        },
    )
    .unwrap()
}

/// Sparse row with roughly `density` of its entries nonzero.
pub fn random_row(rng: &mut ModelRng, n: usize, density: f64) -> EncodedRow {
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for i in 0..n {
        if rng.random_bool(density) {
            indices.push(i);
            values.push(rng.random_range(-2.0..2.0));
        }
    }
    EncodedRow {
        indices,
        values,
        dim: n,
    }
}

fn ln_sigmoid(d: f64) -> f64 {
    -(-d).exp().ln_1p()
}

/// `ln sigmoid(f(xi) - f(xj)) - lambda |theta|^2` using the dense oracle.
pub fn pair_objective(model: &FmModel, xi: &[f64], xj: &[f64], lambda: f64) -> f64 {
    let norm = model.w0 * model.w0
        + model.w.iter().map(|x| x * x).sum::<f64>()
        + model.v.iter().map(|x| x * x).sum::<f64>();
    ln_sigmoid(dense_score(model, xi) - dense_score(model, xj)) - lambda * norm
}

/// Gradient of [`pair_objective`] as `(w0, w, V)`, from the library's
/// analytic `dd/dtheta`.
pub fn analytic_gradient(
    model: &FmModel,
    xi: &EncodedRow,
    xj: &EncodedRow,
    lambda: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let grad = pair_gradient(model, xi, xj).unwrap();
    let g = 1.0 / (1.0 + grad.d.exp());
    let k = model.k();
    let mut w: Vec<f64> = model.w.iter().map(|x| -2.0 * lambda * x).collect();
    let mut v: Vec<f64> = model.v.iter().map(|x| -2.0 * lambda * x).collect();
    for (slot, &p) in grad.features.iter().enumerate() {
        w[p] += g * grad.linear[slot];
        for f in 0..k {
            v[p * k + f] += g * grad.factors[slot * k + f];
        }
    }
    (-2.0 * lambda * model.w0, w, v)
}

fn param_mut(m: &mut FmModel, q: usize) -> &mut f64 {
    let n = m.n();
    match q {
        0 => &mut m.w0,
        q if q <= n => &mut m.w[q - 1],
        q => &mut m.v[q - 1 - n],
    }
}

/// Central differences of [`pair_objective`] for every parameter.
pub fn numeric_gradient(
    model: &FmModel,
    xi: &[f64],
    xj: &[f64],
    lambda: f64,
    eps: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let mut m = model.clone();
    let n = model.n();
    let total = 1 + n + model.v.len();
    let mut all = Vec::with_capacity(total);
    for q in 0..total {
        let orig = *param_mut(&mut m, q);
        *param_mut(&mut m, q) = orig + eps;
        let up = pair_objective(&m, xi, xj, lambda);
        *param_mut(&mut m, q) = orig - eps;
        let down = pair_objective(&m, xi, xj, lambda);
        *param_mut(&mut m, q) = orig;
        all.push((up - down) / (2.0 * eps));
    }
    let v = all.split_off(1 + n);
    let w = all.split_off(1);
    (all[0], w, v)
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Precision and recall of `score >= t` by direct counting.
pub fn recount(scores: &[f64], relevant: &[bool], t: f64) -> PrPoint {
    let positives = relevant.iter().filter(|&&r| r).count();
    let mut tp = 0;
    let mut predicted = 0;
    for (&s, &r) in scores.iter().zip(relevant) {
        if s >= t {
            predicted += 1;
            if r {
                tp += 1;
            }
        }
    }
    PrPoint {
        threshold: t,
        recall: tp as f64 / positives as f64,
        precision: tp as f64 / predicted as f64,
    }
}

/// Random scores on a coarse grid, so ties occur, with both label classes.
pub fn pr_fixture(rng: &mut ModelRng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.random_range(2..80);
    let scores: Vec<f64> = (0..n)
        .map(|_| rng.random_range(0..12) as f64 / 4.0 - 1.0)
        .collect();
    let mut relevant: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
    relevant[0] = true;
    relevant[1] = false;
    (scores, relevant)
}
