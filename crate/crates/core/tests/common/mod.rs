//! Independent reference implementations shared by the test targets.

#![allow(dead_code)]

use ftl_core::network::{loss_features, loss_total, LossWeights, NetworkConfig, NetworkParams};
use ftl_core::numerics::{Matrix, SeededRng};

pub fn random_symmetric(n: usize, rng: &mut SeededRng) -> Matrix {
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = rng.uniform(-1.0, 1.0);
            a.as_mut_slice()[i * n + j] = v;
            a.as_mut_slice()[j * n + i] = v;
        }
    }
    a
}

/// Number of eigenvalues of `a` below `sigma`: the count of negative pivots
/// in the LDLᵀ factorisation of `a − σI` (Sylvester's law of inertia).
pub fn count_below(a: &Matrix, sigma: f64) -> usize {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)] - if i == j { sigma } else { 0.0 }).collect())
        .collect();
    let mut negatives = 0;
    for k in 0..n {
        let mut d = m[k][k];
        if d == 0.0 {
            d = -f64::EPSILON * (1.0 + sigma.abs());
        }
        if d < 0.0 {
            negatives += 1;
        }
        for i in k + 1..n {
            let l = m[i][k] / d;
            for j in k + 1..n {
                m[i][j] -= l * m[k][j];
            }
        }
    }
    negatives
}

/// Eigenvalues in descending order by bisection on the inertia count.
pub fn bisection_eigenvalues(a: &Matrix) -> Vec<f64> {
    let n = a.rows();
    let radius = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
        + 1.0;
    // k-th smallest eigenvalue: smallest σ with count_below(σ) > k
    let mut vals: Vec<f64> = (0..n)
        .map(|k| {
            let (mut lo, mut hi) = (-radius, radius);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if count_below(a, mid) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo < 1e-15 * radius {
                    break;
                }
            }
            0.5 * (lo + hi)
        })
        .collect();
    vals.reverse();
    vals
}

fn solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs()))
            .unwrap();
        m.swap(k, p);
        b.swap(k, p);
        let piv = if m[k][k] == 0.0 { 1e-300 } else { m[k][k] };
        for i in k + 1..n {
            let l = m[i][k] / piv;
            for j in k..n {
                m[i][j] -= l * m[k][j];
            }
            b[i] -= l * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| m[k][j] * x[j]).sum();
        let piv = if m[k][k] == 0.0 { 1e-300 } else { m[k][k] };
        x[k] = (b[k] - s) / piv;
    }
    x
}

/// Unit eigenvector for `lambda` by inverse iteration.
pub fn inverse_iteration(a: &Matrix, lambda: f64, rng: &mut SeededRng) -> Vec<f64> {
    let n = a.rows();
    let shift = lambda + 1e-10 * (1.0 + lambda.abs());
    let m: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)] - if i == j { shift } else { 0.0 }).collect())
        .collect();
    let mut v = rng.normal_vec(n);
    for _ in 0..6 {
        let w = solve(m.clone(), v.clone());
        let nrm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.iter().map(|x| x / nrm).collect();
    }
    v
}

/// Sine of the largest principal angle between span(u) and span(v), both
/// with orthonormal columns given as vectors.
pub fn max_principal_sine(u: &[Vec<f64>], v: &[Vec<f64>]) -> f64 {
    // ‖(I − UUᵀ)V‖_2 bounded above by the Frobenius norm; exact for one column
    let mut worst = 0.0f64;
    for vj in v {
        let mut r = vj.clone();
        for ui in u {
            let c: f64 = ui.iter().zip(vj).map(|(a, b)| a * b).sum();
            for (ri, uk) in r.iter_mut().zip(ui) {
                *ri -= c * uk;
            }
        }
        worst = worst.max(r.iter().map(|x| x * x).sum::<f64>().sqrt());
    }
    worst
}

pub fn tiny_network(seed: u64) -> NetworkParams {
    let cfg = NetworkConfig {
        rich_dim: 3,
        feature_dim: 2,
        enc_hidden: vec![4],
        dec_hidden: vec![4],
        filter_hidden: vec![4],
    };
    NetworkParams::init(&cfg, 3, 3, &mut SeededRng::new(seed)).unwrap()
}

fn set_param(p: &mut NetworkParams, idx: usize, value: f64) {
    let mut k = idx;
    for (_, t) in p.tensors_mut() {
        if k < t.len() {
            t[k] = value;
            return;
        }
        k -= t.len();
    }
    panic!("parameter index out of range");
}

fn flat(p: &NetworkParams) -> Vec<f64> {
    p.tensors().flat_map(|(_, t)| t.iter().copied()).collect()
}

pub enum Path {
    Inputs,
    Features,
}

/// Largest relative error between analytic and central-difference
/// gradients over every parameter. Denominators are floored at 1e-6 so
/// that parameters with vanishing gradient are compared absolutely.
pub fn gradient_check(
    params: &NetworkParams,
    batch: &[(Vec<f64>, usize)],
    weights: &LossWeights,
    path: Path,
    h: f64,
) -> f64 {
    let b: Vec<(&[f64], usize)> = batch.iter().map(|(x, y)| (x.as_slice(), *y)).collect();
    let eval = |p: &NetworkParams| match path {
        Path::Inputs => loss_total(p, &b, weights).unwrap(),
        Path::Features => loss_features(p, &b, weights).unwrap(),
    };
    let (_, grads) = eval(params);
    let analytic = flat(&grads);
    let base = flat(params);
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let mut plus = params.clone();
        set_param(&mut plus, i, base[i] + h);
        let mut minus = params.clone();
        set_param(&mut minus, i, base[i] - h);
        let numeric = (eval(&plus).0.total - eval(&minus).0.total) / (2.0 * h);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}
