//! Helpers shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use tcskin::{MatrixKind, RelationshipMatrix};

pub fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i}")).collect()
}

pub fn rel(m: DMatrix<f64>) -> RelationshipMatrix<f64> {
    let n = m.nrows();
    RelationshipMatrix::new(m, ids(n), MatrixKind::RawEstimate).unwrap()
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Gram matrices for even `k`, indefinite symmetric matrices with a positive
/// diagonal for odd `k`.
pub fn random_symmetric(n: usize, k: usize, rng: &mut impl Rng) -> RelationshipMatrix<f64> {
    if k.is_multiple_of(2) {
        let p = n + 3;
        let x = DMatrix::from_fn(n, p, |_, _| normal(rng));
        rel(tcskin::grm::symmetrize(&x * x.transpose() / p as f64))
    } else {
        let m = DMatrix::from_fn(n, n, |_, _| normal(rng));
        let mut s = (&m + m.transpose()) / 2.0;
        for i in 0..n {
            s[(i, i)] = s[(i, i)].abs() + 0.5;
        }
        rel(s)
    }
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Textbook treelet: dense rotation matrices, scores recomputed from scratch.
/// Returns the merged pairs, `B` and `B^t A B`.
pub fn naive_treelet(a: &DMatrix<f64>) -> (Vec<(usize, usize)>, DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut c = a.clone();
    let mut b = DMatrix::identity(n, n);
    let mut active = vec![true; n];
    let mut pairs = Vec::new();
    for _ in 1..n {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            for j in (i + 1)..n {
                if !active[i] || !active[j] {
                    continue;
                }
                let s = if c[(i, i)] > 0.0 && c[(j, j)] > 0.0 {
                    c[(i, j)].abs() / (c[(i, i)] * c[(j, j)]).sqrt()
                } else {
                    0.0
                };
                if best.is_none_or(|(_, _, v)| s > v) {
                    best = Some((i, j, s));
                }
            }
        }
        let (p, q, _) = best.unwrap();
        let (cpp, cpq, cqq) = (c[(p, p)], c[(p, q)], c[(q, q)]);
        let theta = if cpq == 0.0 {
            0.0
        } else if cpp == cqq {
            cpq.signum() * std::f64::consts::FRAC_PI_4
        } else {
            0.5 * (2.0 * cpq / (cpp - cqq)).atan()
        };
        let mut j = DMatrix::identity(n, n);
        j[(p, p)] = theta.cos();
        j[(q, q)] = theta.cos();
        j[(q, p)] = theta.sin();
        j[(p, q)] = -theta.sin();
        c = j.transpose() * &c * &j;
        b *= &j;
        if c[(q, q)] > c[(p, p)] {
            active[p] = false;
        } else {
            active[q] = false;
        }
        pairs.push((p, q));
    }
    (pairs, b, c)
}

/// Restricted log-likelihood by explicit inversion of `h2 A + (1 - h2) I`.
pub fn dense_loglik(y: &[f64], a: &DMatrix<f64>, h2: f64) -> f64 {
    let n = y.len();
    let v = a * h2 + DMatrix::identity(n, n) * (1.0 - h2);
    let chol = v.clone().cholesky().unwrap();
    let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let vinv = chol.inverse();
    let one = nalgebra::DVector::from_element(n, 1.0);
    let yv = nalgebra::DVector::from_column_slice(y);
    let sxx = (one.transpose() * &vinv * &one)[0];
    let mu = (one.transpose() * &vinv * &yv)[0] / sxx;
    let r = &yv - one * mu;
    let ypy = (r.transpose() * &vinv * &r)[0];
    let dof = (n - 1) as f64;
    -0.5 * (dof * (ypy / dof).ln() + logdet + sxx.ln() + dof * (1.0 + (2.0 * std::f64::consts::PI).ln()))
}
