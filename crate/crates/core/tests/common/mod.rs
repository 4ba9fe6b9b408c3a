//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the crate's special-function code.

#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Explicit sum `H_n(x) = n! Σ_m (-1)^m (2x)^(n-2m) / (m! (n-2m)!)`.
pub fn hermite_explicit(n: usize, x: f64) -> f64 {
    let mut total = 0.0;
    for m in 0..=n / 2 {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * (2.0 * x).powi((n - 2 * m) as i32) / (factorial(m) * factorial(n - 2 * m));
    }
    factorial(n) * total
}

/// Explicit sum `L_n(x) = Σ_k C(n,k) (-x)^k / k!`.
pub fn laguerre_explicit(n: usize, x: f64) -> f64 {
    (0..=n)
        .map(|k| {
            factorial(n) / (factorial(k) * factorial(n - k)) * (-x).powi(k as i32) / factorial(k)
        })
        .sum()
}

/// Fock quadrature density from the explicit Hermite sum.
pub fn fock_density(n: usize, x: f64) -> f64 {
    let h = hermite_explicit(n, x);
    h * h * (-x * x).exp() / (PI.sqrt() * 2f64.powi(n as i32) * factorial(n))
}

pub fn mixture_density(p: &[f64], x: f64) -> f64 {
    p.iter()
        .enumerate()
        .map(|(n, pn)| pn * fock_density(n, x))
        .sum()
}

/// Wigner function of a Fock mixture from the explicit Laguerre sum.
pub fn wigner_explicit(p: &[f64], x: f64, y: f64) -> f64 {
    let r2 = x * x + y * y;
    p.iter()
        .enumerate()
        .map(|(n, pn)| {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            sign * pn * laguerre_explicit(n, 2.0 * r2)
        })
        .sum::<f64>()
        * (-r2).exp()
        / PI
}

/// Composite Simpson rule with `intervals` (even) subintervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    assert!(intervals.is_multiple_of(2));
    let h = (b - a) / intervals as f64;
    let mut total = f(a) + f(b);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        total += w * f(a + h * i as f64);
    }
    total * h / 3.0
}

/// Uniform point on the probability simplex of dimension `dim`.
pub fn random_simplex<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Pearson χ² p-value of `counts` against cell probabilities `probs`
/// (which need not sum to one; the remainder is an extra cell observed as
/// `total − Σ counts`). Cells with expectation below 5 are pooled with
/// their neighbour toward the centre.
pub fn chi_square_p_value(counts: &[u64], probs: &[f64], total: u64) -> (f64, usize) {
    let n = total as f64;
    let cells: Vec<(f64, f64)> = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| (c as f64, n * p))
        .collect();
    let in_counts: f64 = counts.iter().map(|&c| c as f64).sum();
    let in_prob: f64 = probs.iter().sum();
    let outside = (n - in_counts, n * (1.0 - in_prob).max(0.0));

    let mut pooled = Vec::new();
    let (mut obs, mut exp) = outside;
    // left tail toward the centre
    let mid = cells.len() / 2;
    let mut left: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for &(o, e) in &cells[..mid] {
        acc = (acc.0 + o, acc.1 + e);
        if acc.1 >= 5.0 {
            left.push(acc);
            acc = (0.0, 0.0);
        }
    }
    let left_rest = acc;
    let mut right: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for &(o, e) in cells[mid..].iter().rev() {
        acc = (acc.0 + o, acc.1 + e);
        if acc.1 >= 5.0 {
            right.push(acc);
            acc = (0.0, 0.0);
        }
    }
    let right_rest = acc;
    obs += left_rest.0 + right_rest.0;
    exp += left_rest.1 + right_rest.1;
    pooled.extend(left);
    pooled.extend(right);
    if exp >= 5.0 {
        pooled.push((obs, exp));
    } else if let Some(last) = pooled.last_mut() {
        last.0 += obs;
        last.1 += exp;
    }
    let stat: f64 = pooled.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = pooled.len() - 1;
    let dist = ChiSquared::new(dof as f64).unwrap();
    (1.0 - dist.cdf(stat), dof)
}

/// Probability mass of `p` in each of `bins` equal bins on `[lo, hi]`.
pub fn bin_probabilities(p: &[f64], bins: usize, lo: f64, hi: f64) -> Vec<f64> {
    let w = (hi - lo) / bins as f64;
    (0..bins)
        .map(|b| {
            let a = lo + w * b as f64;
            simpson(|x| mixture_density(p, x), a, a + w, 64)
        })
        .collect()
}

pub fn histogram_counts(data: &[f64], bins: usize, lo: f64, hi: f64) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    for &x in data {
        if x >= lo && x < hi {
            counts[(((x - lo) / (hi - lo)) * bins as f64) as usize] += 1;
        }
    }
    counts
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}
