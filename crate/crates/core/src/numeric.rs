//! Small numerical helpers: compensated and pairwise summation, sample
//! moments and Gauss–Legendre nodes.

use std::f64::consts::PI;

/// Neumaier (improved Kahan) summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Self::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

const PAIRWISE_BLOCK: usize = 64;

/// Pairwise summation with a fixed split order; error grows as O(log n).
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BLOCK {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    compensated_sum(xs.iter().copied()) / xs.len() as f64
}

/// Unbiased (n - 1) sample variance, two-pass.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    compensated_sum(xs.iter().map(|x| (x - m) * (x - m))) / (xs.len() as f64 - 1.0)
}

/// Dot product with four interleaved accumulators, combined in fixed order.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, ra) = a.split_at(a.len() - a.len() % 4);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(4).zip(cb.chunks_exact(4)) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Mantissa in [0.5, 1) and binary exponent of a positive finite number.
fn frexp(x: f64) -> (f64, i64) {
    const TWO_64: f64 = 18_446_744_073_709_551_616.0;
    if x < f64::MIN_POSITIVE {
        let (m, e) = frexp(x * TWO_64);
        return (m, e - 64);
    }
    let bits = x.to_bits();
    let e = ((bits >> 52) & 0x7ff) as i64 - 1022;
    let m = f64::from_bits((bits & !(0x7ff << 52)) | (1022 << 52));
    (m, e)
}

/// Running `Σ ln x_k` over positive values, kept as a product with a separate
/// binary exponent so only one logarithm per lane is taken.
///
/// The relative rounding error of the product is at most `n·ε`, so the
/// absolute error of the log-sum is about `n·1.1e-16`.
#[derive(Debug, Clone, Copy)]
pub struct LogProduct {
    mantissa: [f64; 4],
    exponent: i64,
}

impl Default for LogProduct {
    fn default() -> Self {
        Self {
            mantissa: [1.0; 4],
            exponent: 0,
        }
    }
}

impl LogProduct {
    const LOW: f64 = 1e-200;
    const HIGH: f64 = 1e200;

    /// Multiplies in positive finite values.
    #[inline]
    pub fn extend(&mut self, xs: &[f64]) {
        for (j, &x) in xs.iter().enumerate() {
            let lane = j & 3;
            let v = self.mantissa[lane] * x;
            if (Self::LOW..=Self::HIGH).contains(&v) {
                self.mantissa[lane] = v;
            } else {
                let (m1, e1) = frexp(self.mantissa[lane]);
                let (m2, e2) = frexp(x);
                self.mantissa[lane] = m1 * m2;
                self.exponent += e1 + e2;
            }
        }
        for m in &mut self.mantissa {
            let (mm, e) = frexp(*m);
            *m = mm;
            self.exponent += e;
        }
    }

    pub fn ln(&self) -> f64 {
        let m = (self.mantissa[0] * self.mantissa[1]) * (self.mantissa[2] * self.mantissa[3]);
        m.ln() + self.exponent as f64 * std::f64::consts::LN_2
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
