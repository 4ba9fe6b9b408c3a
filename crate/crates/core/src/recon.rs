//! Photon-number reconstruction from calibrated quadratures.
//!
//! Two estimators are provided: a least-squares fit of bin-averaged Fock
//! densities to a normalized histogram, constrained to the probability
//! simplex, and maximum-likelihood estimation by expectation-maximization
//! (EM) starting from the uniform distribution.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{fill_fock_quadrature_pdfs, fock_quadrature_pdfs, PhotonNumberDistribution};
use crate::numeric::{compensated_sum, dot, gauss_legendre, CompensatedSum, LogProduct};

pub const DEFAULT_BINS: usize = 100;
pub const DEFAULT_RANGE: (f64, f64) = (-5.0, 5.0);

/// Gauss–Legendre points per bin when averaging model densities.
const BIN_QUADRATURE_POINTS: usize = 10;
const LS_GRADIENT_TOL: f64 = 1e-10;
const LS_MAX_ITER: usize = 100_000;
const LS_POLISH_EVERY: usize = 25;
/// Components that fall below this are pinned to zero.
const PIN_THRESHOLD: f64 = 1e-300;
/// Fisher-information condition number above which the estimate has flat
/// directions.
const FISHER_CONDITION_LIMIT: f64 = 1e10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramModel {
    pub bin_edges: Vec<f64>,
    /// Normalized so that `Σ density·width = 1` over the in-range data.
    pub densities: Vec<f64>,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl HistogramModel {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self, bin: usize) -> f64 {
        self.bin_edges[bin + 1] - self.bin_edges[bin]
    }

    pub fn in_range(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn center(&self, bin: usize) -> f64 {
        0.5 * (self.bin_edges[bin] + self.bin_edges[bin + 1])
    }
}

pub fn build_histogram(data: &[f64], bins: usize, range: (f64, f64)) -> Result<HistogramModel> {
    let (lo, hi) = range;
    if bins < 10 {
        return Err(Error::InvalidArgument(format!(
            "need at least 10 bins, got {bins}"
        )));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "bad histogram range [{lo}, {hi}]"
        )));
    }
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot histogram empty data".into()));
    }
    let span = hi - lo;
    let mut counts = vec![0u64; bins];
    let (mut underflow, mut overflow) = (0, 0);
    for &x in data {
        if x < lo {
            underflow += 1;
        } else if x > hi {
            overflow += 1;
        } else {
            let idx = (((x - lo) / span) * bins as f64).floor() as usize;
            counts[idx.min(bins - 1)] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::InvalidArgument(format!(
            "no data inside the histogram range [{lo}, {hi}]"
        )));
    }
    let mut bin_edges: Vec<f64> = (0..bins)
        .map(|i| lo + span * i as f64 / bins as f64)
        .collect();
    bin_edges.push(hi);
    let densities = counts
        .iter()
        .enumerate()
        .map(|(b, &c)| c as f64 / (total as f64 * (bin_edges[b + 1] - bin_edges[b])))
        .collect();
    Ok(HistogramModel {
        bin_edges,
        densities,
        counts,
        underflow,
        overflow,
    })
}

/// Bin averages `Q̄_n(b)` of the Fock densities, indexed `[bin][n]`.
pub fn bin_averaged_densities(hist: &HistogramModel, cutoff: usize) -> Vec<Vec<f64>> {
    let (nodes, weights) = gauss_legendre(BIN_QUADRATURE_POINTS);
    (0..hist.bins())
        .map(|b| {
            let (a, z) = (hist.bin_edges[b], hist.bin_edges[b + 1]);
            let (mid, half) = (0.5 * (a + z), 0.5 * (z - a));
            let mut avg = vec![0.0; cutoff + 1];
            for (t, w) in nodes.iter().zip(&weights) {
                let q = fock_quadrature_pdfs(cutoff, mid + half * t);
                for (acc, qn) in avg.iter_mut().zip(q) {
                    // half-width · w / width = w / 2
                    *acc += 0.5 * w * qn;
                }
            }
            avg
        })
        .collect()
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cumulative += ui;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsFit {
    pub p: PhotonNumberDistribution,
    pub iterations: usize,
    /// Sum of squared density residuals at the solution.
    pub residual: f64,
    pub gradient_norm: f64,
}

/// Quadratic objective `‖d − A p‖²` in normal-equation form.
struct Quadratic {
    h: Vec<Vec<f64>>,
    c: Vec<f64>,
    dd: f64,
}

impl Quadratic {
    fn value(&self, p: &[f64]) -> f64 {
        let mut v = self.dd;
        for (i, pi) in p.iter().enumerate() {
            v -= 2.0 * self.c[i] * pi;
            for (j, pj) in p.iter().enumerate() {
                v += pi * self.h[i][j] * pj;
            }
        }
        v
    }

    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        self.h
            .iter()
            .zip(&self.c)
            .map(|(row, ci)| 2.0 * (row.iter().zip(p).map(|(h, x)| h * x).sum::<f64>() - ci))
            .collect()
    }
}

/// Exact minimizer on a face of the simplex, from the equality-constrained
/// normal equations. Starts from the current support and drops components
/// that come out non-positive until the solution is strictly inside its face.
fn polish_on_support(q: &Quadratic, p: &[f64]) -> Option<Vec<f64>> {
    let mut support: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
    while !support.is_empty() {
        let s = support.len();
        let mut kkt = DMatrix::<f64>::zeros(s + 1, s + 1);
        let mut rhs = nalgebra::DVector::<f64>::zeros(s + 1);
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                kkt[(a, b)] = 2.0 * q.h[i][j];
            }
            kkt[(a, s)] = 1.0;
            kkt[(s, a)] = 1.0;
            rhs[a] = 2.0 * q.c[i];
        }
        rhs[s] = 1.0;
        let sol = kkt.lu().solve(&rhs)?;
        if support.iter().enumerate().all(|(a, _)| sol[a] > 0.0) {
            let mut out = vec![0.0; p.len()];
            for (a, &i) in support.iter().enumerate() {
                out[i] = sol[a];
            }
            return Some(out);
        }
        support = support
            .iter()
            .enumerate()
            .filter(|&(a, _)| sol[a] > 0.0)
            .map(|(_, &i)| i)
            .collect();
    }
    None
}

fn projected_gradient_norm(p: &[f64], g: &[f64]) -> f64 {
    let step: Vec<f64> = p.iter().zip(g).map(|(x, gi)| x - gi).collect();
    project_to_simplex(&step)
        .iter()
        .zip(p)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Least-squares fit of `Σ p_n Q̄_n(b)` to the histogram densities over the
/// probability simplex.
///
/// Accelerated projected-gradient descent with a multiplicative
/// (halve-on-failure, grow-on-success) step search and momentum restarts.
/// Every few iterations the exact minimizer on the current support is tried
/// and accepted once it satisfies the optimality tolerance.
pub fn fit_mixture_ls(hist: &HistogramModel, cutoff: usize) -> Result<LsFit> {
    if cutoff < 1 {
        return Err(Error::InvalidArgument(
            "least-squares fit needs cutoff ≥ 1".into(),
        ));
    }
    let design = bin_averaged_densities(hist, cutoff);
    let dim = cutoff + 1;
    let mut h = vec![vec![0.0; dim]; dim];
    let mut c = vec![0.0; dim];
    for (row, d) in design.iter().zip(&hist.densities) {
        for i in 0..dim {
            c[i] += row[i] * d;
            for j in 0..dim {
                h[i][j] += row[i] * row[j];
            }
        }
    }
    let dd = hist.densities.iter().map(|d| d * d).sum();
    let q = Quadratic { h, c, dd };

    let mut p = vec![1.0 / dim as f64; dim];
    let mut y = p.clone();
    let mut momentum = 1.0f64;
    let mut f_p = q.value(&p);
    let mut step = 1.0
        / (2.0
            * q.h
                .iter()
                .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max));
    let mut gradient_norm = projected_gradient_norm(&p, &q.gradient(&p));
    let mut iterations = 0;
    while iterations < LS_MAX_ITER && gradient_norm >= LS_GRADIENT_TOL {
        iterations += 1;
        let g_y = q.gradient(&y);
        let f_y = q.value(&y);
        let next = loop {
            let trial: Vec<f64> = y.iter().zip(&g_y).map(|(v, g)| v - step * g).collect();
            let cand = project_to_simplex(&trial);
            let diff: Vec<f64> = cand.iter().zip(&y).map(|(a, b)| a - b).collect();
            let model = f_y
                + g_y.iter().zip(&diff).map(|(g, d)| g * d).sum::<f64>()
                + diff.iter().map(|d| d * d).sum::<f64>() / (2.0 * step);
            if q.value(&cand) <= model + 1e-15 * model.abs() || step < 1e-300 {
                break cand;
            }
            step *= 0.5;
        };
        let f_next = q.value(&next);
        if f_next > f_p {
            // restart momentum from the last accepted point
            momentum = 1.0;
            y = p.clone();
        } else {
            let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let beta = (momentum - 1.0) / next_momentum;
            y = next
                .iter()
                .zip(&p)
                .map(|(a, b)| a + beta * (a - b))
                .collect();
            momentum = next_momentum;
            p = next;
            f_p = f_next;
            step *= 1.5;
            gradient_norm = projected_gradient_norm(&p, &q.gradient(&p));
        }
        if gradient_norm >= LS_GRADIENT_TOL && iterations % LS_POLISH_EVERY == 0 {
            if let Some(cand) = polish_on_support(&q, &p) {
                let norm = projected_gradient_norm(&cand, &q.gradient(&cand));
                if norm < gradient_norm {
                    f_p = q.value(&cand);
                    y = cand.clone();
                    p = cand;
                    momentum = 1.0;
                    gradient_norm = norm;
                }
            }
        }
    }
    let residual = q.value(&p).max(0.0);
    if gradient_norm >= LS_GRADIENT_TOL {
        return Err(Error::NonConvergence {
            iterations,
            gradient_norm,
            residual,
        });
    }
    Ok(LsFit {
        p: PhotonNumberDistribution::from_weights(p)?,
        iterations,
        residual,
        gradient_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    /// Relative log-likelihood change below which iteration stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmResult {
    pub p_hat: PhotonNumberDistribution,
    pub iterations: usize,
    pub final_log_likelihood: f64,
    pub converged: bool,
    pub log_likelihood_trajectory: Vec<f64>,
    /// Components that underflowed and were pinned to exactly zero.
    pub pinned_components: Vec<usize>,
    /// Condition number of the observed Fisher information on the simplex.
    pub fisher_condition: f64,
    pub fisher_near_singular: bool,
}

/// Largest dimension whose per-chunk partial sums are produced by [`em_chunk`].
const KERNEL_MAX_DIM: usize = 16;

/// Densities, their reciprocals and the per-component partial sums
/// `Σ Q_m/D` for one chunk. Returns the offset of the first point with
/// non-positive density.
#[inline(always)]
fn em_chunk_body(
    cols: &[&[f64]],
    p: &[f64],
    d: &mut [f64],
    r: &mut [f64],
    log_product: &mut LogProduct,
    partial: &mut [f64],
) -> Option<usize> {
    d.fill(0.0);
    for (col, &pn) in cols.iter().zip(p) {
        if pn != 0.0 {
            d.iter_mut()
                .zip(col.iter())
                .for_each(|(di, q)| *di += pn * q);
        }
    }
    if let Some(i) = d.iter().position(|v| !(*v > 0.0)) {
        return Some(i);
    }
    log_product.extend(d);
    r.iter_mut()
        .zip(d.iter())
        .for_each(|(ri, di)| *ri = 1.0 / di);
    for ((col, &pm), out) in cols.iter().zip(p).zip(partial.iter_mut()) {
        *out = if pm != 0.0 { dot(col, r) } else { 0.0 };
    }
    None
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn em_chunk_avx2(
    cols: &[&[f64]],
    p: &[f64],
    d: &mut [f64],
    r: &mut [f64],
    log_product: &mut LogProduct,
    partial: &mut [f64],
) -> Option<usize> {
    em_chunk_body(cols, p, d, r, log_product, partial)
}

/// Dispatches to a wider-vector build of the same arithmetic when the CPU
/// supports it; both paths perform identical operations in identical order.
fn em_chunk(
    cols: &[&[f64]],
    p: &[f64],
    d: &mut [f64],
    r: &mut [f64],
    log_product: &mut LogProduct,
    partial: &mut [f64],
) -> Option<usize> {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the required CPU feature was detected at runtime.
        return unsafe { em_chunk_avx2(cols, p, d, r, log_product, partial) };
    }
    em_chunk_body(cols, p, d, r, log_product, partial)
}

/// Fock densities evaluated at every data point, stored per photon number.
#[derive(Debug, Clone)]
pub struct FockDesign {
    columns: Vec<Vec<f64>>,
    data: Vec<f64>,
    /// Contiguous point ranges `(start, end, multiplicity)`; every point in a
    /// range stands for `multiplicity` identical observations.
    groups: Vec<(usize, usize, usize)>,
}

impl FockDesign {
    pub fn new(data: &[f64], cutoff: usize) -> Self {
        let mut columns = vec![Vec::with_capacity(data.len()); cutoff + 1];
        let mut q = Vec::with_capacity(cutoff + 1);
        for &x in data {
            fill_fock_quadrature_pdfs(x, &mut q, cutoff);
            for (col, qn) in columns.iter_mut().zip(&q) {
                col.push(*qn);
            }
        }
        Self {
            columns,
            data: data.to_vec(),
            groups: vec![(0, data.len(), 1)],
        }
    }

    /// Design for a resample in which point `k` occurs `counts[k]` times.
    /// Points are stored once, grouped by multiplicity, reusing the already
    /// evaluated densities.
    pub fn resample(&self, counts: &[u32]) -> Result<Self> {
        if counts.len() != self.data.len() {
            return Err(Error::LengthMismatch {
                expected: self.data.len(),
                actual: counts.len(),
            });
        }
        let max = counts.iter().copied().max().unwrap_or(0) as usize;
        let mut order = Vec::new();
        let mut groups = Vec::new();
        for mult in 1..=max {
            let start = order.len();
            order.extend((0..counts.len()).filter(|&k| counts[k] as usize == mult));
            if order.len() > start {
                groups.push((start, order.len(), mult));
            }
        }
        Ok(Self {
            columns: self
                .columns
                .iter()
                .map(|col| order.iter().map(|&k| col[k]).collect())
                .collect(),
            data: order.iter().map(|&k| self.data[k]).collect(),
            groups,
        })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn cutoff(&self) -> usize {
        self.columns.len() - 1
    }

    /// Number of observations, counting multiplicity.
    pub fn len(&self) -> usize {
        self.groups.iter().map(|(a, b, m)| (b - a) * m).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_cutoff(&self, p: &PhotonNumberDistribution) -> Result<()> {
        if p.cutoff() != self.cutoff() {
            return Err(Error::InvalidArgument(format!(
                "distribution cutoff {} does not match design cutoff {}",
                p.cutoff(),
                self.cutoff()
            )));
        }
        Ok(())
    }

    /// Mixture density `Σ_n p_n Q_n(x_k)` at every point.
    fn mixture(&self, p: &[f64]) -> Result<Vec<f64>> {
        let mut dens = vec![0.0; self.data.len()];
        for (col, &pn) in self.columns.iter().zip(p) {
            if pn != 0.0 {
                dens.iter_mut().zip(col).for_each(|(d, q)| *d += pn * q);
            }
        }
        if let Some(k) = dens.iter().position(|d| !(*d > 0.0)) {
            return Err(Error::ZeroDensity {
                index: k,
                x: self.data[k],
            });
        }
        Ok(dens)
    }

    fn log_likelihood_of(&self, dens: &[f64]) -> f64 {
        let mut acc = CompensatedSum::default();
        for &(a, b, m) in &self.groups {
            acc.add(m as f64 * compensated_sum(dens[a..b].iter().map(|d| d.ln())));
        }
        acc.value()
    }

    pub fn log_likelihood(&self, p: &PhotonNumberDistribution) -> Result<f64> {
        self.check_cutoff(p)?;
        Ok(self.log_likelihood_of(&self.mixture(p.probs())?))
    }

    /// One EM update; also returns the log-likelihood of the input `p`.
    /// Components driven below the pin threshold are appended to `pinned`.
    ///
    /// Works through the data in fixed chunks so that densities, reciprocals
    /// and partial sums stay in cache; the chunk partials are added in order.
    fn step_raw(&self, p: &[f64], pinned: &mut Vec<usize>) -> Result<(Vec<f64>, f64)> {
        const CHUNK: usize = 512;
        let mut dens = [0.0; CHUNK];
        let mut inv = [0.0; CHUNK];
        let mut acc = vec![CompensatedSum::default(); p.len()];
        let mut ll = CompensatedSum::default();
        for &(group_start, group_end, mult) in &self.groups {
            let mut group_acc = vec![CompensatedSum::default(); p.len()];
            let mut log_product = LogProduct::default();
            let mut start = group_start;
            while start < group_end {
                let end = (start + CHUNK).min(group_end);
                let cols: Vec<&[f64]> = self.columns.iter().map(|c| &c[start..end]).collect();
                let mut partial = [0.0; KERNEL_MAX_DIM];
                let bad = em_chunk(
                    &cols,
                    p,
                    &mut dens[..end - start],
                    &mut inv[..end - start],
                    &mut log_product,
                    &mut partial[..p.len().min(KERNEL_MAX_DIM)],
                );
                if let Some(i) = bad {
                    return Err(Error::ZeroDensity {
                        index: start + i,
                        x: self.data[start + i],
                    });
                }
                if p.len() > KERNEL_MAX_DIM {
                    for (m, a) in group_acc.iter_mut().enumerate() {
                        if p[m] != 0.0 {
                            a.add(dot(cols[m], &inv[..end - start]));
                        }
                    }
                } else {
                    for (a, v) in group_acc.iter_mut().zip(&partial) {
                        a.add(*v);
                    }
                }
                start = end;
            }
            let m = mult as f64;
            ll.add(m * log_product.ln());
            for (a, g) in acc.iter_mut().zip(&group_acc) {
                a.add(m * g.value());
            }
        }
        let len = self.len();
        let k = len as f64;
        let mut next: Vec<f64> = acc
            .iter()
            .zip(p)
            .map(|(a, &pm)| if pm == 0.0 { 0.0 } else { pm * a.value() / k })
            .collect();
        for (m, v) in next.iter_mut().enumerate() {
            if *v != 0.0 && *v < PIN_THRESHOLD {
                *v = 0.0;
                if !pinned.contains(&m) {
                    pinned.push(m);
                }
            }
        }
        let sum: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= sum);
        Ok((next, ll.value()))
    }

    pub fn em_step(&self, p: &PhotonNumberDistribution) -> Result<PhotonNumberDistribution> {
        self.check_cutoff(p)?;
        let (next, _) = self.step_raw(p.probs(), &mut Vec::new())?;
        PhotonNumberDistribution::new(next)
    }

    /// Observed Fisher information in the coordinates `p_1..p_N`
    /// (`p_0 = 1 − Σ`), returned as its condition number.
    fn fisher_condition(&self, p: &[f64]) -> Result<f64> {
        let n = self.cutoff();
        if n == 0 {
            return Ok(1.0);
        }
        let dens = self.mixture(p)?;
        let mut info = DMatrix::<f64>::zeros(n, n);
        let mut g = vec![0.0; n];
        for &(start, end, mult) in &self.groups {
            let w = mult as f64;
            for (k, d) in dens.iter().enumerate().take(end).skip(start) {
                let q0 = self.columns[0][k];
                for (m, gm) in g.iter_mut().enumerate() {
                    *gm = (self.columns[m + 1][k] - q0) / d;
                }
                for a in 0..n {
                    for b in a..n {
                        info[(a, b)] += w * g[a] * g[b];
                    }
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                info[(a, b)] = info[(b, a)];
            }
        }
        let eig = SymmetricEigen::new(info).eigenvalues;
        let max = eig.iter().copied().fold(f64::MIN, f64::max);
        let min = eig.iter().copied().fold(f64::MAX, f64::min);
        Ok(if min > 0.0 { max / min } else { f64::INFINITY })
    }

    pub fn em_reconstruct(&self, options: EmOptions) -> Result<EmResult> {
        if self.is_empty() {
            return Err(Error::InvalidArgument("no data to reconstruct from".into()));
        }
        if !(options.tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerance {} must be positive",
                options.tol
            )));
        }
        let dim = self.cutoff() + 1;
        let mut p = vec![1.0 / dim as f64; dim];
        let mut trajectory = Vec::new();
        let mut pinned = Vec::new();
        let mut converged = false;
        let mut iterations = 0;
        loop {
            let (next, ll) = self.step_raw(&p, &mut pinned)?;
            if let Some(&prev) = trajectory.last() {
                let delta: f64 = ll - prev;
                if delta.abs() < options.tol * (1.0 + ll.abs()) {
                    trajectory.push(ll);
                    converged = true;
                    break;
                }
            }
            trajectory.push(ll);
            if iterations == options.max_iter {
                break;
            }
            p = next;
            iterations += 1;
        }
        let final_log_likelihood = *trajectory.last().unwrap();
        let fisher_condition = self.fisher_condition(&p)?;
        pinned.sort_unstable();
        Ok(EmResult {
            p_hat: PhotonNumberDistribution::new(p)?,
            iterations,
            final_log_likelihood,
            converged,
            log_likelihood_trajectory: trajectory,
            pinned_components: pinned,
            fisher_condition,
            fisher_near_singular: !(fisher_condition < FISHER_CONDITION_LIMIT),
        })
    }
}

/// `Σ_k ln P(x_k)` with compensated summation in data order.
pub fn log_likelihood(p: &PhotonNumberDistribution, data: &[f64]) -> Result<f64> {
    let mut acc = CompensatedSum::default();
    let mut q = Vec::with_capacity(p.cutoff() + 1);
    for (k, &x) in data.iter().enumerate() {
        fill_fock_quadrature_pdfs(x, &mut q, p.cutoff());
        let d: f64 = q.iter().zip(p.probs()).map(|(qn, pn)| qn * pn).sum();
        if !(d > 0.0) {
            return Err(Error::ZeroDensity { index: k, x });
        }
        acc.add(d.ln());
    }
    Ok(acc.value())
}

/// One EM iteration
/// `p_m ← (p_m / K) Σ_k Q_m(x_k) / Σ_n p_n Q_n(x_k)`.
pub fn em_step(p: &PhotonNumberDistribution, data: &[f64]) -> Result<PhotonNumberDistribution> {
    FockDesign::new(data, p.cutoff()).em_step(p)
}

/// EM from the uniform start until the relative log-likelihood change drops
/// below `options.tol` or `options.max_iter` updates have been applied.
pub fn em_reconstruct(data: &[f64], cutoff: usize, options: EmOptions) -> Result<EmResult> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("no data to reconstruct from".into()));
    }
    if cutoff < 1 {
        return Err(Error::InvalidArgument(
            "EM reconstruction needs cutoff ≥ 1".into(),
        ));
    }
    FockDesign::new(data, cutoff).em_reconstruct(options)
}

/// Machine-readable summary of one reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub cutoff: usize,
    pub p: PhotonNumberDistribution,
    pub log_likelihood: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl MethodReport {
    pub fn from_em(r: &EmResult) -> Self {
        Self {
            method: "em".into(),
            cutoff: r.p_hat.cutoff(),
            p: r.p_hat.clone(),
            log_likelihood: Some(r.final_log_likelihood),
            iterations: r.iterations,
            converged: r.converged,
        }
    }

    pub fn from_ls(fit: &LsFit, data: &[f64]) -> Self {
        Self {
            method: "least_squares".into(),
            cutoff: fit.p.cutoff(),
            p: fit.p.clone(),
            log_likelihood: log_likelihood(&fit.p, data).ok(),
            iterations: fit.iterations,
            converged: true,
        }
    }
}
