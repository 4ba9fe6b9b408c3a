//! Fock-space mathematics for phase-randomized single-mode states.
//!
//! A phase-randomized state is diagonal in the photon-number basis, so it is
//! fully described by its photon-number distribution `p_n`. Its quadrature
//! marginal is the mixture `P(x) = Σ p_n Q_n(x)` of Fock-state densities and
//! its Wigner function is radially symmetric. Quadratures are normalized so
//! that the vacuum variance is 1/2.

use std::f64::consts::{FRAC_1_PI, LN_2, PI};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Largest degree accepted by [`hermite`] and [`laguerre`].
pub const MAX_POLY_DEGREE: usize = 64;

/// Tolerance on the probability sum accepted by [`PhotonNumberDistribution::new`]
/// before renormalization.
const SUM_TOLERANCE: f64 = 1e-6;

/// Sums this close to one are left alone, so that stored distributions
/// round-trip bit for bit.
const RENORMALIZE_ABOVE: f64 = 1e-14;

/// Photon-number distribution `p_0..p_N` of a phase-randomized state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PhotonNumberDistribution {
    probs: Vec<f64>,
}

impl PhotonNumberDistribution {
    /// Builds a distribution from probabilities that already sum to one
    /// (within 1e-6); the vector is renormalized exactly.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        validate_weights(&probs)?;
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self::normalized(probs, sum))
    }

    /// Normalizes arbitrary nonnegative weights with a positive sum.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        validate_weights(&weights)?;
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidArgument("weights sum to zero".into()));
        }
        Ok(Self::normalized(weights, sum))
    }

    fn normalized(mut probs: Vec<f64>, sum: f64) -> Self {
        if (sum - 1.0).abs() > RENORMALIZE_ABOVE {
            probs.iter_mut().for_each(|p| *p /= sum);
        }
        Self { probs }
    }

    pub fn uniform(cutoff: usize) -> Self {
        let n = cutoff + 1;
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn vacuum() -> Self {
        Self { probs: vec![1.0] }
    }

    /// The pure Fock state `|n⟩` with cutoff `n`.
    pub fn fock(n: usize) -> Self {
        let mut probs = vec![0.0; n + 1];
        probs[n] = 1.0;
        Self { probs }
    }

    pub fn cutoff(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    /// Same distribution expressed with a different cutoff. Extending pads
    /// with zeros; truncating folds nothing and is rejected if it would drop
    /// probability mass.
    pub fn with_cutoff(&self, cutoff: usize) -> Result<Self> {
        if cutoff < self.cutoff() && self.probs[cutoff + 1..].iter().any(|&p| p > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate to cutoff {cutoff}: components above it are nonzero"
            )));
        }
        let mut probs = self.probs.clone();
        probs.resize(cutoff + 1, 0.0);
        Ok(Self { probs })
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    /// Variance of any quadrature, `Σ p_n (2n+1)/2`.
    pub fn quadrature_variance(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| p * fock_variance(n))
            .sum()
    }
}

impl TryFrom<Vec<f64>> for PhotonNumberDistribution {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<PhotonNumberDistribution> for Vec<f64> {
    fn from(p: PhotonNumberDistribution) -> Self {
        p.probs
    }
}

fn validate_weights(w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return Err(Error::InvalidArgument("empty probability vector".into()));
    }
    if let Some((n, v)) = w
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < 0.0)
    {
        return Err(Error::InvalidArgument(format!(
            "probability p_{n} = {v} is not a finite nonnegative number"
        )));
    }
    Ok(())
}

/// Vacuum-normalized quadrature sample.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QuadratureValue(f64);

impl QuadratureValue {
    pub fn new(x: f64) -> Result<Self> {
        if x.is_finite() {
            Ok(Self(x))
        } else {
            Err(Error::InvalidArgument(format!(
                "quadrature value {x} is not finite"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for QuadratureValue {
    type Error = Error;

    fn try_from(x: f64) -> Result<Self> {
        Self::new(x)
    }
}

impl From<QuadratureValue> for f64 {
    fn from(x: QuadratureValue) -> Self {
        x.0
    }
}

fn check_degree(n: usize) -> Result<()> {
    if n > MAX_POLY_DEGREE {
        Err(Error::DegreeTooLarge {
            degree: n,
            max: MAX_POLY_DEGREE,
        })
    } else {
        Ok(())
    }
}

/// Physicists' Hermite polynomial `H_n(x)`.
pub fn hermite(n: usize, x: f64) -> Result<f64> {
    check_degree(n)?;
    let (mut prev, mut cur) = (1.0, 2.0 * x);
    if n == 0 {
        return Ok(prev);
    }
    for k in 1..n {
        let next = 2.0 * x * cur - 2.0 * k as f64 * prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Laguerre polynomial `L_n(x)`.
pub fn laguerre(n: usize, x: f64) -> Result<f64> {
    check_degree(n)?;
    let (mut prev, mut cur) = (1.0, 1.0 - x);
    if n == 0 {
        return Ok(prev);
    }
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 - x) * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Quadrature density of the Fock state `|n⟩`,
/// `Q_n(x) = H_n(x)² e^{-x²} / (√π 2^n n!)`.
///
/// The prefactor is evaluated in log space. Degrees above
/// [`MAX_POLY_DEGREE`], or arguments where the raw polynomial overflows, fall
/// back to the normalized Hermite-function recurrence.
pub fn fock_quadrature_pdf(n: usize, x: f64) -> f64 {
    if n <= MAX_POLY_DEGREE {
        let h = hermite(n, x).expect("degree checked");
        if h == 0.0 {
            return 0.0;
        }
        if h.is_finite() {
            let log_q = 2.0 * h.abs().ln()
                - x * x
                - 0.5 * PI.ln()
                - n as f64 * LN_2
                - ln_gamma(n as f64 + 1.0);
            return log_q.exp();
        }
    }
    let psi = hermite_function(n, x);
    psi * psi
}

/// Normalized Hermite function `ψ_n(x)` (harmonic-oscillator eigenfunction),
/// with `ψ_n² = Q_n`.
fn hermite_function(n: usize, x: f64) -> f64 {
    let mut prev = PI.powf(-0.25) * (-0.5 * x * x).exp();
    if n == 0 {
        return prev;
    }
    let mut cur = 2f64.sqrt() * x * prev;
    for k in 1..n {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * x * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// All Fock densities `Q_0(x)..Q_cutoff(x)` in one recurrence pass.
pub fn fock_quadrature_pdfs(cutoff: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(cutoff + 1);
    fill_fock_quadrature_pdfs(x, &mut out, cutoff);
    out
}

pub(crate) fn fill_fock_quadrature_pdfs(x: f64, out: &mut Vec<f64>, cutoff: usize) {
    out.clear();
    let mut prev = PI.powf(-0.25) * (-0.5 * x * x).exp();
    out.push(prev * prev);
    if cutoff == 0 {
        return;
    }
    let mut cur = 2f64.sqrt() * x * prev;
    out.push(cur * cur);
    for k in 1..cutoff {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * x * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        out.push(cur * cur);
    }
}

/// Phase-averaged quadrature density `P(x) = Σ p_n Q_n(x)`.
pub fn mixture_pdf(p: &PhotonNumberDistribution, x: f64) -> f64 {
    fock_quadrature_pdfs(p.cutoff(), x)
        .iter()
        .zip(p.probs())
        .map(|(q, pn)| pn * q)
        .sum()
}

/// Quadrature variance of `|n⟩`: `(2n+1)/2`.
pub fn fock_variance(n: usize) -> f64 {
    (2 * n + 1) as f64 / 2.0
}

/// Wigner function of the phase-randomized state at `(x, y)`.
pub fn wigner_eval(p: &PhotonNumberDistribution, x: f64, y: f64) -> f64 {
    wigner_radial(p, x * x + y * y)
}

/// `W(0, 0) = (1/π) Σ (-1)^n p_n`; bit-identical to `wigner_eval(p, 0, 0)`.
pub fn wigner_origin(p: &PhotonNumberDistribution) -> f64 {
    wigner_radial(p, 0.0)
}

/// Wigner function as a function of `r² = x² + y²`.
pub fn wigner_radial(p: &PhotonNumberDistribution, r2: f64) -> f64 {
    let t = 2.0 * r2;
    let probs = p.probs();
    // L_0 = 1, L_1 = 1 - t
    let (mut prev, mut cur) = (1.0, 1.0 - t);
    let mut acc = probs[0] * prev;
    for (n, &pn) in probs.iter().enumerate().skip(1) {
        if n > 1 {
            let kf = (n - 1) as f64;
            let next = ((2.0 * kf + 1.0 - t) * cur - kf * prev) / (kf + 1.0);
            prev = cur;
            cur = next;
        }
        if n % 2 == 0 {
            acc += pn * cur;
        } else {
            acc -= pn * cur;
        }
    }
    acc * (-r2).exp() * FRAC_1_PI
}

/// Binomial photon-loss channel with transmission `eta`:
/// `p'_m = Σ_{n≥m} p_n C(n,m) η^m (1-η)^{n-m}`.
pub fn apply_loss(p: &PhotonNumberDistribution, eta: f64) -> Result<PhotonNumberDistribution> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidArgument(format!(
            "transmission {eta} outside [0, 1]"
        )));
    }
    let probs = p.probs();
    let mut out = vec![0.0; probs.len()];
    for (n, &pn) in probs.iter().enumerate() {
        if pn == 0.0 {
            continue;
        }
        let mut binom = 1.0;
        for (m, slot) in out.iter_mut().enumerate().take(n + 1) {
            if m > 0 {
                binom *= (n - m + 1) as f64 / m as f64;
            }
            *slot += pn * binom * eta.powi(m as i32) * (1.0 - eta).powi((n - m) as i32);
        }
    }
    PhotonNumberDistribution::from_weights(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reported() -> PhotonNumberDistribution {
        PhotonNumberDistribution::new(vec![0.392, 0.572, 0.003, 0.028, 0.004, 0.001]).unwrap()
    }

    #[test]
    fn hermite_values() {
        assert_eq!(hermite(0, 1.7).unwrap(), 1.0);
        assert_eq!(hermite(1, 0.0).unwrap(), 0.0);
        // 8x³ - 12x at x = 1
        assert_eq!(hermite(3, 1.0).unwrap(), -4.0);
        assert!(matches!(
            hermite(65, 0.1),
            Err(Error::DegreeTooLarge { .. })
        ));
        assert!(hermite(64, 0.1).is_ok());
    }

    #[test]
    fn laguerre_values() {
        for n in 0..=MAX_POLY_DEGREE {
            assert_eq!(laguerre(n, 0.0).unwrap(), 1.0);
        }
        assert_eq!(laguerre(1, 2.0).unwrap(), -1.0);
        // 1 - 2x + x²/2 at x = 1
        assert!((laguerre(2, 1.0).unwrap() + 0.5).abs() < 1e-15);
        assert!(laguerre(65, 0.0).is_err());
    }

    #[test]
    fn fock_pdf_at_origin() {
        let inv_sqrt_pi = 1.0 / PI.sqrt();
        assert!((fock_quadrature_pdf(0, 0.0) - inv_sqrt_pi).abs() < 1e-15);
        assert_eq!(fock_quadrature_pdf(1, 0.0), 0.0);
        // H_2(0)² = 4 over √π·2²·2!
        assert!((fock_quadrature_pdf(2, 0.0) - 4.0 / (8.0 * PI.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn log_gamma_and_recurrence_routes_agree() {
        for n in 0..=40 {
            for &x in &[-6.0, -2.5, -0.3, 0.0, 0.7, 1.9, 4.4, 7.5] {
                let a = fock_quadrature_pdf(n, x);
                let b = fock_quadrature_pdfs(n, x)[n];
                assert!(
                    (a - b).abs() <= 1e-11 * a.abs().max(1e-300) + 1e-300,
                    "n={n} x={x}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn fock_pdf_beyond_polynomial_guard() {
        let q = fock_quadrature_pdf(100, 3.0);
        let psi = hermite_function(100, 3.0);
        assert_eq!(q, psi * psi);
        assert!(q.is_finite() && q >= 0.0);
        assert_eq!(fock_quadrature_pdf(10, 1e6), 0.0);
    }

    #[test]
    fn mixture_pdf_reduces_to_vacuum() {
        let v = PhotonNumberDistribution::vacuum();
        assert!((mixture_pdf(&v, 0.0) - 0.564_189_583_547_756_3).abs() < 1e-15);
    }

    #[test]
    fn mixture_pdf_reported_distribution_at_origin() {
        // Closed-form Q_n(0): odd n vanish, Q_2(0) = 1/(2√π), Q_4(0) = 3/(8√π).
        let s = 1.0 / PI.sqrt();
        let expected = 0.392 * s + 0.003 * s / 2.0 + 0.004 * 3.0 * s / 8.0;
        assert!((mixture_pdf(&reported(), 0.0) - expected).abs() < 1e-15);
    }

    #[test]
    fn variance_law() {
        assert_eq!(fock_variance(0), 0.5);
        assert_eq!(fock_variance(1), 1.5);
        assert_eq!(fock_variance(5), 5.5);
    }

    #[test]
    fn wigner_known_values() {
        let single = PhotonNumberDistribution::fock(1);
        assert!((wigner_eval(&single, 0.0, 0.0) + FRAC_1_PI).abs() < 1e-15);
        let w = wigner_origin(&reported());
        assert!((w - (-0.202 / PI)).abs() < 1e-12);
        assert!((w + 0.0643).abs() < 1e-4);
        let vac = PhotonNumberDistribution::vacuum();
        for &(x, y) in &[(0.0f64, 0.0f64), (1.0, -2.0), (3.0, 0.5)] {
            let expect = FRAC_1_PI * (-(x * x) - y * y).exp();
            let got = wigner_eval(&vac, x, y);
            assert!(got > 0.0);
            assert!((got - expect).abs() <= 1e-15 * expect);
        }
    }

    #[test]
    fn wigner_origin_is_bit_identical_to_eval() {
        for p in [
            reported(),
            PhotonNumberDistribution::uniform(7),
            PhotonNumberDistribution::fock(3),
        ] {
            assert_eq!(
                wigner_origin(&p).to_bits(),
                wigner_eval(&p, 0.0, 0.0).to_bits()
            );
        }
    }

    #[test]
    fn loss_channel_examples() {
        let p = reported();
        assert_eq!(apply_loss(&p, 1.0).unwrap(), p);
        let single = apply_loss(&PhotonNumberDistribution::fock(1), 0.9).unwrap();
        assert!((single.get(0) - 0.1).abs() < 1e-15);
        assert!((single.get(1) - 0.9).abs() < 1e-15);
        let two = apply_loss(&PhotonNumberDistribution::fock(2), 0.5).unwrap();
        assert_eq!(two.probs(), &[0.25, 0.5, 0.25]);
        assert!(apply_loss(&p, 1.1).is_err());
        assert!(apply_loss(&p, -0.1).is_err());
    }

    #[test]
    fn distribution_validation() {
        assert!(PhotonNumberDistribution::new(vec![]).is_err());
        assert!(PhotonNumberDistribution::new(vec![0.5, 0.4]).is_err());
        assert!(PhotonNumberDistribution::new(vec![1.5, -0.5]).is_err());
        assert!(PhotonNumberDistribution::new(vec![f64::NAN, 1.0]).is_err());
        assert!(PhotonNumberDistribution::from_weights(vec![0.0, 0.0]).is_err());
        let p = PhotonNumberDistribution::from_weights(vec![1.0, 3.0]).unwrap();
        assert_eq!(p.probs(), &[0.25, 0.75]);
        assert_eq!(p.cutoff(), 1);
        let padded = p.with_cutoff(3).unwrap();
        assert_eq!(padded.probs(), &[0.25, 0.75, 0.0, 0.0]);
        assert!(p.with_cutoff(0).is_err());
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, "[0.25,0.75]");
        assert!(serde_json::from_str::<PhotonNumberDistribution>("[0.5,0.6]").is_err());
    }

    #[test]
    fn quadrature_value_rejects_non_finite() {
        assert!(QuadratureValue::new(f64::INFINITY).is_err());
        assert!(QuadratureValue::new(f64::NAN).is_err());
        assert_eq!(QuadratureValue::new(0.25).unwrap().value(), 0.25);
    }
}
