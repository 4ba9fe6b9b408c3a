//! Reference values for a heralded single-photon-subtracted state, used as
//! simulation ground truth and as comparison targets.

use crate::fock::PhotonNumberDistribution;

/// Photon-number distribution from maximum-likelihood (EM) reconstruction.
pub const EM_PROBABILITIES: [f64; 6] = [0.392, 0.572, 0.003, 0.028, 0.004, 0.001];

/// Photon-number distribution from the least-squares fit of the histogram.
pub const FIT_PROBABILITIES: [f64; 6] = [0.39, 0.57, 0.0, 0.03, 0.0, 0.01];

/// Measured Wigner value at the phase-space origin and its bootstrap error.
pub const WIGNER_ORIGIN: f64 = -0.063;
pub const WIGNER_ORIGIN_UNCERTAINTY: f64 = 0.004;

/// W(0,0) implied by [`EM_PROBABILITIES`], to four digits.
pub const WIGNER_ORIGIN_FROM_EM: f64 = -0.0643;

/// Reported negativity significance, in standard deviations (lower bound).
pub const SIGNIFICANCE: f64 = 15.0;

pub const CUTOFF: usize = 5;
pub const VACUUM_SEGMENTS: usize = 10_000;
pub const HERALDED_SEGMENTS: usize = 50_000;
pub const SAMPLES_PER_SEGMENT: usize = 1000;

pub fn em_distribution() -> PhotonNumberDistribution {
    PhotonNumberDistribution::new(EM_PROBABILITIES.to_vec()).expect("valid reference distribution")
}

pub fn fit_distribution() -> PhotonNumberDistribution {
    PhotonNumberDistribution::new(FIT_PROBABILITIES.to_vec()).expect("valid reference distribution")
}
