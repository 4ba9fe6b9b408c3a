//! Synthetic heralded homodyne segments.
//!
//! Each segment is white detector noise with its component along the mode
//! function replaced by `κ·x`, where `x` is drawn from the phase-averaged
//! quadrature law of the state. The projection of a segment onto the true
//! mode therefore returns exactly `κ·x`, while the variance across segments
//! has the form `V(τ) = κ'² f(τ)² + V₀`.

use std::f64::consts::PI;
use std::str::FromStr;
use std::sync::Mutex;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fock::{fock_quadrature_pdf, fock_variance, PhotonNumberDistribution, QuadratureValue};
use crate::pipeline::ModeFunction;
use crate::reference;
use crate::rng::{domain, substream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum ModeShape {
    /// `f(τ) ∝ exp(−γ|τ − τ_peak|)`, the field envelope leaving a Lorentzian cavity.
    DoubleExponential { decay_rate: f64 },
    /// `f(τ) ∝ exp(−(τ − τ_peak)² / (2 w²))`.
    Gaussian { width: f64 },
}

impl ModeShape {
    /// Field decay rate of a cavity with the given FWHM linewidth in Hz.
    pub fn from_linewidth(fwhm_hz: f64) -> Self {
        ModeShape::DoubleExponential {
            decay_rate: PI * fwhm_hz,
        }
    }

    fn amplitude(&self, dt: f64) -> f64 {
        match *self {
            ModeShape::DoubleExponential { decay_rate } => (-decay_rate * dt.abs()).exp(),
            ModeShape::Gaussian { width } => (-dt * dt / (2.0 * width * width)).exp(),
        }
    }

    fn parameter(&self) -> f64 {
        match *self {
            ModeShape::DoubleExponential { decay_rate } => decay_rate,
            ModeShape::Gaussian { width } => width,
        }
    }
}

/// Missing fields take their defaults when deserializing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub true_p: PhotonNumberDistribution,
    /// Heralded segment count K.
    pub segments: usize,
    /// Segments in the vacuum reference batch.
    pub vacuum_segments: usize,
    pub samples_per_segment: usize,
    /// Seconds between samples.
    pub sample_interval: f64,
    pub mode_shape: ModeShape,
    /// Mode peak position relative to the trigger, seconds.
    pub peak_offset: f64,
    /// Per-sample raw noise variance V₀.
    pub background_variance: f64,
    /// Raw units per vacuum-normalized quadrature unit, κ.
    pub signal_gain: f64,
    pub rng_seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            true_p: reference::em_distribution(),
            segments: 50_000,
            vacuum_segments: 10_000,
            samples_per_segment: 1000,
            sample_interval: 0.5e-9,
            mode_shape: ModeShape::from_linewidth(120e6),
            peak_offset: -10e-9,
            background_variance: 1.0,
            signal_gain: 30.0,
            rng_seed: 1550,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.segments < 1 || self.vacuum_segments < 1 {
            return bad("segment counts must be at least 1".into());
        }
        if self.samples_per_segment < 16 {
            return bad(format!(
                "samples_per_segment {} is below 16",
                self.samples_per_segment
            ));
        }
        if self.samples_per_segment > u32::MAX as usize {
            return bad("samples_per_segment does not fit the segment file format".into());
        }
        if !(self.sample_interval > 0.0 && self.sample_interval.is_finite()) {
            return bad(format!(
                "sample_interval {} must be positive",
                self.sample_interval
            ));
        }
        if !(self.background_variance > 0.0 && self.background_variance.is_finite()) {
            return bad(format!(
                "background_variance {} must be positive",
                self.background_variance
            ));
        }
        if !(self.signal_gain > 0.0 && self.signal_gain.is_finite()) {
            return bad(format!("signal_gain {} must be positive", self.signal_gain));
        }
        let p = self.mode_shape.parameter();
        if !(p > 0.0 && p.is_finite()) {
            return bad(format!("mode shape parameter {p} must be positive"));
        }
        let half_window = self.samples_per_segment as f64 * self.sample_interval / 2.0;
        if !(self.peak_offset.abs() < half_window) {
            return bad(format!(
                "peak_offset {} s lies outside the ±{half_window} s segment window",
                self.peak_offset
            ));
        }
        Ok(())
    }

    pub fn trigger_index(&self) -> usize {
        self.samples_per_segment / 2
    }

    /// Hex SHA-256 prefix of the canonical JSON form of the configuration.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        hex::encode(&digest[..8])
    }

    pub fn segment_count(&self, kind: BatchKind) -> usize {
        match kind {
            BatchKind::Vacuum => self.vacuum_segments,
            BatchKind::Heralded => self.segments,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchKind {
    Vacuum,
    Heralded,
}

impl BatchKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BatchKind::Vacuum => "vacuum",
            BatchKind::Heralded => "heralded",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            BatchKind::Vacuum => 0,
            BatchKind::Heralded => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(BatchKind::Vacuum),
            1 => Some(BatchKind::Heralded),
            _ => None,
        }
    }

    fn rng_domain(self) -> u64 {
        match self {
            BatchKind::Vacuum => domain::VACUUM_SEGMENTS,
            BatchKind::Heralded => domain::HERALDED_SEGMENTS,
        }
    }
}

impl FromStr for BatchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vacuum" => Ok(BatchKind::Vacuum),
            "heralded" => Ok(BatchKind::Heralded),
            other => Err(Error::Format(format!("unknown batch kind {other:?}"))),
        }
    }
}

/// One recorded time series around a trigger.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    samples: Vec<f64>,
    trigger_index: usize,
}

impl Segment {
    pub fn new(samples: Vec<f64>, trigger_index: usize) -> Result<Self> {
        if trigger_index >= samples.len() {
            return Err(Error::InvalidArgument(format!(
                "trigger index {trigger_index} outside segment of length {}",
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "segment sample {i} is not finite"
            )));
        }
        Ok(Self {
            samples,
            trigger_index,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn trigger_index(&self) -> usize {
        self.trigger_index
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Segment {
        Segment {
            samples: self.samples.iter().map(|x| x * c).collect(),
            trigger_index: self.trigger_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentBatch {
    segments: Vec<Segment>,
    kind: BatchKind,
    config_fingerprint: String,
}

impl SegmentBatch {
    pub fn new(
        segments: Vec<Segment>,
        kind: BatchKind,
        config_fingerprint: String,
    ) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty segment batch".into()))?;
        let (len, trig) = (first.len(), first.trigger_index());
        if let Some(i) = segments
            .iter()
            .position(|s| s.len() != len || s.trigger_index() != trig)
        {
            return Err(Error::InvalidArgument(format!(
                "segment {i} differs in length or trigger index from segment 0"
            )));
        }
        Ok(Self {
            segments,
            kind,
            config_fingerprint,
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn kind(&self) -> BatchKind {
        self.kind
    }

    pub fn config_fingerprint(&self) -> &str {
        &self.config_fingerprint
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn samples_per_segment(&self) -> usize {
        self.segments[0].len()
    }

    pub fn trigger_index(&self) -> usize {
        self.segments[0].trigger_index()
    }

    /// Every sample multiplied by `c` (models a raw detector gain change).
    pub fn scaled(&self, c: f64) -> SegmentBatch {
        SegmentBatch {
            segments: self.segments.iter().map(|s| s.scaled(c)).collect(),
            kind: self.kind,
            config_fingerprint: self.config_fingerprint.clone(),
        }
    }
}

/// Mode weights on the segment sample grid, peaked at `peak_offset`.
pub fn synth_mode_function(config: &SimulationConfig) -> Result<ModeFunction> {
    config.validate()?;
    let trig = config.trigger_index() as f64;
    let peak = config.peak_offset / config.sample_interval;
    let weights = (0..config.samples_per_segment)
        .map(|i| {
            let dt = (i as f64 - trig - peak) * config.sample_interval;
            config.mode_shape.amplitude(dt)
        })
        .collect();
    ModeFunction::from_weights(weights)
}

/// Rejection sampler for the phase-averaged mixture `Σ p_n Q_n(x)`.
///
/// The photon number is drawn first; `x` is then drawn from `Q_n` by rejection
/// against a centred Gaussian with the Fock variance `(2n+1)/2`.
#[derive(Debug, Clone)]
pub struct FockSampler {
    cumulative: Vec<f64>,
    envelopes: Vec<Envelope>,
}

#[derive(Debug, Clone, Copy)]
struct Envelope {
    sigma: f64,
    /// Upper bound on `Q_n(x) / g(x)` for the Gaussian envelope density `g`.
    bound: f64,
}

impl Envelope {
    // Safety factor on the grid maximum of the density ratio; the ratio is
    // smooth and the grid step is far below its curvature scale.
    const MARGIN: f64 = 1.01;

    /// Cached per photon number; the grid search runs once per process.
    fn for_fock(n: usize) -> Self {
        static CACHE: Mutex<Vec<Option<Envelope>>> = Mutex::new(Vec::new());
        let mut cache = CACHE.lock().unwrap_or_else(|e| e.into_inner());
        if cache.len() <= n {
            cache.resize(n + 1, None);
        }
        *cache[n].get_or_insert_with(|| Self::compute(n))
    }

    fn compute(n: usize) -> Self {
        let sigma = fock_variance(n).sqrt();
        let steps = 20_000;
        let span = 10.0 * sigma;
        let mut best: f64 = 0.0;
        for i in 0..=steps {
            let x = span * i as f64 / steps as f64;
            best = best.max(fock_quadrature_pdf(n, x) / gaussian_pdf(x, sigma));
        }
        Self {
            sigma,
            bound: best * Self::MARGIN,
        }
    }
}

fn gaussian_pdf(x: f64, sigma: f64) -> f64 {
    (-x * x / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt())
}

impl FockSampler {
    pub fn new(p: &PhotonNumberDistribution) -> Self {
        let mut acc = 0.0;
        let cumulative = p
            .probs()
            .iter()
            .map(|pn| {
                acc += pn;
                acc
            })
            .collect();
        let envelopes = p
            .probs()
            .iter()
            .enumerate()
            .map(|(n, &pn)| {
                if pn > 0.0 {
                    Envelope::for_fock(n)
                } else {
                    Envelope {
                        sigma: 0.0,
                        bound: 0.0,
                    }
                }
            })
            .collect();
        Self {
            cumulative,
            envelopes,
        }
    }

    /// Photon number drawn from the distribution.
    pub fn sample_photon_number<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().unwrap();
        let u = rng.random::<f64>() * total;
        let n = self.cumulative.partition_point(|&c| c <= u);
        // u < total always lands on a component with positive mass
        n.min(self.cumulative.len() - 1)
    }

    /// Quadrature drawn from the Fock density `Q_n`.
    pub fn sample_fock<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> f64 {
        let env = self.envelopes[n];
        let env = if env.bound > 0.0 {
            env
        } else {
            Envelope::for_fock(n)
        };
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let x = env.sigma * z;
            let u: f64 = rng.random();
            if u * env.bound * gaussian_pdf(x, env.sigma) <= fock_quadrature_pdf(n, x) {
                return x;
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> QuadratureValue {
        let n = self.sample_photon_number(rng);
        QuadratureValue::new(self.sample_fock(n, rng)).expect("finite draw")
    }
}

/// One draw from `P(x) = Σ p_n Q_n(x)`. Builds a [`FockSampler`]; reuse one
/// directly for repeated draws.
pub fn sample_quadrature<R: Rng + ?Sized>(
    p: &PhotonNumberDistribution,
    rng: &mut R,
) -> QuadratureValue {
    FockSampler::new(p).sample(rng)
}

/// Segment carrying quadrature `x` in `mode` on top of white noise whose
/// component along the mode has been removed.
pub fn generate_segment<R: Rng + ?Sized>(
    x: QuadratureValue,
    mode: &ModeFunction,
    config: &SimulationConfig,
    rng: &mut R,
) -> Result<Segment> {
    if mode.len() != config.samples_per_segment {
        return Err(Error::LengthMismatch {
            expected: config.samples_per_segment,
            actual: mode.len(),
        });
    }
    let sd = config.background_variance.sqrt();
    let mut noise: Vec<f64> = (0..mode.len())
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let along: f64 = mode.weights().iter().zip(&noise).map(|(f, n)| f * n).sum();
    let amplitude = config.signal_gain * x.value();
    for (s, f) in noise.iter_mut().zip(mode.weights()) {
        *s += (amplitude - along) * f;
    }
    Segment::new(noise, config.trigger_index())
}

/// A batch together with the quadrature embedded in each segment.
pub fn generate_batch_with_quadratures(
    config: &SimulationConfig,
    kind: BatchKind,
) -> Result<(SegmentBatch, Vec<f64>)> {
    config.validate()?;
    let mode = synth_mode_function(config)?;
    let state = match kind {
        BatchKind::Vacuum => PhotonNumberDistribution::vacuum(),
        BatchKind::Heralded => config.true_p.clone(),
    };
    let sampler = FockSampler::new(&state);
    let count = config.segment_count(kind);
    let pairs: Vec<(Segment, f64)> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(config.rng_seed, kind.rng_domain(), i);
            let x = sampler.sample(&mut rng);
            generate_segment(x, &mode, config, &mut rng).map(|s| (s, x.value()))
        })
        .collect::<Result<_>>()?;
    let (segments, xs) = pairs.into_iter().unzip();
    Ok((SegmentBatch::new(segments, kind, config.fingerprint())?, xs))
}

pub fn generate_batch(config: &SimulationConfig, kind: BatchKind) -> Result<SegmentBatch> {
    generate_batch_with_quadratures(config, kind).map(|(b, _)| b)
}
