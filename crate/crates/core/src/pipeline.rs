//! Temporal-mode extraction and quadrature calibration.
//!
//! Points of a segment that carry the heralded state show excess variance
//! across the batch, `V(τ) = κ²|f(τ)|² + V₀`. The mode function is recovered
//! as `f ∝ √(V − V₀)`, every segment is projected onto it to give one raw
//! quadrature, and the vacuum reference batch fixes the scale so that the
//! vacuum variance is 1/2.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::sample_variance;
use crate::sim::{BatchKind, SegmentBatch};

/// Default fraction of the segment length used at each edge to estimate V₀.
pub const DEFAULT_BASELINE_FRACTION: f64 = 0.1;

/// An excess over the baseline must exceed this many standard errors of a
/// per-index variance estimate before it counts as signal.
pub const DETECTION_SIGMAS: f64 = 6.0;

/// Segments per partial sum in the variance reduction. Fixed so the result
/// does not depend on the thread count.
const REDUCTION_CHUNK: usize = 512;

/// Discrete temporal mode weights, nonnegative with unit squared norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeFunction {
    weights: Vec<f64>,
    peak_index: usize,
}

impl ModeFunction {
    /// Normalizes nonnegative weights to `Σ w² = 1`.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument(
                "mode weights must be finite and nonnegative".into(),
            ));
        }
        let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::InvalidArgument("mode weights are all zero".into()));
        }
        weights.iter_mut().for_each(|w| *w /= norm);
        let peak_index = argmax(&weights);
        Ok(Self {
            weights,
            peak_index,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn peak_index(&self) -> usize {
        self.peak_index
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn cosine_similarity(&self, other: &ModeFunction) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Two-column CSV: time offset from the trigger in seconds, weight.
    pub fn write_csv(
        &self,
        path: impl AsRef<Path>,
        trigger_index: usize,
        sample_interval: f64,
        metadata: &[(&str, String)],
    ) -> Result<()> {
        let mut out = comment_lines(metadata);
        out.push_str("time_offset_s,weight\n");
        for (i, w) in self.weights.iter().enumerate() {
            let t = (i as f64 - trigger_index as f64) * sample_interval;
            writeln!(out, "{t:e},{w:e}").unwrap();
        }
        fs::write(path, out)?;
        Ok(())
    }
}

/// `# key=value` lines for CSV headers.
pub(crate) fn comment_lines(metadata: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in metadata {
        writeln!(out, "# {k}={v}").unwrap();
    }
    out
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Per-index variance across a batch, with its asymptotic baseline V₀.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceTrace {
    pub variance: Vec<f64>,
    pub baseline: f64,
    pub count: usize,
}

impl VarianceTrace {
    /// Standard error of one per-index variance estimate at the baseline
    /// level, assuming Gaussian samples.
    pub fn baseline_standard_error(&self) -> f64 {
        self.baseline * (2.0 / (self.count as f64 - 1.0)).sqrt()
    }

    pub fn peak_to_baseline(&self) -> f64 {
        self.variance.iter().copied().fold(f64::MIN, f64::max) / self.baseline
    }

    pub fn write_csv(
        &self,
        path: impl AsRef<Path>,
        trigger_index: usize,
        sample_interval: f64,
        metadata: &[(&str, String)],
    ) -> Result<()> {
        let mut out = format!(
            "# baseline={:e}\n# segments={}\n{}time_offset_s,variance\n",
            self.baseline,
            self.count,
            comment_lines(metadata)
        );
        for (i, v) in self.variance.iter().enumerate() {
            let t = (i as f64 - trigger_index as f64) * sample_interval;
            writeln!(out, "{t:e},{v:e}").unwrap();
        }
        fs::write(path, out)?;
        Ok(())
    }
}

/// Mean of the variance trace over the first and last `⌈fraction·len⌉` indices.
fn edge_baseline(variance: &[f64], fraction: f64) -> f64 {
    let w = ((fraction * variance.len() as f64).ceil() as usize).clamp(1, variance.len() / 2);
    let head = &variance[..w];
    let tail = &variance[variance.len() - w..];
    (head.iter().sum::<f64>() + tail.iter().sum::<f64>()) / (2 * w) as f64
}

pub fn compute_variance_trace(
    batch: &SegmentBatch,
    baseline_window_fraction: f64,
) -> Result<VarianceTrace> {
    if !(baseline_window_fraction > 0.0 && baseline_window_fraction <= 0.4) {
        return Err(Error::InvalidArgument(format!(
            "baseline window fraction {baseline_window_fraction} outside (0, 0.4]"
        )));
    }
    let count = batch.len();
    if count < 2 {
        return Err(Error::InvalidArgument(format!(
            "variance trace needs at least 2 segments, got {count}"
        )));
    }
    let len = batch.samples_per_segment();
    let segments = batch.segments();

    let sums = chunked_reduce(segments, len, |acc, s| {
        acc.iter_mut().zip(s).for_each(|(a, x)| *a += x)
    });
    let mean: Vec<f64> = sums.iter().map(|s| s / count as f64).collect();
    let squares = chunked_reduce(segments, len, |acc, s| {
        for ((a, x), m) in acc.iter_mut().zip(s).zip(&mean) {
            let d = x - m;
            *a += d * d;
        }
    });
    let variance: Vec<f64> = squares.iter().map(|s| s / (count as f64 - 1.0)).collect();
    if let Some(i) = variance.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::Degenerate(format!(
            "all segments are identical at sample index {i}"
        )));
    }
    let baseline = edge_baseline(&variance, baseline_window_fraction);
    Ok(VarianceTrace {
        variance,
        baseline,
        count,
    })
}

/// Per-index accumulation over segments in fixed-size chunks, merged in
/// chunk order.
fn chunked_reduce<F>(segments: &[crate::sim::Segment], len: usize, op: F) -> Vec<f64>
where
    F: Fn(&mut [f64], &[f64]) + Sync,
{
    let partials: Vec<Vec<f64>> = segments
        .par_chunks(REDUCTION_CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; len];
            for s in chunk {
                op(&mut acc, s.samples());
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; len];
    for p in &partials {
        total.iter_mut().zip(p).for_each(|(t, x)| *t += x);
    }
    total
}

/// `f(τ) ∝ √max(V(τ) − V₀, 0)`, normalized.
///
/// Fails with [`Error::NoSignal`] unless some index exceeds the baseline by
/// more than [`DETECTION_SIGMAS`] standard errors of the variance estimate.
pub fn extract_mode_function(trace: &VarianceTrace) -> Result<ModeFunction> {
    let excess: Vec<f64> = trace.variance.iter().map(|v| v - trace.baseline).collect();
    let max_excess = excess.iter().copied().fold(f64::MIN, f64::max);
    let threshold = DETECTION_SIGMAS * trace.baseline_standard_error();
    if !(max_excess > 0.0) || !(max_excess > threshold) {
        return Err(Error::NoSignal(format!(
            "largest excess variance {max_excess:.4e} does not exceed the detection \
             threshold {threshold:.4e} above baseline {:.4e}",
            trace.baseline
        )));
    }
    let weights = excess
        .iter()
        .map(|&e| if e > 0.0 { e.sqrt() } else { 0.0 })
        .collect();
    ModeFunction::from_weights(weights)
}

/// Mode-weighted sum `Σ f_i s_i` of every segment, in batch order.
pub fn project_quadratures(batch: &SegmentBatch, mode: &ModeFunction) -> Result<Vec<f64>> {
    if mode.len() != batch.samples_per_segment() {
        return Err(Error::LengthMismatch {
            expected: batch.samples_per_segment(),
            actual: mode.len(),
        });
    }
    Ok(batch
        .segments()
        .par_iter()
        .map(|s| {
            mode.weights()
                .iter()
                .zip(s.samples())
                .map(|(f, x)| f * x)
                .sum()
        })
        .collect())
}

/// Calibrated quadrature samples (vacuum variance 1/2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureDataset {
    values: Vec<f64>,
    calibration_scale: f64,
    source_kind: BatchKind,
}

impl QuadratureDataset {
    pub fn new(values: Vec<f64>, calibration_scale: f64, source_kind: BatchKind) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "quadrature value at index {i} is not finite"
            )));
        }
        if !(calibration_scale > 0.0 && calibration_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "calibration scale {calibration_scale} must be positive"
            )));
        }
        Ok(Self {
            values,
            calibration_scale,
            source_kind,
        })
    }

    /// Wraps already-normalized values (scale 1).
    pub fn from_normalized(values: Vec<f64>, source_kind: BatchKind) -> Result<Self> {
        Self::new(values, 1.0, source_kind)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn calibration_scale(&self) -> f64 {
        self.calibration_scale
    }

    pub fn source_kind(&self) -> BatchKind {
        self.source_kind
    }

    pub fn variance(&self) -> f64 {
        sample_variance(&self.values)
    }

    /// One value per line after `#` comment lines carrying the calibration
    /// scale, source kind and any extra `key=value` metadata.
    pub fn write_csv(&self, path: impl AsRef<Path>, metadata: &[(&str, String)]) -> Result<()> {
        let mut out = format!(
            "# calibration_scale={:e}\n# source_kind={}\n",
            self.calibration_scale,
            self.source_kind.as_str()
        );
        out.push_str(&comment_lines(metadata));
        out.push_str("x\n");
        for x in &self.values {
            writeln!(out, "{x:e}").unwrap();
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let mut scale = 1.0;
        let mut kind = BatchKind::Heralded;
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line == "x" {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.trim().split_once('=') {
                    match k.trim() {
                        "calibration_scale" => {
                            scale = v.trim().parse().map_err(|_| {
                                Error::Format(format!("{}: bad calibration_scale", path.display()))
                            })?
                        }
                        "source_kind" => kind = v.trim().parse()?,
                        _ => {}
                    }
                }
                continue;
            }
            let x: f64 = line.parse().map_err(|_| {
                Error::Format(format!(
                    "{}:{}: cannot parse {line:?} as a number",
                    path.display(),
                    lineno + 1
                ))
            })?;
            values.push(x);
        }
        if values.is_empty() {
            return Err(Error::Format(format!(
                "{}: no quadrature values",
                path.display()
            )));
        }
        Self::new(values, scale, kind).map_err(|e| Error::Format(e.to_string()))
    }
}

pub const VACUUM_VARIANCE: f64 = 0.5;

/// z-score by which the heralded projected variance must exceed the vacuum
/// one before the heralded data is considered to carry a signal.
pub const EXCESS_SIGMAS: f64 = 5.0;

/// z-score of `Var(heralded) − Var(vacuum)` for raw projections, using the
/// Gaussian standard error of each sample variance. Fails with
/// [`Error::NoSignal`] below [`EXCESS_SIGMAS`].
pub fn check_heralded_excess(vacuum_raw: &[f64], heralded_raw: &[f64]) -> Result<f64> {
    if vacuum_raw.len() < 2 || heralded_raw.len() < 2 {
        return Err(Error::InvalidArgument(
            "variance comparison needs at least two values per batch".into(),
        ));
    }
    let (vv, vh) = (sample_variance(vacuum_raw), sample_variance(heralded_raw));
    let se = (2.0 * vv * vv / (vacuum_raw.len() - 1) as f64
        + 2.0 * vh * vh / (heralded_raw.len() - 1) as f64)
        .sqrt();
    let z = (vh - vv) / se;
    if !(z > EXCESS_SIGMAS) {
        return Err(Error::NoSignal(format!(
            "heralded projected variance {vh:e} does not exceed the vacuum value {vv:e} \
             (z = {z:.2}, need > {EXCESS_SIGMAS})"
        )));
    }
    Ok(z)
}

/// Scales both raw vectors by `√(Var(vacuum)/0.5)`, estimated from the vacuum
/// reference only.
pub fn calibrate(
    vacuum_raw: &[f64],
    signal_raw: &[f64],
) -> Result<(QuadratureDataset, QuadratureDataset)> {
    if vacuum_raw.len() < 100 {
        return Err(Error::InvalidArgument(format!(
            "vacuum reference needs at least 100 values, got {}",
            vacuum_raw.len()
        )));
    }
    let var = sample_variance(vacuum_raw);
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::Degenerate(format!(
            "vacuum reference variance is {var}"
        )));
    }
    let scale = (var / VACUUM_VARIANCE).sqrt();
    let vacuum = QuadratureDataset::new(
        vacuum_raw.iter().map(|x| x / scale).collect(),
        scale,
        BatchKind::Vacuum,
    )?;
    let signal = QuadratureDataset::new(
        signal_raw.iter().map(|x| x / scale).collect(),
        scale,
        BatchKind::Heralded,
    )?;
    Ok((vacuum, signal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Segment;

    #[test]
    fn heralded_excess() {
        let vac: Vec<f64> = (0..1000).map(|i| ((i % 2) as f64 - 0.5) * 2.0).collect();
        let big: Vec<f64> = vac.iter().map(|x| 2.0 * x).collect();
        // equal sample sizes and a 4x variance ratio: z = 3 / sqrt(34 / 999)
        let z = check_heralded_excess(&vac, &big).unwrap();
        assert!((z - 3.0 / (34.0f64 / 999.0).sqrt()).abs() < 1e-9, "{z}");
        assert!(matches!(
            check_heralded_excess(&vac, &vac),
            Err(Error::NoSignal(_))
        ));
        assert!(check_heralded_excess(&vac[..1], &big).is_err());
    }

    fn trace(variance: Vec<f64>, baseline: f64) -> VarianceTrace {
        VarianceTrace {
            variance,
            baseline,
            count: 10_000,
        }
    }

    #[test]
    fn constant_batch_is_degenerate() {
        let segs = vec![Segment::new(vec![1.0; 32], 16).unwrap(); 5];
        let batch = SegmentBatch::new(segs, BatchKind::Heralded, "x".into()).unwrap();
        assert!(matches!(
            compute_variance_trace(&batch, 0.1),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn trace_preconditions() {
        let segs = vec![Segment::new(vec![1.0; 32], 16).unwrap()];
        let batch = SegmentBatch::new(segs, BatchKind::Heralded, "x".into()).unwrap();
        assert!(compute_variance_trace(&batch, 0.1).is_err());
        let segs = vec![Segment::new(vec![1.0; 32], 16).unwrap(); 3];
        let batch = SegmentBatch::new(segs, BatchKind::Heralded, "x".into()).unwrap();
        assert!(compute_variance_trace(&batch, 0.0).is_err());
        assert!(compute_variance_trace(&batch, 0.5).is_err());
    }

    #[test]
    fn variance_and_baseline_by_hand() {
        // Two segments of length 20; index 10 differs by 2 (variance 2), the
        // rest by 1 (variance 0.5).
        let mut a = vec![0.0; 20];
        let mut b = vec![1.0; 20];
        a[10] = 0.0;
        b[10] = 2.0;
        let batch = SegmentBatch::new(
            vec![Segment::new(a, 10).unwrap(), Segment::new(b, 10).unwrap()],
            BatchKind::Heralded,
            "x".into(),
        )
        .unwrap();
        let t = compute_variance_trace(&batch, 0.1).unwrap();
        assert_eq!(t.count, 2);
        assert_eq!(t.variance[10], 2.0);
        assert_eq!(t.variance[0], 0.5);
        assert_eq!(t.baseline, 0.5);
    }

    #[test]
    fn flat_trace_has_no_signal() {
        let t = trace(vec![1.0; 100], 1.0);
        assert!(matches!(extract_mode_function(&t), Err(Error::NoSignal(_))));
    }

    #[test]
    fn single_excess_index_gives_delta_mode() {
        let mut v = vec![1.0; 100];
        v[42] = 2.0;
        let m = extract_mode_function(&trace(v, 1.0)).unwrap();
        assert_eq!(m.peak_index(), 42);
        assert_eq!(m.weights()[42], 1.0);
        assert_eq!(m.weights().iter().filter(|w| **w != 0.0).count(), 1);
    }

    #[test]
    fn clipping_is_local() {
        let v: Vec<f64> = (0..200)
            .map(|i| {
                1.0 + 3.0 * (-(i as f64 - 100.0).powi(2) / 50.0).exp()
                    - 0.01 * ((i % 7) as f64 - 3.0)
            })
            .collect();
        let t = trace(v.clone(), 1.0);
        let m = extract_mode_function(&t).unwrap();
        for (w, v) in m.weights().iter().zip(&v) {
            if *v <= t.baseline {
                assert_eq!(*w, 0.0);
            } else {
                assert!(*w > 0.0);
            }
        }
        let norm: f64 = m.weights().iter().map(|w| w * w).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_shapes_and_zero_segment() {
        let mode = ModeFunction::from_weights(vec![0.0, 3.0, 4.0, 0.0]).unwrap();
        assert_eq!(mode.weights(), &[0.0, 0.6, 0.8, 0.0]);
        let batch = SegmentBatch::new(
            vec![
                Segment::new(vec![0.0; 4], 2).unwrap(),
                Segment::new(vec![1.0, 1.0, 1.0, 1.0], 2).unwrap(),
                Segment::new(vec![5.0, -1.0, 2.0, 9.0], 2).unwrap(),
            ],
            BatchKind::Heralded,
            "x".into(),
        )
        .unwrap();
        let q = project_quadratures(&batch, &mode).unwrap();
        assert_eq!(q.len(), 3);
        assert_eq!(q[0], 0.0);
        assert!((q[1] - 1.4).abs() < 1e-15);
        assert!((q[2] - 1.0).abs() < 1e-15);
        let short = ModeFunction::from_weights(vec![1.0; 3]).unwrap();
        assert!(matches!(
            project_quadratures(&batch, &short),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn calibration_arithmetic() {
        // ±√2 alternating: unbiased variance 2·n/(n−1); rescale to exactly 2.
        let n = 200;
        let c = (2.0 * (n as f64 - 1.0) / n as f64).sqrt();
        let vac: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { c } else { -c }).collect();
        assert!((sample_variance(&vac) - 2.0).abs() < 1e-12);
        let (v, s) = calibrate(&vac, &[4.0, -2.0]).unwrap();
        assert!((v.calibration_scale() - 2.0).abs() < 1e-12);
        assert!((v.variance() - 0.5).abs() < 1e-12);
        assert!((s.values()[0] - 2.0).abs() < 1e-12);
        assert_eq!(v.source_kind(), BatchKind::Vacuum);
        assert_eq!(s.source_kind(), BatchKind::Heralded);
        assert!(calibrate(&[], &[1.0]).is_err());
        assert!(calibrate(&[3.0; 500], &[1.0]).is_err());
    }

    #[test]
    fn dataset_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.csv");
        let ds = QuadratureDataset::new(vec![0.1, -2.5, 3.25e-7], 1.75, BatchKind::Vacuum).unwrap();
        ds.write_csv(&path, &[("seed", "9".into())]).unwrap();
        let back = QuadratureDataset::read_csv(&path).unwrap();
        assert_eq!(back, ds);
        fs::write(&path, "# calibration_scale=1\nx\n").unwrap();
        assert!(matches!(
            QuadratureDataset::read_csv(&path),
            Err(Error::Format(_))
        ));
        fs::write(&path, "1.0\nabc\n").unwrap();
        assert!(matches!(
            QuadratureDataset::read_csv(&path),
            Err(Error::Format(_))
        ));
    }
}
